pub mod dcca;
pub mod error;
pub mod linalg;
pub mod sim;

pub use error::{Error, Result};
pub mod mean;
pub mod prep;
pub mod block;
pub mod eigen;
pub mod harness;

/// The guide, compiled so its examples run as doc-tests.
pub mod guide {
    #[doc = include_str!("../../../book/src/intro.md")]
    pub mod intro {}
    #[doc = include_str!("../../../book/src/classical.md")]
    pub mod classical {}
    #[doc = include_str!("../../../book/src/mean_estimation.md")]
    pub mod mean_estimation {}
    #[doc = include_str!("../../../book/src/state_preparation.md")]
    pub mod state_preparation {}
    #[doc = include_str!("../../../book/src/block_encoding.md")]
    pub mod block_encoding {}
    #[doc = include_str!("../../../book/src/eigensolver.md")]
    pub mod eigensolver {}
    #[doc = include_str!("../../../book/src/harness.md")]
    pub mod harness {}
}
