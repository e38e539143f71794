//! Sparse multi-register state simulation and the quantum subroutines built
//! on it.

pub mod amp_est;
pub mod amplify;
pub mod arith;
pub mod fixed;
pub mod maxfind;
pub mod oracle;
pub mod qpe;
pub mod resources;
pub mod rotation;
pub mod state;
