//! Staged preparation of `|ψ_E⟩`, `|ψ_J⟩`, `|ψ_K⟩` and the density operators
//! obtained by tracing out their first register.

mod circuits;
mod density;
mod ratio;

pub use circuits::{padded_block_table, prepare_psi_e, prepare_psi_j, prepare_psi_jk, prepare_psi_k, target_vector, PreparedState, StateKind};
pub use density::{trace_out_first, trace_out_keep, DensityOperator};
pub use ratio::{estimate_trace_ratio, estimate_trace_ratio_from, TraceRatioEstimate};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::dcca::{mean_center, PaddedDataset, PairedDataset};
use crate::error::{Error, Result};
use crate::mean::MeanEstimationConfig;
use crate::sim::state::DEFAULT_QUBIT_CAP;

/// Scaling constants for the controlled rotations.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingBounds {
    /// `2·max|M_ij|`, bounds every `|É_ij|`.
    pub alpha: f64,
    /// `2n'·max|M_ij|`, bounds every `|J́_ki|`.
    pub beta: f64,
    /// At least half of the entries of `(X; Y)` reach `m0` in magnitude.
    pub m0: f64,
    pub max_abs: f64,
    pub block_width: usize,
}

impl ScalingBounds {
    pub fn for_dataset(data: &PairedDataset) -> Self {
        let max_abs = data.max_abs();
        let w = data.n_max();
        Self { alpha: 2.0 * max_abs, beta: 2.0 * w as f64 * max_abs, m0: default_m0(data), max_abs, block_width: w }
    }

    pub fn with_m0(mut self, m0: f64) -> Self {
        self.m0 = m0;
        self
    }

    /// Fraction of centered entries whose magnitude reaches `m0`.
    pub fn m0_density(&self, data: &PairedDataset) -> f64 {
        let x = mean_center(data).stacked();
        x.iter().filter(|v| v.abs() >= self.m0).count() as f64 / x.len() as f64
    }

    /// Largest ratio `tr(J)/tr(E)` consistent with the bounds:
    /// `‖J́‖²_F ≤ c(p+q)β²` and `‖É‖²_F ≥ (p+q)n·m0²/2`.
    pub fn trace_ratio_bound(&self, data: &PairedDataset) -> f64 {
        2.0 * data.c() as f64 * (self.block_width as f64).powi(2) * self.alpha.powi(2) / (data.n() as f64 * self.m0 * self.m0)
    }
}

/// The `⌈N/2⌉`-th largest magnitude among the `N` centered entries: the
/// largest `m0` meeting the half-density assumption.
pub fn default_m0(data: &PairedDataset) -> f64 {
    let x = mean_center(data).stacked();
    let mut mags: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    mags[(mags.len() + 1) / 2 - 1]
}

/// Where the row means loaded by the coherent mean oracles come from.
#[derive(Clone, Debug)]
pub enum MeanSource {
    /// Amplitude-estimation runs with errors `eps1` for `M̄_{k,*}` and `eps2`
    /// for the padded class-block means.
    Estimated { eps1: f64, eps2: f64, delta: f64 },
    /// Classical means.
    Exact,
    /// Supplied means, e.g. with a deliberately injected error. Missing block
    /// means default to their exact values.
    Given { row_means: Vec<f64>, block_means: Option<DMatrix<f64>> },
}

#[derive(Clone, Debug)]
pub struct PrepConfig {
    pub means: MeanSource,
    pub frac_bits: u32,
    /// Fixed-point amplification failure target.
    pub infidelity_target: f64,
    pub qubit_cap: usize,
    /// Overrides the `m0` derived from the data.
    pub m0: Option<f64>,
    /// Amplification design probability shared by `|ψ_J⟩` and `|ψ_K⟩` so both
    /// run the same number of rounds.
    pub shared_jk_design: Option<f64>,
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self {
            means: MeanSource::Estimated { eps1: 0.05, eps2: 0.05, delta: 0.05 },
            frac_bits: 7,
            infidelity_target: 1e-4,
            qubit_cap: DEFAULT_QUBIT_CAP,
            m0: None,
            shared_jk_design: None,
        }
    }
}

impl PrepConfig {
    pub fn exact() -> Self {
        Self { means: MeanSource::Exact, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.infidelity_target > 0.0 && self.infidelity_target < 1.0) {
            return Err(Error::InvalidArgument(format!("infidelity target {} not in (0, 1)", self.infidelity_target)));
        }
        if self.frac_bits == 0 || self.frac_bits > 30 {
            return Err(Error::InvalidArgument(format!("fraction bits {} outside [1, 30]", self.frac_bits)));
        }
        if let MeanSource::Estimated { eps1, eps2, delta } = &self.means {
            MeanEstimationConfig::new(*eps1, *delta, 1.0)?;
            MeanEstimationConfig::new(*eps2, *delta, 1.0)?;
        }
        Ok(())
    }

    /// Worst-case per-entry error of the loaded means before quantization.
    pub(crate) fn mean_errors(&self) -> (f64, f64) {
        match &self.means {
            MeanSource::Estimated { eps1, eps2, .. } => (*eps1, *eps2),
            MeanSource::Exact => (0.0, 0.0),
            MeanSource::Given { .. } => (0.0, 0.0),
        }
    }
}

/// Padded class-block view `𝓜^i` as a `c(p+q) × n'` table, row `i(p+q) + k`.
pub fn block_view(padded: &PaddedDataset, c: usize) -> DMatrix<f64> {
    let rows = padded.padded_matrix.nrows();
    let w = padded.block_width;
    DMatrix::from_fn(c * rows, w, |r, j| padded.padded_matrix[(r % rows, (r / rows) * w + j)])
}

/// Closed-form bound on `‖|ψ̃_E⟩ − |ψ_E⟩‖` when every row mean is off by at
/// most `eps1`.
pub fn psi_e_error_law(max_abs: f64, m0: f64, eps1: f64) -> f64 {
    let r = eps1 / m0;
    (1.0 + 8.0 * max_abs * eps1 / (m0 * m0) + 2.0 * r * r).sqrt() - 1.0 + 2f64.sqrt() * r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dcca::reference_instance;

    #[test]
    fn reference_bounds() {
        let d = reference_instance();
        let b = ScalingBounds::for_dataset(&d);
        assert_eq!(b.alpha, 8.0);
        assert_eq!(b.beta, 16.0);
        assert_eq!(b.m0, 0.5);
        assert!(b.m0_density(&d) >= 0.5);
    }

    #[test]
    fn block_view_layout() {
        let d = reference_instance();
        let pd = PaddedDataset::from_dataset(&d);
        let v = block_view(&pd, d.c());
        // rows: (class 0, k=0), (class 0, k=1), (class 1, k=0), (class 1, k=1)
        assert_eq!(v.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 2.0]);
        assert_eq!(v.row(1).iter().copied().collect::<Vec<_>>(), vec![1.0, 1.0]);
        assert_eq!(v.row(2).iter().copied().collect::<Vec<_>>(), vec![3.0, 4.0]);
        assert_eq!(v.row(3).iter().copied().collect::<Vec<_>>(), vec![2.0, 2.0]);
    }

    #[test]
    fn error_law_vanishes_at_zero() {
        assert_eq!(psi_e_error_law(3.0, 0.5, 0.0), 0.0);
        assert!(psi_e_error_law(1.0, 0.5, 0.01) > 0.0);
    }
}
