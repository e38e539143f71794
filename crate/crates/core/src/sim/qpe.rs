//! Phase estimation of `U = e^{iHτ}` for Hermitian `H`.
//!
//! The circuit (Hadamards, controlled powers `U^{2^k}`, inverse QFT) is
//! evaluated in the eigenbasis of `H`, where each controlled power acts as a
//! phase kick. On an eigenvector with phase `φ` the register reads `z` with
//! probability given by the Fejér kernel; on a mixed input the distribution
//! is the corresponding mixture.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{herm_eigen_desc, CMatrix};
use crate::sim::amp_est::sample_index;

#[derive(Clone, Debug)]
pub struct PhaseEstimator {
    /// Eigenvalues of `H`, descending.
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
    pub tau: f64,
    pub bits: u32,
}

impl PhaseEstimator {
    pub fn new(h: &CMatrix, tau: f64, bits: u32) -> Result<Self> {
        if bits == 0 || bits > 20 {
            return Err(Error::InvalidArgument(format!("phase bits {bits} outside [1, 20]")));
        }
        let (eigenvalues, eigenvectors) = herm_eigen_desc(h);
        Ok(Self { eigenvalues, eigenvectors, tau, bits })
    }

    pub fn register_size(&self) -> usize {
        1usize << self.bits
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Phase of eigenvector `k` in `[0, 2π)`.
    pub fn phase(&self, k: usize) -> f64 {
        (self.eigenvalues[k] * self.tau).rem_euclid(2.0 * PI)
    }

    /// Value of `H` that outcome `z` reads as; phases above π wrap to
    /// negative eigenvalues.
    pub fn eigenvalue_of(&self, z: usize) -> f64 {
        let m = self.register_size() as f64;
        let mut phi = 2.0 * PI * z as f64 / m;
        if phi >= PI {
            phi -= 2.0 * PI;
        }
        phi / self.tau
    }

    /// Outcome probability `P(z | k)`.
    pub fn kernel(&self, k: usize, z: usize) -> f64 {
        let m = self.register_size() as f64;
        let d = self.phase(k) - 2.0 * PI * z as f64 / m;
        let den = (d / 2.0).sin();
        if den.abs() < 1e-12 {
            return 1.0;
        }
        let v = (m * d / 2.0).sin() / (m * den);
        v * v
    }

    pub fn eigen_distribution(&self, k: usize) -> Vec<f64> {
        (0..self.register_size()).map(|z| self.kernel(k, z)).collect()
    }

    /// Distribution for the maximally mixed input.
    pub fn mixed_distribution(&self) -> Vec<f64> {
        let n = self.dim() as f64;
        let mut out = vec![0.0; self.register_size()];
        for k in 0..self.dim() {
            for (z, o) in out.iter_mut().enumerate() {
                *o += self.kernel(k, z) / n;
            }
        }
        out
    }

    /// Eigen-weights of the post-measurement state given outcome `z` on the
    /// maximally mixed input; cross terms vanish once the purifying register
    /// is traced out.
    pub fn posterior_weights(&self, z: usize) -> Vec<f64> {
        let w: Vec<f64> = (0..self.dim()).map(|k| self.kernel(k, z)).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    }

    pub fn posterior_state(&self, z: usize) -> CMatrix {
        let w = self.posterior_weights(z);
        let n = self.dim();
        let mut rho = CMatrix::zeros(n, n);
        for (k, wk) in w.iter().enumerate() {
            let v = self.eigenvectors.column(k);
            rho += v * v.adjoint() * crate::linalg::C64::new(*wk, 0.0);
        }
        rho
    }

    pub fn sample_eigen<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> usize {
        sample_index(&self.eigen_distribution(k), rng)
    }

    pub fn sample_mixed<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.mixed_distribution(), rng)
    }

    /// Controlled `U` applications in one run.
    pub fn controlled_calls(&self) -> u64 {
        (1u64 << self.bits) - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::to_complex;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_phase_is_read_exactly() {
        // eigenvalues 1 and −0.5 with τ = 2π/16 land on the grid
        let h = to_complex(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]));
        let tau = 2.0 * PI / 16.0;
        let pe = PhaseEstimator::new(&h, tau, 5).unwrap();
        let d = pe.eigen_distribution(0);
        assert!((d[2] - 1.0).abs() < 1e-12);
        assert!((pe.eigenvalue_of(2) - 1.0).abs() < 1e-12);
        let d1 = pe.eigen_distribution(1);
        let z = d1.iter().position(|&p| p > 0.99).unwrap();
        assert!((pe.eigenvalue_of(z) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn distributions_normalized() {
        let h = to_complex(&DMatrix::from_row_slice(3, 3, &[0.3, 0.1, 0.0, 0.1, -0.2, 0.05, 0.0, 0.05, 0.7]));
        let pe = PhaseEstimator::new(&h, 0.9, 6).unwrap();
        for k in 0..3 {
            assert!((pe.eigen_distribution(k).iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
        assert!((pe.mixed_distribution().iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let rho = pe.posterior_state(10);
        assert!((rho.trace().re - 1.0).abs() < 1e-10);
    }

    #[test]
    fn off_grid_phase_within_one_bin_often() {
        let h = to_complex(&DMatrix::from_row_slice(1, 1, &[0.37]));
        let pe = PhaseEstimator::new(&h, 1.0, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bin = 1.0 / (pe.register_size() as f64) * 2.0 * PI;
        let ok = (0..400).filter(|_| (pe.eigenvalue_of(pe.sample_eigen(0, &mut rng)) - 0.37).abs() <= bin).count();
        assert!(ok as f64 >= 0.81 * 400.0);
    }
}
