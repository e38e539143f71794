
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{herm_eigen_desc, CMatrix, C64};
use crate::sim::state::{QuantumState, RegId, StableMap};

/// Unit-trace positive semidefinite operator.
#[derive(Clone, Debug)]
pub struct DensityOperator {
    pub matrix: CMatrix,
    /// Name of the state it was traced from.
    pub source: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct DensityCheck {
    pub hermiticity: f64,
    pub trace: f64,
    pub min_eigenvalue: f64,
}

impl DensityOperator {
    pub fn new(matrix: CMatrix, source: &str) -> Result<Self> {
        let d = Self { matrix, source: source.to_string() };
        let c = d.check();
        if c.hermiticity > 1e-12 || (c.trace - 1.0).abs() > 1e-10 || c.min_eigenvalue < -1e-10 {
            return Err(Error::InvalidArgument(format!(
                "{source} is not a density operator: hermiticity {:.2e}, trace {}, min eigenvalue {:.2e}",
                c.hermiticity, c.trace, c.min_eigenvalue
            )));
        }
        Ok(d)
    }

    /// `X / tr X` for a real PSD matrix.
    pub fn from_real(m: &nalgebra::DMatrix<f64>, source: &str) -> Result<Self> {
        let t = m.trace();
        if !(t > 0.0) {
            return Err(Error::Degenerate(format!("{source} has zero trace")));
        }
        Self::new(crate::linalg::to_complex(&(m / t)), source)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn check(&self) -> DensityCheck {
        let m = &self.matrix;
        let hermiticity = (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        let (ev, _) = herm_eigen_desc(&((m + m.adjoint()) * C64::new(0.5, 0.0)));
        DensityCheck { hermiticity, trace: m.trace().re, min_eigenvalue: ev.last().copied().unwrap_or(0.0) }
    }

    /// `½‖ρ − σ‖₁`.
    pub fn trace_distance(&self, other: &DensityOperator) -> f64 {
        let diff = &self.matrix - &other.matrix;
        let (ev, _) = herm_eigen_desc(&((&diff + diff.adjoint()) * C64::new(0.5, 0.0)));
        0.5 * ev.iter().map(|x| x.abs()).sum::<f64>()
    }
}

/// Reduced operator on the `keep` registers (in the order given, first
/// register most significant), tracing out everything else.
pub fn trace_out_keep(state: &QuantumState, keep: &[RegId]) -> CMatrix {
    let layout = state.layout_arc();
    let widths: Vec<u32> = keep.iter().map(|&r| layout.reg(r).width).collect();
    let dim = 1usize << widths.iter().sum::<u32>();
    let mut groups: StableMap<u128, Vec<(usize, C64)>> = StableMap::default();
    for (&b, &a) in state.amplitudes() {
        let mut idx = 0usize;
        let mut rest = b;
        for (&r, &w) in keep.iter().zip(&widths) {
            idx = (idx << w) | layout.get(b, r) as usize;
            rest = layout.set(rest, r, 0);
        }
        groups.entry(rest).or_default().push((idx, a));
    }
    let mut rho = CMatrix::zeros(dim, dim);
    for entries in groups.values() {
        for &(i, ai) in entries {
            for &(j, aj) in entries {
                rho[(i, j)] += ai * aj.conj();
            }
        }
    }
    rho
}

/// `Tr₁|ψ⟩⟨ψ|` restricted to the first `dim` values of `keep`, normalized.
/// Weight on the padding values beyond `dim` is an error.
pub fn trace_out_first(state: &QuantumState, keep: RegId, dim: usize, source: &str) -> Result<DensityOperator> {
    let full = trace_out_keep(state, &[keep]);
    let outside: f64 = (dim..full.nrows()).map(|i| full[(i, i)].re).sum();
    if outside > 1e-10 {
        return Err(Error::Dimension(format!("{source}: weight {outside:.2e} on padding indices")));
    }
    let mut rho = full.view((0, 0), (dim, dim)).into_owned();
    let t = rho.trace().re;
    if !(t > 0.0) {
        return Err(Error::Degenerate(format!("{source}: empty state")));
    }
    rho /= C64::new(t, 0.0);
    // exact hermiticity
    let rho = (&rho + rho.adjoint()) * C64::new(0.5, 0.0);
    DensityOperator::new(rho, source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::state::{hadamard, RegisterLayout, DEFAULT_QUBIT_CAP};

    #[test]
    fn product_state_gives_pure() {
        let mut l = RegisterLayout::new(DEFAULT_QUBIT_CAP);
        let a = l.add("a", 1).unwrap();
        let b = l.add("b", 1).unwrap();
        let mut s = QuantumState::zero(l);
        s.apply_unitary(&[b], &hadamard()).unwrap();
        let _ = a;
        let rho = trace_out_first(&s, b, 2, "t").unwrap();
        for k in 0..4 {
            assert!((rho.matrix[k].re - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn bell_pair_gives_mixed() {
        let mut l = RegisterLayout::new(DEFAULT_QUBIT_CAP);
        let a = l.add("a", 1).unwrap();
        let b = l.add("b", 1).unwrap();
        let mut s = QuantumState::zero(l);
        s.apply_unitary(&[a], &hadamard()).unwrap();
        let lay = s.layout_arc();
        s.apply_permutation(|x| Ok(lay.set(x, b, lay.get(x, a)))).unwrap();
        let rho = trace_out_first(&s, b, 2, "bell").unwrap();
        assert!((rho.matrix[(0, 0)].re - 0.5).abs() < 1e-14);
        assert!(rho.matrix[(0, 1)].norm() < 1e-14);
        let c = rho.check();
        assert!((c.trace - 1.0).abs() < 1e-12 && c.min_eigenvalue > 0.49);
    }

    #[test]
    fn rejects_non_density() {
        let m = CMatrix::from_row_slice(2, 2, &[C64::new(2.0, 0.0), C64::default(), C64::default(), C64::new(-1.0, 0.0)]);
        assert!(DensityOperator::new(m, "bad").is_err());
    }
}
