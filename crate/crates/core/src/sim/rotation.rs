use std::cell::Cell;

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};
use crate::sim::resources::StageCounters;
use crate::sim::state::{QuantumState, RegId};

/// `|0⟩ → r|0⟩ + √(1−r²)|1⟩` as a real rotation.
pub fn rotation_matrix(r: f64) -> CMatrix {
    let s = (1.0 - r * r).max(0.0).sqrt();
    CMatrix::from_row_slice(2, 2, &[C64::new(r, 0.0), C64::new(-s, 0.0), C64::new(s, 0.0), C64::new(r, 0.0)])
}

/// Rotate the single-qubit `ancilla` by `v / scale`, where `v` is the value
/// held in `value_reg`, on branches selected by `control`.
pub fn controlled_rotation_where(
    state: &mut QuantumState,
    value_reg: RegId,
    ancilla: RegId,
    scale: f64,
    control: impl Fn(u128) -> bool,
    counters: &mut StageCounters,
) -> Result<()> {
    let layout = state.layout_arc();
    if layout.reg(ancilla).width != 1 {
        return Err(Error::InvalidArgument("rotation ancilla must be a single qubit".into()));
    }
    if !(scale > 0.0) {
        return Err(Error::InvalidArgument(format!("rotation scale must be positive, got {scale}")));
    }
    let violation = Cell::new(None);
    state.apply_conditional(&[ancilla], |rest| {
        if !control(rest) {
            return None;
        }
        let v = layout.value(rest, value_reg);
        if v.abs() > scale * (1.0 + 1e-12) {
            violation.set(Some(v));
        }
        Some(rotation_matrix((v / scale).clamp(-1.0, 1.0)))
    })?;
    if let Some(value) = violation.get() {
        return Err(Error::RotationBound { value, scale });
    }
    counters.gates += 2 * layout.reg(value_reg).width as u64;
    Ok(())
}

pub fn controlled_rotation(
    state: &mut QuantumState,
    value_reg: RegId,
    ancilla: RegId,
    scale: f64,
    counters: &mut StageCounters,
) -> Result<()> {
    controlled_rotation_where(state, value_reg, ancilla, scale, |_| true, counters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::fixed::FixedFormat;
    use crate::sim::state::{unitarity_defect, RegisterLayout, DEFAULT_QUBIT_CAP};

    fn run(v: f64, scale: f64) -> Result<(f64, f64)> {
        let mut l = RegisterLayout::new(DEFAULT_QUBIT_CAP);
        let x = l.add_fixed("x", FixedFormat::default()).unwrap();
        let a = l.add("anc", 1).unwrap();
        let mut s = QuantumState::zero(l);
        let lay = s.layout_arc();
        let code = FixedFormat::default().encode(v).unwrap();
        s.apply_permutation(|b| Ok(lay.set(b, x, code))).unwrap();
        controlled_rotation(&mut s, x, a, scale, &mut StageCounters::default())?;
        let b0 = lay.set(0, x, code);
        Ok((s.amplitude(b0).re, s.amplitude(lay.set(b0, a, 1)).re))
    }

    #[test]
    fn full_and_zero_rotation() {
        assert_eq!(run(2.0, 2.0).unwrap(), (1.0, 0.0));
        assert_eq!(run(0.0, 2.0).unwrap(), (0.0, 1.0));
    }

    #[test]
    fn half_rotation() {
        let (c, s) = run(1.0, 2.0).unwrap();
        assert!((c - 0.5).abs() < 1e-15);
        assert!((s - 0.75f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn bound_violation_rejected() {
        assert!(matches!(run(3.0, 2.0), Err(Error::RotationBound { .. })));
    }

    #[test]
    fn rotation_is_unitary() {
        for r in [-1.0, -0.3, 0.0, 0.77, 1.0] {
            assert!(unitarity_defect(&rotation_matrix(r)) < 1e-12);
        }
    }
}
