//! Fixed-point amplitude amplification (Yoder, Low and Chuang).
//!
//! For any good probability `λ ≥ w` the sequence of `L = 2l + 1` queries
//! brings the failure probability below `δ²`, never overshooting.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::sim::resources::StageCounters;
use crate::sim::state::QuantumState;

#[derive(Clone, Debug, PartialEq)]
pub struct AmplificationPlan {
    /// Design lower bound on the good probability.
    pub design_lambda: f64,
    /// `δ`, the square root of the target infidelity.
    pub delta: f64,
    /// Query count `L` (odd).
    pub length: usize,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
}

impl AmplificationPlan {
    /// Plan for good probability at least `design_lambda` reaching failure at
    /// most `target_infidelity`.
    pub fn new(design_lambda: f64, target_infidelity: f64) -> Result<Self> {
        if !(design_lambda > 0.0 && design_lambda <= 1.0) {
            return Err(Error::InvalidArgument(format!("design probability {design_lambda} not in (0, 1]")));
        }
        if !(target_infidelity > 0.0 && target_infidelity < 1.0) {
            return Err(Error::InvalidArgument(format!("target infidelity {target_infidelity} not in (0, 1)")));
        }
        let delta = target_infidelity.sqrt();
        if design_lambda >= 1.0 - target_infidelity {
            return Ok(Self { design_lambda, delta, length: 1, alphas: vec![], betas: vec![] });
        }
        let raw = (1.0 / delta).acosh() / (1.0 / (1.0 - design_lambda).sqrt()).acosh();
        let mut length = raw.ceil() as usize;
        if length % 2 == 0 {
            length += 1;
        }
        Ok(Self::with_length(design_lambda, delta, length))
    }

    /// Phases for an explicit odd length.
    pub fn with_length(design_lambda: f64, delta: f64, length: usize) -> Self {
        assert!(length % 2 == 1, "sequence length must be odd");
        let l = (length - 1) / 2;
        let gamma_inv = ((1.0 / delta).acosh() / length as f64).cosh();
        let root = (1.0 - 1.0 / (gamma_inv * gamma_inv)).max(0.0).sqrt();
        let alphas: Vec<f64> = (1..=l)
            .map(|j| {
                let t = (2.0 * PI * j as f64 / length as f64).tan() * root;
                // cot⁻¹(t) in (0, π)
                2.0 * (PI / 2.0 - t.atan())
            })
            .collect();
        let betas = (1..=l).map(|j| -alphas[l - j]).collect();
        Self { design_lambda, delta, length, alphas, betas }
    }

    pub fn rounds(&self) -> usize {
        self.alphas.len()
    }

    /// Closed-form success probability for actual good probability `lambda`.
    pub fn predicted_success(&self, lambda: f64) -> f64 {
        if self.rounds() == 0 {
            return lambda;
        }
        let lf = self.length as f64;
        let gamma_inv = ((1.0 / self.delta).acosh() / lf).cosh();
        let x = (1.0 - lambda).max(0.0).sqrt() * gamma_inv;
        let tl = chebyshev(self.length, x);
        1.0 - self.delta * self.delta * tl * tl
    }
}

fn chebyshev(n: usize, x: f64) -> f64 {
    if x.abs() <= 1.0 {
        (n as f64 * x.acos()).cos()
    } else {
        let s = x.signum().powi(n as i32);
        s * (n as f64 * x.abs().acosh()).cosh()
    }
}

#[derive(Clone, Debug)]
pub struct Amplified {
    pub state: QuantumState,
    pub success_probability: f64,
    pub initial_probability: f64,
}

/// Run the sequence on `initial = A|0⟩`. Each round reflects about the
/// initial state, which costs one `A` and one `A†`; the caller charges those
/// from `counters.amplification_rounds`.
pub fn fixed_point_amplify(
    initial: &QuantumState,
    good: impl Fn(u128) -> bool,
    plan: &AmplificationPlan,
    counters: &mut StageCounters,
) -> Result<Amplified> {
    let s = initial.clone();
    let initial_probability = s.probability(&good);
    let mut psi = s.clone();
    for (alpha, beta) in plan.alphas.iter().zip(&plan.betas) {
        // S_t(β): phase e^{iβ} on the good subspace
        let phase = C64::from_polar(1.0, *beta);
        psi.scale_where(|b| if good(b) { phase } else { C64::new(1.0, 0.0) });
        // S_s(α) = I − (1 − e^{−iα})|s⟩⟨s|
        let overlap = s.inner(&psi);
        let coeff = -(C64::new(1.0, 0.0) - C64::from_polar(1.0, -alpha)) * overlap;
        psi.add_scaled(&s, coeff);
        // global −1
        psi.scale_where(|_| C64::new(-1.0, 0.0));
        counters.amplification_rounds += 1;
    }
    let success_probability = psi.probability(&good);
    Ok(Amplified { state: psi, success_probability, initial_probability })
}

/// Success probability after each prefix length `1, 3, 5, …, L` using the
/// complete sequence of that length designed for the same `w` and `δ`.
pub fn trajectory(design_lambda: f64, delta: f64, max_length: usize, lambda: f64) -> Vec<f64> {
    (0..=(max_length - 1) / 2)
        .map(|l| AmplificationPlan::with_length(design_lambda, delta, 2 * l + 1).predicted_success(lambda))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::state::RegisterLayout;

    fn state_with_good(p: f64) -> QuantumState {
        let mut layout = RegisterLayout::new(8);
        let r = layout.add("q", 1).unwrap();
        let mut st = QuantumState::zero(layout);
        let c = (1.0 - p).sqrt();
        let s = p.sqrt();
        let u = crate::linalg::CMatrix::from_row_slice(
            2,
            2,
            &[C64::new(c, 0.0), C64::new(-s, 0.0), C64::new(s, 0.0), C64::new(c, 0.0)],
        );
        st.apply_unitary(&[r], &u).unwrap();
        st
    }

    #[test]
    fn matches_closed_form() {
        for &(w, lam) in &[(0.05, 0.05), (0.05, 0.3), (0.01, 0.02), (0.2, 0.9)] {
            let plan = AmplificationPlan::new(w, 0.01).unwrap();
            let st = state_with_good(lam);
            let mut c = StageCounters::default();
            let out = fixed_point_amplify(&st, |b| b & 1 == 1, &plan, &mut c).unwrap();
            let pred = plan.predicted_success(lam);
            assert!((out.success_probability - pred).abs() < 1e-9, "w={w} λ={lam}: {} vs {pred}", out.success_probability);
            assert!(out.success_probability >= 1.0 - 0.01 - 1e-9);
            assert_eq!(c.amplification_rounds as usize, plan.rounds());
        }
    }

    #[test]
    fn no_overshoot_above_design() {
        let plan = AmplificationPlan::new(0.01, 0.001).unwrap();
        for k in 1..100 {
            let lam = 0.01 + 0.99 * k as f64 / 100.0;
            assert!(plan.predicted_success(lam) >= 1.0 - 0.001 - 1e-12);
            assert!(plan.predicted_success(lam) >= lam - 1e-12);
        }
    }

    #[test]
    fn rounds_scale_as_inverse_root() {
        let r: Vec<f64> = [0.25, 1.0 / 16.0, 1.0 / 64.0]
            .iter()
            .map(|&w| AmplificationPlan::new(w, 1e-3).unwrap().length as f64)
            .collect();
        let ratio = r[2] / r[0];
        assert!((3.0..=5.5).contains(&ratio), "{r:?}");
    }

    #[test]
    fn already_good_needs_nothing() {
        let plan = AmplificationPlan::new(0.999, 0.01).unwrap();
        assert_eq!(plan.rounds(), 0);
    }

    #[test]
    fn trajectory_never_drops_below_start() {
        let t = trajectory(0.02, 0.05, 31, 0.05);
        assert!(t.iter().all(|&p| p >= 0.05 - 1e-12));
    }
}
