//! Amplitude estimation: phase estimation on the Grover operator, with the
//! median trick for boosting.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};
use crate::sim::state::QuantumState;

pub const MIN_PRECISION_BITS: u32 = 2;
pub const MAX_PRECISION_BITS: u32 = 20;

/// Success probability lower bound of a single amplitude-estimation run.
pub const AE_SUCCESS: f64 = 8.0 / (PI * PI);

/// `Q = −A S_0 A† S_χ` restricted to its two-dimensional invariant subspace
/// spanned by the bad and good components of `A|0⟩`.
///
/// The restriction is exact: `A|0⟩` lies in the span and `Q` maps the span to
/// itself, where it is the rotation by `2θ` with `sin²θ` the good
/// probability.
#[derive(Clone, Debug)]
pub struct GroverOperator {
    theta: f64,
}

impl GroverOperator {
    /// From a prepared state `A|0⟩` and the good-subspace predicate.
    pub fn from_state(state: &QuantumState, good: impl Fn(u128) -> bool) -> Self {
        let p = state.probability(good) / state.norm().powi(2);
        Self::from_probability(p)
    }

    pub fn from_probability(p: f64) -> Self {
        Self { theta: p.clamp(0.0, 1.0).sqrt().asin() }
    }

    pub fn good_probability(&self) -> f64 {
        self.theta.sin().powi(2)
    }

    /// Matrix in the (bad, good) basis.
    pub fn matrix(&self) -> CMatrix {
        let (s, c) = (2.0 * self.theta).sin_cos();
        CMatrix::from_row_slice(2, 2, &[C64::new(c, 0.0), C64::new(-s, 0.0), C64::new(s, 0.0), C64::new(c, 0.0)])
    }

    #[cfg(test)]
    fn initial(&self) -> [C64; 2] {
        [C64::new(self.theta.cos(), 0.0), C64::new(self.theta.sin(), 0.0)]
    }

    /// Outcome distribution of the phase register after the full circuit:
    /// Hadamards, controlled `Q^{2^k}`, inverse QFT. `A|0⟩` splits evenly
    /// over the eigenvectors of `Q` with phases `±2θ`, so the distribution is
    /// the average of the two Fejér kernels.
    pub fn outcome_distribution(&self, precision_bits: u32) -> Result<Vec<f64>> {
        check_bits(precision_bits)?;
        let m = 1usize << precision_bits;
        let mf = m as f64;
        let fejer = |d: f64| {
            let den = (d / 2.0).sin();
            if den.abs() < 1e-12 {
                1.0
            } else {
                let v = (mf * d / 2.0).sin() / (mf * den);
                v * v
            }
        };
        let phi = 2.0 * self.theta;
        Ok((0..m)
            .map(|z| {
                let grid = 2.0 * PI * z as f64 / mf;
                0.5 * (fejer(phi - grid) + fejer(-phi - grid))
            })
            .collect())
    }

    /// Number of `Q` applications in one estimation circuit.
    pub fn grover_calls(precision_bits: u32) -> u64 {
        (1u64 << precision_bits) - 1
    }
}

fn check_bits(bits: u32) -> Result<()> {
    if !(MIN_PRECISION_BITS..=MAX_PRECISION_BITS).contains(&bits) {
        return Err(Error::InvalidArgument(format!(
            "precision bits {bits} outside [{MIN_PRECISION_BITS}, {MAX_PRECISION_BITS}]"
        )));
    }
    Ok(())
}

/// Map a phase-register outcome to the probability estimate `sin²(π z / 2^t)`.
pub fn estimate_from_outcome(z: usize, precision_bits: u32) -> f64 {
    let s = (PI * z as f64 / (1u64 << precision_bits) as f64).sin();
    // exact endpoints: z = 0 and z = 2^{t−1}
    if z == 0 {
        0.0
    } else if 2 * z == 1usize << precision_bits {
        1.0
    } else {
        s * s
    }
}

/// Additive error guaranteed with probability at least `8/π²`.
pub fn error_bound(precision_bits: u32) -> f64 {
    let m = (1u64 << precision_bits) as f64;
    PI / m + PI * PI / (m * m)
}

/// Precision for a target additive error: `t = ⌈log₂(5/target)⌉`, which
/// satisfies `π/2^t + π²/4^t ≤ target` for every target up to 1/2 and grows by
/// exactly one bit per halving of the target.
pub fn bits_for_error(target: f64) -> Result<u32> {
    if !(target > 0.0 && target <= 0.5) {
        return Err(Error::InvalidArgument(format!("error target {target} not in (0, 1/2]")));
    }
    let bits = ((5.0 / target).log2().ceil() as u32).max(MIN_PRECISION_BITS);
    if bits > MAX_PRECISION_BITS {
        return Err(Error::InvalidArgument(format!("error target {target} needs {bits} > {MAX_PRECISION_BITS} bits")));
    }
    Ok(bits)
}

pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (k, p) in probs.iter().enumerate() {
        if u < *p {
            return k;
        }
        u -= p;
    }
    probs.len() - 1
}

/// One run of amplitude estimation.
pub fn amplitude_estimate<R: Rng + ?Sized>(grover: &GroverOperator, precision_bits: u32, rng: &mut R) -> Result<f64> {
    let dist = grover.outcome_distribution(precision_bits)?;
    Ok(estimate_from_outcome(sample_index(&dist, rng), precision_bits))
}

/// Median of `l` runs. `l` must be odd and equal to `trials.len()`.
pub fn median_boost(trials: &[f64], l: usize) -> Result<f64> {
    if l == 0 || l % 2 == 0 || trials.len() != l {
        return Err(Error::InvalidArgument(format!("median needs an odd count equal to the trial count, got l={l}, {} trials", trials.len())));
    }
    let mut sorted = trials.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[l / 2])
}

/// Probability that the median of `l` runs fails when each run fails
/// independently with probability `fail`.
pub fn median_failure(l: usize, fail: f64) -> f64 {
    let need = l / 2 + 1;
    let mut total = 0.0;
    for k in need..=l {
        total += binomial(l, k) * fail.powi(k as i32) * (1.0 - fail).powi((l - k) as i32);
    }
    total
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Smallest odd `l` whose median fails with probability at most `delta`
/// given per-run success `8/π²`. Grows as `Θ(log 1/Δ)`.
pub fn median_repetitions(delta: f64) -> usize {
    let mut l = 1;
    while median_failure(l, 1.0 - AE_SUCCESS) > delta {
        l += 2;
    }
    l
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_and_one_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for bits in [2, 5, 9] {
            assert_eq!(amplitude_estimate(&GroverOperator::from_probability(0.0), bits, &mut rng).unwrap(), 0.0);
            assert_eq!(amplitude_estimate(&GroverOperator::from_probability(1.0), bits, &mut rng).unwrap(), 1.0);
        }
    }

    #[test]
    fn quarter_probability_at_six_bits() {
        let g = GroverOperator::from_probability(0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let hits = (0..200).filter(|_| (amplitude_estimate(&g, 6, &mut rng).unwrap() - 0.25).abs() <= 0.05).count();
        assert!(hits as f64 >= 0.81 * 200.0, "hits {hits}");
    }

    #[test]
    fn distribution_is_normalized_and_bound_holds() {
        for p in [0.03, 0.4, 0.77] {
            let g = GroverOperator::from_probability(p);
            let d = g.outcome_distribution(7).unwrap();
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            let good: f64 = d
                .iter()
                .enumerate()
                .filter(|(z, _)| (estimate_from_outcome(*z, 7) - p).abs() <= error_bound(7))
                .map(|(_, q)| q)
                .sum();
            assert!(good >= AE_SUCCESS, "p={p}: {good}");
        }
    }

    /// Direct evaluation: `Q^x ψ` for every register value, then the inverse
    /// QFT as an explicit sum.
    fn explicit_distribution(g: &GroverOperator, bits: u32) -> Vec<f64> {
        let m = 1usize << bits;
        let q = g.matrix();
        let mut v = g.initial();
        let mut powers = Vec::with_capacity(m);
        for _ in 0..m {
            powers.push(v);
            v = [q[(0, 0)] * v[0] + q[(0, 1)] * v[1], q[(1, 0)] * v[0] + q[(1, 1)] * v[1]];
        }
        (0..m)
            .map(|z| {
                let mut acc = [C64::default(); 2];
                for (x, px) in powers.iter().enumerate() {
                    let w = C64::from_polar(1.0, -2.0 * PI * ((x * z) % m) as f64 / m as f64);
                    acc[0] += w * px[0];
                    acc[1] += w * px[1];
                }
                (acc[0].norm_sqr() + acc[1].norm_sqr()) / (m * m) as f64
            })
            .collect()
    }

    #[test]
    fn closed_form_matches_explicit_circuit() {
        for p in [0.0, 0.01, 0.25, 0.6, 0.93, 1.0] {
            let g = GroverOperator::from_probability(p);
            for bits in [2, 5, 8] {
                let a = g.outcome_distribution(bits).unwrap();
                let b = explicit_distribution(&g, bits);
                let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                assert!(diff < 1e-10, "p={p} bits={bits}: {diff}");
            }
        }
    }

    #[test]
    fn precision_range_enforced() {
        let g = GroverOperator::from_probability(0.5);
        assert!(g.outcome_distribution(1).is_err());
        assert!(g.outcome_distribution(21).is_err());
    }

    #[test]
    fn median_examples() {
        assert_eq!(median_boost(&[0.3], 1).unwrap(), 0.3);
        assert_eq!(median_boost(&[0.2, 0.2, 0.9], 3).unwrap(), 0.2);
        assert!(median_boost(&[0.2, 0.2], 2).is_err());
    }

    #[test]
    fn repetitions_grow_logarithmically() {
        let l1 = median_repetitions(1e-2);
        let l2 = median_repetitions(1e-4);
        let l3 = median_repetitions(1e-8);
        assert!(l1 < l2 && l2 < l3);
        assert!(median_failure(l3, 1.0 - AE_SUCCESS) <= 1e-8);
        // Θ(log 1/Δ): l / ln(1/Δ) stays bounded
        for (l, d) in [(l1, 1e-2), (l2, 1e-4), (l3, 1e-8)] {
            let r = l as f64 / (1.0f64 / d).ln();
            assert!((1.0..5.0).contains(&r), "l={l} Δ={d}");
        }
    }

    #[test]
    fn bits_for_error_target() {
        assert_eq!(bits_for_error(0.025).unwrap(), 8);
        assert_eq!(bits_for_error(0.0125).unwrap(), 9);
        assert!(bits_for_error(1e-6).is_err());
        for k in 1..10 {
            let target = 0.5 / (1 << k) as f64 * 1.3;
            assert!(error_bound(bits_for_error(target).unwrap()) <= target);
        }
    }
}
