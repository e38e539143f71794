//! Quantum maximum finding (Dürr and Høyer) driven by exponential Grover
//! search with unknown marked count (Boyer, Brassard, Høyer and Tapp).
//!
//! Grover iterations are simulated exactly through their success
//! probability `sin²((2j+1)θ)` with `sin²θ` the marked fraction.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

const BBHT_GROWTH: f64 = 6.0 / 5.0;

#[derive(Clone, Debug, Serialize)]
pub struct MaxFindOutcome {
    pub index: usize,
    /// Grover iterations plus one verification query per attempt.
    pub oracle_calls: u64,
    /// Another candidate lies within the tie tolerance.
    pub tie: bool,
    pub improvements: usize,
}

/// Query budget `⌈22.5√N + 1.4 log₂² N⌉`.
pub fn budget(n: usize) -> u64 {
    let nf = n as f64;
    (22.5 * nf.sqrt() + 1.4 * nf.log2().powi(2)).ceil() as u64
}

/// Index of the largest value among non-excluded items. Values within `tol`
/// of each other count as equal, and equal values resolve to the lowest
/// index.
pub fn find_max<R: Rng + ?Sized>(values: &[f64], excluded: &[bool], tol: f64, rng: &mut R) -> Result<MaxFindOutcome> {
    let n = values.len();
    let live: Vec<usize> = (0..n).filter(|&i| !excluded.get(i).copied().unwrap_or(false)).collect();
    if live.is_empty() {
        return Err(Error::InvalidArgument("maximum finding over an empty set".into()));
    }
    let limit = budget(n.max(2));
    let mut y = live[rng.gen_range(0..live.len())];
    let mut calls = 0u64;
    let mut improvements = 0;
    let mut m = 1.0f64;
    let cap = (n as f64).sqrt();
    while calls < limit {
        let marked: Vec<usize> = live.iter().copied().filter(|&i| values[i] > values[y] + tol).collect();
        let j = rng.gen_range(0..m.ceil().max(1.0) as u64);
        calls += j + 1;
        let theta = (marked.len() as f64 / n as f64).sqrt().asin();
        let p = ((2 * j + 1) as f64 * theta).sin().powi(2);
        if !marked.is_empty() && rng.gen::<f64>() < p {
            y = marked[rng.gen_range(0..marked.len())];
            improvements += 1;
            m = 1.0;
        } else {
            m = (m * BBHT_GROWTH).min(cap);
        }
    }
    let ties: Vec<usize> = live.iter().copied().filter(|&i| (values[i] - values[y]).abs() <= tol).collect();
    let index = ties[0];
    Ok(MaxFindOutcome { index, oracle_calls: calls, tie: ties.len() > 1, improvements })
}

/// `d` successive searches, each excluding the items already found.
pub fn find_top<R: Rng + ?Sized>(values: &[f64], d: usize, tol: f64, rng: &mut R) -> Result<Vec<MaxFindOutcome>> {
    let mut excluded = vec![false; values.len()];
    let mut out = Vec::with_capacity(d);
    for _ in 0..d {
        let o = find_max(values, &excluded, tol, rng)?;
        excluded[o.index] = true;
        out.push(o);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn finds_maximum_with_high_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let values: Vec<f64> = (0..64).map(|i| ((i * 37) % 64) as f64).collect();
        let best = values.iter().cloned().fold(f64::MIN, f64::max);
        let hits = (0..100)
            .filter(|_| values[find_max(&values, &[], 0.0, &mut rng).unwrap().index] == best)
            .count();
        assert!(hits >= 50, "hits {hits}");
    }

    #[test]
    fn ties_resolve_low() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let o = find_max(&[1.0, 3.0, 3.0, 0.0], &[], 1e-9, &mut rng).unwrap();
        assert_eq!(o.index, 1);
        assert!(o.tie);
    }

    #[test]
    fn top_excludes_found() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let top = find_top(&[0.1, 0.9, 0.5, 0.7], 2, 0.0, &mut rng).unwrap();
        assert_ne!(top[0].index, top[1].index);
    }

    #[test]
    fn budget_values() {
        assert_eq!(budget(4), (22.5 * 2.0 + 1.4 * 4.0f64).ceil() as u64);
    }
}
