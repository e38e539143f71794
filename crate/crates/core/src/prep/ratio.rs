use rand::Rng;
use serde::Serialize;

use super::{prepare_psi_e, prepare_psi_j, PrepConfig, PreparedState, ScalingBounds};
use crate::dcca::PairedDataset;
use crate::error::{Error, Result};

pub const MIN_RATIO_SAMPLES: usize = 100;

#[derive(Clone, Debug, Serialize)]
pub struct TraceRatioEstimate {
    pub ratio: f64,
    pub standard_error: f64,
    pub samples: usize,
    pub successes_e: usize,
    pub successes_j: usize,
    /// Upper bound from the scaling constants and `m0`.
    pub upper_bound: f64,
}

/// Measure the rotation ancilla of the unamplified preparations `samples`
/// times each and rescale the success frequencies:
/// `tr J / tr E = P_J·c(p+q)·s_J² / (P_E·2n(p+q)·s_E²)`.
pub fn estimate_trace_ratio_from<R: Rng + ?Sized>(
    psi_e: &PreparedState,
    psi_j: &PreparedState,
    samples: usize,
    upper_bound: f64,
    rng: &mut R,
) -> Result<TraceRatioEstimate> {
    if samples < MIN_RATIO_SAMPLES {
        return Err(Error::InvalidArgument(format!("trace ratio needs at least {MIN_RATIO_SAMPLES} samples, got {samples}")));
    }
    let mut measure = |p: f64| (0..samples).filter(|_| rng.gen::<f64>() < p).count();
    let se = measure(psi_e.good_probability);
    let sj = measure(psi_j.good_probability);
    if se == 0 || sj == 0 {
        return Err(Error::InvalidArgument(format!(
            "no ancilla successes in {samples} samples (E: {se}, J: {sj}); increase the sample count"
        )));
    }
    let (pe, pj) = (se as f64 / samples as f64, sj as f64 / samples as f64);
    let norm_e = (psi_e.first_dim * psi_e.second_dim) as f64 * psi_e.scale * psi_e.scale;
    let norm_j = (psi_j.first_dim * psi_j.second_dim) as f64 * psi_j.scale * psi_j.scale;
    let ratio = pj * norm_j / (pe * norm_e);
    // delta method on the two independent binomial frequencies
    let rel_var = (1.0 - pj) / (samples as f64 * pj) + (1.0 - pe) / (samples as f64 * pe);
    Ok(TraceRatioEstimate { ratio, standard_error: ratio * rel_var.sqrt(), samples, successes_e: se, successes_j: sj, upper_bound })
}

pub fn estimate_trace_ratio<R: Rng + ?Sized>(
    data: &PairedDataset,
    bounds: &ScalingBounds,
    cfg: &PrepConfig,
    samples: usize,
    rng: &mut R,
) -> Result<TraceRatioEstimate> {
    let e = prepare_psi_e(data, bounds, cfg, rng)?;
    let j = prepare_psi_j(data, bounds, cfg, rng)?;
    estimate_trace_ratio_from(&e, &j, samples, bounds.trace_ratio_bound(data), rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dcca::reference_instance;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reference_ratio() {
        let d = reference_instance();
        let b = ScalingBounds::for_dataset(&d);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let est = estimate_trace_ratio(&d, &b, &PrepConfig::exact(), 10_000, &mut rng).unwrap();
        assert!((est.ratio - 10.0 / 6.0).abs() <= 3.0 * est.standard_error, "{est:?}");
        assert!(est.ratio <= est.upper_bound);
    }

    #[test]
    fn too_few_samples() {
        let d = reference_instance();
        let b = ScalingBounds::for_dataset(&d);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(estimate_trace_ratio(&d, &b, &PrepConfig::exact(), 10, &mut rng).is_err());
    }
}
