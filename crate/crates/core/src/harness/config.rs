//! Run configuration: a sectioned `key = value` file (TOML), overridden by
//! command-line flags and `QDCCA_*` environment variables.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::eigen::QdccaConfig;
use crate::error::{Error, Result};
use crate::harness::dataset::GeneratorSpec;

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: Option<f64>,
    pub eps4: f64,
    pub delta1: f64,
    pub delta2: f64,
    /// Minimum eigenvector and projection fidelity.
    pub fidelity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let q = QdccaConfig::default();
        Self { eps1: q.eps1, eps2: q.eps2, eps3: q.eps3, eps4: q.eps4, delta1: q.delta, delta2: q.delta, fidelity: 0.99 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct QuantumSection {
    pub t_bits: u32,
    pub d: Option<usize>,
    pub max_qubits: usize,
    pub exact_trace_ratio: bool,
    pub exact_means: bool,
    pub ratio_samples: usize,
    pub qpe_repetitions: usize,
    pub kappa_limit: f64,
    pub sim_error: f64,
    pub infidelity_target: f64,
    pub frac_bits: u32,
    pub m0: Option<f64>,
}

impl Default for QuantumSection {
    fn default() -> Self {
        let q = QdccaConfig::default();
        Self {
            t_bits: q.t_bits,
            d: q.d,
            max_qubits: q.max_qubits,
            exact_trace_ratio: q.exact_trace_ratio,
            exact_means: q.exact_means,
            ratio_samples: q.ratio_samples,
            qpe_repetitions: q.qpe_repetitions,
            kappa_limit: q.kappa_limit,
            sim_error: q.sim_error,
            infidelity_target: q.infidelity_target,
            frac_bits: q.frac_bits,
            m0: q.m0,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub dataset: DatasetSection,
    /// Used when `dataset.path` is unset.
    pub generator: Option<GeneratorSpec>,
    pub tolerances: Tolerances,
    pub quantum: QuantumSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start].matches('\n').count() + 1).unwrap_or(0);
            Error::Parse { line, msg: e.message().to_string() }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.tolerances;
        for (name, v) in [("eps1", t.eps1), ("eps2", t.eps2), ("eps4", t.eps4), ("delta1", t.delta1), ("delta2", t.delta2)] {
            if !(v > 0.0) {
                return Err(Error::InvalidArgument(format!("tolerance {name} must be positive, got {v}")));
            }
        }
        if let Some(e3) = t.eps3 {
            if !(e3 > 0.0) {
                return Err(Error::InvalidArgument(format!("tolerance eps3 must be positive, got {e3}")));
            }
        }
        if !(t.fidelity > 0.0 && t.fidelity <= 1.0) {
            return Err(Error::InvalidArgument(format!("fidelity threshold {} not in (0, 1]", t.fidelity)));
        }
        Ok(())
    }

    /// The seed, required by every stochastic command.
    pub fn require_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| Error::InvalidArgument("a seed is required (--seed, QDCCA_SEED or `seed` in the config)".into()))
    }

    /// Both failure probabilities feed one median-boosted estimator, so the
    /// smaller one is used.
    pub fn qdcca(&self) -> QdccaConfig {
        let (t, q) = (&self.tolerances, &self.quantum);
        QdccaConfig {
            eps1: t.eps1,
            eps2: t.eps2,
            delta: t.delta1.min(t.delta2),
            eps3: t.eps3,
            eps4: t.eps4,
            t_bits: q.t_bits,
            d: q.d,
            kappa_limit: q.kappa_limit,
            exact_means: q.exact_means,
            exact_trace_ratio: q.exact_trace_ratio,
            ratio_samples: q.ratio_samples,
            qpe_repetitions: q.qpe_repetitions,
            sim_error: q.sim_error,
            infidelity_target: q.infidelity_target,
            frac_bits: q.frac_bits,
            max_qubits: q.max_qubits,
            m0: q.m0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_parse() {
        let cfg = RunConfig::parse(
            "seed = 4\n[dataset]\npath = \"data.csv\"\n[tolerances]\neps4 = 0.1\n[quantum]\nt_bits = 6\nexact_trace_ratio = true\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(4));
        assert_eq!(cfg.dataset.path.as_deref(), Some(Path::new("data.csv")));
        assert_eq!(cfg.qdcca().eps4, 0.1);
        assert_eq!(cfg.qdcca().t_bits, 6);
        assert!(cfg.qdcca().exact_trace_ratio);
        assert_eq!(cfg.qdcca().eps1, QdccaConfig::default().eps1);
    }

    #[test]
    fn unknown_key_reports_line() {
        match RunConfig::parse("seed = 1\n[quantum]\nt_bitz = 3\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn round_trip_and_validation() {
        let cfg = RunConfig { seed: Some(9), generator: Some(GeneratorSpec::default()), ..RunConfig::default() };
        assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
        let mut bad = cfg.clone();
        bad.tolerances.eps2 = 0.0;
        assert!(bad.validate().is_err());
        assert!(RunConfig::default().require_seed().is_err());
    }
}
