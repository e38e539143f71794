//! Classical and quantum runs on one dataset, compared pair by pair.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dcca::{default_d, solve_dcca, DccaOperators, PairedDataset};
use crate::eigen::{
    resource_summary, run_qpe_pipeline, HamiltonianSimSpec, PairComparison, Projection, QdccaConfig, ResourceRow, TraceRatioReport,
    MAX_T_BITS,
};
use crate::error::{Error, Result};
use crate::harness::config::RunConfig;
use crate::linalg::spectral_norm;
use crate::sim::resources::ResourceReport;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize)]
pub struct DatasetSummary {
    pub source: String,
    pub p: usize,
    pub q: usize,
    pub n: usize,
    pub classes: Vec<usize>,
}

impl DatasetSummary {
    pub fn new(data: &PairedDataset, source: &str) -> Self {
        Self { source: source.into(), p: data.p(), q: data.q(), n: data.n(), classes: data.class_sizes().to_vec() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, limit, pass: value <= limit }
    }
    pub fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, limit, pass: value >= limit }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassicalReport {
    pub schema_version: u32,
    pub command: String,
    pub dataset: DatasetSummary,
    pub d: usize,
    pub eigenvalues: Vec<f64>,
    pub spectrum: Vec<f64>,
    pub projections_x: Vec<Vec<f64>>,
    pub projections_y: Vec<Vec<f64>>,
    pub condition_number: f64,
    pub retained_rank: usize,
    pub degenerate: bool,
    pub trace_ratio: f64,
}

pub fn run_classical(data: &PairedDataset, d: Option<usize>, source: &str) -> Result<ClassicalReport> {
    let ops = DccaOperators::from_dataset(data)?;
    let d = d.unwrap_or_else(|| default_d(data));
    let res = solve_dcca(&ops, data.c(), d)?;
    Ok(ClassicalReport {
        schema_version: SCHEMA_VERSION,
        command: "classical".into(),
        dataset: DatasetSummary::new(data, source),
        d,
        eigenvalues: res.eigenvalues.clone(),
        spectrum: res.spectrum.clone(),
        projections_x: res.projections.iter().map(|(x, _)| x.iter().copied().collect()).collect(),
        projections_y: res.projections.iter().map(|(_, y)| y.iter().copied().collect()).collect(),
        condition_number: res.condition.condition_number,
        retained_rank: res.condition.retained_rank,
        degenerate: res.degenerate,
        trace_ratio: ops.trace_ratio(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub dataset: DatasetSummary,
    pub config: QdccaConfig,
    pub classical_spectrum: Vec<f64>,
    pub pairs: Vec<PairComparison>,
    pub ambiguous: bool,
    pub trace_ratio: Option<TraceRatioReport>,
    pub grid_resolution: Option<f64>,
    pub htilde_error: Option<f64>,
    pub htilde_declared_error: Option<f64>,
    pub kappa: Option<f64>,
    pub m0_violation: bool,
    pub resources: Vec<ResourceRow>,
    pub t_k_equals_t_j: Option<bool>,
    pub checks: Vec<Check>,
    pub diagnostics: Vec<String>,
    pub pass: bool,
}

/// Runs both solvers. A phase grid that cannot be realized without
/// aliasing yields a failing report with the diagnostic rather than an
/// error; other failures (e.g. the qubit cap) are errors.
pub fn run_compare(data: &PairedDataset, run: &RunConfig, source: &str) -> Result<ComparisonReport> {
    run.validate()?;
    let seed = run.require_seed()?;
    let cfg = run.qdcca();
    let ops = DccaOperators::from_dataset(data)?;
    let d = cfg.d.unwrap_or_else(|| default_d(data));
    let classical = solve_dcca(&ops, data.c(), d)?;
    let mut report = ComparisonReport {
        schema_version: SCHEMA_VERSION,
        command: "compare".into(),
        seed,
        dataset: DatasetSummary::new(data, source),
        config: cfg.clone(),
        classical_spectrum: classical.spectrum.clone(),
        pairs: Vec::new(),
        ambiguous: false,
        trace_ratio: None,
        grid_resolution: None,
        htilde_error: None,
        htilde_declared_error: None,
        kappa: None,
        m0_violation: false,
        resources: Vec::new(),
        t_k_equals_t_j: None,
        checks: Vec::new(),
        diagnostics: Vec::new(),
        pass: false,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let res = match run_qpe_pipeline(data, &cfg, &mut rng) {
        Ok(r) => r,
        Err(Error::Aliasing { product, suggested }) => {
            let norm = spectral_norm(&ops.h_tilde());
            let need = HamiltonianSimSpec::min_t_bits(norm, ops.trace_ratio(), cfg.eps4);
            report.diagnostics.push(format!(
                "phase grid: eps4 = {:e} at t_bits = {} aliases (|H~|t = {product:.4} >= pi, t <= {suggested:.6}); \
                 the grid needs t_bits >= {need}{}",
                cfg.eps4,
                cfg.t_bits,
                if need > MAX_T_BITS { format!(", above the maximum of {MAX_T_BITS}") } else { String::new() }
            ));
            report.checks.push(Check { name: "phase_grid".into(), value: cfg.t_bits as f64, limit: need as f64, pass: false });
            return Ok(report);
        }
        Err(e) => return Err(e),
    };
    let fid = run.tolerances.fidelity;
    for c in &res.comparison {
        report.checks.push(Check::at_most(&format!("eigenvalue[{}]", c.index), c.gap, c.tolerance));
        if c.separated {
            report.checks.push(Check::at_least(&format!("eigenvector_fidelity[{}]", c.index), c.eigenvector_fidelity, fid));
            report.checks.push(Check::at_least(&format!("projection_fidelity[{}]", c.index), c.projection_fidelity, fid));
        } else {
            report.diagnostics.push(format!("pair {} is within two grid steps of a neighbour; fidelity not checked", c.index));
        }
    }
    if res.trace_ratio.measured {
        report.checks.push(Check::at_most("trace_ratio_bound", res.trace_ratio.estimate, res.trace_ratio.upper_bound));
    }
    if res.ambiguous {
        report.diagnostics.push("top-d boundary within one grid step: result ambiguous".into());
    }
    if res.m0_violation {
        report.diagnostics.push("data violates the m0 assumption; amplification was replanned".into());
    }
    let summary = resource_summary(&res);
    report.pairs = res.comparison.clone();
    report.ambiguous = res.ambiguous;
    report.trace_ratio = Some(res.trace_ratio.clone());
    report.grid_resolution = Some(res.grid_resolution);
    report.htilde_error = Some(res.htilde_error);
    report.htilde_declared_error = Some(res.htilde_declared_error);
    report.kappa = Some(res.params.kappa);
    report.m0_violation = res.m0_violation;
    report.resources = summary.rows;
    report.t_k_equals_t_j = Some(summary.t_k_equals_t_j);
    report.pass = report.checks.iter().all(|c| c.pass);
    Ok(report)
}

/// Quantum pipeline alone: recovered eigenvalues, the real parts of the
/// postprocessed projection states and the resource rows.
#[derive(Clone, Debug, Serialize)]
pub struct QuantumReport {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub dataset: DatasetSummary,
    pub config: QdccaConfig,
    pub eigenvalues: Vec<f64>,
    pub projections: Vec<Vec<f64>>,
    pub projection_runs: Vec<Projection>,
    pub ambiguous: bool,
    pub trace_ratio: TraceRatioReport,
    pub grid_resolution: f64,
    pub kappa: f64,
    pub m0_violation: bool,
    pub resources: Vec<ResourceRow>,
    pub t_k_equals_t_j: bool,
    pub stages: ResourceReport,
}

pub fn run_quantum(data: &PairedDataset, run: &RunConfig, source: &str) -> Result<QuantumReport> {
    run.validate()?;
    let seed = run.require_seed()?;
    let cfg = run.qdcca();
    let res = run_qpe_pipeline(data, &cfg, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let summary = resource_summary(&res);
    Ok(QuantumReport {
        schema_version: SCHEMA_VERSION,
        command: "quantum".into(),
        seed,
        dataset: DatasetSummary::new(data, source),
        config: cfg,
        eigenvalues: res.eigenvalues_h.clone(),
        projections: res.projections.iter().map(|v| v.iter().map(|a| a.re).collect()).collect(),
        projection_runs: res.projection_runs.clone(),
        ambiguous: res.ambiguous,
        trace_ratio: res.trace_ratio.clone(),
        grid_resolution: res.grid_resolution,
        kappa: res.params.kappa,
        m0_violation: res.m0_violation,
        resources: summary.rows,
        t_k_equals_t_j: summary.t_k_equals_t_j,
        stages: summary.report,
    })
}

/// Plain-text resource table: measured counter against the formula.
pub fn render_resources(rows: &[ResourceRow]) -> String {
    let mut out = format!("{:<8} {:>14} {:>14}  {}\n", "row", "measured", "formula", "expression");
    for row in rows {
        out.push_str(&format!("{:<8} {:>14.4e} {:>14.4e}  {}\n", row.row, row.measured, row.formula, row.expression));
    }
    out
}

/// Plain-text table of a comparison report.
pub fn render_table(r: &ComparisonReport) -> String {
    let mut out = format!(
        "dataset {} (p={}, q={}, n={}, classes={:?}), seed {}\n",
        r.dataset.source, r.dataset.p, r.dataset.q, r.dataset.n, r.dataset.classes, r.seed
    );
    out.push_str(&format!("{:>4} {:>12} {:>12} {:>10} {:>10} {:>10} {:>10}\n", "pair", "classical", "quantum", "gap", "tol", "fid v", "fid w"));
    for c in &r.pairs {
        out.push_str(&format!(
            "{:>4} {:>12.6} {:>12.6} {:>10.4} {:>10.4} {:>10.5} {:>10.5}\n",
            c.index, c.classical, c.quantum, c.gap, c.tolerance, c.eigenvector_fidelity, c.projection_fidelity
        ));
    }
    if let Some(t) = &r.trace_ratio {
        out.push_str(&format!("trace ratio: used {:.6}, exact {:.6}, estimate {:.6} ± {:.6}\n", t.used, t.exact, t.estimate, t.standard_error));
    }
    if !r.resources.is_empty() {
        out.push_str(&render_resources(&r.resources));
    }
    for d in &r.diagnostics {
        out.push_str(&format!("note: {d}\n"));
    }
    for c in r.checks.iter().filter(|c| !c.pass) {
        out.push_str(&format!("FAIL {}: {} vs limit {}\n", c.name, c.value, c.limit));
    }
    out.push_str(if r.pass { "PASS\n" } else { "FAIL\n" });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dcca::reference_instance;

    fn run_cfg(seed: u64) -> RunConfig {
        RunConfig { seed: Some(seed), ..RunConfig::default() }
    }

    #[test]
    fn reference_defaults_pass() {
        let r = run_compare(&reference_instance(), &run_cfg(1), "reference").unwrap();
        assert!(r.pass, "{}", render_table(&r));
        let c = &r.pairs[0];
        assert!(c.gap <= r.config.eps4 + r.grid_resolution.unwrap());
    }

    #[test]
    fn absurd_grid_fails_with_diagnostic() {
        let mut cfg = run_cfg(1);
        cfg.tolerances.eps4 = 1e-9;
        cfg.quantum.t_bits = 3;
        let r = run_compare(&reference_instance(), &cfg, "reference").unwrap();
        assert!(!r.pass);
        assert!(r.diagnostics[0].contains("phase grid"), "{:?}", r.diagnostics);
    }

    #[test]
    fn reports_are_deterministic() {
        let a = serde_json::to_string_pretty(&run_compare(&reference_instance(), &run_cfg(5), "reference").unwrap()).unwrap();
        let b = serde_json::to_string_pretty(&run_compare(&reference_instance(), &run_cfg(5), "reference").unwrap()).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("{\n  \"schema_version\": 1,"));
    }

    #[test]
    fn seed_required() {
        assert!(run_compare(&reference_instance(), &RunConfig::default(), "reference").is_err());
    }
}
