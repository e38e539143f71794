use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use qdcca::dcca::{reference_instance, PairedDataset};
use qdcca::harness::suites::{run_suite, SuiteOptions};
use qdcca::harness::{
    format_dataset, generate_dataset, load_dataset, render_resources, render_table, run_classical, run_compare, run_quantum, GeneratorSpec,
    RunConfig,
};
use qdcca::Result;

#[derive(Parser)]
#[command(name = "qdcca", version, about = "Classical and simulated-quantum discriminative CCA")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML sections: dataset, generator, tolerances, quantum).
    #[arg(long, global = true, env = "QDCCA_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, global = true, env = "QDCCA_SEED")]
    seed: Option<u64>,
    /// Write the report (or CSV) here instead of stdout.
    #[arg(long, global = true, env = "QDCCA_OUT")]
    out: Option<PathBuf>,
    /// Dataset CSV; overrides the config. Without one, the config's generator
    /// or the bundled reference instance is used.
    #[arg(long, global = true, env = "QDCCA_DATASET")]
    dataset: Option<PathBuf>,
    #[arg(long, global = true, env = "QDCCA_D")]
    d: Option<usize>,
    #[arg(long = "t-bits", global = true, env = "QDCCA_T_BITS")]
    t_bits: Option<u32>,
    #[arg(long, global = true, env = "QDCCA_EPS1")]
    eps1: Option<f64>,
    #[arg(long, global = true, env = "QDCCA_EPS2")]
    eps2: Option<f64>,
    #[arg(long, global = true, env = "QDCCA_EPS3")]
    eps3: Option<f64>,
    #[arg(long, global = true, env = "QDCCA_EPS4")]
    eps4: Option<f64>,
    /// Use the classical tr(J)/tr(E) instead of the measured estimate.
    #[arg(long = "exact-trace-ratio", global = true, env = "QDCCA_EXACT_TRACE_RATIO")]
    exact_trace_ratio: bool,
    #[arg(long = "max-qubits", global = true, env = "QDCCA_MAX_QUBITS")]
    max_qubits: Option<usize>,
    /// Print a human-readable table instead of JSON.
    #[arg(long, global = true)]
    table: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV.
    Generate(GenerateArgs),
    /// Classical DCCA.
    Classical,
    /// Quantum pipeline with resource counters.
    Quantum,
    /// Both pipelines, compared pair by pair against the tolerances.
    Compare,
    /// A named property suite.
    Suite {
        name: String,
        /// Number of random cases, where the suite has them.
        #[arg(long)]
        cases: Option<usize>,
    },
    /// Resource rows: measured counters next to the cost formulas.
    Resources,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    /// Class sizes, e.g. `3,3,2`.
    #[arg(long, value_delimiter = ',')]
    classes: Option<Vec<usize>>,
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    separation: Option<f64>,
    /// Push most centered entries below m0.
    #[arg(long = "violate-m0")]
    violate_m0: bool,
    #[arg(long)]
    m0: Option<f64>,
}

impl Common {
    fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        if let Some(p) = &self.dataset {
            cfg.dataset.path = Some(p.clone());
        }
        if self.d.is_some() {
            cfg.quantum.d = self.d;
        }
        if let Some(t) = self.t_bits {
            cfg.quantum.t_bits = t;
        }
        let tol = &mut cfg.tolerances;
        for (flag, slot) in [(self.eps1, &mut tol.eps1), (self.eps2, &mut tol.eps2), (self.eps4, &mut tol.eps4)] {
            if let Some(v) = flag {
                *slot = v;
            }
        }
        if self.eps3.is_some() {
            tol.eps3 = self.eps3;
        }
        if self.exact_trace_ratio {
            cfg.quantum.exact_trace_ratio = true;
        }
        if let Some(m) = self.max_qubits {
            cfg.quantum.max_qubits = m;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn dataset(cfg: &RunConfig) -> Result<(PairedDataset, String)> {
    if let Some(p) = &cfg.dataset.path {
        return Ok((load_dataset(p)?, p.display().to_string()));
    }
    if let Some(g) = &cfg.generator {
        return Ok((generate_dataset(g)?, format!("generator(seed={})", g.seed)));
    }
    Ok((reference_instance(), "reference".into()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("reports serialize") + "\n"
}

fn generate(common: &Common, cfg: &RunConfig, args: &GenerateArgs) -> Result<()> {
    let mut spec = cfg.generator.clone().unwrap_or_default();
    if let Some(s) = common.seed {
        spec.seed = s;
    } else if cfg.generator.is_none() {
        spec.seed = cfg.require_seed()?;
    }
    spec = GeneratorSpec {
        p: args.p.unwrap_or(spec.p),
        q: args.q.unwrap_or(spec.q),
        classes: args.classes.clone().unwrap_or(spec.classes),
        scale: args.scale.unwrap_or(spec.scale),
        separation: args.separation.unwrap_or(spec.separation),
        violate_m0: args.violate_m0 || spec.violate_m0,
        m0: args.m0.or(spec.m0),
        seed: spec.seed,
    };
    emit(common.out.as_deref(), &format_dataset(&generate_dataset(&spec)?))
}

/// `Ok(true)` when every check passed.
fn run(cli: &Cli) -> Result<bool> {
    let common = &cli.common;
    let cfg = common.run_config()?;
    let out = common.out.as_deref();
    match &cli.command {
        Command::Generate(args) => generate(common, &cfg, args).map(|_| true),
        Command::Classical => {
            let (data, source) = dataset(&cfg)?;
            let r = run_classical(&data, cfg.quantum.d, &source)?;
            emit(out, &json(&r))?;
            Ok(true)
        }
        Command::Quantum => {
            let (data, source) = dataset(&cfg)?;
            let r = run_quantum(&data, &cfg, &source)?;
            emit(out, &if common.table { render_resources(&r.resources) } else { json(&r) })?;
            Ok(true)
        }
        Command::Compare => {
            let (data, source) = dataset(&cfg)?;
            let r = run_compare(&data, &cfg, &source)?;
            emit(out, &if common.table { render_table(&r) } else { json(&r) })?;
            Ok(r.pass)
        }
        Command::Resources => {
            let (data, source) = dataset(&cfg)?;
            let r = run_quantum(&data, &cfg, &source)?;
            #[derive(Serialize)]
            struct Rows<'a> {
                schema_version: u32,
                command: &'static str,
                seed: u64,
                dataset: &'a qdcca::harness::compare::DatasetSummary,
                rows: &'a [qdcca::eigen::ResourceRow],
                t_k_equals_t_j: bool,
                stages: &'a qdcca::sim::resources::ResourceReport,
            }
            let rows = Rows {
                schema_version: r.schema_version,
                command: "resources",
                seed: r.seed,
                dataset: &r.dataset,
                rows: &r.resources,
                t_k_equals_t_j: r.t_k_equals_t_j,
                stages: &r.stages,
            };
            emit(out, &if common.table { render_resources(&r.resources) } else { json(&rows) })?;
            Ok(r.t_k_equals_t_j)
        }
        Command::Suite { name, cases } => {
            let seed = cfg.require_seed()?;
            let r = run_suite(name, &SuiteOptions { seed, cases: *cases })?;
            eprintln!("{}", r.headline());
            if !common.table {
                emit(out, &json(&r))?;
            }
            Ok(r.pass)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("FAIL");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
