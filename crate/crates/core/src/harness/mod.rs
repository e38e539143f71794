pub mod compare;
pub mod config;
pub mod dataset;
pub mod suites;

pub use compare::{render_resources, render_table, run_classical, run_compare, run_quantum, ClassicalReport, ComparisonReport, QuantumReport};
pub use config::RunConfig;
pub use dataset::{fraction_below_m0, format_dataset, generate_dataset, load_dataset, parse_dataset, save_dataset, GeneratorSpec};
pub use suites::{run_suite, SuiteOptions, SuiteReport, SUITES};
