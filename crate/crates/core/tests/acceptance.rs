//! Acceptance gate: one line per criterion, nonzero exit on any failure.
//! `QDCCA_ACCEPT_ONLY=pipeline,ratio` restricts the run.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use qdcca::harness::suites::{run_suite, SuiteOptions, SuiteReport};

struct Criterion {
    id: u32,
    title: &'static str,
    suite: &'static str,
    budget: Duration,
}

const CRITERIA: [Criterion; 9] = [
    Criterion { id: 1, title: "classical oracle optimality", suite: "classical", budget: Duration::from_secs(10) },
    Criterion { id: 2, title: "structural identities", suite: "structure", budget: Duration::from_secs(10) },
    Criterion { id: 3, title: "mean estimation contract", suite: "lemma1", budget: Duration::from_secs(300) },
    Criterion { id: 4, title: "scaling bounds alpha/beta", suite: "appendixB", budget: Duration::from_secs(5) },
    Criterion { id: 5, title: "state preparation fidelity and error law", suite: "stateprep", budget: Duration::from_secs(600) },
    Criterion { id: 6, title: "block-encoding contracts", suite: "blockenc", budget: Duration::from_secs(300) },
    Criterion { id: 7, title: "end-to-end pipeline", suite: "pipeline", budget: Duration::from_secs(1800) },
    Criterion { id: 8, title: "resource shape fits", suite: "resources", budget: Duration::from_secs(900) },
    Criterion { id: 9, title: "trace-ratio estimator", suite: "ratio", budget: Duration::from_secs(60) },
];

fn failures(r: &SuiteReport) -> String {
    r.cases.iter().filter(|c| !c.pass).take(3).map(|c| format!("\n    {}: {}", c.name, c.detail)).collect()
}

fn main() -> ExitCode {
    let only: Option<Vec<String>> = std::env::var("QDCCA_ACCEPT_ONLY").ok().map(|v| v.split(',').map(|s| s.trim().to_string()).collect());
    let opts = SuiteOptions::default();
    let mut all = true;
    for c in CRITERIA.iter() {
        if only.as_ref().is_some_and(|o| !o.iter().any(|s| s == c.suite || s == &c.id.to_string())) {
            continue;
        }
        let start = Instant::now();
        let (pass, info) = match run_suite(c.suite, &opts) {
            Ok(r) => {
                let secs = start.elapsed();
                let ok = r.pass && secs <= c.budget;
                let mut info = format!("{}/{} cases, {:.1}s (budget {}s) {}", r.passed, r.cases.len(), secs.as_secs_f64(), c.budget.as_secs(), r.summary);
                if !ok {
                    info.push_str(&failures(&r));
                }
                (ok, info)
            }
            Err(e) => (false, format!("error: {e}")),
        };
        all &= pass;
        println!("criterion {} [{}] {}: {}", c.id, c.suite, c.title, if pass { "PASS" } else { "FAIL" });
        println!("    {info}");
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
