use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qdcca::dcca::{reference_instance, solve_dcca, DccaOperators};
use qdcca::eigen::{resource_summary, run_qpe_pipeline, QdccaConfig};
use qdcca::harness::suites::{pipeline_admissible, pipeline_config};
use qdcca::harness::{fraction_below_m0, generate_dataset, GeneratorSpec};
use qdcca::Error;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn reference_eigenpair_recovered() {
    let r = run_qpe_pipeline(&reference_instance(), &QdccaConfig::default(), &mut rng(11)).unwrap();
    let c = &r.comparison[0];
    assert!((c.classical - 4.0 / 5f64.sqrt()).abs() < 1e-12);
    assert!(c.gap <= c.tolerance);
    assert!(c.eigenvector_fidelity > 0.999 && c.projection_fidelity > 0.999);
}

#[test]
fn exact_inputs_isolate_the_phase_grid() {
    let cfg = QdccaConfig { exact_means: true, exact_trace_ratio: true, ..QdccaConfig::default() };
    let r = run_qpe_pipeline(&reference_instance(), &cfg, &mut rng(1)).unwrap();
    // with exact ratio and means, only rounding to the grid remains
    assert!(r.comparison[0].gap <= 0.5 * r.grid_resolution + 1e-3, "{:?}", r.comparison);
}

#[test]
fn generated_two_pair_dataset() {
    let mut found = 0;
    for seed in 0..40 {
        let d = generate_dataset(&GeneratorSpec { p: 2, q: 3, classes: vec![3, 3, 2], seed, ..GeneratorSpec::default() }).unwrap();
        if !pipeline_admissible(&d) {
            continue;
        }
        let r = run_qpe_pipeline(&d, &pipeline_config(&d), &mut rng(seed)).unwrap();
        assert_eq!(r.comparison.len(), 2);
        assert!(r.all_pass(0.99), "seed {seed}: {:?}", r.comparison);
        found += 1;
        if found == 3 {
            break;
        }
    }
    assert_eq!(found, 3);
}

#[test]
fn m0_violating_data_is_flagged() {
    let spec = GeneratorSpec { p: 1, q: 1, classes: vec![4, 4], violate_m0: true, seed: 3, ..GeneratorSpec::default() };
    let d = generate_dataset(&spec).unwrap();
    assert!(fraction_below_m0(&d, spec.audit_m0()) >= 0.6);
    let cfg = QdccaConfig { exact_means: true, exact_trace_ratio: true, m0: Some(spec.audit_m0()), ..QdccaConfig::default() };
    match run_qpe_pipeline(&d, &cfg, &mut rng(0)) {
        Ok(r) => assert!(r.m0_violation),
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn qubit_cap_reports_requirement() {
    let cfg = QdccaConfig { max_qubits: 8, ..QdccaConfig::default() };
    match run_qpe_pipeline(&reference_instance(), &cfg, &mut rng(0)) {
        Err(Error::CapExceeded { required, cap }) => assert!(required > cap && cap == 8),
        other => panic!("expected a cap error, got {:?}", other.map(|r| r.eigenvalues_h)),
    }
}

#[test]
fn too_many_pairs_rejected() {
    let cfg = QdccaConfig { d: Some(2), ..QdccaConfig::default() };
    assert!(run_qpe_pipeline(&reference_instance(), &cfg, &mut rng(0)).is_err());
}

#[test]
fn t_k_matches_t_j_in_the_pipeline() {
    let d = generate_dataset(&GeneratorSpec { seed: 5, ..GeneratorSpec::default() }).unwrap();
    let ops = DccaOperators::from_dataset(&d).unwrap();
    assert!(!solve_dcca(&ops, d.c(), 1).unwrap().condition.singular);
    let cfg = QdccaConfig { d: Some(1), exact_trace_ratio: true, ..QdccaConfig::default() };
    let r = run_qpe_pipeline(&d, &cfg, &mut rng(2)).unwrap();
    assert!(resource_summary(&r).t_k_equals_t_j);
}
