use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qdcca::dcca::{brute_force_objective, mean_center, solve_dcca, DccaOperators, PairedDataset};
use qdcca::harness::{format_dataset, generate_dataset, parse_dataset, GeneratorSpec};
use qdcca::prep::{psi_e_error_law, ScalingBounds};
use qdcca::sim::amp_est::{bits_for_error, error_bound, estimate_from_outcome, GroverOperator};
use qdcca::sim::amplify::AmplificationPlan;

fn dataset(seed: u64, p: usize, q: usize, classes: Vec<usize>) -> PairedDataset {
    let n: usize = classes.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(p, n, |_, _| rng.gen_range(-3.0..3.0));
    let b = DMatrix::from_fn(q, n, |_, _| rng.gen_range(-3.0..3.0));
    PairedDataset::new(a, b, classes).unwrap()
}

fn shape() -> impl Strategy<Value = (u64, usize, usize, Vec<usize>)> {
    (any::<u64>(), 1usize..=3, 1usize..=3, prop::collection::vec(2usize..=4, 2..=3))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn htilde_is_rescaled_h((seed, p, q, classes) in shape()) {
        let ops = DccaOperators::from_dataset(&dataset(seed, p, q, classes)).unwrap();
        let scaled = ops.h_matrix() * (ops.e_matrix.trace() / ops.j_matrix.trace());
        prop_assert!((ops.h_tilde() - &scaled).amax() <= 1e-10 * scaled.amax().max(1.0));
        prop_assert_eq!(&ops.d_matrix, &(&ops.j_matrix - &ops.k_matrix));
    }

    #[test]
    fn top_pair_beats_random_feasible_pairs((seed, p, q, classes) in shape()) {
        let data = dataset(seed, p, q, classes);
        let centered = mean_center(&data);
        let ops = DccaOperators::from_dataset(&data).unwrap();
        let res = solve_dcca(&ops, data.c(), 1).unwrap();
        prop_assume!(!res.condition.singular);
        let (wx, wy) = res.feasible_pair(0, &ops).unwrap();
        let top = brute_force_objective(&centered, &ops, &wx, &wy).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let unit = |m: &DMatrix<f64>, rng: &mut ChaCha8Rng| {
            let w = DVector::from_fn(m.nrows(), |_, _| rng.gen_range(-1.0..1.0));
            let s = (w.transpose() * m * &w)[(0, 0)];
            w / s.sqrt()
        };
        let cxx = ops.e_matrix.view((0, 0), (p, p)).into_owned();
        let cyy = ops.e_matrix.view((p, p), (q, q)).into_owned();
        for _ in 0..50 {
            let v = brute_force_objective(&centered, &ops, &unit(&cxx, &mut rng), &unit(&cyy, &mut rng)).unwrap();
            prop_assert!(v <= top + 1e-8);
        }
    }

    #[test]
    fn scaling_bounds_hold((seed, p, q, classes) in shape()) {
        let data = dataset(seed, p, q, classes);
        let ops = DccaOperators::from_dataset(&data).unwrap();
        let b = ScalingBounds::for_dataset(&data);
        prop_assert!(ops.e_factor.amax() <= b.alpha);
        prop_assert!(ops.j_factor.amax() <= b.beta);
        prop_assert!(ops.trace_ratio() <= b.trace_ratio_bound(&data));
        prop_assert!(b.m0_density(&data) >= 0.5);
    }

    #[test]
    fn generated_csv_round_trips(seed in any::<u64>(), p in 1usize..=3, q in 1usize..=3, classes in prop::collection::vec(1usize..=4, 1..=3)) {
        let d = generate_dataset(&GeneratorSpec { p, q, classes, seed, ..GeneratorSpec::default() }).unwrap();
        let text = format_dataset(&d);
        let back = parse_dataset(&text).unwrap();
        prop_assert_eq!(back.a(), d.a());
        prop_assert_eq!(back.b(), d.b());
        prop_assert_eq!(format_dataset(&back), text);
    }

    #[test]
    fn amplitude_estimation_concentrates(p in 0.0f64..=1.0, target in 0.01f64..0.5) {
        let bits = bits_for_error(target).unwrap();
        prop_assert!(error_bound(bits) <= target);
        let dist = GroverOperator::from_probability(p).outcome_distribution(bits).unwrap();
        prop_assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let hit: f64 = dist.iter().enumerate().filter(|(z, _)| (estimate_from_outcome(*z, bits) - p).abs() <= error_bound(bits)).map(|(_, w)| w).sum();
        prop_assert!(hit >= 8.0 / (std::f64::consts::PI.powi(2)) - 1e-9);
    }

    #[test]
    fn fixed_point_search_never_overshoots(design in 1e-4f64..0.9, extra in 0.0f64..1.0, infid in 1e-6f64..0.1) {
        let plan = AmplificationPlan::new(design, infid).unwrap();
        let lambda = design + extra * (1.0 - design);
        prop_assert!(plan.predicted_success(lambda) >= 1.0 - infid - 1e-9);
    }

    #[test]
    fn error_law_grows_with_mean_error(max in 0.5f64..10.0, frac in 0.05f64..1.0, e in 1e-4f64..0.2) {
        let m0 = max * frac;
        prop_assert!(psi_e_error_law(max, m0, e) < psi_e_error_law(max, m0, 2.0 * e));
        prop_assert!(psi_e_error_law(max, m0, 0.0).abs() < 1e-15);
    }
}
