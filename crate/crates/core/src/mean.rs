//! Row-mean estimation of a stored matrix by amplitude estimation, and the
//! coherent mean oracle built from it.

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sim::amp_est::{self, GroverOperator};
use crate::sim::arith::{arithmetic_oracle, Expr};
use crate::sim::fixed::{bits_for, FixedFormat};
use crate::sim::oracle::{apply_lookup, apply_oracle, apply_oracle_where, OracleTable};
use crate::sim::resources::StageCounters;
use crate::sim::rotation::controlled_rotation_where;
use crate::sim::state::{hadamard, ranged_uniform, QuantumState, RegId, RegisterLayout, DEFAULT_QUBIT_CAP};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeanEstimationConfig {
    pub epsilon: f64,
    pub delta: f64,
    /// `C`, an upper bound on every `|L_ij|`.
    pub c_scale: f64,
    pub precision_bits: u32,
    /// Median repetitions `l`.
    pub repetitions: usize,
}

impl MeanEstimationConfig {
    pub fn new(epsilon: f64, delta: f64, c_scale: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(delta > 0.0 && delta < 0.5) {
            return Err(Error::InvalidArgument(format!("delta must lie in (0, 1/2), got {delta}")));
        }
        if !(c_scale > 0.0) {
            return Err(Error::InvalidArgument(format!("scale C must be positive, got {c_scale}")));
        }
        // |ΔP| ≤ ε/(2C) gives |Δ mean| ≤ ε; capped at 1/2 where the estimate is trivially good
        let precision_bits = amp_est::bits_for_error((epsilon / (2.0 * c_scale)).min(0.5))?;
        Ok(Self { epsilon, delta, c_scale, precision_bits, repetitions: amp_est::median_repetitions(delta) })
    }

    /// Takes `C` as the largest stored magnitude of the table; an all-zero
    /// table uses `C = 1`.
    pub fn for_table(table: &OracleTable, epsilon: f64, delta: f64) -> Result<Self> {
        let c = (0..table.rows())
            .flat_map(|i| (0..table.cols()).map(move |j| (i, j)))
            .map(|(i, j)| table.stored(i, j).abs())
            .fold(0.0, f64::max);
        Self::new(epsilon, delta, if c > 0.0 { c } else { 1.0 })
    }

    /// Controlled-oracle uses for one median-boosted estimate: each run
    /// prepares once and applies `2^t − 1` Grover steps, each holding one
    /// `U_y` and one `U_y†`, and every `U_y` calls the oracle twice.
    pub fn queries_per_estimate(&self) -> u64 {
        self.repetitions as u64 * (2 + 4 * GroverOperator::grover_calls(self.precision_bits))
    }
}

/// `U_y|i⟩|0⟩` for one row, ready for amplitude estimation.
#[derive(Clone, Debug)]
pub struct UyCircuit {
    pub state: QuantumState,
    pub flag: RegId,
    pub row: RegId,
    pub col: RegId,
}

impl UyCircuit {
    pub fn good(&self) -> impl Fn(u128) -> bool + '_ {
        let layout = self.state.layout_arc();
        let flag = self.flag;
        move |b| layout.get(b, flag) == 1
    }

    /// Probability of the flag reading 1, `(1 − L̄_i/C)/2`.
    pub fn flag_probability(&self) -> f64 {
        self.state.probability(self.good())
    }
}

/// Hadamard on the flag, uniform column superposition, oracle and rotation
/// by `L_ij/C` on the flag-0 branch, oracle uncompute, Hadamard on the flag.
pub fn build_uy(table: &OracleTable, row: usize, c_scale: f64, counters: &mut StageCounters) -> Result<UyCircuit> {
    if row >= table.rows() {
        return Err(Error::InvalidArgument(format!("row {row} outside table with {} rows", table.rows())));
    }
    let mut layout = RegisterLayout::new(DEFAULT_QUBIT_CAP);
    let row_reg = layout.add("row", bits_for(table.rows() as u64))?;
    let col_w = bits_for(table.cols() as u64);
    let col = layout.add("col", col_w)?;
    let flag = layout.add("flag", 1)?;
    let value = layout.add_fixed("value", table.format)?;
    let anc = layout.add("rot", 1)?;
    let mut state = QuantumState::zero(layout);
    let l = state.layout_arc();
    state.apply_permutation(|b| Ok(l.set(b, row_reg, row as u64)))?;

    state.apply_unitary(&[flag], &hadamard())?;
    state.apply_unitary(&[col], &ranged_uniform(col_w, table.cols()))?;
    let on_zero = |b: u128| l.get(b, flag) == 0;
    apply_oracle_where(&mut state, table, row_reg, Some(col), value, on_zero, counters)?;
    controlled_rotation_where(&mut state, value, anc, c_scale, on_zero, counters)?;
    apply_oracle_where(&mut state, table, row_reg, Some(col), value, on_zero, counters)?;
    state.apply_unitary(&[flag], &hadamard())?;
    counters.note_ancillas(l.total_qubits() - l.reg(row_reg).width as usize);
    Ok(UyCircuit { state, flag, row: row_reg, col })
}

/// Median-boosted estimate of `L̄_i = C(1 − 2P̃)`.
pub fn estimate_row_mean<R: Rng + ?Sized>(
    table: &OracleTable,
    row: usize,
    config: &MeanEstimationConfig,
    rng: &mut R,
    counters: &mut StageCounters,
) -> Result<f64> {
    let mut local = StageCounters::default();
    let uy = build_uy(table, row, config.c_scale, &mut local)?;
    let grover = GroverOperator::from_state(&uy.state, uy.good());
    let dist = grover.outcome_distribution(config.precision_bits)?;
    let trials: Vec<f64> = (0..config.repetitions)
        .map(|_| {
            let z = amp_est::sample_index(&dist, rng);
            config.c_scale * (1.0 - 2.0 * amp_est::estimate_from_outcome(z, config.precision_bits))
        })
        .collect();
    charge_coherent_mean(table, config, counters);
    counters.note_ancillas(local.ancilla_high_water + config.precision_bits as usize);
    amp_est::median_boost(&trials, config.repetitions)
}

/// One seeded estimate per row.
pub fn estimate_all_means<R: Rng + ?Sized>(
    table: &OracleTable,
    config: &MeanEstimationConfig,
    rng: &mut R,
    counters: &mut StageCounters,
) -> Result<Vec<f64>> {
    (0..table.rows()).map(|i| estimate_row_mean(table, i, config, rng, counters)).collect()
}

/// `|i⟩|z⟩ → |i⟩|z ⊕ enc(L̃_i)⟩` where `L̃_i` is a fixed estimate per row,
/// obtained once and then applied as a permutation. Returns the quantized
/// estimates. One coherent application costs one estimate's queries, since
/// every branch runs the same circuit in superposition.
pub fn coherent_mean<R: Rng + ?Sized>(
    state: &mut QuantumState,
    table: &OracleTable,
    index_reg: RegId,
    out_reg: RegId,
    config: &MeanEstimationConfig,
    rng: &mut R,
    counters: &mut StageCounters,
) -> Result<Vec<f64>> {
    let format = state
        .layout()
        .reg(out_reg)
        .format
        .ok_or_else(|| Error::InvalidArgument("mean output register needs a fixed-point format".into()))?;
    let mut scratch = StageCounters::default();
    let means = estimate_all_means(table, config, rng, &mut scratch)?;
    let quantized: Vec<f64> = means.iter().map(|&m| format.quantize(m)).collect::<Result<_>>()?;
    apply_lookup(state, &[index_reg], out_reg, |x| quantized.get(x[0] as usize).copied(), |_| true)?;
    charge_coherent_mean(table, config, counters);
    Ok(quantized)
}

/// Cost of one coherent `U_mean` over `table`.
pub fn charge_coherent_mean(table: &OracleTable, config: &MeanEstimationConfig, counters: &mut StageCounters) {
    counters.query(&table.name, config.queries_per_estimate(), table.access_cost);
    counters.qpe_bits += (config.precision_bits as usize * config.repetitions) as u64;
}

/// Mean-centering oracle `|i⟩|j⟩|0⟩ → |i⟩|j⟩|M_ij − M̃_i⟩`, built by running
/// the table oracle, the coherent mean and the subtraction on a uniform
/// superposition over all `(i, j)` and reading the table off the result.
pub fn qms_oracle<R: Rng + ?Sized>(
    table: &OracleTable,
    config: &MeanEstimationConfig,
    out_format: FixedFormat,
    rng: &mut R,
    counters: &mut StageCounters,
) -> Result<OracleTable> {
    let mut layout = RegisterLayout::new(DEFAULT_QUBIT_CAP);
    let rw = bits_for(table.rows() as u64);
    let cw = bits_for(table.cols() as u64);
    let i = layout.add("i", rw)?;
    let j = layout.add("j", cw)?;
    let m = layout.add_fixed("m", table.format)?;
    let mu = layout.add_fixed("mu", out_format)?;
    let out = layout.add_fixed("centered", out_format)?;
    let mut state = QuantumState::zero(layout);
    state.apply_unitary(&[i], &ranged_uniform(rw, table.rows()))?;
    state.apply_unitary(&[j], &ranged_uniform(cw, table.cols()))?;
    apply_oracle(&mut state, table, i, Some(j), m, counters)?;
    coherent_mean(&mut state, table, i, mu, config, rng, counters)?;
    arithmetic_oracle(&mut state, &Expr::sub(Expr::reg(m), Expr::reg(mu)), out, counters)?;

    let l = state.layout_arc();
    let mut centered = DMatrix::zeros(table.rows(), table.cols());
    for &b in state.amplitudes().keys() {
        centered[(l.get(b, i) as usize, l.get(b, j) as usize)] = l.value(b, out);
    }
    OracleTable::new(&format!("{}_centered", table.name), centered, out_format)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn table(rows: usize, cols: usize, v: &[f64]) -> OracleTable {
        OracleTable::new("L", DMatrix::from_row_slice(rows, cols, v), FixedFormat::default()).unwrap()
    }

    fn direct_mean(t: &OracleTable, i: usize) -> f64 {
        (0..t.cols()).map(|j| t.stored(i, j)).sum::<f64>() / t.cols() as f64
    }

    #[test]
    fn flag_probability_identity() {
        let t = table(3, 3, &[1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.5, -0.5, 0.25]);
        let mut c = StageCounters::default();
        for i in 0..3 {
            let uy = build_uy(&t, i, 1.0, &mut c).unwrap();
            let want = (1.0 - direct_mean(&t, i)) / 2.0;
            assert!((uy.flag_probability() - want).abs() < 1e-12);
        }
        assert_eq!(c.queries("L"), 6);
    }

    #[test]
    fn half_for_symmetric_row() {
        let t = table(1, 2, &[0.5, -0.5]);
        let uy = build_uy(&t, 0, 0.5, &mut StageCounters::default()).unwrap();
        assert!((uy.flag_probability() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ancilla_rotation_and_value_register_cleared() {
        let t = table(1, 3, &[0.25, 0.5, -1.0]);
        let uy = build_uy(&t, 0, 1.0, &mut StageCounters::default()).unwrap();
        let l = uy.state.layout_arc();
        let v = l.find("value").unwrap();
        assert!(uy.state.amplitudes().keys().all(|&b| l.get(b, v) == 0));
    }

    #[test]
    fn constant_row_exact() {
        let t = table(1, 4, &[1.0; 4]);
        let cfg = MeanEstimationConfig::new(0.05, 0.05, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let est = estimate_row_mean(&t, 0, &cfg, &mut rng, &mut StageCounters::default()).unwrap();
        assert_eq!(est, 1.0);
    }

    #[test]
    fn ramp_row_within_tolerance() {
        let t = table(1, 4, &[1.0, 2.0, 3.0, 4.0]);
        let cfg = MeanEstimationConfig::new(0.1, 0.05, 4.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let est = estimate_row_mean(&t, 0, &cfg, &mut rng, &mut StageCounters::default()).unwrap();
            assert!((2.4..=2.6).contains(&est), "{est}");
        }
    }

    #[test]
    fn rotation_bound_rejected() {
        let t = table(1, 2, &[2.0, 0.0]);
        assert!(matches!(build_uy(&t, 0, 1.0, &mut StageCounters::default()), Err(Error::RotationBound { .. })));
    }

    #[test]
    fn config_validation() {
        assert!(MeanEstimationConfig::new(0.0, 0.1, 1.0).is_err());
        assert!(MeanEstimationConfig::new(0.1, 0.5, 1.0).is_err());
        assert!(MeanEstimationConfig::new(0.1, 0.1, 0.0).is_err());
    }

    #[test]
    fn coherent_mean_entangles_rows() {
        let t = table(2, 2, &[1.0, 3.0, 2.0, 2.0]);
        let cfg = MeanEstimationConfig::for_table(&t, 0.01, 0.05).unwrap();
        let mut layout = RegisterLayout::new(DEFAULT_QUBIT_CAP);
        let i = layout.add("i", 1).unwrap();
        let out = layout.add_fixed("mean", FixedFormat::default()).unwrap();
        let mut st = QuantumState::zero(layout);
        st.apply_unitary(&[i], &hadamard()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let means = coherent_mean(&mut st, &t, i, out, &cfg, &mut rng, &mut StageCounters::default()).unwrap();
        let l = st.layout_arc();
        for &b in st.amplitudes().keys() {
            assert!((l.value(b, out) - 2.0).abs() <= 0.01 + FixedFormat::default().ulp());
        }
        assert_eq!(st.support_size(), 2);
        assert_eq!(means.len(), 2);
    }

    #[test]
    fn coherent_mean_xor_involution() {
        let t = table(1, 2, &[0.5, 1.5]);
        let cfg = MeanEstimationConfig::for_table(&t, 0.02, 0.05).unwrap();
        let mut layout = RegisterLayout::new(DEFAULT_QUBIT_CAP);
        let i = layout.add("i", 1).unwrap();
        let out = layout.add_fixed("mean", FixedFormat::default()).unwrap();
        let mut st = QuantumState::zero(layout);
        let l = st.layout_arc();
        st.apply_permutation(|b| Ok(l.set(b, out, 5))).unwrap();
        let before = st.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let means = coherent_mean(&mut st, &t, i, out, &cfg, &mut rng, &mut StageCounters::default()).unwrap();
        // reapply the same fixed table
        let fixed = OracleTable::column("again", &means, FixedFormat::default()).unwrap();
        apply_oracle(&mut st, &fixed, i, None, out, &mut StageCounters::default()).unwrap();
        assert!(st.distance(&before) < 1e-14);
    }

    #[test]
    fn qms_matches_classical_centering() {
        let t = table(1, 2, &[1.0, 3.0]);
        let cfg = MeanEstimationConfig::for_table(&t, 0.02, 0.01).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = qms_oracle(&t, &cfg, FixedFormat::default(), &mut rng, &mut StageCounters::default()).unwrap();
        assert!((c.stored(0, 0) + 1.0).abs() <= 0.02 + 2.0 * FixedFormat::default().ulp());
        assert!((c.stored(0, 1) - 1.0).abs() <= 0.02 + 2.0 * FixedFormat::default().ulp());
    }
}
