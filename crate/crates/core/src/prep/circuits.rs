use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use super::{block_view, MeanSource, PrepConfig, ScalingBounds};
use crate::dcca::{mean_center, PaddedDataset, PairedDataset};
use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::mean::{charge_coherent_mean, estimate_all_means, MeanEstimationConfig};
use crate::prep::density::{trace_out_keep, DensityOperator};
use crate::sim::amplify::{fixed_point_amplify, AmplificationPlan};
use crate::sim::arith::{arithmetic_oracle_where, Expr};
use crate::sim::fixed::{bits_for, FixedFormat};
use crate::sim::oracle::{apply_index_map, apply_lookup, apply_oracle_where, OracleTable};
use crate::sim::resources::StageCounters;
use crate::sim::rotation::controlled_rotation;
use crate::sim::state::{ranged_uniform, QuantumState, RegId, RegisterLayout};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum StateKind {
    E,
    J,
    K,
}

impl StateKind {
    pub fn name(self) -> &'static str {
        match self {
            StateKind::E => "psi_E",
            StateKind::J => "psi_J",
            StateKind::K => "psi_K",
        }
    }
}

/// A prepared two-register state `Σ F_{s,f} |f⟩|s⟩` (first register `f`)
/// with its rotation ancilla, before and after amplification.
#[derive(Clone, Debug)]
pub struct PreparedState {
    pub kind: StateKind,
    /// Amplified state; every work register is back at zero.
    pub state: QuantumState,
    pub pre_amplification: QuantumState,
    pub first: RegId,
    pub second: RegId,
    pub ancilla: RegId,
    pub first_dim: usize,
    pub second_dim: usize,
    /// Divisor of the controlled rotation.
    pub scale: f64,
    /// Probability of the ancilla reading 0 before amplification.
    pub good_probability: f64,
    pub success_probability: f64,
    pub plan: AmplificationPlan,
    /// The data broke the `m0` assumption: the good probability fell below
    /// the design bound and the plan was redone with the actual value.
    pub m0_violation: bool,
    /// Row means `M̃_{k,*}` as loaded.
    pub row_means: Vec<f64>,
    /// Class-block means `𝓜̃^i_{k,*}` as loaded (`c × (p+q)`), when used.
    pub block_means: Option<DMatrix<f64>>,
    /// Per-entry error bound of the loaded factor.
    pub entry_error: f64,
    /// Bound on `‖|ψ̃⟩ − |ψ⟩‖` from the entry errors.
    pub mean_error_bound: f64,
    /// `mean_error_bound + √(2·infidelity_target)`.
    pub declared_error: f64,
    /// Largest amplitude left on work registers after uncomputation.
    pub work_residual: f64,
    /// Cost of one run of the preparation circuit.
    pub circuit: StageCounters,
    /// Circuit cost times `1 + 2·rounds`, plus the rounds.
    pub counters: StageCounters,
    pub total_qubits: usize,
}

impl PreparedState {
    /// Amplitudes on ancilla value `anc`, indexed `f · second_dim + s`.
    fn branch(&self, state: &QuantumState, anc: u64) -> DVector<C64> {
        let l = state.layout_arc();
        let mut v = DVector::zeros(self.first_dim * self.second_dim);
        for (&b, &a) in state.amplitudes() {
            if l.get(b, self.ancilla) != anc {
                continue;
            }
            let f = l.get(b, self.first) as usize;
            let s = l.get(b, self.second) as usize;
            if f < self.first_dim && s < self.second_dim {
                v[f * self.second_dim + s] += a;
            }
        }
        v
    }

    /// The loaded factor (second × first) recovered from the pre-amplification
    /// good branch.
    pub fn loaded_factor(&self) -> DMatrix<f64> {
        let v = self.branch(&self.pre_amplification, 0);
        let k = ((self.first_dim * self.second_dim) as f64).sqrt() * self.scale;
        DMatrix::from_fn(self.second_dim, self.first_dim, |s, f| v[f * self.second_dim + s].re * k)
    }

    /// Normalized good branch before amplification, `|ψ̃⟩`.
    pub fn good_vector(&self) -> DVector<C64> {
        let v = self.branch(&self.pre_amplification, 0);
        let n = v.norm();
        v / C64::new(n, 0.0)
    }

    /// `‖|ψ̃⟩ − |ψ⟩‖` against the exact factor.
    pub fn distance_to(&self, factor: &DMatrix<f64>) -> f64 {
        (self.good_vector() - target_vector(factor)).norm()
    }

    /// `|⟨ψ|0⟩_anc … |ψ_amplified⟩|²` against the exact factor.
    pub fn fidelity_with(&self, factor: &DMatrix<f64>) -> f64 {
        let v = self.branch(&self.state, 0);
        let total = self.state.norm().powi(2);
        target_vector(factor).dotc(&v).norm_sqr() / total
    }

    /// Reduced operator on the second register of the amplified state, with
    /// the first register and the ancilla traced out.
    pub fn density(&self) -> Result<DensityOperator> {
        let full = trace_out_keep(&self.state, &[self.second]);
        let outside: f64 = (self.second_dim..full.nrows()).map(|i| full[(i, i)].re).sum();
        if outside > 1e-10 {
            return Err(Error::Dimension(format!("{}: weight {outside:.2e} on padding indices", self.kind.name())));
        }
        let mut rho = full.view((0, 0), (self.second_dim, self.second_dim)).into_owned();
        rho /= C64::new(rho.trace().re, 0.0);
        let rho = (&rho + rho.adjoint()) * C64::new(0.5, 0.0);
        DensityOperator::new(rho, self.kind.name())
    }

    /// Oracle cost of one preparation `A` (for block-encoding accounting).
    pub fn unit_cost(&self) -> f64 {
        self.circuit.oracle_cost
    }

    /// Oracle cost of the full amplified preparation.
    pub fn cost(&self) -> f64 {
        self.counters.oracle_cost
    }
}

/// Normalized `Σ F_{s,f} |f⟩|s⟩`.
pub fn target_vector(factor: &DMatrix<f64>) -> DVector<C64> {
    let (sd, fd) = (factor.nrows(), factor.ncols());
    let n = factor.norm();
    DVector::from_fn(fd * sd, |r, _| C64::new(factor[(r % sd, r / sd)] / n, 0.0))
}

/// Tables and loaded means shared by the three circuits.
struct Loaded {
    work: FixedFormat,
    m_table: OracleTable,
    m_config: Option<MeanEstimationConfig>,
    row_means: Vec<f64>,
    padded_table: Option<OracleTable>,
    padded_config: Option<MeanEstimationConfig>,
    block_means: Option<DMatrix<f64>>,
    e1: f64,
    e2: f64,
}

fn load<R: Rng + ?Sized>(data: &PairedDataset, cfg: &PrepConfig, with_blocks: bool, rng: &mut R) -> Result<Loaded> {
    cfg.validate()?;
    let max_abs = data.max_abs();
    let w = data.n_max() as f64;
    let (eps1, eps2) = cfg.mean_errors();
    let m_format = FixedFormat::sized_for(max_abs, 1, cfg.frac_bits);
    let work = FixedFormat::sized_for(2.0 * w * (max_abs + eps1 + eps2 + 1.0), 1, cfg.frac_bits);
    let ulp = work.ulp();
    let m_table = OracleTable::new("M", data.stacked(), m_format)?;
    let (padded_table, exact_blocks) = if with_blocks {
        let padded = PaddedDataset::from_dataset(data);
        let view = padded_block_table(&padded, data.c(), m_format, cfg.qubit_cap)?;
        let pq = data.p() + data.q();
        let exact = DMatrix::from_fn(data.c(), pq, |i, k| padded.block_row_mean(i, k));
        (Some(view), Some(exact))
    } else {
        (None, None)
    };
    let quantize = |v: f64| work.quantize(v);
    let exact_rows: Vec<f64> = mean_center(data).row_means.iter().copied().collect();

    let (row_raw, block_raw, m_config, padded_config) = match &cfg.means {
        MeanSource::Exact => (exact_rows.clone(), exact_blocks.clone(), None, None),
        MeanSource::Given { row_means, block_means } => {
            if row_means.len() != exact_rows.len() {
                return Err(Error::Dimension(format!("{} row means for {} rows", row_means.len(), exact_rows.len())));
            }
            let blocks = match (block_means, &exact_blocks) {
                (Some(b), Some(e)) if b.shape() != e.shape() => {
                    return Err(Error::Dimension(format!("block means {:?}, expected {:?}", b.shape(), e.shape())))
                }
                (Some(b), Some(_)) => Some(b.clone()),
                _ => exact_blocks.clone(),
            };
            (row_means.clone(), blocks, None, None)
        }
        MeanSource::Estimated { eps1, eps2, delta } => {
            let mc = MeanEstimationConfig::for_table(&m_table, *eps1, *delta)?;
            let mut scratch = StageCounters::default();
            let rows = estimate_all_means(&m_table, &mc, rng, &mut scratch)?;
            let (blocks, pc) = match &padded_table {
                Some(t) => {
                    let pc = MeanEstimationConfig::for_table(t, *eps2, *delta)?;
                    let flat = estimate_all_means(t, &pc, rng, &mut scratch)?;
                    let pq = data.p() + data.q();
                    (Some(DMatrix::from_fn(data.c(), pq, |i, k| flat[i * pq + k])), Some(pc))
                }
                None => (None, None),
            };
            (rows, blocks, Some(mc), pc)
        }
    };
    let row_means = row_raw.into_iter().map(quantize).collect::<Result<Vec<_>>>()?;
    let block_means = match block_raw {
        Some(b) => {
            let mut q = b.clone();
            for v in q.iter_mut() {
                *v = quantize(*v)?;
            }
            Some(q)
        }
        None => None,
    };
    let given_err = |loaded: &[f64], exact: &[f64]| loaded.iter().zip(exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    // entry error of stored data plus mean error plus loading quantization
    let data_q = (0..m_table.rows())
        .flat_map(|i| (0..m_table.cols()).map(move |j| (i, j)))
        .map(|(i, j)| (m_table.stored(i, j) - m_table.values()[(i, j)]).abs())
        .fold(0.0, f64::max);
    let (e1, e2) = match &cfg.means {
        MeanSource::Given { .. } => {
            let e1 = given_err(&row_means, &exact_rows);
            let e2 = match (&block_means, &exact_blocks) {
                (Some(b), Some(e)) => given_err(b.as_slice(), e.as_slice()),
                _ => 0.0,
            };
            (e1 + data_q, e2 + data_q)
        }
        _ => (eps1 + ulp / 2.0 + data_q, eps2 + ulp / 2.0 + data_q),
    };
    Ok(Loaded { work, m_table, m_config, row_means, padded_table, padded_config, block_means, e1, e2 })
}

/// The `c(p+q) × n'` table of class-block entries `𝓜^i_{kj}`, read out of a
/// circuit that computes the address `i·n' + j` by index arithmetic and then
/// queries the padded-matrix oracle.
pub fn padded_block_table(padded: &PaddedDataset, c: usize, format: FixedFormat, cap: usize) -> Result<OracleTable> {
    let pq = padded.padded_matrix.nrows();
    let w = padded.block_width;
    let base = OracleTable::new("M_padded_full", padded.padded_matrix.clone(), format)?;
    let mut layout = RegisterLayout::new(cap);
    let (iw, kw, jw) = (bits_for(c as u64), bits_for(pq as u64), bits_for(w as u64));
    let i = layout.add("i", iw)?;
    let k = layout.add("k", kw)?;
    let j = layout.add("j", jw)?;
    let addr = layout.add("addr", bits_for((c * w) as u64))?;
    let out = layout.add_fixed("out", format)?;
    let mut st = QuantumState::zero(layout);
    st.apply_unitary(&[i], &ranged_uniform(iw, c))?;
    st.apply_unitary(&[k], &ranged_uniform(kw, pq))?;
    st.apply_unitary(&[j], &ranged_uniform(jw, w))?;
    let mut scratch = StageCounters::default();
    let address = |x: &[u64]| Some(x[0] * w as u64 + x[1]);
    apply_index_map(&mut st, &[i, j], addr, address, &mut scratch)?;
    apply_oracle_where(&mut st, &base, k, Some(addr), out, |_| true, &mut scratch)?;
    apply_index_map(&mut st, &[i, j], addr, address, &mut scratch)?;
    let l = st.layout_arc();
    let mut view = DMatrix::zeros(c * pq, w);
    for &b in st.amplitudes().keys() {
        view[(l.get(b, i) as usize * pq + l.get(b, k) as usize, l.get(b, j) as usize)] = l.value(b, out);
    }
    debug_assert_eq!(view, block_view(padded, c).map(|v| format.quantize(v).unwrap_or(v)));
    OracleTable::new("M_padded", view, format)
}

struct Finish<'a> {
    kind: StateKind,
    pre: QuantumState,
    first: RegId,
    second: RegId,
    ancilla: RegId,
    first_dim: usize,
    second_dim: usize,
    scale: f64,
    design: f64,
    work_regs: Vec<RegId>,
    circuit: StageCounters,
    loaded: &'a Loaded,
    entry_error: f64,
    nonzero_entries: usize,
}

fn finish(f: Finish<'_>, cfg: &PrepConfig) -> Result<PreparedState> {
    let l = f.pre.layout_arc();
    let anc = f.ancilla;
    let good = |b: u128| l.get(b, anc) == 0;
    let p = f.pre.probability(good);
    if p < 1e-24 {
        return Err(Error::Degenerate(format!("{}: degenerate centered data (zero factor norm)", f.kind.name())));
    }
    let work_residual = f.pre.max_amplitude_outside_zero(&f.work_regs);
    let m0_violation = p < f.design * (1.0 - 1e-12);
    let design = if m0_violation { p } else { f.design };
    let plan = AmplificationPlan::new(design.min(1.0), cfg.infidelity_target)?;
    let mut counters = StageCounters::default();
    let amplified = fixed_point_amplify(&f.pre, good, &plan, &mut counters)?;
    // each round reflects about A|0⟩: one A and one A†
    for _ in 0..(1 + 2 * plan.rounds()) {
        counters.merge(&f.circuit);
    }
    counters.ancilla_high_water = f.circuit.ancilla_high_water;

    let factor_norm = (p * (f.first_dim * f.second_dim) as f64).sqrt() * f.scale;
    let delta_norm = f.entry_error * (f.nonzero_entries as f64).sqrt();
    let mean_error_bound = if factor_norm > delta_norm { (2.0 * delta_norm / (factor_norm - delta_norm)).min(2.0) } else { 2.0 };
    let total_qubits = l.total_qubits();
    Ok(PreparedState {
        kind: f.kind,
        success_probability: amplified.success_probability,
        state: amplified.state,
        pre_amplification: f.pre,
        first: f.first,
        second: f.second,
        ancilla: f.ancilla,
        first_dim: f.first_dim,
        second_dim: f.second_dim,
        scale: f.scale,
        good_probability: p,
        plan,
        m0_violation,
        row_means: f.loaded.row_means.clone(),
        block_means: f.loaded.block_means.clone(),
        entry_error: f.entry_error,
        mean_error_bound,
        declared_error: mean_error_bound + (2.0 * cfg.infidelity_target).sqrt(),
        work_residual,
        circuit: f.circuit,
        counters,
        total_qubits,
    })
}

fn charge_mean(table: &OracleTable, config: &Option<MeanEstimationConfig>, counters: &mut StageCounters) {
    if let Some(c) = config {
        charge_coherent_mean(table, c, counters);
    }
}

/// `|ψ_E⟩ ∝ Σ É_ij |j⟩|i⟩` over `j < 2n`, `i < p+q`.
pub fn prepare_psi_e<R: Rng + ?Sized>(data: &PairedDataset, bounds: &ScalingBounds, cfg: &PrepConfig, rng: &mut R) -> Result<PreparedState> {
    let loaded = load(data, cfg, false, rng)?;
    let (p, q, n) = (data.p(), data.q(), data.n());
    let pq = p + q;
    let mut layout = RegisterLayout::new(cfg.qubit_cap);
    let (jw, iw) = (bits_for(2 * n as u64), bits_for(pq as u64));
    let j = layout.add("j", jw)?;
    let i = layout.add("i", iw)?;
    let mean = layout.add_fixed("mean", loaded.work)?;
    let flags = layout.add("flags", 2)?;
    let addr = layout.add("col", bits_for(n as u64))?;
    let m = layout.add_fixed("m", loaded.m_table.format)?;
    let ev = layout.add_fixed("e", loaded.work)?;
    let anc = layout.add("anc", 1)?;
    let mut st = QuantumState::zero(layout);
    let l = st.layout_arc();
    let mut c = StageCounters::default();
    let in_block = |b: u128| matches!(l.get(b, flags), 0 | 3);
    let flag_fn = move |x: &[u64]| Some(2 * (x[0] >= n as u64) as u64 + (x[1] >= p as u64) as u64);
    let col_fn = move |x: &[u64]| matches!(x[2], 0 | 3).then_some(x[0] % n as u64);
    let e_expr = Expr::sub(Expr::reg(m), Expr::reg(mean));
    let scale = bounds.alpha + loaded.e1;

    // uniform superposition over the index registers
    st.apply_unitary(&[j], &ranged_uniform(jw, 2 * n))?;
    st.apply_unitary(&[i], &ranged_uniform(iw, pq))?;
    // row means
    apply_lookup(&mut st, &[i], mean, |x| loaded.row_means.get(x[0] as usize).copied(), |_| true)?;
    charge_mean(&loaded.m_table, &loaded.m_config, &mut c);
    // block flags, then the column address j or j − n on the diagonal blocks
    apply_index_map(&mut st, &[j, i], flags, flag_fn, &mut c)?;
    apply_index_map(&mut st, &[j, i, flags], addr, col_fn, &mut c)?;
    apply_oracle_where(&mut st, &loaded.m_table, i, Some(addr), m, in_block, &mut c)?;
    arithmetic_oracle_where(&mut st, &e_expr, ev, in_block, &mut c)?;
    controlled_rotation(&mut st, ev, anc, scale, &mut c)?;
    // uncompute in reverse order
    arithmetic_oracle_where(&mut st, &e_expr, ev, in_block, &mut c)?;
    apply_oracle_where(&mut st, &loaded.m_table, i, Some(addr), m, in_block, &mut c)?;
    apply_index_map(&mut st, &[j, i, flags], addr, col_fn, &mut c)?;
    apply_index_map(&mut st, &[j, i], flags, flag_fn, &mut c)?;
    apply_lookup(&mut st, &[i], mean, |x| loaded.row_means.get(x[0] as usize).copied(), |_| true)?;
    charge_mean(&loaded.m_table, &loaded.m_config, &mut c);
    c.note_ancillas(l.total_qubits() - (jw + iw) as usize);

    let design = bounds.m0 * bounds.m0 / (4.0 * scale * scale);
    finish(
        Finish {
            kind: StateKind::E,
            pre: st,
            first: j,
            second: i,
            ancilla: anc,
            first_dim: 2 * n,
            second_dim: pq,
            scale,
            design,
            work_regs: vec![mean, flags, addr, m, ev],
            circuit: c,
            entry_error: loaded.e1,
            nonzero_entries: pq * n,
            loaded: &loaded,
        },
        cfg,
    )
}

/// `|ψ_J⟩ ∝ Σ J́_ki |i⟩|k⟩` over `i < c`, `k < p+q`.
pub fn prepare_psi_j<R: Rng + ?Sized>(data: &PairedDataset, bounds: &ScalingBounds, cfg: &PrepConfig, rng: &mut R) -> Result<PreparedState> {
    prepare_class_state(data, bounds, cfg, rng, false)
}

/// `|ψ_K⟩ ∝ Σ K̆_ki |i⟩|k⟩` over `i < 2c`, `k < p+q`, where the x rows pair
/// with the first `c` class indices and the y rows with the last `c`.
pub fn prepare_psi_k<R: Rng + ?Sized>(data: &PairedDataset, bounds: &ScalingBounds, cfg: &PrepConfig, rng: &mut R) -> Result<PreparedState> {
    prepare_class_state(data, bounds, cfg, rng, true)
}

fn prepare_class_state<R: Rng + ?Sized>(
    data: &PairedDataset,
    bounds: &ScalingBounds,
    cfg: &PrepConfig,
    rng: &mut R,
    split: bool,
) -> Result<PreparedState> {
    let loaded = load(data, cfg, true, rng)?;
    let blocks = loaded.block_means.as_ref().expect("class states load block means");
    let padded_table = loaded.padded_table.as_ref().expect("class states load the padded table");
    let (p, q, c) = (data.p(), data.q(), data.c());
    let pq = p + q;
    let w = data.n_max();
    let classes = if split { 2 * c } else { c };
    let mut layout = RegisterLayout::new(cfg.qubit_cap);
    let (iw, kw) = (bits_for(classes as u64), bits_for(pq as u64));
    let i = layout.add("i", iw)?;
    let k = layout.add("k", kw)?;
    let flags = layout.add("flags", 2)?;
    let class = layout.add("class", bits_for(c as u64))?;
    let x = layout.add_fixed("x", loaded.work)?;
    let nx = layout.add_fixed("nx", loaded.work)?;
    let mbar = layout.add_fixed("mbar", loaded.work)?;
    let size_format = FixedFormat::integer(w as u64);
    let ni = layout.add_fixed("n_i", size_format)?;
    let jv = layout.add_fixed("j", loaded.work)?;
    let anc = layout.add("anc", 1)?;
    let sizes: Vec<f64> = data.class_sizes().iter().map(|&s| s as f64).collect();
    let size_table = OracleTable::column("class_sizes", &sizes, size_format)?;

    let mut st = QuantumState::zero(layout);
    let l = st.layout_arc();
    let mut cn = StageCounters::default();
    // J uses every (i, k); K keeps the diagonal blocks (i < c, k < p) and (i ≥ c, k ≥ p)
    let flag_fn = move |v: &[u64]| Some(2 * (v[0] >= c as u64) as u64 + (v[1] >= p as u64) as u64);
    let la = l.clone();
    let active = move |b: u128| !split || matches!(la.get(b, flags), 0 | 3);
    let class_fn = move |v: &[u64]| (!split || matches!(v[1], 0 | 3)).then_some(v[0] % c as u64);
    let block_fn = |v: &[u64]| blocks.get((v[0] as usize, v[1] as usize)).copied();
    let nx_expr = Expr::scale(w as f64, Expr::reg(x));
    let j_expr = Expr::sub(Expr::reg(nx), Expr::mul(Expr::reg(ni), Expr::reg(mbar)));
    let scale = bounds.beta + w as f64 * (loaded.e1 + loaded.e2);

    st.apply_unitary(&[i], &ranged_uniform(iw, classes))?;
    st.apply_unitary(&[k], &ranged_uniform(kw, pq))?;
    if split {
        apply_index_map(&mut st, &[i, k], flags, flag_fn, &mut cn)?;
    }
    apply_index_map(&mut st, &[i, flags], class, class_fn, &mut cn)?;
    // padded class-block means, then n'·x
    apply_lookup(&mut st, &[class, k], x, block_fn, &active)?;
    charge_mean(padded_table, &loaded.padded_config, &mut cn);
    arithmetic_oracle_where(&mut st, &nx_expr, nx, &active, &mut cn)?;
    // row means on every branch
    apply_lookup(&mut st, &[k], mbar, |v| loaded.row_means.get(v[0] as usize).copied(), |_| true)?;
    charge_mean(&loaded.m_table, &loaded.m_config, &mut cn);
    // class sizes, then J́ = n'x − n_i·M̄
    apply_oracle_where(&mut st, &size_table, class, None, ni, &active, &mut cn)?;
    arithmetic_oracle_where(&mut st, &j_expr, jv, &active, &mut cn)?;
    controlled_rotation(&mut st, jv, anc, scale, &mut cn)?;
    // uncompute in reverse order
    arithmetic_oracle_where(&mut st, &j_expr, jv, &active, &mut cn)?;
    apply_oracle_where(&mut st, &size_table, class, None, ni, &active, &mut cn)?;
    apply_lookup(&mut st, &[k], mbar, |v| loaded.row_means.get(v[0] as usize).copied(), |_| true)?;
    charge_mean(&loaded.m_table, &loaded.m_config, &mut cn);
    arithmetic_oracle_where(&mut st, &nx_expr, nx, &active, &mut cn)?;
    apply_lookup(&mut st, &[class, k], x, block_fn, &active)?;
    charge_mean(padded_table, &loaded.padded_config, &mut cn);
    apply_index_map(&mut st, &[i, flags], class, class_fn, &mut cn)?;
    if split {
        apply_index_map(&mut st, &[i, k], flags, flag_fn, &mut cn)?;
    }
    cn.note_ancillas(l.total_qubits() - (iw + kw) as usize);

    let n2 = data.n_min() as f64;
    let bound_j = (n2 * bounds.m0).powi(2) / (2.0 * scale * scale);
    let bound = if split { bound_j / 2.0 } else { bound_j };
    let design = cfg.shared_jk_design.unwrap_or(bound);
    finish(
        Finish {
            kind: if split { StateKind::K } else { StateKind::J },
            pre: st,
            first: i,
            second: k,
            ancilla: anc,
            first_dim: classes,
            second_dim: pq,
            scale,
            design,
            work_regs: vec![flags, class, x, nx, mbar, ni, jv],
            circuit: cn,
            entry_error: w as f64 * (loaded.e1 + loaded.e2),
            nonzero_entries: c * pq,
            loaded: &loaded,
        },
        cfg,
    )
}

/// `|ψ_J⟩` and `|ψ_K⟩` with one shared amplification design, so both run the
/// same number of rounds.
pub fn prepare_psi_jk<R: Rng + ?Sized>(
    data: &PairedDataset,
    bounds: &ScalingBounds,
    cfg: &PrepConfig,
    rng: &mut R,
) -> Result<(PreparedState, PreparedState)> {
    let k = prepare_psi_k(data, bounds, cfg, rng)?;
    let shared = PrepConfig { shared_jk_design: Some(k.plan.design_lambda), ..cfg.clone() };
    let k = prepare_psi_k(data, bounds, &shared, rng)?;
    let j = prepare_psi_j(data, bounds, &shared, rng)?;
    Ok((j, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dcca::{reference_instance, DccaOperators};
    use crate::linalg::to_complex;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exact(data: &PairedDataset) -> (ScalingBounds, PrepConfig, ChaCha8Rng) {
        (ScalingBounds::for_dataset(data), PrepConfig::exact(), ChaCha8Rng::seed_from_u64(0))
    }

    #[test]
    fn psi_e_reference_amplitudes() {
        let d = reference_instance();
        let (b, cfg, mut rng) = exact(&d);
        let s = prepare_psi_e(&d, &b, &cfg, &mut rng).unwrap();
        let ops = DccaOperators::from_dataset(&d).unwrap();
        let f = s.loaded_factor();
        assert!((&f - &ops.e_factor).abs().max() < 1e-10, "{f}");
        assert!(s.distance_to(&ops.e_factor) < 1e-10);
        assert!(s.fidelity_with(&ops.e_factor) >= 1.0 - cfg.infidelity_target - 1e-9);
        assert!(s.work_residual < 1e-8);
        let rho = s.density().unwrap();
        let want = crate::prep::DensityOperator::new(to_complex(&(&ops.e_matrix / 6.0)), "E").unwrap();
        assert!(rho.trace_distance(&want) <= 2.0 * cfg.infidelity_target + 1e-9);
    }

    #[test]
    fn psi_j_and_k_reference() {
        let d = reference_instance();
        let (b, cfg, mut rng) = exact(&d);
        let (j, k) = prepare_psi_jk(&d, &b, &cfg, &mut rng).unwrap();
        let ops = DccaOperators::from_dataset(&d).unwrap();
        assert!((j.loaded_factor() - &ops.j_factor).abs().max() < 1e-10);
        assert!((k.loaded_factor() - &ops.k_factor).abs().max() < 1e-10);
        assert_eq!(k.loaded_factor()[(0, 2)], 0.0);
        assert_eq!(k.loaded_factor()[(1, 0)], 0.0);
        assert!(j.work_residual < 1e-8 && k.work_residual < 1e-8);
        assert_eq!(j.plan.rounds(), k.plan.rounds());
        assert_eq!(j.counters.oracle_cost, k.counters.oracle_cost);
        assert!(j.fidelity_with(&ops.j_factor) >= 1.0 - 1e-4 - 1e-9);
        assert!(k.fidelity_with(&ops.k_factor) >= 1.0 - 1e-4 - 1e-9);
    }

    #[test]
    fn estimated_means_close() {
        let d = reference_instance();
        let b = ScalingBounds::for_dataset(&d);
        let cfg = PrepConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = prepare_psi_e(&d, &b, &cfg, &mut rng).unwrap();
        let ops = DccaOperators::from_dataset(&d).unwrap();
        assert!(s.distance_to(&ops.e_factor) <= s.mean_error_bound);
        assert!(s.counters.total_queries() > 0);
    }

    #[test]
    fn degenerate_inputs_rejected() {
        let d = PairedDataset::new(DMatrix::from_element(1, 4, 2.0), DMatrix::from_element(1, 4, 1.0), vec![2, 2]).unwrap();
        let (b, cfg, mut rng) = exact(&d);
        assert!(matches!(prepare_psi_e(&d, &b.clone().with_m0(1.0), &cfg, &mut rng), Err(Error::Degenerate(_))));
        let one = PairedDataset::new(DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 4.0]), DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 1.0]), vec![3]).unwrap();
        let (b, cfg, mut rng) = exact(&one);
        assert!(matches!(prepare_psi_j(&one, &b, &cfg, &mut rng), Err(Error::Degenerate(_))));
    }

    #[test]
    fn padded_table_matches_view() {
        let d = reference_instance();
        let pd = PaddedDataset::from_dataset(&d);
        let t = padded_block_table(&pd, 2, FixedFormat::default(), 128).unwrap();
        assert_eq!(t.values(), &block_view(&pd, 2));
    }
}
