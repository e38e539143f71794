//! Block encodings of the density operators, the inverse square root of
//! `ρ_E`, their products and the signed combination giving `H̃`.
//!
//! Encodings act on vectors indexed `ancilla · dim + system`; the top-left
//! block is read with ancilla 0 on both sides. Nothing here materializes the
//! full unitary unless asked to.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{herm_eigen_desc, spectral_norm_c, CMatrix, CVector, C64};
use crate::prep::PreparedState;

#[derive(Clone, Debug)]
enum Kernel {
    /// Explicit unitary over `anc_dim · dim`.
    Dense { u: CMatrix, anc_dim: usize },
    /// `(U†⊗I)(I⊗SWAP)(U⊗I)` where `U` is the Householder reflection onto
    /// the purification `ψ` over (traced, system) of dimension `traced · dim`.
    Density { psi: CVector, traced: usize },
    Product(Box<BlockEncoding>, Box<BlockEncoding>),
    /// `(P_L†⊗I)(|0⟩⟨0|⊗U_F + |1⟩⟨1|⊗U_G)(P_R⊗I)` with `P_R = H`, `P_L = HX`.
    Combination(Box<BlockEncoding>, Box<BlockEncoding>),
}

#[derive(Clone, Debug)]
pub struct BlockEncoding {
    kernel: Kernel,
    pub label: String,
    /// `α` in an `(α, a, ε)` encoding.
    pub norm_factor: f64,
    /// Ancilla count in the accounting of the construction.
    pub ancilla_qubits: usize,
    /// Declared `ε`: `‖α·block − target‖ ≤ ε`.
    pub error_bound: f64,
    pub encoded_dim: usize,
}

fn reflect(psi: &CVector, v: &mut [C64]) {
    // U = I − 2uu†/‖u‖², u = ψ − e₀, maps e₀ to ψ (ψ₀ real)
    let mut uu = psi.clone();
    uu[0] -= C64::new(1.0, 0.0);
    let nn = uu.norm_squared();
    if nn < 1e-30 {
        return;
    }
    let dot: C64 = uu.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
    let k = dot * (2.0 / nn);
    for (x, a) in v.iter_mut().zip(uu.iter()) {
        *x -= a * k;
    }
}

impl BlockEncoding {
    pub fn identity(dim: usize) -> Self {
        Self {
            kernel: Kernel::Dense { u: CMatrix::identity(dim, dim), anc_dim: 1 },
            label: "identity".into(),
            norm_factor: 1.0,
            ancilla_qubits: 0,
            error_bound: 0.0,
            encoded_dim: dim,
        }
    }

    /// Wrap an explicit unitary; rejects non-unitary input.
    pub fn from_unitary(u: CMatrix, anc_dim: usize, norm_factor: f64, error_bound: f64, label: &str) -> Result<Self> {
        let n = u.nrows();
        if n != u.ncols() || anc_dim == 0 || n % anc_dim != 0 {
            return Err(Error::Dimension(format!("{n}x{} unitary with ancilla dimension {anc_dim}", u.ncols())));
        }
        let defect = crate::sim::state::unitarity_defect(&u);
        if defect > 1e-10 {
            return Err(Error::InvalidArgument(format!("{label}: unitarity defect {defect:.2e}")));
        }
        Ok(Self {
            label: label.into(),
            norm_factor,
            ancilla_qubits: qubits(anc_dim),
            error_bound,
            encoded_dim: n / anc_dim,
            kernel: Kernel::Dense { u, anc_dim },
        })
    }

    pub fn anc_dim(&self) -> usize {
        match &self.kernel {
            Kernel::Dense { anc_dim, .. } => *anc_dim,
            Kernel::Density { traced, .. } => traced * self.encoded_dim,
            Kernel::Product(a, b) => a.anc_dim() * b.anc_dim(),
            Kernel::Combination(f, g) => 2 * f.anc_dim().max(g.anc_dim()),
        }
    }

    /// Qubits of the ancilla space actually simulated.
    pub fn simulated_ancillas(&self) -> usize {
        qubits(self.anc_dim())
    }

    pub fn full_dim(&self) -> usize {
        self.anc_dim() * self.encoded_dim
    }

    /// Apply the unitary in place to a vector of length `full_dim()`.
    pub fn apply(&self, v: &mut [C64]) {
        let s = self.encoded_dim;
        match &self.kernel {
            Kernel::Dense { u, .. } => {
                let out = u * CVector::from_column_slice(v);
                v.copy_from_slice(out.as_slice());
            }
            Kernel::Density { psi, traced } => {
                let block = traced * s;
                // U on (traced, S1) for every S2: stride s
                let pass = |v: &mut [C64]| {
                    let mut buf = vec![C64::default(); block];
                    for s2 in 0..s {
                        for (r, b) in buf.iter_mut().enumerate() {
                            *b = v[r * s + s2];
                        }
                        reflect(psi, &mut buf);
                        for (r, b) in buf.iter().enumerate() {
                            v[r * s + s2] = *b;
                        }
                    }
                };
                pass(v);
                // SWAP S1 ↔ S2
                for a in 0..*traced {
                    for s1 in 0..s {
                        for s2 in (s1 + 1)..s {
                            v.swap((a * s + s1) * s + s2, (a * s + s2) * s + s1);
                        }
                    }
                }
                pass(v);
            }
            Kernel::Product(a, b) => {
                let (da, db) = (a.anc_dim(), b.anc_dim());
                let chunk = db * s;
                for ia in 0..da {
                    b.apply(&mut v[ia * chunk..(ia + 1) * chunk]);
                }
                let mut buf = vec![C64::default(); da * s];
                for ib in 0..db {
                    for ia in 0..da {
                        for x in 0..s {
                            buf[ia * s + x] = v[(ia * db + ib) * s + x];
                        }
                    }
                    a.apply(&mut buf);
                    for ia in 0..da {
                        for x in 0..s {
                            v[(ia * db + ib) * s + x] = buf[ia * s + x];
                        }
                    }
                }
            }
            Kernel::Combination(f, g) => {
                let half = v.len() / 2;
                let h = std::f64::consts::FRAC_1_SQRT_2;
                let hadamard = |v: &mut [C64]| {
                    for k in 0..half {
                        let (x, y) = (v[k], v[half + k]);
                        v[k] = (x + y) * h;
                        v[half + k] = (x - y) * h;
                    }
                };
                hadamard(v);
                let (lo, hi) = v.split_at_mut(half);
                f.apply(&mut lo[..f.full_dim()]);
                g.apply(&mut hi[..g.full_dim()]);
                hadamard(v);
                // X after the Hadamard: P_L† = X·H
                let (lo, hi) = v.split_at_mut(half);
                lo.swap_with_slice(hi);
            }
        }
    }

    /// `α·(⟨0|⊗I) U (|0⟩⊗I)`.
    pub fn block(&self) -> CMatrix {
        let s = self.encoded_dim;
        let mut out = CMatrix::zeros(s, s);
        let mut v = vec![C64::default(); self.full_dim()];
        for k in 0..s {
            v.iter_mut().for_each(|x| *x = C64::default());
            v[k] = C64::new(1.0, 0.0);
            self.apply(&mut v);
            for r in 0..s {
                out[(r, k)] = v[r] * self.norm_factor;
            }
        }
        out
    }

    /// The full unitary, column by column.
    pub fn to_dense(&self) -> CMatrix {
        let n = self.full_dim();
        let mut u = CMatrix::zeros(n, n);
        let mut v = vec![C64::default(); n];
        for k in 0..n {
            v.iter_mut().for_each(|x| *x = C64::default());
            v[k] = C64::new(1.0, 0.0);
            self.apply(&mut v);
            u.set_column(k, &CVector::from_column_slice(&v));
        }
        u
    }

    /// `‖α·block − target‖₂`.
    pub fn block_error(&self, target: &CMatrix) -> f64 {
        spectral_norm_c(&(self.block() - target))
    }
}

/// Qubits needed for a space of dimension `dim` (0 for dimension 1).
pub fn qubits(dim: usize) -> usize {
    if dim <= 1 {
        0
    } else {
        (usize::BITS - (dim - 1).leading_zeros()) as usize
    }
}

/// `block_extract`: the scaled top-left block.
pub fn block_extract(be: &BlockEncoding) -> CMatrix {
    be.block()
}

/// Encoding of `Tr_traced |ψ⟩⟨ψ|` from a purification indexed
/// `traced · dim + system`.
pub fn density_encoding_from_vector(psi: &CVector, traced: usize, dim: usize, error_bound: f64, label: &str) -> Result<BlockEncoding> {
    if psi.len() != traced * dim {
        return Err(Error::Dimension(format!("purification of length {} is not {traced}·{dim}", psi.len())));
    }
    let n = psi.norm();
    if !(n > 0.0) {
        return Err(Error::Degenerate(format!("{label}: zero purification")));
    }
    // fix the global phase so the first nonzero-able entry is real
    let phase = if psi[0].norm() > 0.0 { psi[0].conj() / psi[0].norm() } else { C64::new(1.0, 0.0) };
    let psi = psi * (phase / n);
    Ok(BlockEncoding {
        label: label.into(),
        norm_factor: 1.0,
        ancilla_qubits: qubits(traced) + qubits(dim),
        error_bound,
        encoded_dim: dim,
        kernel: Kernel::Density { psi, traced },
    })
}

/// Density encoding of a prepared state: the traced space is (first
/// register, rotation ancilla). Declared error `2ε` with `ε` the state's
/// declared error; the ancilla count is the layout's (`a + s`).
pub fn density_encoding(prep: &PreparedState) -> Result<BlockEncoding> {
    let l = prep.state.layout_arc();
    let (fd, sd) = (prep.first_dim, prep.second_dim);
    let mut psi = CVector::zeros(2 * fd * sd);
    for (&b, &a) in prep.state.amplitudes() {
        let f = l.get(b, prep.first) as usize;
        let s = l.get(b, prep.second) as usize;
        let anc = l.get(b, prep.ancilla) as usize;
        if f >= fd || s >= sd {
            return Err(Error::Dimension(format!("{}: amplitude on padding index", prep.kind.name())));
        }
        psi[(f * 2 + anc) * sd + s] += a;
    }
    let mut be = density_encoding_from_vector(&psi, 2 * fd, sd, 2.0 * prep.declared_error, &format!("rho_{}", &prep.kind.name()[4..]))?;
    let s_qubits = l.reg(prep.second).width as usize;
    be.ancilla_qubits = prep.circuit.ancilla_high_water + s_qubits;
    Ok(be)
}

/// Product `A·B`: norm factors multiply, ancillas add, errors propagate as
/// `α_A ε_B + α_B ε_A`.
pub fn product_encoding(a: &BlockEncoding, b: &BlockEncoding) -> Result<BlockEncoding> {
    if a.encoded_dim != b.encoded_dim {
        return Err(Error::Dimension(format!("product of {} and {} blocks", a.encoded_dim, b.encoded_dim)));
    }
    let total = a.anc_dim().checked_mul(b.anc_dim()).and_then(|x| x.checked_mul(a.encoded_dim));
    if total.map_or(true, |t| t > 1 << 26) {
        return Err(Error::CapExceeded { required: a.simulated_ancillas() + b.simulated_ancillas() + qubits(a.encoded_dim), cap: 26 });
    }
    Ok(BlockEncoding {
        label: format!("{}·{}", a.label, b.label),
        norm_factor: a.norm_factor * b.norm_factor,
        ancilla_qubits: a.ancilla_qubits + b.ancilla_qubits,
        error_bound: a.norm_factor * b.error_bound + b.norm_factor * a.error_bound,
        encoded_dim: a.encoded_dim,
        kernel: Kernel::Product(Box::new(a.clone()), Box::new(b.clone())),
    })
}

/// `F − G` from two encodings sharing a norm factor, with one extra ancilla
/// and norm `2α`. The declared error is supplied by the caller (the
/// combination itself adds none beyond `ε_F + ε_G`).
pub fn linear_combination_encoding(f: &BlockEncoding, g: &BlockEncoding, error_bound: Option<f64>) -> Result<BlockEncoding> {
    if (f.norm_factor - g.norm_factor).abs() > 1e-12 * f.norm_factor.max(1.0) {
        return Err(Error::InvalidArgument(format!("norm factors differ: {} vs {}", f.norm_factor, g.norm_factor)));
    }
    if f.encoded_dim != g.encoded_dim {
        return Err(Error::Dimension(format!("combination of {} and {} blocks", f.encoded_dim, g.encoded_dim)));
    }
    Ok(BlockEncoding {
        label: format!("({})−({})", f.label, g.label),
        norm_factor: 2.0 * f.norm_factor,
        ancilla_qubits: f.ancilla_qubits.max(g.ancilla_qubits) + 1,
        error_bound: error_bound.unwrap_or(f.error_bound + g.error_bound),
        encoded_dim: f.encoded_dim,
        kernel: Kernel::Combination(Box::new(f.clone()), Box::new(g.clone())),
    })
}

/// Parameters tying the inverse-square-root accuracy to the state-prep
/// accuracy.
#[derive(Clone, Debug, Serialize)]
pub struct EncodingParams {
    /// Largest condition number accepted.
    pub kappa_limit: f64,
    /// `1/λ_min` over the retained spectrum of `ρ_E`, set by
    /// [`inverse_sqrt_encoding`].
    pub kappa: f64,
    pub eps3: f64,
    pub eps_e: f64,
    pub eps_j: f64,
    pub eps_k: f64,
    /// User-requested `ε₃`, if any; compared against the achievable value.
    pub eps3_requested: Option<f64>,
}

/// `ε_E = ε₃ / (κ^{3/2} log³(κ^{3/2}/ε₃))`, with `log` clamped below at 1.
pub fn eps_e_required(eps3: f64, kappa: f64) -> f64 {
    let k = kappa.powf(1.5);
    let l = (k / eps3).ln().max(1.0);
    eps3 / (k * l * l * l)
}

/// Inverse of [`eps_e_required`] in `ε₃`.
pub fn eps3_for(eps_e: f64, kappa: f64) -> f64 {
    if eps_e <= 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while eps_e_required(hi, kappa) < eps_e {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if eps_e_required(mid, kappa) < eps_e {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Relative cutoff below which eigenvalues of `ρ_E` are treated as null.
pub fn spectral_cutoff(lambda_max: f64, kappa_limit: f64) -> f64 {
    lambda_max / (kappa_limit * 1.01)
}

/// `ρ^{−1/2}` on the retained spectrum of the encoded `ρ`, realized by
/// exact spectral synthesis and a one-qubit dilation, with norm factor
/// `2κ^{1/2}`.
pub fn inverse_sqrt_encoding(be_rho: &BlockEncoding, params: &mut EncodingParams) -> Result<BlockEncoding> {
    let rho = be_rho.block();
    let rho = (&rho + rho.adjoint()) * C64::new(0.5, 0.0);
    let (ev, vecs) = herm_eigen_desc(&rho);
    let lmax = ev[0];
    if !(lmax > 0.0) {
        return Err(Error::Degenerate("encoded density operator has no positive spectrum".into()));
    }
    let cutoff = spectral_cutoff(lmax, params.kappa_limit);
    let lmin = ev.iter().copied().filter(|&l| l >= cutoff).fold(f64::INFINITY, f64::min);
    let kappa = 1.0 / lmin;
    if kappa > params.kappa_limit {
        return Err(Error::Condition { measured: kappa, declared: params.kappa_limit });
    }
    params.kappa = kappa;
    let alpha = 2.0 * kappa.sqrt();
    let s = rho.nrows();
    let mut b = CMatrix::zeros(s, s);
    for (k, &l) in ev.iter().enumerate() {
        if l >= cutoff {
            let v = vecs.column(k);
            b += v * v.adjoint() * C64::new(l.powf(-0.5) / alpha, 0.0);
        }
    }
    let u = hermitian_dilation(&b);
    let eps3 = eps3_for(params.eps_e, kappa).max(1e-12);
    params.eps3 = eps3;
    let extra = qubits((kappa.powf(1.5) * (1.0 / eps3).ln().max(1.0)).ceil() as usize);
    let mut be = BlockEncoding::from_unitary(u, 2, alpha, eps3, "rho_E^-1/2")?;
    be.ancilla_qubits = be_rho.ancilla_qubits + extra;
    Ok(be)
}

/// `[[B, √(I−B²)], [√(I−B²), −B]]` for Hermitian `‖B‖ ≤ 1`.
pub fn hermitian_dilation(b: &CMatrix) -> CMatrix {
    let s = b.nrows();
    let (ev, vecs) = herm_eigen_desc(b);
    let mut c = CMatrix::zeros(s, s);
    for (k, &l) in ev.iter().enumerate() {
        let v = vecs.column(k);
        c += v * v.adjoint() * C64::new((1.0 - l * l).max(0.0).sqrt(), 0.0);
    }
    let mut u = CMatrix::zeros(2 * s, 2 * s);
    u.view_mut((0, 0), (s, s)).copy_from(b);
    u.view_mut((0, s), (s, s)).copy_from(&c);
    u.view_mut((s, 0), (s, s)).copy_from(&c);
    u.view_mut((s, s), (s, s)).copy_from(&(-b));
    u
}

/// Closed-form ancilla counts next to the ones summed from the preparation
/// layouts.
#[derive(Clone, Debug, Serialize, PartialEq, Eq)]
pub struct AncillaCounts {
    pub log_n: usize,
    pub log_c: usize,
    pub log_m1: usize,
    pub log_m2: usize,
    pub s: usize,
    /// `log n + log m₁ + 4`.
    pub a_e: usize,
    /// `log c + log m₂ + 1`.
    pub a_j: usize,
    /// `a_J + 3`.
    pub a_k: usize,
    /// The same counts summed register by register from the layouts.
    pub a_e_allocated: usize,
    pub a_j_allocated: usize,
    pub a_k_allocated: usize,
}

impl AncillaCounts {
    pub fn from_preparations(e: &PreparedState, j: &PreparedState, k: &PreparedState) -> Result<Self> {
        let w = |p: &PreparedState, name: &str| -> Result<usize> {
            let l = p.state.layout();
            l.find(name)
                .map(|r| l.reg(r).width as usize)
                .ok_or_else(|| Error::InvalidArgument(format!("{} has no register {name}", p.kind.name())))
        };
        let log_n = qubits(e.first_dim / 2);
        let log_c = w(j, "i")?;
        let log_m1 = w(e, "mean")? + w(e, "m")?;
        let log_m2 = w(j, "x")? + w(j, "nx")? + w(j, "mbar")? + w(j, "n_i")?;
        let a_e_allocated = w(e, "j")? + log_m1 + w(e, "flags")? + w(e, "anc")?;
        let a_j_allocated = log_c + log_m2 + w(j, "anc")?;
        let a_k_allocated = w(k, "i")? + w(k, "x")? + w(k, "nx")? + w(k, "mbar")? + w(k, "n_i")? + w(k, "flags")? + w(k, "anc")?;
        Ok(Self {
            log_n,
            log_c,
            log_m1,
            log_m2,
            s: w(e, "i")?,
            a_e: log_n + log_m1 + 4,
            a_j: log_c + log_m2 + 1,
            a_k: log_c + log_m2 + 4,
            a_e_allocated,
            a_j_allocated,
            a_k_allocated,
        })
    }
}

/// Real symmetric target as a complex matrix.
pub fn target(m: &DMatrix<f64>) -> CMatrix {
    crate::linalg::to_complex(m)
}
