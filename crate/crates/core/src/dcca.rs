//! Exact classical DCCA: mean-centering, the generalized eigenproblem
//! `D w = λ E w` and its Hermitian reduction `H v = λ v` with
//! `H = E^{-1/2} D E^{-1/2}`.
//!
//! Everything here is the ground truth the simulated quantum stages are
//! checked against.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{canonical_sign, max_abs, psd_pinv_sqrt, sym_eigen_desc};

/// Relative cutoff for the pseudo-inverse square root of `E`.
pub const E_PINV_CUTOFF: f64 = 1e-10;

/// Two modality matrices sharing `n` sample columns, grouped by class.
///
/// Columns are contiguous per class: class `i` occupies the columns
/// `offset(i) .. offset(i) + class_sizes[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedDataset {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    class_sizes: Vec<usize>,
}

impl PairedDataset {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, class_sizes: Vec<usize>) -> Result<Self> {
        if a.nrows() == 0 || b.nrows() == 0 {
            return Err(Error::InvalidDataset("p and q must be at least 1".into()));
        }
        if class_sizes.is_empty() || class_sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidDataset("class sizes must be positive and non-empty".into()));
        }
        let n: usize = class_sizes.iter().sum();
        if a.ncols() != n || b.ncols() != n {
            return Err(Error::InvalidDataset(format!(
                "class sizes sum to {n} but A has {} and B has {} columns",
                a.ncols(),
                b.ncols()
            )));
        }
        if a.iter().chain(b.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidDataset("non-finite entry".into()));
        }
        Ok(Self { a, b, class_sizes })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn class_sizes(&self) -> &[usize] {
        &self.class_sizes
    }
    pub fn p(&self) -> usize {
        self.a.nrows()
    }
    pub fn q(&self) -> usize {
        self.b.nrows()
    }
    pub fn n(&self) -> usize {
        self.a.ncols()
    }
    pub fn c(&self) -> usize {
        self.class_sizes.len()
    }
    /// `n'`, the largest class.
    pub fn n_max(&self) -> usize {
        *self.class_sizes.iter().max().unwrap()
    }
    /// `n''`, the smallest class.
    pub fn n_min(&self) -> usize {
        *self.class_sizes.iter().min().unwrap()
    }
    pub fn class_offset(&self, class: usize) -> usize {
        self.class_sizes[..class].iter().sum()
    }

    /// `M = (A; B)`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let (p, q, n) = (self.p(), self.q(), self.n());
        DMatrix::from_fn(p + q, n, |r, c| if r < p { self.a[(r, c)] } else { self.b[(r - p, c)] })
    }

    /// `max_ij |M_ij|`.
    pub fn max_abs(&self) -> f64 {
        max_abs(&self.a).max(max_abs(&self.b))
    }

    /// Same data with whole classes reordered by `perm` (new class `k` is old
    /// class `perm[k]`).
    pub fn permute_classes(&self, perm: &[usize]) -> Result<Self> {
        let mut cols = Vec::with_capacity(self.n());
        for &old in perm {
            let off = self.class_offset(old);
            cols.extend(off..off + self.class_sizes[old]);
        }
        let a = DMatrix::from_fn(self.p(), self.n(), |r, c| self.a[(r, cols[c])]);
        let b = DMatrix::from_fn(self.q(), self.n(), |r, c| self.b[(r, cols[c])]);
        Self::new(a, b, perm.iter().map(|&k| self.class_sizes[k]).collect())
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(&self.a * s, &self.b * s, self.class_sizes.clone())
    }
}

/// `𝓜`: every class block zero-padded to width `n'`.
#[derive(Clone, Debug)]
pub struct PaddedDataset {
    pub padded_matrix: DMatrix<f64>,
    pub block_width: usize,
}

impl PaddedDataset {
    pub fn from_dataset(data: &PairedDataset) -> Self {
        let m = data.stacked();
        let w = data.n_max();
        let mut padded = DMatrix::zeros(m.nrows(), data.c() * w);
        for (i, &size) in data.class_sizes().iter().enumerate() {
            let off = data.class_offset(i);
            for j in 0..size {
                padded.set_column(i * w + j, &m.column(off + j));
            }
        }
        Self { padded_matrix: padded, block_width: w }
    }

    /// Row mean of the padded class block `𝓜^i`, i.e. `𝓜̄^i_{k,*}`.
    pub fn block_row_mean(&self, class: usize, row: usize) -> f64 {
        let w = self.block_width;
        (0..w).map(|j| self.padded_matrix[(row, class * w + j)]).sum::<f64>() / w as f64
    }
}

#[derive(Clone, Debug)]
pub struct CenteredDataset {
    pub x_matrix: DMatrix<f64>,
    pub y_matrix: DMatrix<f64>,
    /// `M̄_{i,*}` for the `p + q` stacked rows.
    pub row_means: DVector<f64>,
}

impl CenteredDataset {
    /// `(X; Y)`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let (p, q, n) = (self.x_matrix.nrows(), self.y_matrix.nrows(), self.x_matrix.ncols());
        DMatrix::from_fn(p + q, n, |r, c| if r < p { self.x_matrix[(r, c)] } else { self.y_matrix[(r - p, c)] })
    }
}

pub fn mean_center(data: &PairedDataset) -> CenteredDataset {
    let m = data.stacked();
    let n = data.n() as f64;
    let means = DVector::from_fn(m.nrows(), |r, _| m.row(r).sum() / n);
    let centered = DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)] - means[r]);
    let p = data.p();
    CenteredDataset {
        x_matrix: centered.rows(0, p).into_owned(),
        y_matrix: centered.rows(p, data.q()).into_owned(),
        row_means: means,
    }
}

/// The matrices of the DCCA generalized eigenproblem and their factors.
#[derive(Clone, Debug)]
pub struct DccaOperators {
    pub p: usize,
    pub q: usize,
    pub class_block: DMatrix<f64>,
    pub d_matrix: DMatrix<f64>,
    pub e_matrix: DMatrix<f64>,
    pub j_matrix: DMatrix<f64>,
    pub k_matrix: DMatrix<f64>,
    /// `𝕏`, per-class column sums of `X` (p × c).
    pub class_sums_x: DMatrix<f64>,
    /// `𝕐` (q × c).
    pub class_sums_y: DMatrix<f64>,
    /// `É = diag(X, Y)`, (p+q) × 2n.
    pub e_factor: DMatrix<f64>,
    /// `J́ = (𝕏; 𝕐)`, (p+q) × c.
    pub j_factor: DMatrix<f64>,
    /// `K̆ = diag(𝕏, 𝕐)`, (p+q) × 2c.
    pub k_factor: DMatrix<f64>,
}

pub fn build_operators(centered: &CenteredDataset, data: &PairedDataset) -> Result<DccaOperators> {
    let (p, q, n, c) = (data.p(), data.q(), data.n(), data.c());
    let x = &centered.x_matrix;
    let y = &centered.y_matrix;
    if x.nrows() != p || y.nrows() != q || x.ncols() != n || y.ncols() != n || centered.row_means.len() != p + q {
        return Err(Error::Dimension(format!(
            "centered data is {}x{} / {}x{} but dataset is p={p} q={q} n={n}",
            x.nrows(),
            x.ncols(),
            y.nrows(),
            y.ncols()
        )));
    }
    let mut class_block = DMatrix::zeros(n, n);
    for i in 0..c {
        let off = data.class_offset(i);
        let size = data.class_sizes()[i];
        class_block.view_mut((off, off), (size, size)).fill(1.0);
    }
    let class_sums = |m: &DMatrix<f64>| {
        DMatrix::from_fn(m.nrows(), c, |r, i| {
            let off = data.class_offset(i);
            (off..off + data.class_sizes()[i]).map(|j| m[(r, j)]).sum()
        })
    };
    let sx = class_sums(x);
    let sy = class_sums(y);

    let mut e_factor = DMatrix::zeros(p + q, 2 * n);
    e_factor.view_mut((0, 0), (p, n)).copy_from(x);
    e_factor.view_mut((p, n), (q, n)).copy_from(y);
    let mut j_factor = DMatrix::zeros(p + q, c);
    j_factor.view_mut((0, 0), (p, c)).copy_from(&sx);
    j_factor.view_mut((p, 0), (q, c)).copy_from(&sy);
    let mut k_factor = DMatrix::zeros(p + q, 2 * c);
    k_factor.view_mut((0, 0), (p, c)).copy_from(&sx);
    k_factor.view_mut((p, c), (q, c)).copy_from(&sy);

    let e_matrix = &e_factor * e_factor.transpose();
    let j_matrix = &j_factor * j_factor.transpose();
    let k_matrix = &k_factor * k_factor.transpose();
    // the diagonal blocks cancel, leaving 𝕏𝕐ᵀ and its transpose
    let d_matrix = &j_matrix - &k_matrix;

    Ok(DccaOperators {
        p,
        q,
        class_block,
        d_matrix,
        e_matrix,
        j_matrix,
        k_matrix,
        class_sums_x: sx,
        class_sums_y: sy,
        e_factor,
        j_factor,
        k_factor,
    })
}

impl DccaOperators {
    pub fn from_dataset(data: &PairedDataset) -> Result<Self> {
        build_operators(&mean_center(data), data)
    }

    /// `E^{+1/2}` pseudo-inverse square root and retained rank.
    pub fn e_inv_sqrt(&self) -> (DMatrix<f64>, usize) {
        psd_pinv_sqrt(&self.e_matrix, E_PINV_CUTOFF)
    }

    /// `H = E^{-1/2} D E^{-1/2}` on the range of `E`.
    pub fn h_matrix(&self) -> DMatrix<f64> {
        let (s, _) = self.e_inv_sqrt();
        let h = &s * &self.d_matrix * &s;
        (&h + h.transpose()) * 0.5
    }

    /// `H̃ = ρ_E^{-1/2} ρ_J ρ_E^{-1/2} − ρ_E^{-1/2} ρ_K ρ_E^{-1/2}`, computed
    /// from the normalized density operators (with `tr K = tr J`).
    pub fn h_tilde(&self) -> DMatrix<f64> {
        let rho_e = &self.e_matrix / self.e_matrix.trace();
        let rho_j = &self.j_matrix / self.j_matrix.trace();
        let rho_k = &self.k_matrix / self.k_matrix.trace();
        let (s, _) = psd_pinv_sqrt(&rho_e, E_PINV_CUTOFF);
        &s * (rho_j - rho_k) * &s
    }

    /// `tr(J) / tr(E)`.
    pub fn trace_ratio(&self) -> f64 {
        self.j_matrix.trace() / self.e_matrix.trace()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionReport {
    pub retained_rank: usize,
    pub dimension: usize,
    /// Ratio of largest to smallest retained eigenvalue of `E`.
    pub condition_number: f64,
    pub singular: bool,
}

#[derive(Clone, Debug)]
pub struct SpectralResult {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<DVector<f64>>,
    /// `(w_x, w_y)` split of `w = E^{-1/2} v`, so that `wᵀ E w = 1`.
    pub projections: Vec<(DVector<f64>, DVector<f64>)>,
    pub d: usize,
    /// Set when one of the top-`d` eigenvalues ties with another eigenvalue
    /// (including the first excluded one).
    pub degenerate: bool,
    pub condition: ConditionReport,
    /// Full descending spectrum of `H`.
    pub spectrum: Vec<f64>,
}

impl SpectralResult {
    /// The `i`-th pair rescaled to satisfy both DCCA constraints
    /// `w_xᵀXXᵀw_x = w_yᵀYYᵀw_y = 1`.
    pub fn feasible_pair(&self, i: usize, ops: &DccaOperators) -> Option<(DVector<f64>, DVector<f64>)> {
        let (wx, wy) = &self.projections[i];
        let p = ops.p;
        let exx = ops.e_matrix.view((0, 0), (p, p));
        let eyy = ops.e_matrix.view((p, p), (ops.q, ops.q));
        let nx = (wx.transpose() * exx * wx)[(0, 0)];
        let ny = (wy.transpose() * eyy * wy)[(0, 0)];
        if nx <= 0.0 || ny <= 0.0 {
            return None;
        }
        Some((wx / nx.sqrt(), wy / ny.sqrt()))
    }

    pub fn w(&self, i: usize) -> DVector<f64> {
        let (wx, wy) = &self.projections[i];
        DVector::from_iterator(wx.len() + wy.len(), wx.iter().chain(wy.iter()).copied())
    }
}

/// Default pair count `min(c, p, q)`.
pub fn default_d(data: &PairedDataset) -> usize {
    data.c().min(data.p()).min(data.q())
}

/// Relative tolerance used to call two eigenvalues tied.
const TIE_TOL: f64 = 1e-9;

pub fn solve_dcca(ops: &DccaOperators, c: usize, d: usize) -> Result<SpectralResult> {
    let (p, q) = (ops.p, ops.q);
    if d == 0 || d > p.min(q) || d > c {
        return Err(Error::InvalidArgument(format!("d = {d} violates 1 <= d <= min(p={p}, q={q}, c={c})")));
    }
    let (e_vals, _) = sym_eigen_desc(&ops.e_matrix);
    let (s, rank) = ops.e_inv_sqrt();
    let lmax = e_vals[0].max(0.0);
    let retained_min = e_vals.iter().copied().filter(|&l| l > E_PINV_CUTOFF * lmax && l > 0.0).fold(f64::INFINITY, f64::min);
    let condition = ConditionReport {
        retained_rank: rank,
        dimension: p + q,
        condition_number: if rank > 0 { lmax / retained_min } else { f64::INFINITY },
        singular: rank < p + q,
    };

    let h = ops.h_matrix();
    let (vals, vecs) = sym_eigen_desc(&h);
    let scale = vals.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    let tied = |a: f64, b: f64| (a - b).abs() <= TIE_TOL * scale;
    let degenerate = (0..d).any(|i| (i + 1 < vals.len() && tied(vals[i], vals[i + 1])) || (i > 0 && tied(vals[i], vals[i - 1])));

    let mut eigenvectors = Vec::with_capacity(d);
    let mut projections = Vec::with_capacity(d);
    for k in 0..d {
        let mut v = vecs.column(k).into_owned();
        canonical_sign(&mut v);
        let w = &s * &v;
        projections.push((w.rows(0, p).into_owned(), w.rows(p, q).into_owned()));
        eigenvectors.push(v);
    }
    Ok(SpectralResult { eigenvalues: vals[..d].to_vec(), eigenvectors, projections, d, degenerate, condition, spectrum: vals })
}

/// The DCCA objective `w_xᵀ X C Yᵀ w_y` for a pair satisfying both
/// constraints within `1e-8`.
pub fn brute_force_objective(
    centered: &CenteredDataset,
    ops: &DccaOperators,
    w_x: &DVector<f64>,
    w_y: &DVector<f64>,
) -> Result<f64> {
    let x = &centered.x_matrix;
    let y = &centered.y_matrix;
    if w_x.len() != x.nrows() || w_y.len() != y.nrows() {
        return Err(Error::Dimension("projection length does not match p / q".into()));
    }
    let cx = (w_x.transpose() * x * x.transpose() * w_x)[(0, 0)];
    let cy = (w_y.transpose() * y * y.transpose() * w_y)[(0, 0)];
    if (cx - 1.0).abs() > 1e-8 || (cy - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidArgument(format!("constraints violated: wxᵀXXᵀwx = {cx}, wyᵀYYᵀwy = {cy}")));
    }
    Ok((w_x.transpose() * x * &ops.class_block * y.transpose() * w_y)[(0, 0)])
}

/// The p = q = 1, n = 4, two-class instance used throughout the tests and the
/// guide.
pub fn reference_instance() -> PairedDataset {
    PairedDataset::new(
        DMatrix::from_row_slice(1, 4, &[1.0, 2.0, 3.0, 4.0]),
        DMatrix::from_row_slice(1, 4, &[1.0, 1.0, 2.0, 2.0]),
        vec![2, 2],
    )
    .expect("reference instance is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, v)
    }

    #[test]
    fn mean_center_small_row() {
        let data = PairedDataset::new(mat(1, 4, &[1., 2., 3., 4.]), mat(1, 4, &[0.; 4]), vec![4]).unwrap();
        let c = mean_center(&data);
        assert_eq!(c.x_matrix.as_slice(), &[-1.5, -0.5, 0.5, 1.5]);
        assert_eq!(c.row_means[0], 2.5);
        assert_eq!(c.x_matrix.sum(), 0.0);
        assert_eq!(c.y_matrix.as_slice(), &[0.0; 4]);
        assert_eq!(c.row_means[1], 0.0);
    }

    #[test]
    fn mean_center_single_sample() {
        let data = PairedDataset::new(mat(1, 1, &[5.]), mat(1, 1, &[3.]), vec![1]).unwrap();
        let c = mean_center(&data);
        assert_eq!(c.x_matrix[(0, 0)], 0.0);
    }

    #[test]
    fn reference_operators() {
        let ops = DccaOperators::from_dataset(&reference_instance()).unwrap();
        assert_eq!(ops.class_sums_x.as_slice(), &[-2.0, 2.0]);
        assert_eq!(ops.class_sums_y.as_slice(), &[-1.0, 1.0]);
        assert_eq!(ops.e_matrix, mat(2, 2, &[5., 0., 0., 1.]));
        assert_eq!(ops.j_matrix, mat(2, 2, &[8., 4., 4., 2.]));
        assert_eq!(ops.k_matrix, mat(2, 2, &[8., 0., 0., 2.]));
        assert_eq!(ops.d_matrix, mat(2, 2, &[0., 4., 4., 0.]));
    }

    #[test]
    fn single_class_has_no_discriminant() {
        let data = PairedDataset::new(mat(1, 3, &[1., 5., 2.]), mat(1, 3, &[0., 1., 1.]), vec![3]).unwrap();
        let ops = DccaOperators::from_dataset(&data).unwrap();
        assert!(ops.class_sums_x.iter().all(|v| v.abs() < 1e-12));
        assert!(ops.d_matrix.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn singleton_classes_give_identity_class_block() {
        let a = mat(2, 3, &[1., 2., 4., 0., 1., -1.]);
        let data = PairedDataset::new(a.clone(), a, vec![1, 1, 1]).unwrap();
        let centered = mean_center(&data);
        let ops = build_operators(&centered, &data).unwrap();
        assert_eq!(ops.class_block, DMatrix::identity(3, 3));
        let xxt = &centered.x_matrix * centered.x_matrix.transpose();
        assert!((ops.d_matrix.view((0, 2), (2, 2)) - &xxt).abs().max() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let data = reference_instance();
        let mut centered = mean_center(&data);
        centered.x_matrix = DMatrix::zeros(2, 4);
        assert!(matches!(build_operators(&centered, &data), Err(Error::Dimension(_))));
    }

    #[test]
    fn reference_spectrum() {
        let data = reference_instance();
        let ops = DccaOperators::from_dataset(&data).unwrap();
        let res = solve_dcca(&ops, data.c(), 1).unwrap();
        assert!((res.eigenvalues[0] - 4.0 / 5f64.sqrt()).abs() < 1e-12);
        let v = &res.eigenvectors[0];
        let s = 0.5f64.sqrt();
        assert!((v[0] - s).abs() < 1e-12 && (v[1] - s).abs() < 1e-12);
        assert!(!res.condition.singular);
    }

    #[test]
    fn zero_discriminant_gives_zero_spectrum() {
        let data = PairedDataset::new(mat(1, 4, &[1., 2., 2., 1.]), mat(1, 4, &[0., 1., 1., 0.]), vec![2, 2]).unwrap();
        let ops = DccaOperators::from_dataset(&data).unwrap();
        let res = solve_dcca(&ops, 2, 1).unwrap();
        assert!(res.spectrum.iter().all(|l| l.abs() < 1e-12));
        assert!(res.degenerate);
    }

    #[test]
    fn identity_e_reduces_to_plain_eigenproblem() {
        let ops = DccaOperators {
            e_matrix: DMatrix::identity(2, 2),
            ..DccaOperators::from_dataset(&reference_instance()).unwrap()
        };
        let res = solve_dcca(&ops, 2, 1).unwrap();
        assert!((res.eigenvalues[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_d_rejected() {
        let data = reference_instance();
        let ops = DccaOperators::from_dataset(&data).unwrap();
        assert!(solve_dcca(&ops, 2, 2).is_err());
        assert!(solve_dcca(&ops, 2, 0).is_err());
    }

    #[test]
    fn objective_at_optimum_and_sign_flip() {
        let data = reference_instance();
        let centered = mean_center(&data);
        let ops = build_operators(&centered, &data).unwrap();
        let res = solve_dcca(&ops, 2, 1).unwrap();
        let (wx, wy) = res.feasible_pair(0, &ops).unwrap();
        let obj = brute_force_objective(&centered, &ops, &wx, &wy).unwrap();
        assert!((obj - res.eigenvalues[0]).abs() < 1e-8);
        let flipped = brute_force_objective(&centered, &ops, &wx, &(-&wy)).unwrap();
        assert!((flipped + obj).abs() < 1e-12);
    }

    #[test]
    fn objective_rejects_infeasible_pair() {
        let data = reference_instance();
        let centered = mean_center(&data);
        let ops = build_operators(&centered, &data).unwrap();
        let w = DVector::from_element(1, 1.0);
        assert!(brute_force_objective(&centered, &ops, &w, &w).is_err());
    }

    #[test]
    fn invalid_datasets_rejected() {
        assert!(PairedDataset::new(mat(1, 4, &[0.; 4]), mat(1, 4, &[0.; 4]), vec![2, 3]).is_err());
        assert!(PairedDataset::new(mat(1, 2, &[0.; 2]), mat(1, 2, &[0.; 2]), vec![2, 0]).is_err());
        assert!(PairedDataset::new(DMatrix::zeros(0, 2), mat(1, 2, &[0.; 2]), vec![2]).is_err());
    }

    #[test]
    fn padded_layout() {
        let data = PairedDataset::new(mat(1, 3, &[1., 2., 3.]), mat(1, 3, &[4., 5., 6.]), vec![1, 2]).unwrap();
        let padded = PaddedDataset::from_dataset(&data);
        assert_eq!(padded.block_width, 2);
        assert_eq!(padded.padded_matrix, mat(2, 4, &[1., 0., 2., 3., 4., 0., 5., 6.]));
        assert_eq!(padded.block_row_mean(0, 0), 0.5);
        assert_eq!(padded.block_row_mean(1, 1), 5.5);
    }
}
