//! Small dense linear-algebra helpers shared by the classical solver and the
//! simulator.

use nalgebra::{Complex, DMatrix, DVector};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Symmetric eigendecomposition with eigenvalues sorted descending.
/// Eigenvectors are the columns of the returned matrix.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Hermitian eigendecomposition, eigenvalues sorted descending.
pub fn herm_eigen_desc(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let herm = (m + m.adjoint()).scale(0.5);
    let eig = herm.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMatrix::from_fn(m.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Apply `f` to the spectrum of a real symmetric matrix. Eigenvalues at or
/// below `cutoff` map to zero.
pub fn sym_spectral_fn(m: &DMatrix<f64>, cutoff: f64, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen_desc(m);
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    for (k, &lam) in vals.iter().enumerate() {
        if lam > cutoff {
            let v = vecs.column(k);
            out += f(lam) * v * v.transpose();
        }
    }
    out
}

/// Pseudo-inverse square root of a PSD matrix with relative cutoff
/// `rel_cutoff * lambda_max`. Returns the matrix and the retained rank.
pub fn psd_pinv_sqrt(m: &DMatrix<f64>, rel_cutoff: f64) -> (DMatrix<f64>, usize) {
    let (vals, _) = sym_eigen_desc(m);
    let lmax = vals.first().copied().unwrap_or(0.0).max(0.0);
    let cutoff = rel_cutoff * lmax;
    let rank = vals.iter().filter(|&&l| l > cutoff && l > 0.0).count();
    let cutoff = if lmax > 0.0 { cutoff } else { f64::INFINITY };
    (sym_spectral_fn(m, cutoff, |l| 1.0 / l.sqrt()), rank)
}

/// `exp(i t H)` for Hermitian `H`.
pub fn expm_i_herm(h: &CMatrix, t: f64) -> CMatrix {
    let (vals, vecs) = herm_eigen_desc(h);
    let n = h.nrows();
    let mut out = CMatrix::zeros(n, n);
    for (k, &lam) in vals.iter().enumerate() {
        let v = vecs.column(k);
        out += v * v.adjoint() * C64::from_polar(1.0, lam * t);
    }
    out
}

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| C64::new(x, 0.0))
}

pub fn real_part(m: &CMatrix) -> DMatrix<f64> {
    m.map(|z| z.re)
}

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn max_abs_c(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// Spectral norm via singular values.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().iter().fold(0.0_f64, |a, &s| a.max(s))
}

pub fn spectral_norm_c(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().iter().fold(0.0_f64, |a, &s| a.max(s))
}

/// Flip the sign so the largest-magnitude entry is positive. Ties go to the
/// lowest index.
pub fn canonical_sign(v: &mut DVector<f64>) {
    let mut best = 0;
    for k in 1..v.len() {
        if v[k].abs() > v[best].abs() + 1e-12 {
            best = k;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.neg_mut();
    }
}

/// Cosines of the principal angles between the column spaces of `a` and `b`
/// (both with orthonormal columns), descending.
pub fn principal_cosines(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let overlap = a.transpose() * b;
    let mut s: Vec<f64> = overlap.singular_values().iter().map(|x| x.min(1.0)).collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_descending() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0]);
        let (v, _) = sym_eigen_desc(&m);
        assert_eq!(v, vec![3.0, 1.0]);
    }

    #[test]
    fn pinv_sqrt_drops_null_space() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 0.0]);
        let (s, rank) = psd_pinv_sqrt(&m, 1e-10);
        assert_eq!(rank, 1);
        assert!((s[(0, 0)] - 0.5).abs() < 1e-14);
        assert_eq!(s[(1, 1)], 0.0);
    }

    #[test]
    fn expm_of_diagonal() {
        let h = to_complex(&DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.0, -1.1]));
        let u = expm_i_herm(&h, 2.0);
        assert!((u[(0, 0)] - C64::from_polar(1.0, 0.6)).norm() < 1e-12);
        assert!((u[(1, 1)] - C64::from_polar(1.0, -2.2)).norm() < 1e-12);
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(1.5)).collect();
        assert!((loglog_slope(&xs, &ys) - 1.5).abs() < 1e-12);
    }
}
