//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Relative cutoff below which a singular value counts as zero.
pub const RANK_RTOL: f64 = 1e-10;

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn sym_eig_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 0 {
        return (0.0, 0.0);
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let lo = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().cloned().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn sigma_max(m: &DMatrix<f64>) -> f64 {
    singular_values(m).first().cloned().unwrap_or(0.0)
}

/// Smallest singular value above `RANK_RTOL · σ_max`, or `None` for a zero matrix.
pub fn sigma_min_nonzero(m: &DMatrix<f64>) -> Option<f64> {
    let s = singular_values(m);
    let top = *s.first()?;
    if top == 0.0 {
        return None;
    }
    s.into_iter().rev().find(|&v| v > RANK_RTOL * top)
}

pub fn rank(m: &DMatrix<f64>) -> usize {
    let s = singular_values(m);
    match s.first() {
        Some(&top) if top > 0.0 => s.iter().filter(|&&v| v > RANK_RTOL * top).count(),
        _ => 0,
    }
}

/// Symmetric square root of a PSD matrix (negative eigenvalues clipped).
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Whether `v` lies in the row space of `rows` (up to a relative residual).
pub fn in_row_space(rows: &DMatrix<f64>, v: &DVector<f64>) -> bool {
    let vn = v.norm();
    if vn == 0.0 {
        return true;
    }
    if rows.nrows() == 0 {
        return false;
    }
    let at = rows.transpose();
    let svd = at.clone().svd(true, true);
    let coef = match svd.solve(v, RANK_RTOL * sigma_max(rows)) {
        Ok(c) => c,
        Err(_) => return false,
    };
    (at * coef - v).norm() <= 1e-8 * vn.max(1.0)
}

/// Vertically stack matrices with a common column count.
pub fn vstack(blocks: &[&DMatrix<f64>], cols: usize) -> DMatrix<f64> {
    let total: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(total, cols);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(*b);
        r += b.nrows();
    }
    out
}

/// Row-major flattening.
pub fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn inf_norm_vec(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extremes_and_sigma() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        assert_eq!(sym_eig_extremes(&m), (1.0, 2.0));
        let row = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        assert!((sigma_min_nonzero(&row).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(rank(&row), 1);
        assert!(sigma_min_nonzero(&DMatrix::zeros(2, 2)).is_none());
    }

    #[test]
    fn row_space_membership() {
        let rows = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        assert!(in_row_space(&rows, &DVector::from_vec(vec![2.0, 2.0, 0.0])));
        assert!(!in_row_space(&rows, &DVector::from_vec(vec![1.0, 0.0, 0.0])));
    }

    #[test]
    fn sqrt_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let r = psd_sqrt(&m);
        assert!((&r * &r - m).norm() < 1e-12);
    }
}
