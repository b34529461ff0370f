//! Small dense linear-algebra helpers shared by the design and oracle code.

use nalgebra::{DMatrix, DVector};

/// Induced 1-norm (max absolute column sum).
pub fn norm1(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn l2_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn inf_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// LU solve with partial pivoting plus a reciprocal 1-norm condition estimate.
/// Returns `None` when the matrix is singular.
pub fn solve_with_rcond(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<(DVector<f64>, f64)> {
    let lu = a.clone().lu();
    let inv = lu.try_inverse()?;
    let rcond = 1.0 / (norm1(a) * norm1(&inv));
    let x = a.clone().lu().solve(b)?;
    if !rcond.is_finite() || x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some((x, rcond))
}

pub fn rcond(a: &DMatrix<f64>) -> f64 {
    match a.clone().try_inverse() {
        Some(inv) => {
            let r = 1.0 / (norm1(a) * norm1(&inv));
            if r.is_finite() {
                r
            } else {
                0.0
            }
        }
        None => 0.0,
    }
}

/// Orthonormal basis of the null space of `e` (columns), via SVD.
pub fn null_space(e: &DMatrix<f64>, cols: usize) -> DMatrix<f64> {
    if e.nrows() == 0 {
        return DMatrix::identity(cols, cols);
    }
    // pad to a square-ish matrix so the SVD returns a full V
    let mut padded = DMatrix::zeros(cols.max(e.nrows()), cols);
    padded.view_mut((0, 0), (e.nrows(), cols)).copy_from(e);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let smax = svd.singular_values.iter().fold(0.0f64, |a, s| a.max(*s));
    let tol = 1e-12 * smax.max(1.0) * cols as f64;
    let mut basis = Vec::new();
    for (k, s) in svd.singular_values.iter().enumerate() {
        if *s <= tol {
            basis.push(vt.row(k).transpose());
        }
    }
    // rows of vt beyond the singular values count are also null directions
    for k in svd.singular_values.len()..vt.nrows() {
        basis.push(vt.row(k).transpose());
    }
    if basis.is_empty() {
        DMatrix::zeros(cols, 0)
    } else {
        DMatrix::from_columns(&basis)
    }
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_sym_eigen(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let s = (m + m.transpose()) * 0.5;
    s.symmetric_eigenvalues().iter().fold(f64::INFINITY, |a, v| a.min(*v))
}
