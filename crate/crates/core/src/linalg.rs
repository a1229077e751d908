//! Small dense helpers over plain slices.

use nalgebra::{DMatrix, DVector};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Solve `(A + ridge I) x = b` for symmetric positive (semi)definite `A`
/// stored row-major as `n x n`. Returns `None` when the factorization fails.
pub fn solve_spd(a: &[f64], n: usize, ridge: f64, b: &[f64]) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    if n == 0 {
        return Some(Vec::new());
    }
    let m = DMatrix::from_fn(n, n, |i, j| a[i * n + j] + if i == j { ridge } else { 0.0 });
    let chol = m.cholesky()?;
    let x = chol.solve(&DVector::from_column_slice(b));
    if x.iter().all(|v| v.is_finite()) {
        Some(x.as_slice().to_vec())
    } else {
        None
    }
}
