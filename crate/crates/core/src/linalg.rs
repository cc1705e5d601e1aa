//! Minimal dense kernels over row-major `f64` slices.
//!
//! Embedding dimensions stay small (k in the single digits for the test
//! suites), so plain loops beat pulling in a matrix library.

/// Inner product of two equal-length slices.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out += mat * x` for a `rows x cols` row-major matrix.
pub(crate) fn matvec_acc(out: &mut [f64], mat: &[f64], x: &[f64], rows: usize, cols: usize) {
    debug_assert_eq!(mat.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(out.len(), rows);
    for r in 0..rows {
        out[r] += dot(&mat[r * cols..(r + 1) * cols], x);
    }
}

/// `out += mat^T * v` for a `rows x cols` row-major matrix.
pub(crate) fn matvec_t_acc(out: &mut [f64], mat: &[f64], v: &[f64], rows: usize, cols: usize) {
    debug_assert_eq!(mat.len(), rows * cols);
    debug_assert_eq!(v.len(), rows);
    debug_assert_eq!(out.len(), cols);
    for r in 0..rows {
        let vr = v[r];
        for c in 0..cols {
            out[c] += mat[r * cols + c] * vr;
        }
    }
}

/// `out += a * b^T` (outer product) accumulated into a row-major matrix.
pub(crate) fn outer_acc(out: &mut [f64], a: &[f64], b: &[f64]) {
    debug_assert_eq!(out.len(), a.len() * b.len());
    let cols = b.len();
    for (r, &ar) in a.iter().enumerate() {
        for (c, &bc) in b.iter().enumerate() {
            out[r * cols + c] += ar * bc;
        }
    }
}

/// `out += s * a`.
#[inline]
pub(crate) fn axpy(out: &mut [f64], s: f64, a: &[f64]) {
    debug_assert_eq!(out.len(), a.len());
    for (o, &x) in out.iter_mut().zip(a) {
        *o += s * x;
    }
}
