//! Dense vector and row-major matrix kernels on `f64` slices.

use crate::error::{Error, Result};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `out = W x + b` for a `rows x cols` row-major `W`.
pub fn affine(w: &[f64], b: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    (0..rows).map(|r| b[r] + dot(&w[r * cols..(r + 1) * cols], x)).collect()
}

/// `W^T y` for a `rows x cols` row-major `W`.
pub fn matvec_t(w: &[f64], rows: usize, cols: usize, y: &[f64]) -> Vec<f64> {
    debug_assert_eq!(y.len(), rows);
    let mut out = vec![0.0; cols];
    for (r, &yr) in y.iter().enumerate() {
        axpy(yr, &w[r * cols..(r + 1) * cols], &mut out);
    }
    out
}

/// `G += a b^T`
pub fn add_outer(g: &mut [f64], rows: usize, cols: usize, a: &[f64], b: &[f64]) {
    debug_assert_eq!(g.len(), rows * cols);
    for (r, &ar) in a.iter().enumerate() {
        axpy(ar, b, &mut g[r * cols..(r + 1) * cols]);
    }
}

/// Returns `(v / |v|, |v|)`.
pub fn normalize(v: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = norm(v);
    if n == 0.0 {
        return Err(Error::ZeroNorm);
    }
    if !n.is_finite() {
        return Err(Error::NotFinite(format!("cannot normalize vector with norm {n}")));
    }
    Ok((v.iter().map(|x| x / n).collect(), n))
}

/// Backward of `z = v / |v|`: `dv = (dz - z (z . dz)) / |v|`.
pub fn normalize_backward(z: &[f64], norm: f64, dz: &[f64]) -> Vec<f64> {
    let zdz = dot(z, dz);
    z.iter().zip(dz).map(|(zi, gi)| (gi - zi * zdz) / norm).collect()
}

/// Numerically stable `ln(1 + e^x)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-shifted log-sum-exp. Returns `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Softmax weights for the same input as [`log_sum_exp`].
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(xs);
    xs.iter().map(|x| (x - lse).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_is_stable_at_extremes() {
        assert!((softplus(700.0) - 700.0).abs() < 1e-12);
        assert!((softplus(1e6) - 1e6).abs() < 1e-6);
        assert!(softplus(-1e6) >= 0.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn normalize_rejects_zero() {
        assert!(matches!(normalize(&[0.0, 0.0]), Err(Error::ZeroNorm)));
    }

    #[test]
    fn normalize_backward_is_tangent() {
        let (z, n) = normalize(&[3.0, 4.0]).unwrap();
        let dv = normalize_backward(&z, n, &z);
        assert!(norm(&dv) < 1e-15);
    }

    #[test]
    fn lse_matches_naive() {
        let xs = [0.3, -1.2, 2.5];
        let naive = xs.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&xs) - naive).abs() < 1e-14);
    }
}
