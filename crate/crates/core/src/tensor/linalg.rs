//! Dense row-major helpers. GEMMs go through `matrixmultiply`.

use alloc::vec::Vec;

use crate::error::{check_len, Result};

/// Norms below this are treated as zero by [`cosine_similarity`].
pub const NORM_FLOOR: f64 = 1e-8;

/// `c (m×n) = a (m×k) · bᵀ` where `b` is stored row-major as n×k.
pub(crate) fn matmul_bt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, c: &mut [f64], accumulate: bool) {
    debug_assert!(a.len() >= m * k && b.len() >= n * k && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the slices cover every index implied by the dimensions and strides.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0, a.as_ptr(), k as isize, 1, b.as_ptr(), 1, k as isize, beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `c (m×n) = a (m×k) · b (k×n)`, all row-major.
pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, c: &mut [f64], accumulate: bool) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: as above.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0, a.as_ptr(), k as isize, 1, b.as_ptr(), n as isize, 1, beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `c (m×n) = aᵀ · b` where `a` is stored row-major as k×m and `b` as k×n.
pub(crate) fn matmul_at(a: &[f64], b: &[f64], k: usize, m: usize, n: usize, c: &mut [f64], accumulate: bool) {
    debug_assert!(a.len() >= k * m && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: as above.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0, a.as_ptr(), 1, m as isize, b.as_ptr(), n as isize, 1, beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Cosine similarity with an explicit degenerate-input flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cosine {
    pub value: f64,
    /// Set when either input norm fell below [`NORM_FLOOR`]; `value` is then 0.
    pub degenerate: bool,
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<Cosine> {
    check_len("cosine_similarity", a.len(), b.len())?;
    let (na, nb) = (norm(a), norm(b));
    if na < NORM_FLOOR || nb < NORM_FLOOR {
        return Ok(Cosine {
            value: 0.0,
            degenerate: true,
        });
    }
    let value = (dot(a, b) / (na * nb)).clamp(-1.0, 1.0);
    Ok(Cosine {
        value,
        degenerate: false,
    })
}

/// Partial derivatives of `cos(a, b)` with respect to `a` and `b`, scaled by
/// `upstream` and added into `da`/`db`. Degenerate inputs contribute nothing.
pub(crate) fn cosine_backward(a: &[f64], b: &[f64], upstream: f64, da: &mut [f64], db: &mut [f64]) {
    let (na, nb) = (norm(a), norm(b));
    if na < NORM_FLOOR || nb < NORM_FLOOR || upstream == 0.0 {
        return;
    }
    let inv = 1.0 / (na * nb);
    let cos = dot(a, b) * inv;
    let (ca, cb) = (cos / (na * na), cos / (nb * nb));
    for i in 0..a.len() {
        da[i] += upstream * (b[i] * inv - ca * a[i]);
        db[i] += upstream * (a[i] * inv - cb * b[i]);
    }
}

pub(crate) fn normalize(v: &mut [f64]) {
    let n = norm(v);
    if n >= NORM_FLOOR {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

pub(crate) fn concat_rows(a: &[f64], da: usize, b: &[f64], db: usize, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * (da + db));
    for i in 0..n {
        out.extend_from_slice(&a[i * da..(i + 1) * da]);
        out.extend_from_slice(&b[i * db..(i + 1) * db]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[1.0, 0.0]).unwrap().value, 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap().value, 0.0);
        let c = cosine_similarity(&[1.0, 1.0], &[1.0, 0.0]).unwrap().value;
        assert!((c - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn cosine_degenerate_and_mismatch() {
        let c = cosine_similarity(&[0.0, 1e-9], &[1.0, 0.0]).unwrap();
        assert!(c.degenerate);
        assert_eq!(c.value, 0.0);
        assert!(cosine_similarity(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn gemm_variants_agree_with_naive() {
        // a: 2×3, b: 3×2
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0];
        let mut c = [0.0; 4];
        matmul(&a, &b, 2, 3, 2, &mut c, false);
        assert_eq!(c, [58.0, 64.0, 139.0, 154.0]);
        // bᵀ stored as 2×3
        let bt = [7.0, 9.0, 11.0, 8.0, 10.0, 12.0];
        matmul_bt(&a, &bt, 2, 3, 2, &mut c, false);
        assert_eq!(c, [58.0, 64.0, 139.0, 154.0]);
        // aᵀ stored as 3×2
        let at = [1.0, 4.0, 2.0, 5.0, 3.0, 6.0];
        matmul_at(&at, &b, 3, 2, 2, &mut c, false);
        assert_eq!(c, [58.0, 64.0, 139.0, 154.0]);
    }
}
