//! Small dense-vector helpers. Embeddings are stored as `f32`; all score
//! arithmetic runs in `f64`.

use crate::error::{Error, Result};

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| *x as f64 * *y as f64)
        .sum()
}

pub fn l2_norm(v: &[f32]) -> f64 {
    v.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt()
}

/// Cosine similarity using the vectors' current norms.
///
/// Returns an error when either side has zero norm.
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64> {
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector("cosine of zero-norm vector"));
    }
    Ok(dot(a, b) / (na * nb))
}

/// Cosine that treats a zero-norm side as "no signal" instead of an error.
pub fn cosine_or_zero(a: &[f32], b: &[f32]) -> f64 {
    cosine(a, b).unwrap_or(0.0)
}

pub fn is_unit(v: &[f32], tol: f64) -> bool {
    (l2_norm(v) - 1.0).abs() <= tol
}

/// Scales `v` to unit L2 norm in place. No-op on the zero vector.
pub fn normalize(v: &mut [f32]) {
    let n = l2_norm(v);
    if n > 0.0 {
        for x in v.iter_mut() {
            *x = (*x as f64 / n) as f32;
        }
    }
}

pub fn to_hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_of_aligned_vectors_is_one() {
        let v = vec![0.6f32, 0.8];
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_rejects_zero_vector() {
        let z = vec![0.0f32; 3];
        let v = vec![1.0f32, 0.0, 0.0];
        assert!(matches!(cosine(&z, &v), Err(Error::ZeroVector(_))));
        assert_eq!(cosine_or_zero(&z, &v), 0.0);
    }

    #[test]
    fn normalize_produces_unit_norm() {
        let mut v = vec![3.0f32, 4.0];
        normalize(&mut v);
        assert!(is_unit(&v, 1e-6));
    }
}
