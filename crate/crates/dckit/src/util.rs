//! Small numeric helpers shared across solver modules.

use nalgebra::{DMatrix, DVector};

/// Largest eigenvalue estimate for a symmetric PSD matrix via power
/// iteration. Returns 0 for an empty or zero matrix.
pub(crate) fn spectral_upper_bound(q: &DMatrix<f64>) -> f64 {
    let n = q.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0f64;
    for _ in 0..100 {
        let w = q * &v;
        let norm = w.norm();
        if norm <= f64::MIN_POSITIVE {
            return 0.0;
        }
        let next = w / norm;
        let estimate = (q * &next).dot(&next);
        if (estimate - lambda).abs() <= 1e-9 * (1.0 + estimate.abs()) {
            return estimate.max(0.0) * 1.01;
        }
        lambda = estimate;
        v = next;
    }
    lambda.max(0.0) * 1.01
}

/// Positive part.
pub(crate) fn pos(t: f64) -> f64 {
    t.max(0.0)
}

/// Euclidean projection onto the probability simplex (sort-based).
pub(crate) fn project_simplex(v: &DVector<f64>) -> DVector<f64> {
    let n = v.len();
    let mut sorted: Vec<f64> = v.iter().cloned().collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cum += u;
        let t = (cum - 1.0) / (k as f64 + 1.0);
        if u - t > 0.0 {
            theta = t;
        }
    }
    DVector::from_fn(n, |i, _| pos(v[i] - theta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_bound_dominates_eigenvalues() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let bound = spectral_upper_bound(&q);
        assert!(bound >= 3.0 && bound <= 3.1, "bound {bound}");
        assert_eq!(spectral_upper_bound(&DMatrix::zeros(3, 3)), 0.0);
    }

    #[test]
    fn simplex_projection_hand_cases() {
        let p = project_simplex(&DVector::from_vec(vec![0.5, 0.5]));
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
        let p = project_simplex(&DVector::from_vec(vec![2.0, 0.0]));
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1].abs() < 1e-12);
        let p = project_simplex(&DVector::from_vec(vec![-1.0, -3.0, -2.0]));
        assert!((p.sum() - 1.0).abs() < 1e-12);
        assert!((p[0] - 1.0).abs() < 1e-12);
    }
}
