//! Cholesky helpers with a deterministic jitter ladder.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{GpError, Result};

/// Largest jitter tried, relative to the matrix scale.
pub const MAX_RELATIVE_JITTER: f64 = 1e-4;

/// A Cholesky factor together with the diagonal shift that made it succeed.
#[derive(Clone, Debug)]
pub struct JitteredCholesky {
    pub factor: Cholesky<f64, Dyn>,
    /// Total diagonal shift added on top of the input matrix.
    pub added_jitter: f64,
}

/// Factors `a`, escalating a diagonal shift ×10 from `start` (or `1e-10·scale`
/// when `start` is zero) up to `MAX_RELATIVE_JITTER·scale` on failure.
///
/// The first attempt is always made with no extra shift.
pub fn cholesky_escalating(a: &DMatrix<f64>, scale: f64, start: f64, what: &str) -> Result<JitteredCholesky> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(GpError::Factorization {
            what: format!("{what} (non-finite entries)"),
            jitter: 0.0,
        });
    }
    if let Some(factor) = Cholesky::new(a.clone()) {
        return Ok(JitteredCholesky {
            factor,
            added_jitter: 0.0,
        });
    }
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let cap = MAX_RELATIVE_JITTER * scale;
    let mut jitter = if start > 0.0 { start * 10.0 } else { 1e-10 * scale };
    loop {
        let mut shifted = a.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += jitter;
        }
        if let Some(factor) = Cholesky::new(shifted) {
            log::debug!("{what}: cholesky needed extra jitter {jitter:e}");
            return Ok(JitteredCholesky {
                factor,
                added_jitter: jitter,
            });
        }
        if jitter >= cap {
            return Err(GpError::Factorization {
                what: what.to_string(),
                jitter,
            });
        }
        jitter = (jitter * 10.0).min(cap);
    }
}

/// Solves `L x = b` for lower-triangular `L`.
pub fn solve_lower(l: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = b.clone();
    l.solve_lower_triangular_mut(&mut out);
    out
}

/// Solves `Lᵀ x = b` for lower-triangular `L`.
pub fn solve_lower_transpose(l: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = b.clone();
    l.tr_solve_lower_triangular_mut(&mut out);
    out
}

pub fn solve_lower_vec(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut out = b.clone();
    l.solve_lower_triangular_mut(&mut out);
    out
}

pub fn solve_lower_transpose_vec(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut out = b.clone();
    l.tr_solve_lower_triangular_mut(&mut out);
    out
}

pub fn log_det_from_factor(l: &DMatrix<f64>) -> f64 {
    2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn no_jitter_for_well_conditioned() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let f = cholesky_escalating(&a, 1.0, 0.0, "test").unwrap();
        assert_eq!(f.added_jitter, 0.0);
    }

    #[test]
    fn singular_matrix_gets_jitter() {
        let a = DMatrix::from_element(3, 3, 1.0);
        let f = cholesky_escalating(&a, 1.0, 0.0, "ones").unwrap();
        assert!(f.added_jitter > 0.0 && f.added_jitter <= MAX_RELATIVE_JITTER);
    }

    #[test]
    fn indefinite_matrix_fails_after_ladder() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let err = cholesky_escalating(&a, 1.0, 0.0, "indefinite").unwrap_err();
        assert!(matches!(err, GpError::Factorization { .. }));
    }

    #[test]
    fn triangular_solves_invert() {
        let l = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 3.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let x = solve_lower_vec(&l, &b);
        assert_relative_eq!(&l * &x, b.clone(), epsilon = 1e-14);
        let z = solve_lower_transpose_vec(&l, &b);
        assert_relative_eq!(l.transpose() * z, b, epsilon = 1e-14);
    }
}
