//! ARD squared-exponential covariance and Gram-matrix assembly.
//!
//! Every predictor in the crate shares this kernel:
//!
//! ```text
//! k(x, x') = σ_f² · exp(−½ Σ_k (x_k − x'_k)² / ℓ_k²)
//! ```
//!
//! Point lists are `DMatrix<f64>` with one point per row.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, GpError, Result};

/// Default jitter, relative to the signal variance.
pub const DEFAULT_RELATIVE_JITTER: f64 = 1e-8;

/// Covariance hyperparameters plus observation noise.
///
/// Signal variance and lengthscales are held as logarithms so that any
/// unconstrained update keeps them positive. The noise variance is held on its
/// natural scale because zero is a legal value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    log_signal_variance: f64,
    log_lengthscales: Vec<f64>,
    noise_variance: f64,
    jitter: f64,
}

impl KernelParams {
    /// Builds parameters with the default jitter of `1e-8 · signal_variance`.
    pub fn new(signal_variance: f64, lengthscales: Vec<f64>, noise_variance: f64) -> Result<Self> {
        Self::with_jitter(
            signal_variance,
            lengthscales,
            noise_variance,
            DEFAULT_RELATIVE_JITTER * signal_variance,
        )
    }

    pub fn with_jitter(
        signal_variance: f64,
        lengthscales: Vec<f64>,
        noise_variance: f64,
        jitter: f64,
    ) -> Result<Self> {
        if !(signal_variance > 0.0 && signal_variance.is_finite()) {
            return Err(GpError::InvalidInput(format!(
                "signal variance must be positive and finite, got {signal_variance}"
            )));
        }
        if lengthscales.is_empty() {
            return Err(GpError::InvalidInput("at least one lengthscale is required".into()));
        }
        if let Some(bad) = lengthscales.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(GpError::InvalidInput(format!(
                "lengthscales must be positive and finite, got {bad}"
            )));
        }
        if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
            return Err(GpError::InvalidInput(format!(
                "noise variance must be non-negative, got {noise_variance}"
            )));
        }
        if !(jitter >= 0.0 && jitter.is_finite()) {
            return Err(GpError::InvalidInput(format!("jitter must be non-negative, got {jitter}")));
        }
        Ok(Self {
            log_signal_variance: signal_variance.ln(),
            log_lengthscales: lengthscales.iter().map(|l| l.ln()).collect(),
            noise_variance,
            jitter,
        })
    }

    /// Data-driven starting point for standardized targets: unit signal,
    /// lengthscales equal to the per-column standard deviation, noise 0.1.
    pub fn heuristic(inputs: &DMatrix<f64>) -> Self {
        let n = inputs.nrows().max(1) as f64;
        let lengthscales = inputs
            .column_iter()
            .map(|col| {
                let mean = col.sum() / n;
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                let sd = var.sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect::<Vec<_>>();
        let lengthscales = if lengthscales.is_empty() { vec![1.0] } else { lengthscales };
        Self::new(1.0, lengthscales, 0.1).expect("heuristic parameters are valid")
    }

    pub fn dim(&self) -> usize {
        self.log_lengthscales.len()
    }

    pub fn signal_variance(&self) -> f64 {
        self.log_signal_variance.exp()
    }

    pub fn lengthscales(&self) -> Vec<f64> {
        self.log_lengthscales.iter().map(|l| l.exp()).collect()
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn set_noise_variance(&mut self, noise_variance: f64) -> Result<()> {
        if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
            return Err(GpError::InvalidInput(format!(
                "noise variance must be non-negative, got {noise_variance}"
            )));
        }
        self.noise_variance = noise_variance;
        Ok(())
    }

    pub fn set_jitter(&mut self, jitter: f64) {
        self.jitter = jitter.max(0.0);
    }

    /// Returns a copy with the signal variance multiplied by `factor`.
    pub fn scaled_signal(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.log_signal_variance += factor.ln();
        out
    }

    /// `[log σ_f², log ℓ_1, …, log ℓ_d, log σ²]`. The last entry is `-inf`
    /// for a noiseless model; callers that optimize must drop it in that case.
    pub fn log_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim() + 2);
        v.push(self.log_signal_variance);
        v.extend_from_slice(&self.log_lengthscales);
        v.push(self.noise_variance.ln());
        v
    }

    /// Inverse of [`log_vector`](Self::log_vector); keeps the current jitter.
    pub fn from_log_vector(&self, v: &[f64]) -> Result<Self> {
        ensure_dim(self.dim() + 2, v.len())?;
        if v.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
            return Err(GpError::NonFinite { params: v.to_vec() });
        }
        Ok(Self {
            log_signal_variance: v[0],
            log_lengthscales: v[1..=self.dim()].to_vec(),
            noise_variance: v[self.dim() + 1].exp(),
            jitter: self.jitter,
        })
    }

    pub(crate) fn inverse_lengthscales(&self) -> Vec<f64> {
        self.log_lengthscales.iter().map(|l| (-l).exp()).collect()
    }
}

/// Single covariance evaluation.
pub fn kernel_eval(params: &KernelParams, x: &[f64], x2: &[f64]) -> Result<f64> {
    ensure_dim(params.dim(), x.len())?;
    ensure_dim(params.dim(), x2.len())?;
    let inv = params.inverse_lengthscales();
    let r2: f64 = x
        .iter()
        .zip(x2)
        .zip(&inv)
        .map(|((a, b), il)| ((a - b) * il).powi(2))
        .sum();
    Ok(params.signal_variance() * (-0.5 * r2).exp())
}

/// Cross-covariance matrix `K(X, X2)`; entry `(i, j)` is `k(X_i, X2_j)`.
///
/// No jitter is added. Empty inputs give an empty matrix.
pub fn kernel_matrix(params: &KernelParams, x: &DMatrix<f64>, x2: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.nrows() > 0 {
        ensure_dim(params.dim(), x.ncols())?;
    }
    if x2.nrows() > 0 {
        ensure_dim(params.dim(), x2.ncols())?;
    }
    let a = scaled_columns(params, x);
    let b = scaled_columns(params, x2);
    Ok(cross_scaled(params.signal_variance(), &a, &b))
}

/// Self-covariance `K(X, X) + jitter·I`.
pub fn self_covariance(params: &KernelParams, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut k = kernel_matrix(params, x, x)?;
    for i in 0..k.nrows() {
        k[(i, i)] += params.jitter();
    }
    Ok(k)
}

/// Covariances between every row of `x` and a single point.
pub fn kernel_vector(params: &KernelParams, x: &DMatrix<f64>, point: &[f64]) -> Result<DVector<f64>> {
    ensure_dim(params.dim(), point.len())?;
    if x.nrows() > 0 {
        ensure_dim(params.dim(), x.ncols())?;
    }
    let inv = params.inverse_lengthscales();
    let sf2 = params.signal_variance();
    Ok(DVector::from_iterator(
        x.nrows(),
        x.row_iter().map(|row| {
            let r2: f64 = row
                .iter()
                .zip(point)
                .zip(&inv)
                .map(|((a, b), il)| ((a - b) * il).powi(2))
                .sum();
            sf2 * (-0.5 * r2).exp()
        }),
    ))
}

/// Transposes the point list into a `d × n` matrix of lengthscale-scaled
/// coordinates so each point is a contiguous column.
pub(crate) fn scaled_columns(params: &KernelParams, x: &DMatrix<f64>) -> DMatrix<f64> {
    let inv = params.inverse_lengthscales();
    let mut out = x.transpose();
    for (k, mut row) in out.row_iter_mut().enumerate() {
        row *= inv[k];
    }
    out
}

pub(crate) fn cross_scaled(sf2: f64, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = (a.ncols(), b.ncols());
    let mut out = DMatrix::zeros(n, m);
    for j in 0..m {
        let bj = b.column(j);
        for i in 0..n {
            let ai = a.column(i);
            let mut r2 = 0.0;
            for k in 0..ai.len() {
                let diff = ai[k] - bj[k];
                r2 += diff * diff;
            }
            out[(i, j)] = sf2 * (-0.5 * r2).exp();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Cholesky;
    use proptest::prelude::*;

    fn unit_1d() -> KernelParams {
        KernelParams::new(1.0, vec![1.0], 0.0).unwrap()
    }

    #[test]
    fn zero_distance_gives_signal_variance() {
        assert_eq!(kernel_eval(&unit_1d(), &[0.0], &[0.0]).unwrap(), 1.0);
    }

    #[test]
    fn infinite_distance_limit() {
        let v = kernel_eval(&unit_1d(), &[0.0], &[1e6]).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn ard_closed_form() {
        let p = KernelParams::new(2.0, vec![1.0, 2.0], 0.0).unwrap();
        let v = kernel_eval(&p, &[0.0, 0.0], &[1.0, 2.0]).unwrap();
        assert_relative_eq!(v, 2.0 * (-1.0f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(v, 0.7357588823428847, epsilon = 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let p = KernelParams::new(1.0, vec![1.0, 1.0], 0.0).unwrap();
        assert!(matches!(
            kernel_eval(&p, &[0.0], &[0.0, 1.0]),
            Err(GpError::DimensionMismatch { .. })
        ));
        let x = DMatrix::zeros(3, 3);
        assert!(kernel_matrix(&p, &x, &x).is_err());
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(KernelParams::new(0.0, vec![1.0], 0.0).is_err());
        assert!(KernelParams::new(1.0, vec![-1.0], 0.0).is_err());
        assert!(KernelParams::new(1.0, vec![1.0], -0.1).is_err());
        assert!(KernelParams::new(1.0, vec![], 0.1).is_err());
    }

    #[test]
    fn single_point_matrix() {
        let p = KernelParams::new(3.5, vec![1.0], 0.0).unwrap();
        let x = DMatrix::from_row_slice(1, 1, &[0.3]);
        let k = kernel_matrix(&p, &x, &x).unwrap();
        assert_eq!(k.shape(), (1, 1));
        assert_relative_eq!(k[(0, 0)], 3.5, epsilon = 1e-15);
    }

    #[test]
    fn duplicate_points_are_rank_one() {
        let p = KernelParams::with_jitter(1.0, vec![1.0], 0.0, 0.0).unwrap();
        let x = DMatrix::from_row_slice(2, 1, &[0.7, 0.7]);
        let k = self_covariance(&p, &x).unwrap();
        assert_relative_eq!(k.determinant(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn empty_input_gives_empty_matrix() {
        let p = unit_1d();
        let x = DMatrix::<f64>::zeros(0, 1);
        let y = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        assert_eq!(kernel_matrix(&p, &x, &y).unwrap().shape(), (0, 2));
    }

    #[test]
    fn matrix_matches_elementwise_eval() {
        let p = unit_1d();
        let x = DMatrix::from_row_slice(3, 1, &[0.1, -1.3, 2.2]);
        let k = kernel_matrix(&p, &x, &x).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let direct = (-0.5 * (x[i] - x[j]).powi(2)).exp();
                assert_relative_eq!(k[(i, j)], direct, epsilon = 1e-15);
            }
        }
    }

    proptest! {
        #[test]
        fn symmetric_in_arguments(
            a in prop::collection::vec(-5.0f64..5.0, 3),
            b in prop::collection::vec(-5.0f64..5.0, 3),
            l in prop::collection::vec(0.1f64..4.0, 3),
            s in 0.1f64..10.0,
        ) {
            let p = KernelParams::new(s, l, 0.0).unwrap();
            let ab = kernel_eval(&p, &a, &b).unwrap();
            let ba = kernel_eval(&p, &b, &a).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!(ab > 0.0 || ab == 0.0);
            prop_assert!(ab <= s);
        }

        #[test]
        fn signal_variance_scales_matrix(
            pts in prop::collection::vec(-3.0f64..3.0, 10),
            c in 0.1f64..20.0,
        ) {
            let p = KernelParams::new(1.3, vec![0.7, 1.1], 0.0).unwrap();
            let x = DMatrix::from_row_slice(5, 2, &pts);
            let k = kernel_matrix(&p, &x, &x).unwrap();
            let kc = kernel_matrix(&p.scaled_signal(c), &x, &x).unwrap();
            for (u, v) in k.iter().zip(kc.iter()) {
                prop_assert!((u * c - v).abs() <= 1e-12 * (1.0 + v.abs()));
            }
        }

        #[test]
        fn gram_with_jitter_is_positive_definite(
            pts in prop::collection::vec(-2.0f64..2.0, 2..40),
            s in 0.1f64..5.0,
        ) {
            let mut v = pts;
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v.dedup();
            let x = DMatrix::from_row_slice(v.len(), 1, &v);
            let p = KernelParams::with_jitter(s, vec![1.0], 0.0, 1e-10 * s).unwrap();
            let k = self_covariance(&p, &x).unwrap();
            prop_assert!(Cholesky::new(k).is_some());
        }
    }
}
