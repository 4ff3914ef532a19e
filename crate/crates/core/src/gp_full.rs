//! Exact GP regression with an `O(N³)` Cholesky solve.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{rng_for, Dataset, TargetScaling};
use crate::error::{ensure_dim, GpError, Result};
use crate::fitting::{FitOptions, FitReport, Prediction};
use crate::kernel::{self, KernelParams};
use crate::linalg::{cholesky_escalating, log_det_from_factor, solve_lower_vec};
use crate::optim::{maximize, OptimStatus};

const LOG_2PI: f64 = 1.8378770664093453;

/// Spread of the log-space perturbation used for extra optimizer starts.
const RESTART_SPREAD: f64 = 0.5;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FullGpModel {
    params: KernelParams,
    inputs: DMatrix<f64>,
    /// Targets on the model scale (standardized when `scaling` is set).
    targets: DVector<f64>,
    scaling: Option<TargetScaling>,
    /// Lower factor of `K + (σ² + jitter)·I`.
    factor: DMatrix<f64>,
    /// `(K + σ²I)⁻¹ y`.
    alpha: DVector<f64>,
    report: FitReport,
}

/// Log marginal likelihood of `y` under `N(0, K + σ²I)` and its gradient with
/// respect to `[log σ_f², log ℓ_1, …, log ℓ_d, log σ²]`.
pub fn full_log_marginal(params: &KernelParams, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(f64, Vec<f64>)> {
    let n = y.len();
    ensure_dim(n, x.nrows())?;
    let d = params.dim();
    let kraw = kernel::kernel_matrix(params, x, x)?;
    let mut k = kraw.clone();
    let shift = params.noise_variance() + params.jitter();
    for i in 0..n {
        k[(i, i)] += shift;
    }
    let chol = cholesky_escalating(&k, params.signal_variance(), params.jitter(), "full GP covariance")?;
    let alpha = chol.factor.solve(y);
    let l = chol.factor.l();
    let value = -0.5 * y.dot(&alpha) - 0.5 * log_det_from_factor(&l) - 0.5 * n as f64 * LOG_2PI;
    if !value.is_finite() {
        return Err(GpError::NonFinite {
            params: params.log_vector(),
        });
    }

    // W = ααᵀ − K⁻¹ ; dL = ½ tr(W dK)
    let kinv = chol.factor.inverse();
    let mut w = &alpha * alpha.transpose() - kinv;
    let trace_w = w.trace();
    w.component_mul_assign(&kraw);
    let e = w;
    let mut grad = Vec::with_capacity(d + 2);
    grad.push(0.5 * e.sum());
    let row_sums = e.column_sum();
    let ls = params.lengthscales();
    for c in 0..d {
        let xc = x.column(c);
        let lhs: f64 = xc.iter().zip(row_sums.iter()).map(|(v, r)| v * v * r).sum();
        let quad = xc.dot(&(&e * xc));
        grad.push((lhs - quad) / (ls[c] * ls[c]));
    }
    grad.push(0.5 * params.noise_variance() * trace_w);
    Ok((value, grad))
}

fn learnable(params: &KernelParams, options: &FitOptions) -> bool {
    options.learn_noise && params.noise_variance() > 0.0
}

/// Packs the log vector, dropping the noise entry when it is held fixed.
pub(crate) fn pack(params: &KernelParams, learn_noise: bool) -> Vec<f64> {
    let mut v = params.log_vector();
    if !learn_noise {
        v.pop();
    }
    v
}

pub(crate) fn unpack(template: &KernelParams, v: &[f64], learn_noise: bool) -> Result<KernelParams> {
    let mut full = v[..template.dim() + 1].to_vec();
    full.push(if learn_noise {
        v[template.dim() + 1]
    } else {
        template.noise_variance().ln()
    });
    template.from_log_vector(&full)
}

pub(crate) fn model_targets(data: &Dataset, standardize: bool) -> (DVector<f64>, Option<TargetScaling>) {
    if standardize {
        let s = data.standardized();
        (s.targets, s.scaling)
    } else {
        (data.targets.clone(), data.scaling)
    }
}

/// Fits hyperparameters by maximizing the log marginal likelihood.
///
/// A non-finite likelihood mid-run ends that start early with
/// [`OptimStatus::NonFinite`]; the last finite iterate is kept.
pub fn fit_full_gp(data: &Dataset, init: &KernelParams, options: &FitOptions) -> Result<FullGpModel> {
    ensure_dim(init.dim(), data.dim())?;
    let (y, scaling) = model_targets(data, options.standardize);
    let x = &data.inputs;
    let learn_noise = learnable(init, options);

    let mut best: Option<(KernelParams, FitReport)> = None;
    if options.optimize {
        let mut rng = rng_for(options.seed);
        for start in 0..options.starts.max(1) {
            let mut x0 = pack(init, learn_noise);
            if start > 0 {
                for v in x0.iter_mut() {
                    *v += RESTART_SPREAD * rng.sample::<f64, _>(StandardNormal);
                }
            }
            let objective = |v: &[f64]| {
                let p = unpack(init, v, learn_noise)?;
                let (f, g) = full_log_marginal(&p, x, &y)?;
                let g = if learn_noise { g } else { g[..g.len() - 1].to_vec() };
                Ok((f, g))
            };
            let res = match maximize(objective, x0, &options.optimizer) {
                Ok(r) => r,
                Err(e) if start > 0 => {
                    log::warn!("full GP start {start} could not be evaluated: {e}");
                    continue;
                }
                Err(e) => return Err(e),
            };
            let report = FitReport {
                log_marginal_likelihood: res.value,
                iterations: res.iterations,
                evaluations: res.evaluations,
                status: res.status,
                degenerate: data.len() < 2,
            };
            let params = unpack(init, &res.x, learn_noise)?;
            if best.as_ref().is_none_or(|(_, r)| report.log_marginal_likelihood > r.log_marginal_likelihood) {
                best = Some((params, report));
            }
        }
    }
    let (params, report) = match best {
        Some(b) => b,
        None => {
            let (value, _) = full_log_marginal(init, x, &y)?;
            (
                init.clone(),
                FitReport {
                    log_marginal_likelihood: value,
                    iterations: 0,
                    evaluations: 1,
                    status: OptimStatus::Disabled,
                    degenerate: data.len() < 2,
                },
            )
        }
    };
    FullGpModel::build(params, data.inputs.clone(), y, scaling, report)
}

impl FullGpModel {
    /// Conditions on `data` with fixed hyperparameters.
    pub fn with_params(data: &Dataset, params: &KernelParams, standardize: bool) -> Result<Self> {
        fit_full_gp(
            data,
            params,
            &FitOptions {
                optimize: false,
                standardize,
                ..FitOptions::full_gp()
            },
        )
    }

    fn build(
        params: KernelParams,
        inputs: DMatrix<f64>,
        targets: DVector<f64>,
        scaling: Option<TargetScaling>,
        report: FitReport,
    ) -> Result<Self> {
        let mut k = kernel::kernel_matrix(&params, &inputs, &inputs)?;
        let shift = params.noise_variance() + params.jitter();
        for i in 0..k.nrows() {
            k[(i, i)] += shift;
        }
        let chol = cholesky_escalating(&k, params.signal_variance(), params.jitter(), "full GP covariance")?;
        let alpha = chol.factor.solve(&targets);
        Ok(Self {
            params,
            inputs,
            targets,
            scaling,
            factor: chol.factor.unpack(),
            alpha,
            report,
        })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn report(&self) -> &FitReport {
        &self.report
    }

    pub fn scaling(&self) -> Option<TargetScaling> {
        self.scaling
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    /// Log marginal likelihood at the fitted parameters.
    pub fn log_marginal_likelihood(&self) -> f64 {
        -0.5 * self.targets.dot(&self.alpha)
            - 0.5 * log_det_from_factor(&self.factor)
            - 0.5 * self.targets.len() as f64 * LOG_2PI
    }

    /// Latent predictive mean and variance in target units.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let kstar = kernel::kernel_vector(&self.params, &self.inputs, x)?;
        let prior = self.params.signal_variance();
        let mean = kstar.dot(&self.alpha);
        let v = solve_lower_vec(&self.factor, &kstar);
        let variance = (prior - v.norm_squared()).clamp(0.0, prior);
        let s = self.scaling.unwrap_or_else(TargetScaling::identity);
        Ok(Prediction {
            mean: s.unstandardize(mean),
            variance: s.unstandardize_variance(variance),
        })
    }

    pub fn predict_many(&self, x: &DMatrix<f64>) -> Result<Vec<Prediction>> {
        x.row_iter()
            .map(|r| self.predict(&r.iter().copied().collect::<Vec<_>>()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_gp_sample;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn line_data(xs: &[f64], ys: &[f64]) -> Dataset {
        let rows: Vec<Vec<f64>> = xs.iter().map(|v| vec![*v]).collect();
        Dataset::from_rows(&rows, ys).unwrap()
    }

    #[test]
    fn noiseless_interpolation() {
        let data = line_data(&[0.0, 1.0, 2.5, 4.0], &[1.0, -0.5, 2.0, 0.3]);
        // Jitter shifts the fitted values by jitter·α, so it is switched off.
        let p = KernelParams::with_jitter(1.0, vec![1.0], 0.0, 0.0).unwrap();
        let m = FullGpModel::with_params(&data, &p, false).unwrap();
        for i in 0..4 {
            let pr = m.predict(&[data.inputs[(i, 0)]]).unwrap();
            assert!((pr.mean - data.targets[i]).abs() < 1e-8, "{} vs {}", pr.mean, data.targets[i]);
        }
    }

    #[test]
    fn prior_reversion_far_away() {
        let data = line_data(&[0.0, 1.0], &[1.0, 2.0]);
        let p = KernelParams::new(1.5, vec![0.5], 0.1).unwrap();
        let m = FullGpModel::with_params(&data, &p, false).unwrap();
        let pr = m.predict(&[1e3]).unwrap();
        assert!(pr.mean.abs() < 1e-12);
        assert_relative_eq!(pr.variance, 1.5, epsilon = 1e-12);
    }

    #[test]
    fn two_point_hand_solution() {
        // σ_f² = 1, ℓ = 1, σ² = 0.5, x = {0, 1}, y = {1, 2}, x* = 0.5
        let data = line_data(&[0.0, 1.0], &[1.0, 2.0]);
        let p = KernelParams::with_jitter(1.0, vec![1.0], 0.5, 0.0).unwrap();
        let m = FullGpModel::with_params(&data, &p, false).unwrap();
        let c = (-0.5f64).exp(); // k(0, 1)
        let ks = (-0.125f64).exp(); // k(0.5, ·)
        // (K + σ²I) = [[1.5, c], [c, 1.5]], inverse by adjugate.
        let det = 1.5 * 1.5 - c * c;
        let a0 = (1.5 * 1.0 - c * 2.0) / det;
        let a1 = (-c * 1.0 + 1.5 * 2.0) / det;
        let mean = ks * (a0 + a1);
        // k*ᵀ (K+σ²I)⁻¹ k* with k* = [ks, ks]
        let quad = ks * ks * (1.5 - c + (-c + 1.5)) / det;
        let pr = m.predict(&[0.5]).unwrap();
        assert_relative_eq!(pr.mean, mean, epsilon = 1e-12);
        assert_relative_eq!(pr.variance, 1.0 - quad, epsilon = 1e-12);
    }

    #[test]
    fn fixed_likelihood_matches_dense_closed_form() {
        let p = KernelParams::new(1.3, vec![0.8, 1.7], 0.2).unwrap();
        let data = gen_gp_sample(30, &p, (0.0, 5.0), 3).unwrap();
        let m = FullGpModel::with_params(&data, &p, false).unwrap();
        let mut k = kernel::kernel_matrix(&p, &data.inputs, &data.inputs).unwrap();
        for i in 0..30 {
            k[(i, i)] += p.noise_variance() + p.jitter();
        }
        let lu = k.clone().lu();
        let det = lu.determinant();
        let sol = lu.solve(&data.targets).unwrap();
        let direct = -0.5 * det.ln() - 0.5 * data.targets.dot(&sol) - 15.0 * (2.0 * std::f64::consts::PI).ln();
        assert_relative_eq!(m.log_marginal_likelihood(), direct, epsilon = 1e-9);
        assert_relative_eq!(m.report().log_marginal_likelihood, direct, epsilon = 1e-9);
        assert_eq!(m.report().status, OptimStatus::Disabled);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = KernelParams::new(0.9, vec![0.7, 1.4], 0.15).unwrap();
        let data = gen_gp_sample(25, &p, (0.0, 4.0), 11).unwrap();
        let (_, g) = full_log_marginal(&p, &data.inputs, &data.targets).unwrap();
        let v0 = p.log_vector();
        let h = 1e-5;
        for i in 0..v0.len() {
            let mut up = v0.clone();
            up[i] += h;
            let mut dn = v0.clone();
            dn[i] -= h;
            let fu = full_log_marginal(&p.from_log_vector(&up).unwrap(), &data.inputs, &data.targets).unwrap().0;
            let fd = full_log_marginal(&p.from_log_vector(&dn).unwrap(), &data.inputs, &data.targets).unwrap().0;
            let fdg = (fu - fd) / (2.0 * h);
            assert!((g[i] - fdg).abs() <= 1e-5 * (1.0 + fdg.abs()), "component {i}: {} vs {fdg}", g[i]);
        }
    }

    #[test]
    fn single_observation_is_flagged_degenerate() {
        let data = line_data(&[0.3], &[1.2]);
        let p = KernelParams::new(1.0, vec![1.0], 0.1).unwrap();
        let m = fit_full_gp(&data, &p, &FitOptions::full_gp().raw_targets()).unwrap();
        assert!(m.report().degenerate);
        // Any lengthscale gives the same likelihood.
        let (a, ga) = full_log_marginal(&p, &data.inputs, &data.targets).unwrap();
        let p2 = KernelParams::new(1.0, vec![17.0], 0.1).unwrap();
        let (b, _) = full_log_marginal(&p2, &data.inputs, &data.targets).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-14);
        assert!(ga[1].abs() < 1e-15);
        let scalar = -0.5 * (1.2f64 * 1.2) / (1.1 + p.jitter()) - 0.5 * ((1.1 + p.jitter()) * 2.0 * std::f64::consts::PI).ln();
        assert_relative_eq!(a, scalar, epsilon = 1e-12);
    }

    #[test]
    fn optimization_improves_likelihood() {
        let truth = KernelParams::new(1.0, vec![0.5], 0.01).unwrap();
        let data = gen_gp_sample(80, &truth, (0.0, 5.0), 21).unwrap();
        let init = KernelParams::new(1.0, vec![2.0], 0.3).unwrap();
        let fixed = FullGpModel::with_params(&data, &init, false).unwrap();
        let fitted = fit_full_gp(&data, &init, &FitOptions::full_gp().raw_targets()).unwrap();
        assert!(fitted.report().log_marginal_likelihood > fixed.log_marginal_likelihood());
        assert_relative_eq!(
            fitted.report().log_marginal_likelihood,
            fitted.log_marginal_likelihood(),
            epsilon = 1e-8
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn variance_bounded_by_prior(q in -8.0f64..8.0, seed in 0u64..1000) {
            let p = KernelParams::new(1.7, vec![0.9], 0.05).unwrap();
            let data = gen_gp_sample(15, &p, (-3.0, 3.0), seed).unwrap();
            let m = FullGpModel::with_params(&data, &p, false).unwrap();
            let pr = m.predict(&[q]).unwrap();
            prop_assert!(pr.variance >= 0.0 && pr.variance <= 1.7);
        }

        #[test]
        fn mean_is_linear_in_targets(q in -4.0f64..4.0, seed in 0u64..1000) {
            let p = KernelParams::new(1.0, vec![0.8], 0.1).unwrap();
            let data = gen_gp_sample(12, &p, (-3.0, 3.0), seed).unwrap();
            let mut doubled = data.clone();
            doubled.targets *= 2.0;
            let a = FullGpModel::with_params(&data, &p, false).unwrap().predict(&[q]).unwrap();
            let b = FullGpModel::with_params(&doubled, &p, false).unwrap().predict(&[q]).unwrap();
            prop_assert!((2.0 * a.mean - b.mean).abs() < 1e-10 * (1.0 + b.mean.abs()));
        }

        #[test]
        fn extra_point_never_raises_noiseless_variance(q in -4.0f64..4.0, extra in -4.0f64..4.0, seed in 0u64..1000) {
            let p = KernelParams::new(1.0, vec![1.0], 0.0).unwrap();
            let data = gen_gp_sample(6, &p, (-3.0, 3.0), seed).unwrap();
            let mut rows: Vec<Vec<f64>> = (0..data.len()).map(|i| data.row(i)).collect();
            let mut ys: Vec<f64> = data.targets.iter().copied().collect();
            let before = FullGpModel::with_params(&data, &p, false).unwrap().predict(&[q]).unwrap();
            rows.push(vec![extra]);
            ys.push(0.0);
            let bigger = Dataset::from_rows(&rows, &ys).unwrap();
            let after = FullGpModel::with_params(&bigger, &p, false).unwrap().predict(&[q]).unwrap();
            prop_assert!(after.variance <= before.variance + 1e-7);
        }
    }
}
