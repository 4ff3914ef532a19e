//! Sparse pseudo-input GP.
//!
//! The covariance of the training targets is approximated by
//!
//! ```text
//! Δ = Q_D + diag(K_D − Q_D) + σ²I,    Q_D = K_{Dm} K_m⁻¹ K_{mD}
//! ```
//!
//! where `m` indexes the pseudo-inputs. All solves against `Δ` go through the
//! matrix-inversion lemma at `O(N m²)`; nothing `N × N` is ever formed.
//!
//! Internally everything is expressed with the whitened features
//! `φ(x) = L_m⁻¹ k_m(x)`, so that `Q(x, x') = φ(x)ᵀ φ(x')`. With
//! `V = [φ(x_1) … φ(x_N)]`, `Λ = diag(K_D − Q_D) + σ²I` and
//! `B = I + V Λ⁻¹ Vᵀ = L_B L_Bᵀ`:
//!
//! ```text
//! Δ⁻¹        = Λ⁻¹ − Λ⁻¹ Vᵀ B⁻¹ V Λ⁻¹
//! log |Δ|    = Σ log Λ_i + log |B|
//! mean(x*)   = φ*ᵀ L_B⁻ᵀ L_B⁻¹ V Λ⁻¹ y
//! var(x*)    = k** − ‖φ*‖² + ‖L_B⁻¹ φ*‖²
//! ```

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::data::{rng_for, Dataset, TargetScaling};
use crate::error::{ensure_dim, GpError, Result};
use crate::fitting::{FitOptions, FitReport, Prediction, VarianceKind};
use crate::gp_full::{model_targets, pack, unpack};
use crate::kernel::{self, KernelParams};
use crate::linalg::{cholesky_escalating, log_det_from_factor, solve_lower_transpose_vec, solve_lower_vec};
use crate::optim::{maximize, OptimStatus};

const LOG_2PI: f64 = 1.8378770664093453;

/// Floor on the diagonal correction, relative to σ_f².
const MIN_DIAGONAL: f64 = 1e-14;

/// The pseudo-input locations, one per row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudoInputSet {
    locations: DMatrix<f64>,
}

impl PseudoInputSet {
    pub fn new(locations: DMatrix<f64>) -> Result<Self> {
        if locations.nrows() == 0 || locations.ncols() == 0 {
            return Err(GpError::InvalidInput("pseudo-input set must be non-empty".into()));
        }
        if locations.iter().any(|v| !v.is_finite()) {
            return Err(GpError::InvalidInput("pseudo-inputs must be finite".into()));
        }
        Ok(Self { locations })
    }

    /// `m` distinct training rows chosen uniformly at random.
    pub fn random_subset(inputs: &DMatrix<f64>, m: usize, seed: u64) -> Result<Self> {
        let n = inputs.nrows();
        if m == 0 || m > n {
            return Err(GpError::InvalidInput(format!(
                "pseudo-input count must lie in [1, N = {n}], got {m}"
            )));
        }
        let mut idx = sample(&mut rng_for(seed), n, m).into_vec();
        idx.sort_unstable();
        Self::new(inputs.select_rows(&idx))
    }

    pub fn len(&self) -> usize {
        self.locations.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.locations.ncols()
    }

    pub fn locations(&self) -> &DMatrix<f64> {
        &self.locations
    }

    fn flat_row_major(&self) -> Vec<f64> {
        self.locations.transpose().as_slice().to_vec()
    }

    fn from_flat_row_major(m: usize, d: usize, v: &[f64]) -> Self {
        Self {
            locations: DMatrix::from_row_slice(m, d, v),
        }
    }
}

/// Factor of `K_m + jitter·I` with an escalating shift.
fn pseudo_factor(params: &KernelParams, pseudo: &PseudoInputSet) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let kmm_raw = kernel::kernel_matrix(params, pseudo.locations(), pseudo.locations())?;
    let mut kmm = kmm_raw.clone();
    for i in 0..kmm.nrows() {
        kmm[(i, i)] += params.jitter();
    }
    let chol = cholesky_escalating(
        &kmm,
        params.signal_variance(),
        params.jitter(),
        &format!("pseudo-input covariance (m = {})", pseudo.len()),
    )?;
    Ok((chol.factor.unpack(), kmm_raw))
}

fn lower_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let mut inv = DMatrix::identity(l.nrows(), l.nrows());
    l.solve_lower_triangular_mut(&mut inv);
    inv
}

/// Nyström cross-covariance `K_{X m} K_m⁻¹ K_{m X2}`.
pub fn low_rank_cov(
    params: &KernelParams,
    pseudo: &PseudoInputSet,
    x: &DMatrix<f64>,
    x2: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    ensure_dim(params.dim(), pseudo.dim())?;
    let (lm, _) = pseudo_factor(params, pseudo)?;
    let lm_inv = lower_inverse(&lm);
    let a = &lm_inv * kernel::kernel_matrix(params, pseudo.locations(), x)?;
    let b = &lm_inv * kernel::kernel_matrix(params, pseudo.locations(), x2)?;
    Ok(a.tr_mul(&b))
}

/// Quantities shared by the likelihood, its gradient and the cached model.
struct SparseTerms {
    lm: DMatrix<f64>,
    lm_inv: DMatrix<f64>,
    kmn: DMatrix<f64>,
    kmm_raw: DMatrix<f64>,
    /// Whitened features of the training inputs, `m × N`.
    v: DMatrix<f64>,
    lambda: DVector<f64>,
    lb: DMatrix<f64>,
    lb_inv: DMatrix<f64>,
    /// `L_B⁻¹ V Λ⁻¹ y`
    c: DVector<f64>,
    log_det: f64,
    /// `yᵀ Δ⁻¹ y`
    quad: f64,
}

fn sparse_terms(
    params: &KernelParams,
    pseudo: &PseudoInputSet,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<SparseTerms> {
    let n = y.len();
    ensure_dim(n, x.nrows())?;
    ensure_dim(params.dim(), x.ncols())?;
    ensure_dim(params.dim(), pseudo.dim())?;
    if pseudo.len() > n {
        return Err(GpError::InvalidInput(format!(
            "{} pseudo-inputs for {n} observations",
            pseudo.len()
        )));
    }
    let m = pseudo.len();
    let sf2 = params.signal_variance();
    let (lm, kmm_raw) = pseudo_factor(params, pseudo)?;
    let lm_inv = lower_inverse(&lm);
    let kmn = kernel::kernel_matrix(params, pseudo.locations(), x)?;
    let v = &lm_inv * &kmn;

    let floor = MIN_DIAGONAL * sf2;
    let lambda = DVector::from_iterator(
        n,
        v.column_iter()
            .map(|col| (sf2 - col.norm_squared()).max(0.0) + params.noise_variance())
            .map(|l| l.max(floor)),
    );
    let mut vs = v.clone();
    for (i, mut col) in vs.column_iter_mut().enumerate() {
        col /= lambda[i].sqrt();
    }
    let mut b = &vs * vs.transpose();
    for i in 0..m {
        b[(i, i)] += 1.0;
    }
    let lb = cholesky_escalating(&b, 1.0, 0.0, "sparse GP inner matrix")?.factor.unpack();
    let lb_inv = lower_inverse(&lb);
    let y_over = y.component_div(&lambda);
    let c = &lb_inv * (&v * &y_over);
    let log_det = lambda.iter().map(|l| l.ln()).sum::<f64>() + log_det_from_factor(&lb);
    let quad = y.dot(&y_over) - c.norm_squared();
    Ok(SparseTerms {
        lm,
        lm_inv,
        kmn,
        kmm_raw,
        v,
        lambda,
        lb,
        lb_inv,
        c,
        log_det,
        quad,
    })
}

fn value_of(terms: &SparseTerms, n: usize) -> f64 {
    -0.5 * terms.log_det - 0.5 * terms.quad - 0.5 * n as f64 * LOG_2PI
}

/// Log marginal likelihood under the sparse covariance `Δ` and its gradient.
///
/// Gradient layout: `[log σ_f², log ℓ_1, …, log ℓ_d, log σ²]` followed by the
/// `m·d` pseudo-input coordinates in row-major order. Cost `O(N m² + N m d)`.
pub fn spgp_log_marginal(
    params: &KernelParams,
    pseudo: &PseudoInputSet,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<(f64, Vec<f64>)> {
    let non_finite = || {
        let mut p = params.log_vector();
        p.extend(pseudo.flat_row_major());
        GpError::NonFinite { params: p }
    };
    let t = sparse_terms(params, pseudo, x, y).map_err(|e| match e {
        GpError::Factorization { .. } => non_finite(),
        other => other,
    })?;
    let n = y.len();
    let m = pseudo.len();
    let d = params.dim();
    let value = value_of(&t, n);
    if !value.is_finite() {
        return Err(non_finite());
    }
    let sf2 = params.signal_variance();
    let ls = params.lengthscales();

    // a = Δ⁻¹ y
    let bc = t.lb_inv.tr_mul(&t.c);
    let a = (y - t.v.tr_mul(&bc)).component_div(&t.lambda);
    // Z = L_B⁻¹ V ; diag(Δ⁻¹)_i = 1/Λ_i − ‖Z_i‖²/Λ_i²
    let z = &t.lb_inv * &t.v;
    let wdiag = DVector::from_iterator(
        n,
        (0..n).map(|i| {
            let li = t.lambda[i];
            let dinv = 1.0 / li - z.column(i).norm_squared() / (li * li);
            a[i] * a[i] - dinv
        }),
    );
    // U = K_m⁻¹ K_mN
    let u = t.lm_inv.tr_mul(&t.v);
    // M1 = U W̃ with W̃ = Δ⁻¹yyᵀΔ⁻¹ − Δ⁻¹ − diag(W)
    //    = (U a) aᵀ − K_m⁻¹K_mN Δ⁻¹ − U diag(W)
    let ua = &u * &a;
    let mut zl = z;
    for (i, mut col) in zl.column_iter_mut().enumerate() {
        col /= t.lambda[i];
    }
    let u_dinv = t.lm_inv.tr_mul(&t.lb_inv.tr_mul(&zl));
    let mut m1 = &ua * a.transpose() - u_dinv;
    for (i, mut col) in m1.column_iter_mut().enumerate() {
        col.axpy(-wdiag[i], &u.column(i), 1.0);
    }
    let m2 = {
        let raw = &m1 * u.transpose();
        (&raw + raw.transpose()) * 0.5
    };

    let e = m1.component_mul(&t.kmn);
    let f = m2.component_mul(&t.kmm_raw);
    let re = e.column_sum();
    let rf = f.column_sum();
    let xbar = pseudo.locations();
    let ex = &e * x;
    let ex2 = &e * x.map(|v| v * v);
    let fx = &f * xbar;
    let sum_w = wdiag.sum();

    let mut grad = Vec::with_capacity(d + 2 + m * d);
    grad.push(e.sum() - 0.5 * f.sum() + 0.5 * sf2 * sum_w);
    for c in 0..d {
        let l2 = ls[c] * ls[c];
        let mut data_part = 0.0;
        let mut pseudo_part = 0.0;
        for j in 0..m {
            let xb = xbar[(j, c)];
            data_part += ex2[(j, c)] - 2.0 * xb * ex[(j, c)] + xb * xb * re[j];
            pseudo_part += xb * xb * rf[j] - xb * fx[(j, c)];
        }
        grad.push((data_part - pseudo_part) / l2);
    }
    grad.push(0.5 * params.noise_variance() * sum_w);
    for j in 0..m {
        for c in 0..d {
            let xb = xbar[(j, c)];
            let from_data = ex[(j, c)] - xb * re[j];
            let from_pseudo = fx[(j, c)] - xb * rf[j];
            grad.push((from_data - from_pseudo) / (ls[c] * ls[c]));
        }
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(non_finite());
    }
    Ok((value, grad))
}

/// Cached predictor state of a fitted sparse GP.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct SpgpCache {
    lm: DMatrix<f64>,
    lb: DMatrix<f64>,
    /// `L_B⁻ᵀ L_B⁻¹ V Λ⁻¹ y`; the mean is `φ(x)ᵀ mean_weights`.
    mean_weights: DVector<f64>,
    lambda: DVector<f64>,
    /// `V Vᵀ`, so that `Q_{xD} Q_{Dx'} = φ(x)ᵀ V Vᵀ φ(x')`.
    data_gram: DMatrix<f64>,
    quad: f64,
    log_marginal: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpgpModel {
    params: KernelParams,
    pseudo: PseudoInputSet,
    inputs: DMatrix<f64>,
    targets: DVector<f64>,
    scaling: Option<TargetScaling>,
    cache: SpgpCache,
    report: FitReport,
}

/// Fits `m` pseudo-inputs jointly with the hyperparameters.
///
/// Pseudo-inputs start at a seeded random subset of the training inputs.
pub fn fit_spgp(data: &Dataset, m: usize, init: &KernelParams, options: &FitOptions) -> Result<SpgpModel> {
    ensure_dim(init.dim(), data.dim())?;
    if m == 0 || m > data.len() {
        return Err(GpError::InvalidInput(format!(
            "pseudo-input count must lie in [1, N = {}], got {m}",
            data.len()
        )));
    }
    let pseudo = PseudoInputSet::random_subset(&data.inputs, m, options.seed)?;
    fit_spgp_from(data, pseudo, init, options)
}

/// Like [`fit_spgp`] with caller-supplied starting pseudo-inputs.
pub fn fit_spgp_from(
    data: &Dataset,
    pseudo: PseudoInputSet,
    init: &KernelParams,
    options: &FitOptions,
) -> Result<SpgpModel> {
    ensure_dim(init.dim(), data.dim())?;
    ensure_dim(init.dim(), pseudo.dim())?;
    let (y, scaling) = model_targets(data, options.standardize);
    let x = &data.inputs;
    let (m, d) = (pseudo.len(), pseudo.dim());
    let learn_noise = options.learn_noise && init.noise_variance() > 0.0;
    let n_hyp = pack(init, learn_noise).len();

    let (params, pseudo, report) = if options.optimize {
        let mut x0 = pack(init, learn_noise);
        x0.extend(pseudo.flat_row_major());
        let objective = |v: &[f64]| {
            let p = unpack(init, &v[..n_hyp], learn_noise)?;
            let z = PseudoInputSet::from_flat_row_major(m, d, &v[n_hyp..]);
            let (f, mut g) = spgp_log_marginal(&p, &z, x, &y)?;
            if !learn_noise {
                g.remove(d + 1);
            }
            Ok((f, g))
        };
        let res = maximize(objective, x0, &options.optimizer)?;
        let params = unpack(init, &res.x[..n_hyp], learn_noise)?;
        let pseudo = PseudoInputSet::from_flat_row_major(m, d, &res.x[n_hyp..]);
        let report = FitReport {
            log_marginal_likelihood: res.value,
            iterations: res.iterations,
            evaluations: res.evaluations,
            status: res.status,
            degenerate: data.len() < 2,
        };
        (params, pseudo, report)
    } else {
        let report = FitReport {
            log_marginal_likelihood: f64::NAN,
            iterations: 0,
            evaluations: 1,
            status: OptimStatus::Disabled,
            degenerate: data.len() < 2,
        };
        (init.clone(), pseudo, report)
    };
    SpgpModel::build(params, pseudo, data.inputs.clone(), y, scaling, report)
}

impl SpgpModel {
    /// Conditions on `data` with fixed hyperparameters and pseudo-inputs.
    pub fn with_params(
        data: &Dataset,
        params: &KernelParams,
        pseudo: PseudoInputSet,
        standardize: bool,
    ) -> Result<Self> {
        fit_spgp_from(
            data,
            pseudo,
            params,
            &FitOptions {
                optimize: false,
                standardize,
                ..FitOptions::spgp()
            },
        )
    }

    fn build(
        params: KernelParams,
        pseudo: PseudoInputSet,
        inputs: DMatrix<f64>,
        targets: DVector<f64>,
        scaling: Option<TargetScaling>,
        mut report: FitReport,
    ) -> Result<Self> {
        let t = sparse_terms(&params, &pseudo, &inputs, &targets)?;
        let log_marginal = value_of(&t, targets.len());
        if !log_marginal.is_finite() {
            let mut p = params.log_vector();
            p.extend(pseudo.flat_row_major());
            return Err(GpError::NonFinite { params: p });
        }
        report.log_marginal_likelihood = log_marginal;
        let mean_weights = t.lb_inv.tr_mul(&t.c);
        let data_gram = &t.v * t.v.transpose();
        let cache = SpgpCache {
            lm: t.lm,
            lb: t.lb,
            mean_weights,
            lambda: t.lambda,
            data_gram,
            quad: t.quad,
            log_marginal,
        };
        Ok(Self {
            params,
            pseudo,
            inputs,
            targets,
            scaling,
            cache,
            report,
        })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn pseudo_inputs(&self) -> &PseudoInputSet {
        &self.pseudo
    }

    pub fn report(&self) -> &FitReport {
        &self.report
    }

    pub fn scaling(&self) -> Option<TargetScaling> {
        self.scaling
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    /// Targets on the model scale.
    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.cache.log_marginal
    }

    /// `yᵀ H y` with `H = Δ⁻¹`, on the model scale.
    pub fn target_energy(&self) -> f64 {
        self.cache.quad
    }

    /// `diag(K_D − Q_D)`, before the noise is added.
    pub fn diagonal_correction(&self) -> DVector<f64> {
        self.cache.lambda.map(|l| l - self.params.noise_variance())
    }

    /// Applies `H = Δ⁻¹` to `v` via the low-rank factors.
    pub fn apply_h(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_dim(self.targets.len(), v.len())?;
        let kmn = kernel::kernel_matrix(&self.params, self.pseudo.locations(), &self.inputs)?;
        let mut phi = kmn;
        self.cache.lm.solve_lower_triangular_mut(&mut phi);
        let vl = v.component_div(&self.cache.lambda);
        let inner = solve_lower_vec(&self.cache.lb, &(&phi * &vl));
        let back = phi.tr_mul(&solve_lower_transpose_vec(&self.cache.lb, &inner));
        Ok((v - back).component_div(&self.cache.lambda))
    }

    /// Whitened features `φ(x) = L_m⁻¹ k_m(x)`.
    pub(crate) fn features(&self, x: &[f64]) -> Result<DVector<f64>> {
        let k = kernel::kernel_vector(&self.params, self.pseudo.locations(), x)?;
        Ok(solve_lower_vec(&self.cache.lm, &k))
    }

    pub(crate) fn data_gram(&self) -> &DMatrix<f64> {
        &self.cache.data_gram
    }

    /// Latent mean and variance on the model scale from precomputed features.
    pub(crate) fn latent_from_features(&self, phi: &DVector<f64>) -> (f64, f64) {
        let prior = self.params.signal_variance();
        let mean = phi.dot(&self.cache.mean_weights);
        let w = solve_lower_vec(&self.cache.lb, phi);
        let var = prior - phi.norm_squared() + w.norm_squared();
        (mean, var.clamp(0.0, prior))
    }

    /// Mean and variance on the model scale (before unstandardizing).
    pub fn predict_model_scale(&self, x: &[f64]) -> Result<(f64, f64)> {
        let phi = self.features(x)?;
        Ok(self.latent_from_features(&phi))
    }

    pub fn unscale(&self, mean: f64, variance: f64) -> Prediction {
        let s = self.scaling.unwrap_or_else(TargetScaling::identity);
        Prediction {
            mean: s.unstandardize(mean),
            variance: s.unstandardize_variance(variance),
        }
    }

    /// Latent predictive mean and variance in target units.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        self.predict_with(x, VarianceKind::Latent)
    }

    pub fn predict_with(&self, x: &[f64], kind: VarianceKind) -> Result<Prediction> {
        let (mean, mut var) = self.predict_model_scale(x)?;
        if kind == VarianceKind::Observation {
            var += self.params.noise_variance();
        }
        Ok(self.unscale(mean, var))
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

    #[test]
    fn nystrom_is_exact_on_its_own_pseudo_set() {
        let p = KernelParams::with_jitter(1.0, vec![1.0, 0.8], 0.0, 1e-12).unwrap();
        let data = gen_gp_sample(12, &p, (0.0, 5.0), 1).unwrap();
        let pseudo = PseudoInputSet::new(data.inputs.clone()).unwrap();
        let q = low_rank_cov(&p, &pseudo, &data.inputs, &data.inputs).unwrap();
        let k = kernel::kernel_matrix(&p, &data.inputs, &data.inputs).unwrap();
        assert!((q - k).amax() < 1e-8);
    }

    #[test]
    fn rank_one_closed_form() {
        let p = KernelParams::with_jitter(1.3, vec![0.7], 0.0, 0.0).unwrap();
        let xbar = DMatrix::from_row_slice(1, 1, &[0.4]);
        let pseudo = PseudoInputSet::new(xbar.clone()).unwrap();
        let x = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, -2.0]);
        let x2 = DMatrix::from_row_slice(2, 1, &[0.5, 3.0]);
        let q = low_rank_cov(&p, &pseudo, &x, &x2).unwrap();
        let kxx = |a: f64, b: f64| kernel::kernel_eval(&p, &[a], &[b]).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let expect = kxx(x[i], 0.4) * kxx(0.4, x2[j]) / kxx(0.4, 0.4);
                assert_relative_eq!(q[(i, j)], expect, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn too_many_pseudo_inputs_rejected() {
        let p = KernelParams::new(1.0, vec![1.0], 0.1).unwrap();
        let data = gen_gp_sample(5, &p, (0.0, 1.0), 0).unwrap();
        assert!(matches!(
            fit_spgp(&data, 6, &p, &FitOptions::spgp()),
            Err(GpError::InvalidInput(_))
        ));
        assert!(fit_spgp(&data, 0, &p, &FitOptions::spgp()).is_err());
    }

    #[test]
    fn scalar_case_is_gaussian_log_density() {
        let p = KernelParams::new(1.4, vec![1.0], 0.3).unwrap();
        let x = DMatrix::from_row_slice(1, 1, &[0.2]);
        let y = DVector::from_vec(vec![0.9]);
        let pseudo = PseudoInputSet::new(DMatrix::from_row_slice(1, 1, &[-0.5])).unwrap();
        let (v, _) = spgp_log_marginal(&p, &pseudo, &x, &y).unwrap();
        let var = 1.4 + 0.3;
        let expect = -0.5 * (2.0 * std::f64::consts::PI * var).ln() - 0.5 * 0.81 / var;
        assert_relative_eq!(v, expect, epsilon = 1e-9);
    }

    #[test]
    fn apply_h_matches_dense_inverse() {
        let p = KernelParams::new(1.0, vec![0.9, 1.3], 0.05).unwrap();
        let data = gen_gp_sample(60, &p, (0.0, 4.0), 4).unwrap();
        let pseudo = PseudoInputSet::random_subset(&data.inputs, 7, 2).unwrap();
        let model = SpgpModel::with_params(&data, &p, pseudo.clone(), false).unwrap();
        let q = low_rank_cov(&p, &pseudo, &data.inputs, &data.inputs).unwrap();
        let k = kernel::kernel_matrix(&p, &data.inputs, &data.inputs).unwrap();
        let mut delta = q.clone();
        for i in 0..60 {
            delta[(i, i)] = k[(i, i)] + p.noise_variance();
        }
        let v = DVector::from_fn(60, |i, _| (i as f64 * 0.37).sin());
        let dense = delta.lu().solve(&v).unwrap();
        let fast = model.apply_h(&v).unwrap();
        assert!((dense - &fast).norm() / fast.norm() < 1e-9);
    }
}
