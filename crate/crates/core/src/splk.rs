//! Sparse pseudo-input local kriging.
//!
//! The domain is cut into `S` slabs along one axis and an independent sparse GP
//! is fitted in each. Neighbouring slabs are stitched by forcing both local
//! means to agree at a grid of control points on their shared face. The value
//! at each control point is a weighted average of the two local means, with
//! weights `w_j = y_jᵀ H_j y_j`. Each local predictor is then corrected so that
//! it passes through those values:
//!
//! ```text
//! μ_j(x)  = s_j(x) + k̄_j(x)ᵀ G_j (r_j − s_j(b_j))
//! σ²_j(x) = v_j(x) + (k̄_j(x)ᵀ G_j (r_j − s_j(b_j)))² / w_j
//! ```
//!
//! where `s_j`, `v_j` are the local sparse GP mean and variance. See
//! [`correction_factors`] for how `k̄_j` and `G_j` are built.

use log::{debug, info, warn};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, TargetScaling};
use crate::error::{ensure_dim, GpError, Result};
use crate::fitting::{FitOptions, Prediction, VarianceKind};
use crate::kernel::{self, KernelParams};
use crate::linalg::{cholesky_escalating, solve_lower_transpose_vec, solve_lower_vec};
use crate::partition::{
    assign_points, control_point_grid, infer_domain, make_cuts, pca_rotate, pseudo_count, OrthopeDomain,
    PartitionSpec, PcaTransform, WidthMode,
};
use crate::spgp::{fit_spgp, SpgpModel};

/// Recommended subdomain sizes.
pub const SUBDOMAIN_SIZE_GUIDANCE: (usize, usize) = (500, 5000);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplkOptions {
    pub subdomains: usize,
    /// Cut axis; `None` picks the axis of largest variance (after rotation).
    pub axis: Option<usize>,
    /// k in `m_j = ⌈k √n_j⌉`.
    pub pseudo_density: f64,
    /// λ: control points per non-cut axis are λ + 1.
    pub fold_density: usize,
    pub width_mode: WidthMode,
    pub pca: bool,
    /// Options for every local sparse GP fit. Every local uses the same seed.
    /// Target standardization here applies to the whole data set at once.
    pub fit: FitOptions,
    /// Fit the locals on the rayon pool.
    pub parallel: bool,
}

impl Default for SplkOptions {
    fn default() -> Self {
        Self {
            subdomains: 4,
            axis: None,
            pseudo_density: 1.0,
            fold_density: 3,
            width_mode: WidthMode::EqualCount,
            pca: false,
            fit: FitOptions::spgp(),
            parallel: false,
        }
    }
}

/// Control points on one face and their estimated values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryValues {
    pub lower: usize,
    pub upper: usize,
    /// One control point per row, in the partition frame.
    pub points: DMatrix<f64>,
    /// Values on the model (standardized) scale.
    pub values: DVector<f64>,
    /// `y_jᵀ H_j y_j` of the lower and upper local.
    pub weights: (f64, f64),
}

/// Boundary-correction state of one local model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Correction {
    /// Whitened features of the control points, `m × q`.
    phi_b: DMatrix<f64>,
    /// `V Vᵀ Φ_b`, so that `(Q_{Db}ᵀ Q_{Dx})_i = φ(x)ᵀ p_i`.
    p: DMatrix<f64>,
    /// Factor of the pre-inverse core `K_bb ∘ Q_{Db}ᵀQ_{Db}`.
    core_factor: DMatrix<f64>,
    /// Per-control-point normalizers of the pre-inverse.
    normalizers: DVector<f64>,
    /// `r_j − s_j(b_j)`
    residuals: DVector<f64>,
    /// Weights applied to `k̄` once normalizers are accounted for, kept as
    /// an unevaluated sum `hi + lo`.
    gamma_hi: DVector<f64>,
    gamma_lo: DVector<f64>,
    /// Lagrange multipliers `2 G_j (r_j − s_j(b_j)) / w_j`.
    lagrange: DVector<f64>,
    energy: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalModel {
    pub index: usize,
    pub spgp: SpgpModel,
    /// Control points of every face of this subdomain, lower face first.
    pub controls: DMatrix<f64>,
    /// Boundaries in the order their points appear in `controls`.
    pub boundary_ids: Vec<usize>,
    correction: Option<Correction>,
}

/// Fitted model: partition, per-subdomain sparse GPs and boundary values.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SplkModel {
    pub spec: PartitionSpec,
    pub domain: OrthopeDomain,
    pub transform: Option<PcaTransform>,
    pub scaling: Option<TargetScaling>,
    pub locals: Vec<LocalModel>,
    pub boundaries: Vec<BoundaryValues>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplkPrediction {
    pub mean: f64,
    pub variance: f64,
    pub subdomain: usize,
}

/// Cross-boundary disagreement of the corrected and uncorrected predictors at
/// one face crossing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryJump {
    pub boundary: usize,
    pub naive: f64,
    pub splk: f64,
}

fn max_variance_axis(x: &DMatrix<f64>) -> usize {
    let n = x.nrows() as f64;
    (0..x.ncols())
        .map(|c| {
            let col = x.column(c);
            let m = col.sum() / n;
            (c, col.iter().map(|v| (v - m) * (v - m)).sum::<f64>())
        })
        .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
        .0
}

fn members_of(membership: &[usize], j: usize) -> Vec<usize> {
    membership
        .iter()
        .enumerate()
        .filter_map(|(i, &s)| (s == j).then_some(i))
        .collect()
}

/// Fits one local sparse GP on a subdomain's data (already in the partition
/// frame and on the model scale).
pub fn fit_local(data: &Dataset, index: usize, pseudo_density: f64, init: Option<&KernelParams>, fit: &FitOptions) -> Result<SpgpModel> {
    let n = data.len();
    if n < 2 {
        return Err(GpError::Partition(format!(
            "subdomain {index} holds {n} point(s); at least 2 are needed (try equal-count width mode)"
        )));
    }
    if n < SUBDOMAIN_SIZE_GUIDANCE.0 || n > SUBDOMAIN_SIZE_GUIDANCE.1 {
        info!(
            "subdomain {index} holds {n} points, outside the suggested range {}..={}",
            SUBDOMAIN_SIZE_GUIDANCE.0, SUBDOMAIN_SIZE_GUIDANCE.1
        );
    }
    let m = pseudo_count(n, pseudo_density);
    let init = match init {
        Some(p) => p.clone(),
        None => KernelParams::heuristic(&data.inputs),
    };
    let options = FitOptions {
        standardize: false,
        ..fit.clone()
    };
    fit_spgp(data, m, &init, &options)
}

/// Fits the partitioned model.
///
/// Phase one fits every local independently; phase two estimates the shared
/// control-point values and builds each local's correction.
pub fn fit_splk(data: &Dataset, init: Option<&KernelParams>, options: &SplkOptions) -> Result<SplkModel> {
    if let Some(p) = init {
        ensure_dim(p.dim(), data.dim())?;
    }
    let (inputs, transform) = if options.pca {
        let (z, t) = pca_rotate(&data.inputs)?;
        (z, Some(t))
    } else {
        (data.inputs.clone(), None)
    };
    let (targets, scaling) = if options.fit.standardize {
        let s = TargetScaling::fit(&data.targets);
        (data.targets.map(|v| s.standardize(v)), Some(s))
    } else {
        (data.targets.clone(), None)
    };
    let frame = Dataset::new(inputs, targets)?;
    let domain = infer_domain(&frame.inputs)?;
    let axis = options.axis.unwrap_or_else(|| max_variance_axis(&frame.inputs));
    let spec = make_cuts(&domain, &frame.inputs, axis, options.subdomains, options.width_mode)?
        .with_fold_density(options.fold_density)
        .with_pseudo_density(options.pseudo_density);
    if spec.fold_density == 0 {
        return Err(GpError::InvalidInput("fold density λ must be at least 1".into()));
    }
    let membership = assign_points(&spec, &frame.inputs)?;
    let pieces: Vec<Dataset> = (0..spec.subdomains())
        .map(|j| frame.subset(&members_of(&membership, j)))
        .collect();

    let fit_one = |(j, piece): (usize, &Dataset)| fit_local(piece, j, spec.pseudo_density, init, &options.fit);
    let fits: Vec<SpgpModel> = if options.parallel {
        pieces.par_iter().enumerate().map(fit_one).collect::<Result<_>>()?
    } else {
        pieces.iter().enumerate().map(fit_one).collect::<Result<_>>()?
    };
    assemble(spec, domain, transform, scaling, fits)
}

/// Builds control grids, boundary values and corrections around fitted locals.
fn assemble(
    spec: PartitionSpec,
    domain: OrthopeDomain,
    transform: Option<PcaTransform>,
    scaling: Option<TargetScaling>,
    fits: Vec<SpgpModel>,
) -> Result<SplkModel> {
    let grids = (0..spec.boundaries())
        .map(|b| control_point_grid(&domain, &spec, b))
        .collect::<Result<Vec<_>>>()?;
    let boundaries = grids
        .iter()
        .map(|g| estimate_boundary_values(&fits[g.lower], &fits[g.upper], g.lower, &g.points))
        .collect::<Result<Vec<_>>>()?;
    let locals = fits
        .into_iter()
        .enumerate()
        .map(|(j, spgp)| build_local(j, spgp, &boundaries))
        .collect::<Result<Vec<_>>>()?;
    Ok(SplkModel {
        spec,
        domain,
        transform,
        scaling,
        locals,
        boundaries,
    })
}

fn build_local(j: usize, spgp: SpgpModel, boundaries: &[BoundaryValues]) -> Result<LocalModel> {
    let incident: Vec<usize> = (0..boundaries.len())
        .filter(|&b| boundaries[b].lower == j || boundaries[b].upper == j)
        .collect();
    let d = spgp.inputs().ncols();
    let q: usize = incident.iter().map(|&b| boundaries[b].points.nrows()).sum();
    let mut controls = DMatrix::zeros(q, d);
    let mut r = DVector::zeros(q);
    let mut row = 0;
    for &b in &incident {
        let bv = &boundaries[b];
        ensure_dim(d, bv.points.ncols())?;
        for i in 0..bv.points.nrows() {
            controls.set_row(row, &bv.points.row(i));
            r[row] = bv.values[i];
            row += 1;
        }
    }
    let correction = if q == 0 {
        None
    } else {
        Some(correction_factors(&spgp, &controls, &r).map_err(|e| match e {
            GpError::Numerical(msg) => GpError::Numerical(format!("subdomain {j}: {msg}")),
            other => other,
        })?)
    };
    Ok(LocalModel {
        index: j,
        spgp,
        controls,
        boundary_ids: incident,
        correction,
    })
}

/// Shared control-point values on one face from its two incident locals:
/// `r = (w_j s_j(b) + w_k s_k(b)) / (w_j + w_k)`.
pub fn estimate_boundary_values(
    lower: &SpgpModel,
    upper: &SpgpModel,
    lower_index: usize,
    points: &DMatrix<f64>,
) -> Result<BoundaryValues> {
    let (wj, wk) = (lower.target_energy(), upper.target_energy());
    let total = wj + wk;
    if !(total > 0.0) || !total.is_finite() {
        return Err(GpError::Numerical(format!(
            "boundary between subdomains {lower_index} and {}: weights sum to {total}",
            lower_index + 1
        )));
    }
    let mut values = DVector::zeros(points.nrows());
    for (i, row) in points.row_iter().enumerate() {
        let b: Vec<f64> = row.iter().copied().collect();
        let (sj, _) = lower.predict_model_scale(&b)?;
        let (sk, _) = upper.predict_model_scale(&b)?;
        values[i] = (wj * sj + wk * sk) / total;
    }
    Ok(BoundaryValues {
        lower: lower_index,
        upper: lower_index + 1,
        points: points.clone(),
        values,
        weights: (wj, wk),
    })
}

/// Normalizer `1 / (‖Q_{b x}‖ · ‖Q_{D x}‖²)`, zero when either norm vanishes.
fn normalizer(qbx_norm: f64, qdx_sq: f64) -> f64 {
    let den = qbx_norm * qdx_sq;
    if den > 0.0 && den.is_finite() {
        1.0 / den
    } else {
        0.0
    }
}

/// Builds `k̄_j` and `G_j` for a local with control points `b` and targets `r`.
///
/// Reading of the correction vector, with `Q` the local Nyström covariance:
///
/// ```text
/// k̄(x)_i = K(b_i, x) · (Q_{Db}ᵀ Q_{Dx})_i / (‖Q_{b x}‖ · ‖Q_{D x}‖²)
/// ```
///
/// `G_j` is the inverse of the matrix whose row `l` is `k̄(b_l)ᵀ`, i.e.
/// `(diag(n) · (K_bb ∘ Q_{Db}ᵀQ_{Db}))⁻¹` with `n_l` the normalizer at `b_l`.
/// That choice makes `k̄(b_l)ᵀ G_j` the `l`-th unit vector, so the corrected
/// mean hits `r_l` at every control point.
///
/// The Schur product is positive semidefinite but often badly conditioned
/// (long lengthscales make neighbouring control points nearly collinear).
/// Its rows are built through the same code path as query-time evaluation,
/// it is factored with jitter escalation, and the solve is refined with
/// compensated residuals while carrying the weights as an unevaluated sum
/// `γ_hi + γ_lo`. Exact interpolation is then limited by the condition number
/// rather than by the jitter. If a local kernel cannot tell two control points
/// apart the matrix is singular and the refinement stops at the least-residual
/// iterate with a warning.
pub fn correction_factors(spgp: &SpgpModel, b: &DMatrix<f64>, r: &DVector<f64>) -> Result<Correction> {
    let q = b.nrows();
    ensure_dim(q, r.len())?;
    ensure_dim(spgp.inputs().ncols(), b.ncols())?;
    let m = spgp.pseudo_inputs().len();
    let gram = spgp.data_gram();
    let mut phi_b = DMatrix::zeros(m, q);
    let mut residuals = DVector::zeros(q);
    let mut points = Vec::with_capacity(q);
    for (i, row) in b.row_iter().enumerate() {
        let x: Vec<f64> = row.iter().copied().collect();
        let phi = spgp.features(&x)?;
        let (s, _) = spgp.latent_from_features(&phi);
        residuals[i] = r[i] - s;
        phi_b.set_column(i, &phi);
        points.push((x, phi));
    }
    let p = gram * &phi_b;

    let mut system = DMatrix::zeros(q, q);
    let mut normalizers = DVector::zeros(q);
    for (l, (x, phi)) in points.iter().enumerate() {
        let kbx = kernel::kernel_vector(spgp.params(), b, x)?;
        system.set_row(l, &core_row(&p, phi, &kbx).transpose());
        normalizers[l] = normalizer(phi_b.tr_mul(phi).norm(), phi.dot(&(gram * phi)));
    }
    if let Some(l) = normalizers.iter().position(|v| *v == 0.0) {
        return Err(GpError::Numerical(format!(
            "control point {l} is uncorrelated with the local data; its correction is undefined"
        )));
    }
    let energy = spgp.target_energy();
    if !(energy > 0.0) || !energy.is_finite() {
        return Err(GpError::Numerical(format!(
            "y'Hy = {energy} is not positive; the correction divides by it"
        )));
    }
    let rhs = residuals.component_div(&normalizers);
    let sym = (&system + system.transpose()) * 0.5;
    let scale = sym.diagonal().amax();
    let factor = cholesky_escalating(&sym, scale, 0.0, "boundary correction matrix")?;
    let lc = factor.factor.unpack();
    let solve = |v: &DVector<f64>| solve_lower_transpose_vec(&lc, &solve_lower_vec(&lc, v));

    let residual = |hi: &DVector<f64>, lo: &DVector<f64>| {
        DVector::from_fn(q, |l, _| {
            let row: Vec<f64> = system.row(l).iter().map(|v| -v).collect();
            compensated_dot(&row, hi.as_slice(), lo.as_slice(), rhs[l])
        })
    };
    let mut hi = solve(&rhs);
    let mut lo = DVector::zeros(q);
    let mut res = residual(&hi, &lo);
    let mut best = res.amax();
    let target = 4.0 * f64::EPSILON * rhs.amax();
    for _ in 0..60 {
        if best <= target {
            break;
        }
        let step = solve(&res);
        let (mut nhi, mut nlo) = (hi.clone(), lo.clone());
        for i in 0..q {
            (nhi[i], nlo[i]) = dd_add(hi[i], lo[i], step[i]);
        }
        let nres = residual(&nhi, &nlo);
        let nbest = nres.amax();
        if !(nbest < best) {
            break;
        }
        (hi, lo, res, best) = (nhi, nlo, nres, nbest);
    }
    if best > 1e-10 * rhs.amax() {
        warn!(
            "boundary correction system is numerically singular (relative residual {:.2e}); \
             continuity at control points will be approximate",
            best / rhs.amax()
        );
    } else if factor.added_jitter > 0.0 {
        debug!("boundary correction matrix needed jitter {:.3e}", factor.added_jitter);
    }
    let gamma = &hi + &lo;
    let lagrange = &gamma * (2.0 / energy);
    Ok(Correction {
        phi_b,
        p,
        core_factor: lc,
        normalizers,
        residuals,
        gamma_hi: hi,
        gamma_lo: lo,
        lagrange,
        energy,
    })
}

/// `K(b_i, x) · p_iᵀφ(x)` for every control point; `k̄` before normalization.
fn core_row(p: &DMatrix<f64>, phi: &DVector<f64>, kbx: &DVector<f64>) -> DVector<f64> {
    kbx.component_mul(&p.tr_mul(phi))
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// `hi + lo + d` renormalized to a non-overlapping pair.
fn dd_add(hi: f64, lo: f64, d: f64) -> (f64, f64) {
    let (s, e) = two_sum(hi, d);
    let e = e + lo;
    let t = s + e;
    (t, e - (t - s))
}

/// `init + Σ a_i (hi_i + lo_i)` accumulated in twice the working precision.
fn compensated_dot(a: &[f64], hi: &[f64], lo: &[f64], init: f64) -> f64 {
    let mut s = init;
    let mut c = 0.0;
    for i in 0..a.len() {
        let p = a[i] * hi[i];
        let pe = a[i].mul_add(hi[i], -p);
        let (t, q) = two_sum(s, p);
        s = t;
        c += q + pe + a[i] * lo[i];
    }
    s + c
}

impl Correction {
    fn scale_at(&self, phi: &DVector<f64>, gram: &DMatrix<f64>) -> f64 {
        normalizer(self.phi_b.tr_mul(phi).norm(), phi.dot(&(gram * phi)))
    }

    /// `k̄(x)` from the features `φ(x)` and the exact kernel vector `K(b, x)`.
    fn kbar(&self, phi: &DVector<f64>, kbx: &DVector<f64>, gram: &DMatrix<f64>) -> DVector<f64> {
        core_row(&self.p, phi, kbx) * self.scale_at(phi, gram)
    }

    /// `k̄(x)ᵀ G_j (r_j − s_j(b_j))`.
    fn value(&self, phi: &DVector<f64>, kbx: &DVector<f64>, gram: &DMatrix<f64>) -> f64 {
        let core = core_row(&self.p, phi, kbx);
        let dot = compensated_dot(core.as_slice(), self.gamma_hi.as_slice(), self.gamma_lo.as_slice(), 0.0);
        self.scale_at(phi, gram) * dot
    }

    pub fn residuals(&self) -> &DVector<f64> {
        &self.residuals
    }

    pub fn lagrange(&self) -> &DVector<f64> {
        &self.lagrange
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// `G_j` formed explicitly, `q × q`.
    pub fn g_matrix(&self) -> DMatrix<f64> {
        let q = self.gamma_hi.len();
        let mut inv = DMatrix::identity(q, q);
        self.core_factor.solve_lower_triangular_mut(&mut inv);
        let core_inv = inv.tr_mul(&inv);
        let mut g = core_inv;
        for (l, mut col) in g.column_iter_mut().enumerate() {
            col /= self.normalizers[l];
        }
        g
    }
}

impl LocalModel {
    pub fn correction(&self) -> Option<&Correction> {
        self.correction.as_ref()
    }

    /// Correction vector `k̄(z)` for a point in the partition frame.
    pub fn kbar(&self, z: &[f64]) -> Result<Option<DVector<f64>>> {
        let Some(c) = &self.correction else {
            return Ok(None);
        };
        let phi = self.spgp.features(z)?;
        let kbx = kernel::kernel_vector(self.spgp.params(), &self.controls, z)?;
        Ok(Some(c.kbar(&phi, &kbx, self.spgp.data_gram())))
    }

    /// Model-scale `(mean, latent variance, correction)` at a frame point.
    fn evaluate(&self, z: &[f64], corrected: bool) -> Result<(f64, f64, f64)> {
        let phi = self.spgp.features(z)?;
        let (s, v) = self.spgp.latent_from_features(&phi);
        match (&self.correction, corrected) {
            (Some(c), true) => {
                let kbx = kernel::kernel_vector(self.spgp.params(), &self.controls, z)?;
                let corr = c.value(&phi, &kbx, self.spgp.data_gram());
                Ok((s + corr, v + corr * corr / c.energy, corr))
            }
            _ => Ok((s, v, 0.0)),
        }
    }
}

impl SplkModel {
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn subdomains(&self) -> usize {
        self.locals.len()
    }

    /// Maps an input point into the partition frame.
    pub fn to_frame(&self, x: &[f64]) -> Result<Vec<f64>> {
        ensure_dim(self.dim(), x.len())?;
        match &self.transform {
            Some(t) => t.apply_point(x),
            None => Ok(x.to_vec()),
        }
    }

    pub fn locate(&self, x: &[f64]) -> Result<usize> {
        Ok(self.spec.locate(&self.to_frame(x)?))
    }

    fn unscale(&self, mean: f64, var: f64) -> Prediction {
        let s = self.scaling.unwrap_or_else(TargetScaling::identity);
        Prediction {
            mean: s.unstandardize(mean),
            variance: s.unstandardize_variance(var),
        }
    }

    fn finish(&self, j: usize, (mean, var, _): (f64, f64, f64), kind: VarianceKind) -> SplkPrediction {
        let mut var = var;
        if kind == VarianceKind::Observation {
            var += self.locals[j].spgp.params().noise_variance();
        }
        let p = self.unscale(mean, var);
        SplkPrediction {
            mean: p.mean,
            variance: p.variance,
            subdomain: j,
        }
    }

    /// Continuity-corrected prediction from the subdomain containing `x`.
    pub fn predict(&self, x: &[f64]) -> Result<SplkPrediction> {
        self.predict_with(x, VarianceKind::Latent)
    }

    pub fn predict_with(&self, x: &[f64], kind: VarianceKind) -> Result<SplkPrediction> {
        let z = self.to_frame(x)?;
        let j = self.spec.locate(&z);
        Ok(self.finish(j, self.locals[j].evaluate(&z, true)?, kind))
    }

    /// Uncorrected local sparse GP prediction.
    pub fn naive_predict(&self, x: &[f64]) -> Result<SplkPrediction> {
        let z = self.to_frame(x)?;
        let j = self.spec.locate(&z);
        Ok(self.finish(j, self.locals[j].evaluate(&z, false)?, VarianceKind::Latent))
    }

    /// Prediction of local `j` at `x`, whether or not `x` lies in subdomain `j`.
    pub fn predict_from(&self, j: usize, x: &[f64], corrected: bool) -> Result<SplkPrediction> {
        if j >= self.locals.len() {
            return Err(GpError::InvalidInput(format!("no subdomain {j}")));
        }
        let z = self.to_frame(x)?;
        Ok(self.finish(j, self.locals[j].evaluate(&z, corrected)?, VarianceKind::Latent))
    }

    /// As [`Self::predict_from`] for a point already in the partition frame.
    pub fn predict_from_frame(&self, j: usize, z: &[f64], corrected: bool) -> Result<SplkPrediction> {
        if j >= self.locals.len() {
            return Err(GpError::InvalidInput(format!("no subdomain {j}")));
        }
        ensure_dim(self.dim(), z.len())?;
        Ok(self.finish(j, self.locals[j].evaluate(z, corrected)?, VarianceKind::Latent))
    }

    /// Correction added to the local mean at `x`, in target units.
    pub fn correction_at(&self, x: &[f64]) -> Result<f64> {
        let z = self.to_frame(x)?;
        let j = self.spec.locate(&z);
        let (_, _, corr) = self.locals[j].evaluate(&z, true)?;
        Ok(corr * self.scaling.map_or(1.0, |s| s.scale))
    }

    pub fn predict_many(&self, x: &DMatrix<f64>) -> Result<Vec<SplkPrediction>> {
        x.row_iter()
            .map(|r| self.predict(&r.iter().copied().collect::<Vec<_>>()))
            .collect()
    }

    pub fn naive_predict_many(&self, x: &DMatrix<f64>) -> Result<Vec<SplkPrediction>> {
        x.row_iter()
            .map(|r| self.naive_predict(&r.iter().copied().collect::<Vec<_>>()))
            .collect()
    }

    /// Boundary values in target units.
    pub fn boundary_values(&self, boundary: usize) -> Option<DVector<f64>> {
        let s = self.scaling.unwrap_or_else(TargetScaling::identity);
        self.boundaries.get(boundary).map(|b| b.values.map(|v| s.unstandardize(v)))
    }

    /// Jumps where transects parallel to the cut axis cross each face.
    ///
    /// Each entry of `offsets` places one transect: every non-cut coordinate
    /// sits at that fraction of its domain extent. At a crossing both incident
    /// locals are evaluated at the same point, which is the jump between their
    /// one-sided limits.
    pub fn transect_jumps(&self, offsets: &[f64]) -> Result<Vec<BoundaryJump>> {
        let mut out = Vec::new();
        for (b, &face) in self.spec.cuts.iter().enumerate() {
            for &f in offsets {
                let z: Vec<f64> = self
                    .domain
                    .bounds
                    .iter()
                    .enumerate()
                    .map(|(k, (lo, hi))| if k == self.spec.cut_axis { face } else { lo + f * (hi - lo) })
                    .collect();
                let side = |j: usize, corrected: bool| -> Result<f64> {
                    Ok(self.predict_from_frame(j, &z, corrected)?.mean)
                };
                out.push(BoundaryJump {
                    boundary: b,
                    naive: (side(b, false)? - side(b + 1, false)?).abs(),
                    splk: (side(b, true)? - side(b + 1, true)?).abs(),
                });
            }
        }
        Ok(out)
    }

    /// Rebuilds control grids and corrections for another λ, keeping the
    /// local fits. λ does not enter the local fits, so this equals a refit.
    pub fn with_fold_density(&self, lambda: usize) -> Result<SplkModel> {
        if lambda == 0 {
            return Err(GpError::InvalidInput("fold density λ must be at least 1".into()));
        }
        let spec = self.spec.clone().with_fold_density(lambda);
        let fits = self.locals.iter().map(|l| l.spgp.clone()).collect();
        assemble(spec, self.domain.clone(), self.transform.clone(), self.scaling, fits)
    }

    /// Refits local `j` with another seed and re-stitches; other locals are
    /// reused as they are.
    pub fn refit_local(&self, j: usize, fit: &FitOptions) -> Result<SplkModel> {
        let local = self
            .locals
            .get(j)
            .ok_or_else(|| GpError::InvalidInput(format!("no subdomain {j}")))?;
        let data = Dataset::new(local.spgp.inputs().clone(), local.spgp.targets().clone())?;
        let refit = fit_local(&data, j, self.spec.pseudo_density, None, fit)?;
        let fits = self
            .locals
            .iter()
            .map(|l| if l.index == j { refit.clone() } else { l.spgp.clone() })
            .collect();
        assemble(self.spec.clone(), self.domain.clone(), self.transform.clone(), self.scaling, fits)
    }

    /// Total control points over all faces.
    pub fn control_point_total(&self) -> usize {
        self.boundaries.iter().map(|b| b.points.nrows()).sum()
    }
}
