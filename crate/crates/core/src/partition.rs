//! Orthope-domain geometry: bounding boxes, parallel cuts, membership,
//! boundary control points, PCA rotation and the pseudo-input budget.

use std::fmt::Write as _;

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, GpError, Result};

/// Axis-aligned bounding box, one `(low, high)` pair per input dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrthopeDomain {
    pub bounds: Vec<(f64, f64)>,
}

impl OrthopeDomain {
    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(&self.bounds).all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }
}

pub fn infer_domain(x: &DMatrix<f64>) -> Result<OrthopeDomain> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(GpError::InvalidInput("cannot infer the domain of an empty point set".into()));
    }
    let bounds = x.column_iter().map(|c| (c.min(), c.max())).collect();
    Ok(OrthopeDomain { bounds })
}

/// Number of `m`-dimensional faces of a `d`-orthope, `2^{d−m}·C(d, m)`.
pub fn face_count(d: usize, m: usize) -> Result<u64> {
    if m >= d {
        return Err(GpError::InvalidInput(format!("face dimension {m} must be below d = {d}")));
    }
    let mut binom: u64 = 1;
    for i in 0..m as u64 {
        binom = binom * (d as u64 - i) / (i + 1);
    }
    Ok((1u64 << (d - m)) * binom)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum WidthMode {
    FixedWidth,
    #[default]
    EqualCount,
}

impl std::str::FromStr for WidthMode {
    type Err = GpError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "fixed" | "fixed-width" => Ok(Self::FixedWidth),
            "equal" | "equal-count" => Ok(Self::EqualCount),
            other => Err(GpError::InvalidInput(format!(
                "unknown width mode '{other}' (expected fixed-width or equal-count)"
            ))),
        }
    }
}

impl std::fmt::Display for WidthMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::FixedWidth => "fixed-width",
            Self::EqualCount => "equal-count",
        })
    }
}

/// Parallel cuts along one axis, plus the densities used downstream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub cut_axis: usize,
    /// Strictly increasing, strictly inside the domain on `cut_axis`.
    pub cuts: Vec<f64>,
    /// λ: control points per non-cut axis are λ + 1.
    pub fold_density: usize,
    /// k in `m_j = ⌈k √n_j⌉`.
    pub pseudo_density: f64,
    pub width_mode: WidthMode,
}

impl PartitionSpec {
    pub fn subdomains(&self) -> usize {
        self.cuts.len() + 1
    }

    pub fn boundaries(&self) -> usize {
        self.cuts.len()
    }

    pub fn with_fold_density(mut self, lambda: usize) -> Self {
        self.fold_density = lambda;
        self
    }

    pub fn with_pseudo_density(mut self, k: f64) -> Self {
        self.pseudo_density = k;
        self
    }

    /// Subdomain of a point: the number of cuts at or below its axis coordinate.
    /// Points outside the box fall into the nearest end subdomain.
    pub fn locate(&self, x: &[f64]) -> usize {
        let v = x[self.cut_axis];
        self.cuts.partition_point(|c| *c <= v)
    }

    /// Subdomains adjacent to `j`.
    pub fn neighbors(&self, j: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(2);
        if j > 0 {
            out.push(j - 1);
        }
        if j + 1 < self.subdomains() {
            out.push(j + 1);
        }
        out
    }

    /// Control points per boundary, `(λ+1)^{d−1}`, before any degenerate-axis collapse.
    pub fn control_points_per_boundary(&self, d: usize) -> usize {
        (self.fold_density + 1).pow(d as u32 - 1)
    }

    pub fn total_control_points(&self, d: usize) -> usize {
        self.boundaries() * self.control_points_per_boundary(d)
    }
}

/// Places `S − 1` cuts along `axis`.
pub fn make_cuts(
    domain: &OrthopeDomain,
    x: &DMatrix<f64>,
    axis: usize,
    subdomains: usize,
    width_mode: WidthMode,
) -> Result<PartitionSpec> {
    ensure_dim(domain.dim(), x.ncols())?;
    if subdomains == 0 {
        return Err(GpError::InvalidInput("number of subdomains must be at least 1".into()));
    }
    if axis >= domain.dim() {
        return Err(GpError::InvalidInput(format!(
            "cut axis {axis} out of range for d = {}",
            domain.dim()
        )));
    }
    let mut values: Vec<f64> = x.column(axis).iter().copied().collect();
    values.sort_by(f64::total_cmp);
    let distinct = 1 + values.windows(2).filter(|w| w[0] < w[1]).count();
    if x.nrows() == 0 || subdomains > distinct {
        return Err(GpError::InvalidInput(format!(
            "cannot separate {distinct} distinct values on axis {axis} into {subdomains} subdomains"
        )));
    }
    let cuts = match width_mode {
        WidthMode::FixedWidth => {
            let (lo, hi) = domain.bounds[axis];
            (1..subdomains)
                .map(|j| lo + (hi - lo) * j as f64 / subdomains as f64)
                .collect()
        }
        WidthMode::EqualCount => equal_count_cuts(&values, subdomains)?,
    };
    Ok(PartitionSpec {
        cut_axis: axis,
        cuts,
        fold_density: 3,
        pseudo_density: 1.0,
        width_mode,
    })
}

/// Quantile cuts at midpoints between consecutive sorted values; with ties the
/// cut moves to the nearest gap that still leaves room for the later cuts.
fn equal_count_cuts(sorted: &[f64], subdomains: usize) -> Result<Vec<f64>> {
    let n = sorted.len();
    let gaps: Vec<usize> = (1..n).filter(|&g| sorted[g - 1] < sorted[g]).collect();
    let mut cuts = Vec::with_capacity(subdomains - 1);
    let mut next_gap = 0;
    for j in 1..subdomains {
        let target = j * n / subdomains;
        let remaining = subdomains - 1 - j;
        let last_allowed = gaps.len() - 1 - remaining;
        let pick = (next_gap..=last_allowed)
            .min_by_key(|&i| gaps[i].abs_diff(target))
            .ok_or_else(|| GpError::Partition("not enough distinct values for equal-count cuts".into()))?;
        let g = gaps[pick];
        cuts.push(0.5 * (sorted[g - 1] + sorted[g]));
        next_gap = pick + 1;
    }
    Ok(cuts)
}

/// Subdomain index of every row of `x`.
pub fn assign_points(spec: &PartitionSpec, x: &DMatrix<f64>) -> Result<Vec<usize>> {
    if spec.cut_axis >= x.ncols() {
        return Err(GpError::DimensionMismatch {
            expected: spec.cut_axis + 1,
            got: x.ncols(),
        });
    }
    Ok(x.column(spec.cut_axis)
        .iter()
        .map(|v| spec.cuts.partition_point(|c| *c <= *v))
        .collect())
}

/// Control points on the boundary between subdomains `lower` and `lower + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryGrid {
    pub lower: usize,
    pub upper: usize,
    pub face: f64,
    /// One control point per row.
    pub points: DMatrix<f64>,
}

/// Tensor grid of `λ + 1` levels on every non-cut axis, last axis fastest.
pub fn control_point_grid(domain: &OrthopeDomain, spec: &PartitionSpec, boundary: usize) -> Result<BoundaryGrid> {
    if spec.fold_density == 0 {
        return Err(GpError::InvalidInput("fold density λ must be at least 1".into()));
    }
    let face = *spec.cuts.get(boundary).ok_or_else(|| {
        GpError::InvalidInput(format!("boundary {boundary} out of range ({} cuts)", spec.cuts.len()))
    })?;
    let d = domain.dim();
    let lambda = spec.fold_density;
    let levels: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            if k == spec.cut_axis {
                return vec![face];
            }
            let (lo, hi) = domain.bounds[k];
            if lo == hi {
                warn!("axis {k} has zero extent; control-point grid collapses on it");
                return vec![lo];
            }
            let step = (hi - lo) / lambda as f64;
            (0..=lambda)
                .map(|i| if i == lambda { hi } else { lo + step * i as f64 })
                .collect()
        })
        .collect();
    let count: usize = levels.iter().map(Vec::len).product();
    let mut points = DMatrix::zeros(count, d);
    let mut idx = vec![0usize; d];
    for r in 0..count {
        for k in 0..d {
            points[(r, k)] = levels[k][idx[k]];
        }
        for k in (0..d).rev() {
            idx[k] += 1;
            if idx[k] < levels[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
    Ok(BoundaryGrid {
        lower: boundary,
        upper: boundary + 1,
        face,
        points,
    })
}

/// Centering plus orthonormal rotation onto the principal axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaTransform {
    pub mean: DVector<f64>,
    /// Columns are principal directions, by decreasing variance.
    pub rotation: DMatrix<f64>,
}

impl PcaTransform {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        ensure_dim(self.dim(), x.ncols())?;
        let mut centered = x.clone();
        for mut row in centered.row_iter_mut() {
            row -= self.mean.transpose();
        }
        Ok(centered * &self.rotation)
    }

    pub fn apply_point(&self, x: &[f64]) -> Result<Vec<f64>> {
        ensure_dim(self.dim(), x.len())?;
        let centered = DVector::from_column_slice(x) - &self.mean;
        Ok((self.rotation.tr_mul(&centered)).iter().copied().collect())
    }

    pub fn invert(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        ensure_dim(self.dim(), z.ncols())?;
        let mut x = z * self.rotation.transpose();
        for mut row in x.row_iter_mut() {
            row += self.mean.transpose();
        }
        Ok(x)
    }
}

pub fn pca_rotate(x: &DMatrix<f64>) -> Result<(DMatrix<f64>, PcaTransform)> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(GpError::InvalidInput("PCA needs at least two points".into()));
    }
    let mean = x.row_mean().transpose();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.tr_mul(&centered) / (n as f64 - 1.0);
    let transform = if cov.amax() == 0.0 {
        warn!("constant inputs: PCA rotation is the identity");
        PcaTransform {
            mean,
            rotation: DMatrix::identity(d, d),
        }
    } else {
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let mut rotation = DMatrix::zeros(d, d);
        for (c, &src) in order.iter().enumerate() {
            let mut v = eig.eigenvectors.column(src).into_owned();
            let lead = v.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
            if lead < 0.0 {
                v.neg_mut();
            }
            rotation.set_column(c, &v);
        }
        PcaTransform { mean, rotation }
    };
    let rotated = transform.apply(x)?;
    Ok((rotated, transform))
}

/// `m_j = min(n_j, max(1, ⌈k √n_j⌉))`.
pub fn pseudo_count(n: usize, k: f64) -> usize {
    if !(0.1..=4.0).contains(&k) {
        warn!("pseudo density k = {k} is outside the recommended range [0.1, 4]");
    }
    let t = k * (n as f64).sqrt();
    // Absorb rounding when k√n is an integer in exact arithmetic.
    let nearest = t.round();
    let m = if (t - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        t.ceil()
    };
    (m.max(1.0) as usize).min(n)
}

/// Plain-text summary of a partition.
pub fn partition_report(domain: &OrthopeDomain, spec: &PartitionSpec, membership: &[usize]) -> String {
    let d = domain.dim();
    let mut counts = vec![0usize; spec.subdomains()];
    for &j in membership {
        if j < counts.len() {
            counts[j] += 1;
        }
    }
    let mut out = String::new();
    let _ = writeln!(out, "dimension: {d}");
    for (k, (lo, hi)) in domain.bounds.iter().enumerate() {
        let _ = writeln!(out, "axis {k}: [{lo}, {hi}]");
    }
    let _ = writeln!(out, "cut axis: {}", spec.cut_axis);
    let _ = writeln!(out, "width mode: {}", spec.width_mode);
    let _ = writeln!(out, "subdomains: {}", spec.subdomains());
    let _ = writeln!(out, "boundaries: {}", spec.boundaries());
    let (lo, hi) = domain.bounds[spec.cut_axis];
    for j in 0..spec.subdomains() {
        let a = if j == 0 { lo } else { spec.cuts[j - 1] };
        let b = if j == spec.boundaries() { hi } else { spec.cuts[j] };
        let m = pseudo_count(counts[j].max(1), spec.pseudo_density);
        let _ = writeln!(out, "subdomain {j}: [{a}, {b}) points {} pseudo-inputs {m}", counts[j]);
    }
    let _ = writeln!(
        out,
        "control points: {} per boundary, {} total (lambda = {})",
        spec.control_points_per_boundary(d),
        spec.total_control_points(d),
        spec.fold_density
    );
    out
}
