//! Datasets, CSV I/O, seeded splits, synthetic generators and error metrics.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{GpError, Result};
use crate::kernel::{self, KernelParams};
use crate::linalg::cholesky_escalating;

/// Largest sample size for exact dense GP sampling.
pub const MAX_GP_SAMPLE: usize = 8000;

pub(crate) fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Affine map between raw and standardized targets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetScaling {
    pub shift: f64,
    pub scale: f64,
}

impl TargetScaling {
    pub fn identity() -> Self {
        Self { shift: 0.0, scale: 1.0 }
    }

    /// Zero-mean, unit-variance map; constant targets keep unit scale.
    pub fn fit(y: &DVector<f64>) -> Self {
        let n = y.len().max(1) as f64;
        let shift = y.sum() / n;
        let var = y.iter().map(|v| (v - shift).powi(2)).sum::<f64>() / n;
        let scale = if var > 0.0 && var.is_finite() { var.sqrt() } else { 1.0 };
        Self { shift, scale }
    }

    pub fn standardize(&self, v: f64) -> f64 {
        (v - self.shift) / self.scale
    }

    pub fn unstandardize(&self, v: f64) -> f64 {
        v * self.scale + self.shift
    }

    pub fn unstandardize_variance(&self, v: f64) -> f64 {
        v * self.scale * self.scale
    }
}

/// Inputs (one row per observation) and targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub inputs: DMatrix<f64>,
    pub targets: DVector<f64>,
    /// Present when `targets` are standardized.
    pub scaling: Option<TargetScaling>,
    /// Free-form provenance, e.g. generator settings.
    pub metadata: BTreeMap<String, String>,
}

impl Dataset {
    pub fn new(inputs: DMatrix<f64>, targets: DVector<f64>) -> Result<Self> {
        if inputs.nrows() == 0 {
            return Err(GpError::InvalidInput("dataset has no rows".into()));
        }
        if inputs.ncols() == 0 {
            return Err(GpError::InvalidInput("dataset has no input columns".into()));
        }
        if inputs.nrows() != targets.len() {
            return Err(GpError::InvalidInput(format!(
                "{} input rows but {} targets",
                inputs.nrows(),
                targets.len()
            )));
        }
        if inputs.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(GpError::InvalidInput("dataset contains non-finite values".into()));
        }
        Ok(Self {
            inputs,
            targets,
            scaling: None,
            metadata: BTreeMap::new(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], targets: &[f64]) -> Result<Self> {
        let d = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != d) {
            return Err(GpError::InvalidInput("inconsistent row lengths".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(DMatrix::from_row_slice(rows.len(), d, &flat), DVector::from_column_slice(targets))
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.inputs.row(i).iter().copied().collect()
    }

    /// Rows selected by `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let inputs = self.inputs.select_rows(indices);
        let targets = DVector::from_iterator(indices.len(), indices.iter().map(|&i| self.targets[i]));
        Dataset {
            inputs,
            targets,
            scaling: self.scaling,
            metadata: self.metadata.clone(),
        }
    }

    /// Standardized copy. Already standardized data is returned unchanged.
    pub fn standardized(&self) -> Dataset {
        if self.scaling.is_some() {
            return self.clone();
        }
        let scaling = TargetScaling::fit(&self.targets);
        let mut out = self.clone();
        out.targets.apply(|v| *v = scaling.standardize(*v));
        out.scaling = Some(scaling);
        out
    }

    /// Inverse of [`standardized`](Self::standardized).
    pub fn unstandardized(&self) -> Dataset {
        let mut out = self.clone();
        if let Some(s) = self.scaling {
            out.targets.apply(|v| *v = s.unstandardize(*v));
            out.scaling = None;
        }
        out
    }

    /// Writes the dataset with the target as the last column.
    pub fn save_csv(&self, path: impl AsRef<Path>, header: bool) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        if header {
            let mut names: Vec<String> = (0..self.dim()).map(|k| format!("x{k}")).collect();
            names.push("y".into());
            w.write_record(&names)?;
        }
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.inputs.row(i).iter().map(|v| format!("{v:?}")).collect();
            rec.push(format!("{:?}", self.targets[i]));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Column that holds the regression target.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TargetColumn {
    Index(usize),
    Name(String),
}

impl std::str::FromStr for TargetColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => TargetColumn::Index(i),
            Err(_) => TargetColumn::Name(s.to_string()),
        })
    }
}

/// Reads a comma-separated numeric table. Every non-target column becomes an
/// input in file order. Blank lines are skipped; rows are numbered from 1
/// counting the header.
pub fn load_csv(path: impl AsRef<Path>, target: &TargetColumn, has_header: bool) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let target_idx = match target {
        TargetColumn::Index(i) => *i,
        TargetColumn::Name(name) => {
            if !has_header {
                return Err(GpError::InvalidInput(format!(
                    "target column '{name}' given by name but the file has no header"
                )));
            }
            rdr.headers()?
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| GpError::InvalidInput(format!("no column named '{name}'")))?
        }
    };
    let first_row = if has_header { 2 } else { 1 };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut targets = Vec::new();
    let mut width = None;
    let mut rejected = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row_no = rec.position().map(|p| p.line() as usize).unwrap_or(first_row + i);
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        if target_idx >= rec.len() {
            return Err(GpError::InvalidInput(format!(
                "target column {target_idx} missing on row {row_no}"
            )));
        }
        if *width.get_or_insert(rec.len()) != rec.len() {
            return Err(GpError::Parse {
                row: row_no,
                column: rec.len(),
                message: "inconsistent number of columns".into(),
            });
        }
        let mut values = Vec::with_capacity(rec.len());
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| GpError::Parse {
                row: row_no,
                column: c,
                message: format!("cannot parse '{cell}' as a number"),
            })?;
            values.push(v);
        }
        if values.iter().any(|v| !v.is_finite()) {
            rejected.push(row_no);
            continue;
        }
        targets.push(values.remove(target_idx));
        rows.push(values);
    }
    if !rejected.is_empty() {
        log::warn!("rejected {} rows with non-finite values: {:?}", rejected.len(), rejected);
    }
    if rows.is_empty() {
        return Err(GpError::InvalidInput("no usable rows".into()));
    }
    Dataset::from_rows(&rows, &targets)
}

/// Seeded random split into `⌈f·N⌉` training rows and the rest for testing.
pub fn split(data: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(GpError::InvalidInput(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = data.len();
    let n_train = (train_fraction * n as f64).ceil() as usize;
    if n_train == 0 || n_train >= n {
        return Err(GpError::InvalidInput(format!(
            "train fraction {train_fraction} leaves an empty side for N = {n}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_for(seed));
    Ok((data.subset(&idx[..n_train]), data.subset(&idx[n_train..])))
}

/// Mean squared error between predictions and observations.
pub fn mse(predictions: &[f64], actuals: &[f64]) -> Result<f64> {
    if predictions.len() != actuals.len() {
        return Err(GpError::InvalidInput(format!(
            "length mismatch: {} predictions, {} actuals",
            predictions.len(),
            actuals.len()
        )));
    }
    if predictions.is_empty() {
        return Err(GpError::InvalidInput("mse of empty vectors".into()));
    }
    Ok(predictions
        .iter()
        .zip(actuals)
        .map(|(p, a)| (a - p).powi(2))
        .sum::<f64>()
        / predictions.len() as f64)
}

/// Settings for the fluctuated test function
/// `f(x) = exp(|Σ p_i x_i|^c) · cos(Σ q_i x_i) + ε`, `ε ~ U[a, b]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluctuatedConfig {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub exponent: f64,
    pub noise_low: f64,
    pub noise_high: f64,
    /// Inputs are drawn uniformly from `[low, high]^d`.
    pub input_box: (f64, f64),
}

impl FluctuatedConfig {
    pub fn syn3d() -> Self {
        Self {
            p: vec![1.0, 1.0, -1.0],
            q: vec![0.2, 0.0, 0.0],
            exponent: 0.3,
            noise_low: -5.0,
            noise_high: 5.0,
            input_box: (0.0, 10.0),
        }
    }

    pub fn syn5d() -> Self {
        Self {
            p: vec![1.0, -1.0, 1.0, 1.0, 1.0],
            q: vec![0.2, 0.0, 0.0, 0.0, 0.0],
            exponent: 0.3,
            noise_low: -2.0,
            noise_high: 2.0,
            input_box: (0.0, 10.0),
        }
    }

    pub fn without_noise(mut self) -> Self {
        self.noise_low = 0.0;
        self.noise_high = 0.0;
        self
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    /// Noise-free value of the function.
    pub fn signal(&self, x: &[f64]) -> f64 {
        let sp: f64 = self.p.iter().zip(x).map(|(p, v)| p * v).sum();
        let sq: f64 = self.q.iter().zip(x).map(|(q, v)| q * v).sum();
        sp.abs().powf(self.exponent).exp() * sq.cos()
    }
}

/// Uniform inputs on the configured box labelled by the fluctuated function.
pub fn gen_fluctuated(n: usize, config: &FluctuatedConfig, seed: u64) -> Result<Dataset> {
    let d = config.dim();
    if config.q.len() != d || d == 0 {
        return Err(GpError::InvalidInput("p and q must have the same non-zero length".into()));
    }
    if config.noise_low > config.noise_high {
        return Err(GpError::InvalidInput("noise bounds must satisfy a ≤ b".into()));
    }
    let (lo, hi) = config.input_box;
    let mut rng = rng_for(seed);
    let mut inputs = DMatrix::zeros(n, d);
    let mut targets = DVector::zeros(n);
    for i in 0..n {
        for k in 0..d {
            inputs[(i, k)] = lo + (hi - lo) * rng.random::<f64>();
        }
        let x: Vec<f64> = inputs.row(i).iter().copied().collect();
        let eps = config.noise_low + (config.noise_high - config.noise_low) * rng.random::<f64>();
        targets[i] = config.signal(&x) + eps;
    }
    let mut data = Dataset::new(inputs, targets)?;
    data.metadata.insert("generator".into(), "fluctuated".into());
    data.metadata.insert("input_box".into(), format!("[{lo}, {hi}]^{d}"));
    data.metadata.insert("seed".into(), seed.to_string());
    Ok(data)
}

/// Exact draw from `N(0, K + σ²I)` at uniform inputs on `input_box^d`.
pub fn gen_gp_sample(
    n: usize,
    params: &KernelParams,
    input_box: (f64, f64),
    seed: u64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(GpError::InvalidInput("sample size must be positive".into()));
    }
    if n > MAX_GP_SAMPLE {
        return Err(GpError::InvalidInput(format!(
            "exact GP sampling is limited to {MAX_GP_SAMPLE} points, got {n}"
        )));
    }
    let d = params.dim();
    let (lo, hi) = input_box;
    let mut rng = rng_for(seed);
    let inputs = DMatrix::from_fn(n, d, |_, _| lo + (hi - lo) * rng.random::<f64>());
    let mut cov = kernel::kernel_matrix(params, &inputs, &inputs)?;
    for i in 0..n {
        cov[(i, i)] += params.noise_variance() + params.jitter();
    }
    let scale = params.signal_variance() + params.noise_variance();
    let chol = cholesky_escalating(&cov, scale, params.jitter(), "GP sample covariance")?;
    let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let targets = chol.factor.l() * z;
    let mut data = Dataset::new(inputs, targets)?;
    data.metadata.insert("generator".into(), "gp-sample".into());
    data.metadata.insert("input_box".into(), format!("[{lo}, {hi}]^{d}"));
    data.metadata.insert("seed".into(), seed.to_string());
    Ok(data)
}

/// Noise-free function of an appended exogenous column.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Augmentation {
    /// `g(z) = −amplitude · |cos z|`
    NegAbsCos { amplitude: f64 },
}

impl Augmentation {
    pub fn standard() -> Self {
        Augmentation::NegAbsCos { amplitude: 2.5 }
    }

    pub fn eval(&self, z: f64) -> f64 {
        match self {
            Augmentation::NegAbsCos { amplitude } => -amplitude * z.cos().abs(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        match self {
            Augmentation::NegAbsCos { amplitude } => amplitude.abs(),
        }
    }
}

/// Appends `z ~ U[a, b]` as a new input column and adds `g(z)` to the targets.
///
/// Warns when `max|g|` exceeds `dominance` times the target span, since the
/// extra term should stay small next to the original signal.
pub fn augment_dimension(data: &Dataset, a: f64, b: f64, g: Augmentation, seed: u64) -> Result<Dataset> {
    if a > b {
        return Err(GpError::InvalidInput(format!("augmentation range requires a ≤ b, got [{a}, {b}]")));
    }
    let n = data.len();
    let d = data.dim();
    let mut rng = rng_for(seed);
    let z: Vec<f64> = (0..n).map(|_| a + (b - a) * rng.random::<f64>()).collect();
    let mut inputs = data.inputs.clone().insert_column(d, 0.0);
    let mut targets = data.targets.clone();
    for i in 0..n {
        inputs[(i, d)] = z[i];
        targets[i] += g.eval(z[i]);
    }
    let span = data.targets.max() - data.targets.min();
    if g.max_abs() > AUGMENT_DOMINANCE * span {
        log::warn!(
            "augmentation amplitude {} is not small next to the target span {span}",
            g.max_abs()
        );
    }
    let mut out = Dataset::new(inputs, targets)?;
    out.scaling = data.scaling;
    out.metadata = data.metadata.clone();
    out.metadata.insert("augmented".into(), format!("{g:?} on z ~ U[{a}, {b}]"));
    Ok(out)
}

/// `max|g|` above this fraction of the target span triggers a warning.
pub const AUGMENT_DOMINANCE: f64 = 0.1;
