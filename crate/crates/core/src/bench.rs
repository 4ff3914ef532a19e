//! Split, fit (timed), predict and score runs over parameter grids.

use std::io::Write;
use std::time::Instant;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::data::{mse, split, Dataset};
use crate::error::{GpError, Result};
use crate::fitting::FitOptions;
use crate::gp_full::fit_full_gp;
use crate::kernel::KernelParams;
use crate::partition::WidthMode;
use crate::spgp::fit_spgp;
use crate::splk::{fit_splk, SplkModel, SplkOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Full,
    Spgp,
    NaiveLocal,
    Splk,
}

impl std::str::FromStr for Method {
    type Err = GpError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "full" | "gp" => Ok(Self::Full),
            "spgp" | "sparse" => Ok(Self::Spgp),
            "naive-local" | "naive" | "local" => Ok(Self::NaiveLocal),
            "splk" => Ok(Self::Splk),
            other => Err(GpError::InvalidInput(format!(
                "unknown method '{other}' (expected full, spgp, naive-local or splk)"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::Spgp => "spgp",
            Self::NaiveLocal => "naive-local",
            Self::Splk => "splk",
        })
    }
}

/// One parameter setting of one method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Setting {
    pub method: Method,
    pub m: Option<usize>,
    pub subdomains: Option<usize>,
    pub k: Option<f64>,
    pub lambda: Option<usize>,
}

/// Grid definition for a benchmark or sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub method: Method,
    pub m_values: Vec<usize>,
    pub subdomains: Vec<usize>,
    pub k_values: Vec<f64>,
    pub lambdas: Vec<usize>,
    pub axis: Option<usize>,
    pub width_mode: WidthMode,
    pub pca: bool,
    pub seeds: Vec<u64>,
    pub train_fraction: f64,
    pub max_iterations: Option<usize>,
    pub parallel: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            method: Method::Splk,
            m_values: vec![32],
            subdomains: vec![4],
            k_values: vec![1.0],
            lambdas: vec![3],
            axis: None,
            width_mode: WidthMode::EqualCount,
            pca: false,
            seeds: vec![0],
            train_fraction: 0.9,
            max_iterations: None,
            parallel: false,
        }
    }
}

impl BenchConfig {
    /// The cross product of the grid for the configured method.
    pub fn settings(&self) -> Vec<Setting> {
        let base = Setting {
            method: self.method,
            m: None,
            subdomains: None,
            k: None,
            lambda: None,
        };
        match self.method {
            Method::Full => vec![base],
            Method::Spgp => self
                .m_values
                .iter()
                .map(|&m| Setting { m: Some(m), ..base.clone() })
                .collect(),
            Method::NaiveLocal | Method::Splk => {
                let mut out = Vec::new();
                for &k in &self.k_values {
                    for &s in &self.subdomains {
                        for &l in &self.lambdas {
                            out.push(Setting {
                                subdomains: Some(s),
                                k: Some(k),
                                lambda: Some(l),
                                ..base.clone()
                            });
                        }
                    }
                }
                out
            }
        }
    }

    /// Resolved configuration as `key = value` pairs.
    pub fn describe(&self) -> Vec<(String, String)> {
        let list = |v: Vec<String>| v.join(",");
        vec![
            ("method".into(), self.method.to_string()),
            ("m".into(), list(self.m_values.iter().map(|v| v.to_string()).collect())),
            ("subdomains".into(), list(self.subdomains.iter().map(|v| v.to_string()).collect())),
            ("k".into(), list(self.k_values.iter().map(|v| v.to_string()).collect())),
            ("lambda".into(), list(self.lambdas.iter().map(|v| v.to_string()).collect())),
            ("axis".into(), self.axis.map_or("auto".into(), |a| a.to_string())),
            ("width-mode".into(), self.width_mode.to_string()),
            ("pca".into(), self.pca.to_string()),
            ("seeds".into(), list(self.seeds.iter().map(|v| v.to_string()).collect())),
            ("train-frac".into(), self.train_fraction.to_string()),
            ("max-iterations".into(), self.max_iterations.map_or("default".into(), |v| v.to_string())),
            ("parallel".into(), self.parallel.to_string()),
            ("threads".into(), if self.parallel { rayon::current_num_threads() } else { 1 }.to_string()),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub setting: Setting,
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    pub training_time_seconds: f64,
    pub mse: f64,
    pub control_points: usize,
    /// Failure message when the run did not complete.
    pub error: Option<String>,
}

fn spgp_options(config: &BenchConfig, seed: u64) -> FitOptions {
    let mut o = FitOptions::spgp().with_seed(seed);
    if let Some(it) = config.max_iterations {
        o = o.max_iterations(it);
    }
    o
}

/// Fits and scores one setting on one seed. The clock covers fitting only.
pub fn run_one(data: &Dataset, config: &BenchConfig, setting: &Setting, seed: u64) -> Result<(f64, f64, usize)> {
    let (train, test) = split(data, config.train_fraction, seed)?;
    let init = KernelParams::heuristic(&train.inputs);
    let actual: Vec<f64> = test.targets.iter().copied().collect();
    let (elapsed, predictions, cps) = match setting.method {
        Method::Full => {
            let mut o = FitOptions::full_gp().with_seed(seed);
            if let Some(it) = config.max_iterations {
                o = o.max_iterations(it);
            }
            let t = Instant::now();
            let model = fit_full_gp(&train, &init, &o)?;
            let el = t.elapsed().as_secs_f64();
            let p = model.predict_many(&test.inputs)?;
            (el, p.iter().map(|p| p.mean).collect::<Vec<_>>(), 0)
        }
        Method::Spgp => {
            let m = setting.m.unwrap_or(32).min(train.len());
            let t = Instant::now();
            let model = fit_spgp(&train, m, &init, &spgp_options(config, seed))?;
            let el = t.elapsed().as_secs_f64();
            let p = model.predict_many(&test.inputs)?;
            (el, p.iter().map(|p| p.mean).collect(), 0)
        }
        Method::NaiveLocal | Method::Splk => {
            let opts = SplkOptions {
                subdomains: setting.subdomains.unwrap_or(4),
                axis: config.axis,
                pseudo_density: setting.k.unwrap_or(1.0),
                fold_density: setting.lambda.unwrap_or(3),
                width_mode: config.width_mode,
                pca: config.pca,
                fit: spgp_options(config, seed),
                parallel: config.parallel,
            };
            let t = Instant::now();
            let model: SplkModel = fit_splk(&train, None, &opts)?;
            let el = t.elapsed().as_secs_f64();
            let p = if setting.method == Method::Splk {
                model.predict_many(&test.inputs)?
            } else {
                model.naive_predict_many(&test.inputs)?
            };
            (el, p.iter().map(|p| p.mean).collect(), model.control_point_total())
        }
    };
    Ok((elapsed, mse(&predictions, &actual)?, cps))
}

/// Every setting × seed. Failures become rows with an error tag.
pub fn run_benchmark(data: &Dataset, config: &BenchConfig) -> Vec<BenchmarkRecord> {
    if matches!(config.method, Method::Splk | Method::NaiveLocal) {
        for &k in &config.k_values {
            if !(0.1..=4.0).contains(&k) {
                warn!("pseudo density k = {k} is outside the recommended range [0.1, 4]");
            }
        }
        for &s in &config.subdomains {
            let nj = (config.train_fraction * data.len() as f64).ceil() / s.max(1) as f64;
            if nj < 500.0 || nj > 5000.0 {
                warn!("S = {s} gives about {nj:.0} points per subdomain, outside 500..=5000");
            }
        }
    }
    let mut out = Vec::new();
    for setting in config.settings() {
        for &seed in &config.seeds {
            let rec = match run_one(data, config, &setting, seed) {
                Ok((t, e, cps)) => BenchmarkRecord {
                    setting: setting.clone(),
                    seed,
                    n: data.len(),
                    d: data.dim(),
                    training_time_seconds: t,
                    mse: e,
                    control_points: cps,
                    error: None,
                },
                Err(e) => {
                    warn!("{} run with seed {seed} failed: {e}", setting.method);
                    BenchmarkRecord {
                        setting: setting.clone(),
                        seed,
                        n: data.len(),
                        d: data.dim(),
                        training_time_seconds: f64::NAN,
                        mse: f64::NAN,
                        control_points: 0,
                        error: Some(e.to_string()),
                    }
                }
            };
            out.push(rec);
        }
    }
    out
}

/// λ sweep at fixed S and k; each λ is a full refit.
pub fn run_sweep_lambda(data: &Dataset, config: &BenchConfig) -> Result<Vec<BenchmarkRecord>> {
    if config.method != Method::Splk {
        return Err(GpError::InvalidInput("the lambda sweep requires method = splk".into()));
    }
    Ok(run_benchmark(data, config))
}

/// k × S sweep.
pub fn run_sweep_k_s(data: &Dataset, config: &BenchConfig) -> Result<Vec<BenchmarkRecord>> {
    if config.method != Method::Splk {
        return Err(GpError::InvalidInput("the k/S sweep requires method = splk".into()));
    }
    Ok(run_benchmark(data, config))
}

pub const CSV_HEADER: &str = "method,m,subdomains,k,lambda,seed,n,d,train_time_s,mse,control_points,status";

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or(String::new(), T::to_string)
}

/// CSV with the resolved configuration as leading `#` comment lines.
pub fn write_records<W: Write>(mut w: W, config: &[(String, String)], records: &[BenchmarkRecord]) -> Result<()> {
    for (k, v) in config {
        writeln!(w, "# {k} = {v}")?;
    }
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        let status = match &r.error {
            None => "ok".to_string(),
            Some(e) => format!("\"error: {}\"", e.replace('"', "'")),
        };
        let num = |v: f64| if v.is_finite() { format!("{v:?}") } else { String::new() };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.setting.method,
            opt(&r.setting.m),
            opt(&r.setting.subdomains),
            opt(&r.setting.k),
            opt(&r.setting.lambda),
            r.seed,
            r.n,
            r.d,
            num(r.training_time_seconds),
            num(r.mse),
            r.control_points,
            status
        )?;
    }
    Ok(())
}
