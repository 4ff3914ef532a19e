use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use log::info;

use splk_core::archive::StoredModel;
use splk_core::bench::{run_benchmark, run_sweep_k_s, run_sweep_lambda, write_records, BenchConfig, Method};
use splk_core::data::{
    augment_dimension, gen_fluctuated, gen_gp_sample, load_csv, mse, split, Augmentation, Dataset, FluctuatedConfig,
    TargetColumn,
};
use splk_core::fitting::FitOptions;
use splk_core::gp_full::fit_full_gp;
use splk_core::partition::WidthMode;
use splk_core::spgp::fit_spgp;
use splk_core::splk::{fit_splk, SplkOptions};
use splk_core::KernelParams;

use crate::config::RunConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sweep {
    None,
    Lambda,
    KS,
}

fn output(cfg: &RunConfig) -> Result<Box<dyn Write>> {
    Ok(match cfg.raw("out") {
        None | Some("-") => Box::new(io::stdout().lock()),
        Some(p) => Box::new(io::BufWriter::new(File::create(p).with_context(|| format!("creating {p}"))?)),
    })
}

fn echo_config(w: &mut dyn Write, cfg: &RunConfig) -> Result<()> {
    for (k, v) in cfg.entries() {
        writeln!(w, "# {k} = {v}")?;
    }
    Ok(())
}

/// First non-blank line of a CSV, split into fields.
fn first_record(path: &str) -> Result<Vec<String>> {
    let f = File::open(path).with_context(|| format!("opening {path}"))?;
    for line in BufReader::new(f).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            return Ok(line.split(',').map(|s| s.trim().to_string()).collect());
        }
    }
    bail!("{path} is empty")
}

fn has_header(cfg: &RunConfig, first: &[String]) -> Result<bool> {
    if cfg.raw("header").is_some() {
        return cfg.flag("header");
    }
    Ok(first.iter().any(|f| f.parse::<f64>().is_err()))
}

fn target_index(cfg: &RunConfig, first: &[String], header: bool) -> Result<usize> {
    match cfg.raw("target-col").map(|s| s.parse::<TargetColumn>().unwrap()) {
        None => Ok(first.len().saturating_sub(1)),
        Some(TargetColumn::Index(i)) => Ok(i),
        Some(TargetColumn::Name(name)) if header => first
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| anyhow!("no column named '{name}'")),
        Some(TargetColumn::Name(name)) => bail!("target column '{name}' given by name but the file has no header"),
    }
}

fn generated(cfg: &RunConfig) -> Result<Dataset> {
    let preset = cfg.raw("preset").unwrap_or("syn3d").to_ascii_lowercase();
    let n: usize = cfg.get_or("n", 1000)?;
    let seed: u64 = cfg.get_or("seed", 0)?;
    let data = match preset.as_str() {
        "syn3d" => gen_fluctuated(n, &FluctuatedConfig::syn3d(), seed)?,
        "syn5d" => gen_fluctuated(n, &FluctuatedConfig::syn5d(), seed)?,
        "gp" => {
            let d: usize = cfg.get_or("dim", 2)?;
            let ls: f64 = cfg.get_or("lengthscale", 1.0)?;
            let noise: f64 = cfg.get_or("noise", 0.01)?;
            let p = KernelParams::new(1.0, vec![ls; d], noise)?;
            gen_gp_sample(n, &p, (0.0, 10.0), seed)?
        }
        other => bail!("unknown preset '{other}' (expected syn3d, syn5d or gp)"),
    };
    if cfg.flag("augment")? {
        return Ok(augment_dimension(&data, -50.0, 50.0, Augmentation::standard(), seed.wrapping_add(1))?);
    }
    Ok(data)
}

/// `--data` if given, otherwise the configured generator.
fn dataset(cfg: &RunConfig) -> Result<Dataset> {
    let Some(path) = cfg.raw("data") else {
        return generated(cfg);
    };
    let first = first_record(path)?;
    let header = has_header(cfg, &first)?;
    let target = target_index(cfg, &first, header)?;
    load_csv(path, &TargetColumn::Index(target), header).with_context(|| format!("loading {path}"))
}

pub fn generate(cfg: &RunConfig) -> Result<()> {
    let data = generated(cfg)?;
    let mut w = csv::Writer::from_writer(output(cfg)?);
    let mut names: Vec<String> = (0..data.dim()).map(|k| format!("x{k}")).collect();
    names.push("y".into());
    w.write_record(&names)?;
    for i in 0..data.len() {
        let mut rec: Vec<String> = data.row(i).iter().map(|v| format!("{v:?}")).collect();
        rec.push(format!("{:?}", data.targets[i]));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn method(cfg: &RunConfig, default: Method) -> Result<Method> {
    Ok(match cfg.raw("method") {
        None => default,
        Some(s) => s.parse()?,
    })
}

fn fit_options(base: FitOptions, cfg: &RunConfig, seed: u64) -> Result<FitOptions> {
    let mut o = base.with_seed(seed);
    if let Some(it) = cfg.get::<usize>("max-iter")? {
        o = o.max_iterations(it);
    }
    Ok(o)
}

fn width_mode(cfg: &RunConfig) -> Result<WidthMode> {
    Ok(match cfg.raw("width-mode") {
        None => WidthMode::EqualCount,
        Some(s) => s.parse()?,
    })
}

fn axis(cfg: &RunConfig) -> Result<Option<usize>> {
    match cfg.raw("axis") {
        None | Some("auto") => Ok(None),
        Some(_) => cfg.get("axis"),
    }
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let data = dataset(cfg)?;
    let seed: u64 = cfg.get_or("seed", 0)?;
    let frac: f64 = cfg.get_or("train-frac", 0.9)?;
    let (train, test) = if frac >= 1.0 {
        (data.clone(), None)
    } else {
        let (a, b) = split(&data, frac, seed)?;
        (a, Some(b))
    };
    let method = method(cfg, Method::Splk)?;
    if method == Method::NaiveLocal && cfg.raw("model-out").is_some() {
        bail!("naive-local models are not archived; train with --method splk instead");
    }
    let init = KernelParams::heuristic(&train.inputs);
    let start = Instant::now();
    let model = match method {
        Method::Full => StoredModel::Full(fit_full_gp(&train, &init, &fit_options(FitOptions::full_gp(), cfg, seed)?)?),
        Method::Spgp => {
            let m: usize = cfg.get_or("m", 32)?;
            StoredModel::Spgp(fit_spgp(&train, m.min(train.len()), &init, &fit_options(FitOptions::spgp(), cfg, seed)?)?)
        }
        Method::Splk | Method::NaiveLocal => {
            let opts = SplkOptions {
                subdomains: cfg.get_or("subdomains", 4)?,
                axis: axis(cfg)?,
                pseudo_density: cfg.get_or("k", 1.0)?,
                fold_density: cfg.get_or("lambda", 3)?,
                width_mode: width_mode(cfg)?,
                pca: cfg.flag("pca")?,
                fit: fit_options(FitOptions::spgp(), cfg, seed)?,
                parallel: cfg.flag("parallel")?,
            };
            StoredModel::Splk(fit_splk(&train, None, &opts)?)
        }
    };
    let elapsed = start.elapsed().as_secs_f64();
    info!("fitted {} model on {} points in {elapsed:.3} s", model.kind(), train.len());

    let mut w = output(cfg)?;
    echo_config(&mut *w, cfg)?;
    writeln!(w, "method = {method}")?;
    writeln!(w, "n_train = {}", train.len())?;
    writeln!(w, "d = {}", train.dim())?;
    writeln!(w, "train_time_s = {elapsed:.6}")?;
    match &model {
        StoredModel::Full(m) => writeln!(w, "log_marginal_likelihood = {:?}", m.log_marginal_likelihood())?,
        StoredModel::Spgp(m) => writeln!(w, "log_marginal_likelihood = {:?}", m.log_marginal_likelihood())?,
        StoredModel::Splk(m) => {
            writeln!(w, "subdomains = {}", m.subdomains())?;
            writeln!(w, "control_points = {}", m.control_point_total())?;
        }
    }
    if let Some(test) = test {
        let mut preds = Vec::with_capacity(test.len());
        for i in 0..test.len() {
            let x = test.row(i);
            preds.push(match (&model, method) {
                (StoredModel::Splk(m), Method::NaiveLocal) => m.naive_predict(&x)?.mean,
                _ => model.predict(&x)?.0.mean,
            });
        }
        let actual: Vec<f64> = test.targets.iter().copied().collect();
        writeln!(w, "n_test = {}", test.len())?;
        writeln!(w, "mse = {:?}", mse(&preds, &actual)?)?;
    }
    w.flush()?;
    if let Some(path) = cfg.raw("model-out") {
        model.save(path).with_context(|| format!("writing {path}"))?;
    }
    Ok(())
}

pub fn predict(cfg: &RunConfig) -> Result<()> {
    let model_path = cfg.require("model-in")?;
    let model = StoredModel::load(model_path).with_context(|| format!("loading {model_path}"))?;
    let path = cfg.require("data")?;
    let first = first_record(path)?;
    let header = has_header(cfg, &first)?;
    let d = model.dim();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .with_context(|| format!("opening {path}"))?;
    let mut w = csv::Writer::from_writer(output(cfg)?);
    if header {
        let mut h: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
        h.extend(["mean".into(), "variance".into(), "subdomain".into()]);
        w.write_record(&h)?;
    }
    let skip = if first.len() == d + 1 { Some(target_index(cfg, &first, header)?) } else { None };
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1 + header as usize;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let x = rec
            .iter()
            .enumerate()
            .filter(|(c, _)| Some(*c) != skip)
            .map(|(c, f)| {
                f.parse::<f64>()
                    .map_err(|_| anyhow!("row {row}, column {}: '{f}' is not a number", c + 1))
            })
            .collect::<Result<Vec<f64>>>()?;
        if x.len() != d {
            bail!("row {row}: expected {d} input columns, found {}", x.len());
        }
        let (p, sub) = model.predict(&x)?;
        let mut out: Vec<String> = rec.iter().map(String::from).collect();
        out.push(format!("{:?}", p.mean));
        out.push(format!("{:?}", p.variance));
        out.push(sub.map_or(String::new(), |s| s.to_string()));
        w.write_record(&out)?;
    }
    w.flush()?;
    Ok(())
}

pub fn benchmark(cfg: &RunConfig, sweep: Sweep) -> Result<()> {
    let data = dataset(cfg)?;
    let default_method = if sweep == Sweep::None { Method::Spgp } else { Method::Splk };
    let method = method(cfg, default_method)?;
    let seeds = match cfg.list::<u64>("seeds")? {
        Some(s) => s,
        None => vec![cfg.get_or("seed", 0)?],
    };
    let config = BenchConfig {
        method,
        m_values: cfg.list("m")?.unwrap_or_else(|| vec![8, 16, 32, 64, 128, 256]),
        subdomains: cfg.list("subdomains")?.unwrap_or_else(|| {
            if sweep == Sweep::KS {
                vec![2, 4, 8]
            } else {
                vec![4]
            }
        }),
        k_values: cfg.list("k")?.unwrap_or_else(|| {
            if sweep == Sweep::KS {
                vec![0.5, 1.0, 1.5, 2.0]
            } else {
                vec![1.0]
            }
        }),
        lambdas: cfg.list("lambda")?.unwrap_or_else(|| {
            if sweep == Sweep::Lambda {
                vec![3, 4, 5]
            } else {
                vec![3]
            }
        }),
        axis: axis(cfg)?,
        width_mode: width_mode(cfg)?,
        pca: cfg.flag("pca")?,
        seeds,
        train_fraction: cfg.get_or("train-frac", 0.9)?,
        max_iterations: cfg.get("max-iter")?,
        parallel: cfg.flag("parallel")?,
    };
    let records = match sweep {
        Sweep::None => run_benchmark(&data, &config),
        Sweep::Lambda => run_sweep_lambda(&data, &config)?,
        Sweep::KS => run_sweep_k_s(&data, &config)?,
    };
    let mut header = config.describe();
    match cfg.raw("data") {
        Some(p) => header.insert(0, ("data".into(), p.into())),
        None => {
            let preset = cfg.raw("preset").unwrap_or("syn3d");
            header.insert(0, ("data".into(), format!("generated {preset}, n = {}, seed = {}", data.len(), cfg.get_or::<u64>("seed", 0)?)));
        }
    }
    let mut w = output(cfg)?;
    write_records(&mut w, &header, &records)?;
    w.flush()?;
    Ok(())
}
