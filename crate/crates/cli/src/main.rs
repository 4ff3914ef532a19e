//! `splk`: generate data, train, predict and benchmark sparse and partitioned GPs.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "splk", version, about = "Partitioned sparse Gaussian process regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Write a synthetic dataset (syn3d, syn5d or gp preset) as CSV.
    Generate,
    /// Fit a model, report held-out MSE and optionally save it.
    Train,
    /// Append mean, variance and subdomain columns to query rows.
    Predict,
    /// Time and score every setting × seed of a method's grid.
    Benchmark,
    /// SPLK runs over a list of λ values.
    SweepLambda,
    /// SPLK runs over the k × S grid.
    SweepKs,
}

/// Every flag may also be given in the `--config` file under the same name.
#[derive(Args, Debug, Default)]
struct Flags {
    /// key = value file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Input CSV (training data, or query points for predict).
    #[arg(long, global = true)]
    data: Option<String>,
    /// Target column, by index or header name (default: last).
    #[arg(long = "target-col", global = true)]
    target_col: Option<String>,
    /// Whether the CSV has a header row (default: detected).
    #[arg(long, global = true)]
    header: Option<String>,
    /// Generator preset: syn3d, syn5d or gp.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Number of generated points.
    #[arg(long, global = true)]
    n: Option<String>,
    /// Input dimension of the gp preset.
    #[arg(long, global = true)]
    dim: Option<String>,
    /// Lengthscale of the gp preset.
    #[arg(long, global = true)]
    lengthscale: Option<String>,
    /// Noise variance of the gp preset.
    #[arg(long, global = true)]
    noise: Option<String>,
    /// Append an exogenous column z ~ U[-50, 50] with y += -2.5|cos z|.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    augment: Option<String>,
    /// full, spgp, naive-local or splk.
    #[arg(long, global = true)]
    method: Option<String>,
    /// Pseudo-input count(s) for spgp.
    #[arg(long, global = true)]
    m: Option<String>,
    /// Number(s) of subdomains S.
    #[arg(long, global = true)]
    subdomains: Option<String>,
    /// Pseudo-input density k.
    #[arg(long, global = true)]
    k: Option<String>,
    /// Control-point density λ.
    #[arg(long, global = true)]
    lambda: Option<String>,
    /// Cut axis (default: the widest-spread one).
    #[arg(long, global = true)]
    axis: Option<String>,
    /// equal-count or fixed-width.
    #[arg(long = "width-mode", global = true)]
    width_mode: Option<String>,
    /// Rotate inputs onto principal axes before partitioning.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pca: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Comma-separated seeds for benchmarks (default: --seed).
    #[arg(long, global = true)]
    seeds: Option<String>,
    /// Training fraction of the random split.
    #[arg(long = "train-frac", global = true)]
    train_frac: Option<String>,
    /// Optimizer iteration cap.
    #[arg(long = "max-iter", global = true)]
    max_iter: Option<String>,
    /// Fit subdomains on all cores.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    parallel: Option<String>,
    /// Output CSV (default: stdout).
    #[arg(long, global = true)]
    out: Option<String>,
    #[arg(long = "model-out", global = true)]
    model_out: Option<String>,
    #[arg(long = "model-in", global = true)]
    model_in: Option<String>,
}

impl Flags {
    fn resolve(self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        let pairs = [
            ("data", self.data),
            ("target-col", self.target_col),
            ("header", self.header),
            ("preset", self.preset),
            ("n", self.n),
            ("dim", self.dim),
            ("lengthscale", self.lengthscale),
            ("noise", self.noise),
            ("augment", self.augment),
            ("method", self.method),
            ("m", self.m),
            ("subdomains", self.subdomains),
            ("k", self.k),
            ("lambda", self.lambda),
            ("axis", self.axis),
            ("width-mode", self.width_mode),
            ("pca", self.pca),
            ("seed", self.seed),
            ("seeds", self.seeds),
            ("train-frac", self.train_frac),
            ("max-iter", self.max_iter),
            ("parallel", self.parallel),
            ("out", self.out),
            ("model-out", self.model_out),
            ("model-in", self.model_in),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                cfg.set(k, v);
            }
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = cli.flags.resolve().and_then(|cfg| match cli.command {
        Command::Generate => commands::generate(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Predict => commands::predict(&cfg),
        Command::Benchmark => commands::benchmark(&cfg, commands::Sweep::None),
        Command::SweepLambda => commands::benchmark(&cfg, commands::Sweep::Lambda),
        Command::SweepKs => commands::benchmark(&cfg, commands::Sweep::KS),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
