//! Options and reports shared by the marginal-likelihood fits.

use serde::{Deserialize, Serialize};

use crate::optim::{OptimStatus, OptimizerSettings};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub optimizer: OptimizerSettings,
    /// When false the initial parameters are used as given.
    pub optimize: bool,
    /// Number of optimizer starts; the first uses the initial parameters,
    /// later ones perturb them in log space.
    pub starts: usize,
    pub seed: u64,
    /// Standardize targets before fitting; predictions are mapped back.
    pub standardize: bool,
    /// Learn the noise variance. A zero noise variance is always held fixed.
    pub learn_noise: bool,
}

impl FitOptions {
    /// Full GP defaults: 200 iterations, three starts.
    pub fn full_gp() -> Self {
        Self {
            optimizer: OptimizerSettings {
                max_iterations: 200,
                ..Default::default()
            },
            optimize: true,
            starts: 3,
            seed: 0,
            standardize: true,
            learn_noise: true,
        }
    }

    /// Sparse GP defaults: 500 iterations, single start.
    pub fn spgp() -> Self {
        Self {
            optimizer: OptimizerSettings {
                max_iterations: 500,
                ..Default::default()
            },
            optimize: true,
            starts: 1,
            seed: 0,
            standardize: true,
            learn_noise: true,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn fixed(mut self) -> Self {
        self.optimize = false;
        self
    }

    pub fn raw_targets(mut self) -> Self {
        self.standardize = false;
        self
    }

    pub fn max_iterations(mut self, n: usize) -> Self {
        self.optimizer.max_iterations = n;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Log marginal likelihood on the (possibly standardized) targets.
    pub log_marginal_likelihood: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: OptimStatus,
    /// Fewer than two observations: the likelihood does not depend on the
    /// lengthscales, so any lengthscale is stationary.
    pub degenerate: bool,
}

/// Predictive mean and variance at one query point, in target units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

/// Which variance a sparse model reports.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarianceKind {
    /// Variance of the latent function.
    #[default]
    Latent,
    /// Latent variance plus the noise variance.
    Observation,
}
