//! Gaussian-process regression at scale by partitioning the input domain into
//! slabs, fitting a sparse pseudo-input GP in each, and correcting the local
//! predictors so they agree on shared boundaries.
//!
//! Modules, bottom up:
//!
//! - [`kernel`]: ARD squared-exponential covariance.
//! - [`gp_full`]: exact GP regression, the small-data reference.
//! - [`spgp`]: sparse pseudo-input GP with an `O(N m²)` likelihood and gradient.
//! - [`partition`]: bounding boxes, parallel cuts, control-point grids, PCA.
//! - [`splk`]: the partitioned model with boundary continuity.
//! - [`data`]: CSV input/output, synthetic generators, splitting, metrics.
//! - [`bench`]: timed benchmark and sweep runs.
//! - [`archive`]: versioned model files.

pub mod archive;
pub mod bench;
pub mod data;
pub mod error;
pub mod fitting;
pub mod gp_full;
pub mod kernel;
pub mod linalg;
pub mod optim;
pub mod partition;
pub mod spgp;
pub mod splk;

pub use error::{GpError, Result};
pub use fitting::{FitOptions, FitReport, Prediction, VarianceKind};
pub use kernel::KernelParams;
