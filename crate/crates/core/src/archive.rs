//! Versioned JSON archives of fitted models.
//!
//! An archive stores everything prediction needs: hyperparameters, pseudo-inputs,
//! cached factors, partition, transform and boundary values. Floats round-trip
//! exactly, so a loaded model predicts bit-identically.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GpError, Result};
use crate::fitting::Prediction;
use crate::gp_full::FullGpModel;
use crate::splk::SplkModel;
use crate::spgp::SpgpModel;

pub const ARCHIVE_FORMAT: &str = "splk-model";
pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum StoredModel {
    Full(FullGpModel),
    Spgp(SpgpModel),
    Splk(SplkModel),
}

#[derive(Serialize, Deserialize)]
struct Archive {
    format: String,
    version: u32,
    #[serde(flatten)]
    body: StoredModel,
}

#[derive(Serialize)]
struct ArchiveRef<'a> {
    format: &'static str,
    version: u32,
    #[serde(flatten)]
    body: &'a StoredModel,
}

impl StoredModel {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Full(_) => "full",
            Self::Spgp(_) => "spgp",
            Self::Splk(_) => "splk",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Full(m) => m.inputs().ncols(),
            Self::Spgp(m) => m.inputs().ncols(),
            Self::Splk(m) => m.dim(),
        }
    }

    /// Mean, latent variance and (for partitioned models) subdomain.
    pub fn predict(&self, x: &[f64]) -> Result<(Prediction, Option<usize>)> {
        match self {
            Self::Full(m) => Ok((m.predict(x)?, None)),
            Self::Spgp(m) => Ok((m.predict(x)?, None)),
            Self::Splk(m) => {
                let p = m.predict(x)?;
                Ok((
                    Prediction {
                        mean: p.mean,
                        variance: p.variance,
                    },
                    Some(p.subdomain),
                ))
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let archive = ArchiveRef {
            format: ARCHIVE_FORMAT,
            version: ARCHIVE_VERSION,
            body: self,
        };
        Ok(serde_json::to_string(&archive)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let archive: Archive = serde_json::from_str(text)?;
        if archive.format != ARCHIVE_FORMAT {
            return Err(GpError::Archive(format!("not a model archive (format '{}')", archive.format)));
        }
        if archive.version != ARCHIVE_VERSION {
            return Err(GpError::Archive(format!(
                "archive version {} is not supported (expected {ARCHIVE_VERSION})",
                archive.version
            )));
        }
        Ok(archive.body)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
