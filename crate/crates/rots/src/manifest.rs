//! Serializable record of a fully resolved run.

use std::path::PathBuf;

use rots_core::similarity::{CorrectionScope, TreeMode};
use rots_core::transport::SolverOptions;
use rots_core::{Aggregation, SimilarityConfig};
use serde::{Deserialize, Serialize};

use crate::bench::BootstrapRecord;
use crate::error::{Result, RotsError};

/// [`SimilarityConfig`] in plain serializable fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigRecord {
    pub alpha: f64,
    pub depth: usize,
    pub eps_schedule: Vec<f64>,
    pub wrd_reg: f64,
    pub interp_eps: f64,
    /// `mean`, `max`, `min`, `last` or `level(k)`.
    pub aggregation: String,
    /// `dependency` or `binary`.
    pub tree_mode: String,
    /// `per-level` or `word-level`.
    pub correction: String,
    pub max_iter: usize,
    pub tol: f64,
}

impl From<&SimilarityConfig> for ConfigRecord {
    fn from(c: &SimilarityConfig) -> Self {
        Self {
            alpha: c.alpha,
            depth: c.depth,
            eps_schedule: c.eps_schedule.clone(),
            wrd_reg: c.wrd_reg,
            interp_eps: c.interp_eps,
            aggregation: match c.aggregation {
                Aggregation::Mean => "mean".into(),
                Aggregation::Max => "max".into(),
                Aggregation::Min => "min".into(),
                Aggregation::Last => "last".into(),
                Aggregation::Level(k) => format!("level({k})"),
            },
            tree_mode: match c.tree_mode {
                TreeMode::Dependency => "dependency".into(),
                TreeMode::Binary => "binary".into(),
            },
            correction: match c.correction {
                CorrectionScope::PerLevel => "per-level".into(),
                CorrectionScope::WordLevel => "word-level".into(),
            },
            max_iter: c.solver.max_iter,
            tol: c.solver.tol,
        }
    }
}

impl ConfigRecord {
    pub fn to_config(&self) -> Result<SimilarityConfig> {
        let tree_mode = match self.tree_mode.as_str() {
            "dependency" => TreeMode::Dependency,
            "binary" => TreeMode::Binary,
            other => return Err(RotsError::Usage(format!("unknown tree mode {other:?}"))),
        };
        let correction = match self.correction.as_str() {
            "per-level" => CorrectionScope::PerLevel,
            "word-level" => CorrectionScope::WordLevel,
            other => return Err(RotsError::Usage(format!("unknown correction scope {other:?}"))),
        };
        let cfg = SimilarityConfig {
            alpha: self.alpha,
            depth: self.depth,
            eps_schedule: self.eps_schedule.clone(),
            wrd_reg: self.wrd_reg,
            interp_eps: self.interp_eps,
            aggregation: self.aggregation.parse().map_err(|e| RotsError::Usage(format!("{e}")))?,
            tree_mode,
            correction,
            solver: SolverOptions { max_iter: self.max_iter, tol: self.tol },
        };
        cfg.validate().map_err(|e| RotsError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

/// Which command a manifest replays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Score,
    Eval,
}

/// Everything needed to rerun a `score` or `eval` invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Crate version that wrote the manifest.
    pub version: String,
    pub command: Command,
    pub pairs: PathBuf,
    pub vectors: PathBuf,
    pub frequencies: Option<PathBuf>,
    pub trees: Option<PathBuf>,
    pub expected_dim: Option<usize>,
    /// Canonical setup code.
    pub setup: String,
    #[serde(default)]
    pub dimension_wise_scaling: bool,
    pub method: String,
    pub config: ConfigRecord,
    pub jobs: usize,
    pub bootstrap: Option<BootstrapRecord>,
}

impl RunManifest {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
