//! Run configuration shared by the command-line front end and config files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{default_library, LearnerSpec, LogisticOptions};
use crate::moderation::ModerationMode;
use crate::pipeline::AnalysisConfig;
use crate::simulation::DgpSpec;
use crate::super_learner::Selection;
use crate::tmle::DEFAULT_G_BOUNDS;

/// Estimation settings in their serialized form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSettings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub folds: Option<usize>,
    pub seed: u64,
    pub g_bounds: [f64; 2],
    pub learners: Vec<String>,
    /// `weighted` or `discrete`.
    pub selection: String,
    pub moderation: String,
    pub alpha: f64,
    pub fdr: f64,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Self {
            folds: None,
            seed: 1,
            g_bounds: [DEFAULT_G_BOUNDS.0, DEFAULT_G_BOUNDS.1],
            learners: default_library().iter().map(|l| l.to_string()).collect(),
            selection: "weighted".into(),
            moderation: ModerationMode::OneSample.to_string(),
            alpha: 0.05,
            fdr: 0.05,
        }
    }
}

pub fn parse_selection(s: &str) -> Result<Selection> {
    match s {
        "weighted" => Ok(Selection::Weighted),
        "discrete" => Ok(Selection::Discrete),
        other => Err(Error::config(
            "selection",
            format!("expected weighted or discrete, got {other:?}"),
        )),
    }
}

impl AnalysisSettings {
    pub fn to_config(&self) -> Result<AnalysisConfig> {
        if !(self.fdr > 0.0 && self.fdr < 1.0) {
            return Err(Error::config("fdr", format!("must lie in (0, 1), got {}", self.fdr)));
        }
        let library = self
            .learners
            .iter()
            .map(|s| s.parse::<LearnerSpec>())
            .collect::<Result<Vec<_>>>()?;
        let cfg = AnalysisConfig {
            folds: self.folds,
            seed: self.seed,
            g_bounds: (self.g_bounds[0], self.g_bounds[1]),
            library,
            selection: parse_selection(&self.selection)?,
            moderation: self.moderation.parse()?,
            alpha: self.alpha,
            logistic: LogisticOptions::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Everything `analyze` needs; echoed into the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub expression: PathBuf,
    pub phenotype: PathBuf,
    pub exposure: String,
    pub confounders: Vec<String>,
    pub id_column: String,
    pub out: PathBuf,
    pub top_k: usize,
    /// Worker threads; 0 uses one per available core.
    pub workers: usize,
    /// Also report the untargeted substitution estimate in the run log.
    pub report_initial: bool,
    pub analysis: AnalysisSettings,
}

impl RunConfig {
    pub fn validate(&self) -> Result<AnalysisConfig> {
        if self.exposure.is_empty() {
            return Err(Error::config("exposure", "column name is empty"));
        }
        if self.confounders.iter().any(|c| c.is_empty()) {
            return Err(Error::config("confounders", "empty column name"));
        }
        if self.confounders.iter().any(|c| *c == self.exposure || *c == self.id_column) {
            return Err(Error::config(
                "confounders",
                "must not include the exposure or id column",
            ));
        }
        self.analysis.to_config()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn default_replicates() -> usize {
    100
}

/// Contents of a simulation config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    pub dgp: DgpSpec,
    #[serde(default)]
    pub analysis: AnalysisSettings,
}

impl SimulationConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<AnalysisConfig> {
        if self.replicates == 0 {
            return Err(Error::config("replicates", "need at least one replicate"));
        }
        self.dgp.validate()?;
        let cfg = self.analysis.to_config()?;
        cfg.fold_count(self.dgp.n)?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
