//! Run configuration: a JSON file with documented defaults, overridable
//! field by field from the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use tokenfocus_core::gbt::GbtConfig;
use tokenfocus_core::optim::TrainingConfig;
use tokenfocus_core::score::{ProjectionMode, ScoreSpace, TaskKind};

use crate::CliError;

/// Which scoring task a command operates on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TaskSelection {
    Total,
    Element,
}

/// Miniature scorer dimensions and the featurizer's token cap.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub max_tokens: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: tokenfocus_core::synth::RECORD_VOCAB,
            embed_dim: tokenfocus_core::synth::RECORD_EMBED,
            hidden_dim: tokenfocus_core::synth::RECORD_HIDDEN,
            max_tokens: tokenfocus_core::synth::RECORD_MAX_TOKENS,
        }
    }
}

/// Score-label token ids and values per task, as `(token_id, value)` pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpaceConfig {
    pub total: Vec<(u32, f64)>,
    pub element: Vec<(u32, f64)>,
}

impl Default for SpaceConfig {
    fn default() -> Self {
        SpaceConfig {
            total: vec![(0, 1.0), (1, 2.0), (2, 3.0), (3, 4.0), (4, 5.0)],
            element: vec![(5, 0.0), (6, 1.0)],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub test_dataset: Option<PathBuf>,
    pub external: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub task: TaskSelection,
    pub mode: ProjectionMode,
    pub k: usize,
    pub seed: u64,
    pub spaces: SpaceConfig,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub gbt: GbtConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            test_dataset: None,
            external: None,
            out_dir: PathBuf::from("out"),
            task: TaskSelection::Total,
            mode: ProjectionMode::Literal,
            k: 5,
            seed: 1234,
            spaces: SpaceConfig::default(),
            model: ModelConfig::default(),
            training: tokenfocus_core::synth::record_training_config(1234),
            gbt: GbtConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Domain(format!("bad config {}: {e}", path.display())))?;
        config.validate()?;
        // Input paths named by the config must exist at load time.
        for (name, p) in [
            ("dataset", &config.dataset),
            ("test_dataset", &config.test_dataset),
            ("external", &config.external),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(CliError::Io(format!(
                        "config {name} path {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.space(TaskSelection::Total)?;
        self.space(TaskSelection::Element)?;
        self.training
            .validate()
            .map_err(|e| CliError::Domain(e.to_string()))?;
        self.gbt
            .validate()
            .map_err(|e| CliError::Domain(e.to_string()))?;
        for (name, pairs) in [
            ("total", &self.spaces.total),
            ("element", &self.spaces.element),
        ] {
            for &(token, _) in pairs {
                if token as usize >= self.model.vocab_size {
                    return Err(CliError::Domain(format!(
                        "{name} score token {token} out of range for vocab size {}",
                        self.model.vocab_size
                    )));
                }
            }
        }
        Ok(())
    }

    /// The validated score space for a task.
    pub fn space(&self, task: TaskSelection) -> Result<ScoreSpace, CliError> {
        let (pairs, kind) = match task {
            TaskSelection::Total => (&self.spaces.total, TaskKind::Total),
            TaskSelection::Element => (&self.spaces.element, TaskKind::Element),
        };
        ScoreSpace::from_pairs(pairs, kind).map_err(|e| CliError::Domain(e.to_string()))
    }

    /// Training config with the run seed threaded through.
    pub fn training_for_run(&self) -> TrainingConfig {
        TrainingConfig {
            seed: self.seed,
            projection_mode: self.mode,
            ..self.training.clone()
        }
    }
}
