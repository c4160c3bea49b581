//! Experiment configuration file (TOML). Every section is optional and
//! falls back to the documented defaults; unknown keys are rejected.

use std::path::{Path, PathBuf};

use bosc::backdoor::InjectionConfig;
use bosc::data::{Preset, SynthConfig};
use bosc::inference::ScoreKind;
use bosc::training::{AugmentConfig, LossConfig, TrainConfig};
use bosc::{Mode, ModelConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    pub triggers: TriggerSection,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub inference: InferenceSection,
    pub report: ReportSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    /// Dataset directory, relative to the output root unless absolute.
    pub root: PathBuf,
    pub preset: Preset,
    pub seed: u64,
    /// Full generation spec; overrides `preset` and `seed` when present.
    pub synth: Option<SynthConfig>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            root: PathBuf::from("data"),
            preset: Preset::S1Analog,
            seed: 0,
            synth: None,
        }
    }
}

impl DatasetSection {
    pub fn synth_config(&self) -> SynthConfig {
        self.synth.clone().unwrap_or_else(|| self.preset.config(self.seed))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TriggerSection {
    /// Directory of PPM triggers; procedural triggers are used when absent.
    pub dir: Option<PathBuf>,
    pub seed: u64,
}

impl Default for TriggerSection {
    fn default() -> Self {
        TriggerSection { dir: None, seed: 7 }
    }
}

/// Training settings. Defaults are the reference hyperparameters except the learning rate,
/// which is raised for the small network and dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub mode: Mode,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub injection: InjectionConfig,
    pub loss: LossConfig,
    pub augment: AugmentConfig,
}

pub const DESK_LR: f64 = 5e-3;

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            mode: t.mode,
            seed: t.seed,
            epochs: t.epochs,
            batch_size: t.batch_size,
            base_lr: DESK_LR,
            injection: t.injection,
            loss: t.loss,
            augment: t.augment,
        }
    }
}

impl TrainSection {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            base_lr: self.base_lr,
            injection: self.injection,
            loss: self.loss,
            augment: self.augment,
            seed: self.seed,
            mode: self.mode,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceSection {
    pub scores: Vec<ScoreKind>,
    pub target_fpr: f64,
    /// Must match the checkpoint's injection strength when set.
    pub alpha: Option<f64>,
}

impl Default for InferenceSection {
    fn default() -> Self {
        InferenceSection {
            scores: vec![ScoreKind::ClsM],
            target_fpr: 0.05,
            alpha: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Markdown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportSection {
    /// Directory holding run directories, relative to the output root unless absolute.
    pub out_dir: PathBuf,
    pub formats: Vec<ReportFormat>,
}

impl Default for ReportSection {
    fn default() -> Self {
        ReportSection {
            out_dir: PathBuf::from("runs"),
            formats: vec![ReportFormat::Csv, ReportFormat::Markdown],
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSection::default(),
            triggers: TriggerSection::default(),
            model: ModelConfig::default(),
            train: TrainSection::default(),
            inference: InferenceSection::default(),
            report: ReportSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every section; nothing is partially applied on failure.
    pub fn validate(&self) -> Result<(), CliError> {
        let config = |e: bosc::Error| CliError::Config(e.to_string());
        self.dataset.synth_config().validate().map_err(config)?;
        self.model.validate().map_err(config)?;
        self.train.train_config().validate().map_err(config)?;
        if self.inference.scores.is_empty() {
            return Err(CliError::Config("inference.scores is empty".into()));
        }
        if !(0.0..=1.0).contains(&self.inference.target_fpr) {
            return Err(CliError::Config(format!("inference.target_fpr {} outside [0, 1]", self.inference.target_fpr)));
        }
        if let Some(a) = self.inference.alpha {
            if a != self.train.injection.alpha {
                return Err(CliError::Config(format!(
                    "inference.alpha {a} differs from train.injection.alpha {}",
                    self.train.injection.alpha
                )));
            }
        }
        if self.report.formats.is_empty() {
            return Err(CliError::Config("report.formats is empty".into()));
        }
        Ok(())
    }
}
