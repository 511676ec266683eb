//! Serializable run configuration. Every command writes one to
//! `run_config.json` in its output directory.

use std::fs;
use std::path::{Path, PathBuf};

use babynet_core::data::AugmentPolicy;
use babynet_core::model::{ModelConfig, Variant, WidthMultiplier};
use babynet_core::train::{AdamConfig, LrSchedule, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RUN_CONFIG: &str = "run_config.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Full-width model on 16×64×64 clips, 200 epochs.
    Paper,
    /// 8×16×16 clips at one eighth width, 30 epochs.
    Desk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    pub variant: String,
    pub in_frames: usize,
    pub in_height: usize,
    pub in_width: usize,
    pub num_heads: usize,
    pub width: String,
    pub bn_eps: f32,
    pub bn_momentum: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSection {
    pub lr: f32,
    pub gamma: f32,
    pub step_epochs: usize,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSection {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub weight_decay: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentSection {
    pub enabled: bool,
    pub rotate: bool,
    pub photometric: bool,
    pub flip: bool,
    pub quantize: bool,
    pub blur: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub dataset: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub preset: Preset,
    pub model: ModelSection,
    pub schedule: ScheduleSection,
    pub optimizer: OptimizerSection,
    pub batch_size: usize,
    pub raw_targets: bool,
    pub augment: AugmentSection,
    pub folds: usize,
    pub ablation: bool,
    pub jobs: usize,
    /// Generator settings, for `synth` runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSection {
    pub patients: usize,
    pub videos_per_patient: usize,
    pub frames_per_video: usize,
    pub height: usize,
    pub width: usize,
    pub noise_sigma: f32,
    pub weight_min_g: f32,
    pub weight_max_g: f32,
}

impl RunConfig {
    /// Defaults of a preset, before command-line overrides.
    pub fn preset(preset: Preset, command: &str, out: PathBuf) -> Self {
        let model = match preset {
            Preset::Paper => ModelConfig::default(),
            Preset::Desk => ModelConfig::desk(Variant::RtmTpe),
        };
        let schedule = LrSchedule::default();
        let adam = AdamConfig::default();
        let aug = AugmentPolicy::default();
        let (lr, epochs, batch_size) = match preset {
            Preset::Paper => (schedule.initial, schedule.epochs, 2),
            Preset::Desk => (1e-3, 30, 8),
        };
        RunConfig {
            command: command.to_string(),
            dataset: None,
            out,
            seed: 0,
            preset,
            model: ModelSection {
                variant: model.variant.as_str().to_string(),
                in_frames: model.in_frames,
                in_height: model.in_height,
                in_width: model.in_width,
                num_heads: model.num_heads,
                width: model.width.to_string(),
                bn_eps: model.bn_eps,
                bn_momentum: model.bn_momentum,
            },
            schedule: ScheduleSection {
                lr,
                gamma: schedule.gamma,
                step_epochs: schedule.step_epochs,
                epochs,
            },
            optimizer: OptimizerSection {
                beta1: adam.beta1,
                beta2: adam.beta2,
                eps: adam.eps,
                weight_decay: adam.weight_decay,
            },
            batch_size,
            raw_targets: false,
            augment: AugmentSection {
                enabled: aug.enabled,
                rotate: aug.rotate,
                photometric: aug.photometric,
                flip: aug.flip,
                quantize: aug.quantize,
                blur: aug.blur,
            },
            folds: 5,
            ablation: false,
            jobs: 1,
            synth: None,
        }
    }

    pub fn variant(&self) -> Result<Variant> {
        Ok(self.model.variant.parse()?)
    }

    pub fn model_config(&self, variant: Variant) -> Result<ModelConfig> {
        let m = &self.model;
        let width: WidthMultiplier = m.width.parse()?;
        let config = ModelConfig {
            variant,
            in_frames: m.in_frames,
            in_height: m.in_height,
            in_width: m.in_width,
            num_heads: m.num_heads,
            width,
            bn_eps: m.bn_eps,
            bn_momentum: m.bn_momentum,
            seed: self.seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let a = &self.augment;
        let config = TrainConfig {
            batch_size: self.batch_size,
            schedule: LrSchedule {
                initial: self.schedule.lr,
                gamma: self.schedule.gamma,
                step_epochs: self.schedule.step_epochs,
                epochs: self.schedule.epochs,
            },
            adam: AdamConfig {
                beta1: self.optimizer.beta1,
                beta2: self.optimizer.beta2,
                eps: self.optimizer.eps,
                weight_decay: self.optimizer.weight_decay,
            },
            augment: AugmentPolicy {
                enabled: a.enabled,
                rotate: a.rotate,
                photometric: a.photometric,
                flip: a.flip,
                quantize: a.quantize,
                blur: a.blur,
                ..AugmentPolicy::default()
            },
            seed: self.seed,
            raw_targets: self.raw_targets,
            scaler: None,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(RUN_CONFIG);
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::parse(&path, e.to_string()))?;
        fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
    }
}
