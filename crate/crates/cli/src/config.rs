//! Experiment configuration files.
//!
//! A config is a TOML document: `key = value` lines grouped under
//! `[model]`, `[data]`, `[training]`, `[privacy]`, `[federation]` and
//! `[capture]`. Every field has a default, so an empty file is a valid
//! (non-private, local, plain backbone) experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use privseg_core::data::{AugmentParams, DatasetConfig, DEFAULT_FRACTIONS};
use privseg_core::dp::{PrivacyRegime, RegimeName};
use privseg_core::fed::FederationConfig;
use privseg_core::nn::{BackboneStyle, ModelSpec, OptimizerConfig, OptimizerKind};

use crate::error::{require, CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Where `train` writes; defaults to `$PRIVSEG_OUT/<name>`.
    pub out_dir: Option<PathBuf>,
    pub model: ModelSection,
    pub data: DataSection,
    pub training: TrainingSection,
    pub privacy: PrivacySection,
    pub federation: FederationSection,
    pub capture: CaptureSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub backbone: String,
    pub base_channels: usize,
    pub depth: usize,
    /// Only used by `single_conv`.
    pub kernel_size: usize,
    pub init_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Load this dataset directory instead of generating one in memory.
    pub path: Option<PathBuf>,
    pub n_patients: usize,
    pub slices_per_patient: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Local,
    Federated,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Local => "local",
            Mode::Federated => "federated",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub mode: Mode,
    pub epochs: usize,
    /// Samples per local step; 0 is full batch.
    pub batch_size: usize,
    pub optimizer: String,
    pub lr: f64,
    pub augment: bool,
    /// Validation Dice every this many epochs; 0 disables.
    pub eval_every: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrivacySection {
    /// `none`, `low`, `medium`, `high` or `custom`.
    pub regime: String,
    // custom only
    pub noise_multiplier: Option<f64>,
    pub clip_norm: Option<f64>,
    pub delta: Option<f64>,
    pub budget: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FederationSection {
    pub n_workers: usize,
    pub sync_every: usize,
    pub weighted: bool,
}

/// Updates to keep: every listed round for every listed worker.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaptureSection {
    pub rounds: Vec<usize>,
    pub workers: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            out_dir: None,
            model: ModelSection::default(),
            data: DataSection::default(),
            training: TrainingSection::default(),
            privacy: PrivacySection::default(),
            federation: FederationSection::default(),
            capture: CaptureSection::default(),
        }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        let spec = ModelSpec::default();
        ModelSection {
            backbone: spec.backbone.to_string(),
            base_channels: spec.base_channels,
            depth: spec.depth,
            kernel_size: spec.kernel_size,
            init_seed: 1,
        }
    }
}

impl Default for DataSection {
    fn default() -> Self {
        let d = DatasetConfig::default();
        DataSection {
            path: None,
            n_patients: d.n_patients,
            slices_per_patient: d.slices_per_patient,
            height: d.height,
            width: d.width,
            seed: d.seed,
        }
    }
}

impl Default for TrainingSection {
    fn default() -> Self {
        TrainingSection {
            mode: Mode::Local,
            epochs: 30,
            batch_size: 8,
            optimizer: "adam".into(),
            lr: 0.01,
            augment: false,
            eval_every: 1,
            seed: 1,
        }
    }
}

impl Default for PrivacySection {
    fn default() -> Self {
        PrivacySection {
            regime: "none".into(),
            noise_multiplier: None,
            clip_norm: None,
            delta: None,
            budget: None,
        }
    }
}

impl Default for FederationSection {
    fn default() -> Self {
        FederationSection { n_workers: 3, sync_every: 1, weighted: true }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<ExperimentConfig> {
        require("config file", path)?;
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> CliResult<ExperimentConfig> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Usage(e.to_string()))?;
        cfg.model_spec()?;
        cfg.regime()?;
        cfg.optimizer()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn model_spec(&self) -> CliResult<ModelSpec> {
        let backbone: BackboneStyle = self.model.backbone.parse()?;
        let spec = ModelSpec {
            kernel_size: self.model.kernel_size,
            ..ModelSpec::new(backbone).with_base_channels(self.model.base_channels).with_depth(self.model.depth)
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn regime(&self) -> CliResult<Option<PrivacyRegime>> {
        let p = &self.privacy;
        if p.regime == "none" {
            return Ok(None);
        }
        let name: RegimeName = p.regime.parse()?;
        if name != RegimeName::Custom {
            return Ok(PrivacyRegime::preset(name));
        }
        let need = |v: Option<f64>, key: &str| {
            v.ok_or_else(|| CliError::Usage(format!("[privacy] regime = \"custom\" requires `{key}`")))
        };
        Ok(Some(PrivacyRegime::custom(
            need(p.noise_multiplier, "noise_multiplier")?,
            need(p.clip_norm, "clip_norm")?,
            need(p.delta, "delta")?,
            need(p.budget, "budget")?,
        )?))
    }

    pub fn optimizer(&self) -> CliResult<OptimizerConfig> {
        let kind: OptimizerKind = self.training.optimizer.parse()?;
        let cfg = match kind {
            OptimizerKind::Sgd => OptimizerConfig::sgd(self.training.lr),
            OptimizerKind::Adam => OptimizerConfig::adam(self.training.lr),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            n_patients: self.data.n_patients,
            slices_per_patient: self.data.slices_per_patient,
            height: self.data.height,
            width: self.data.width,
            seed: self.data.seed,
            fractions: DEFAULT_FRACTIONS,
        }
    }

    pub fn n_workers(&self) -> usize {
        match self.training.mode {
            Mode::Local => 1,
            Mode::Federated => self.federation.n_workers,
        }
    }

    pub fn sync_every(&self) -> usize {
        match self.training.mode {
            Mode::Local => 1,
            Mode::Federated => self.federation.sync_every,
        }
    }

    /// Local steps per epoch: one pass over an evenly sized shard.
    pub fn steps_per_epoch(&self, n_train: usize) -> usize {
        let shard = n_train / self.n_workers().max(1);
        match self.training.batch_size {
            0 => 1,
            b => (shard / b).max(1),
        }
    }

    /// Round count covering `epochs` passes, rounded up to whole rounds.
    pub fn rounds(&self, n_train: usize) -> usize {
        let steps = self.training.epochs * self.steps_per_epoch(n_train);
        steps.div_ceil(self.sync_every())
    }

    /// Epoch (0-based) that round `r` belongs to.
    pub fn epoch_of_round(&self, r: usize, n_train: usize) -> usize {
        r * self.sync_every() / self.steps_per_epoch(n_train)
    }

    pub fn federation_config(&self, n_train: usize) -> CliResult<FederationConfig> {
        let eval_rounds = match self.training.eval_every {
            0 => 0,
            e => (e * self.steps_per_epoch(n_train) / self.sync_every()).max(1),
        };
        let record = self
            .capture
            .rounds
            .iter()
            .flat_map(|&r| self.capture.workers.iter().map(move |&w| (r, w)))
            .collect();
        let cfg = FederationConfig {
            n_workers: self.n_workers(),
            sync_every: self.sync_every(),
            rounds: self.rounds(n_train),
            weighted: self.federation.weighted,
            regime: self.regime()?,
            federated_budget: self.training.mode == Mode::Federated,
            optimizer: self.optimizer()?,
            batch_size: self.training.batch_size,
            seed: self.training.seed,
            augment: self.training.augment.then(AugmentParams::default),
            eval_every: eval_rounds,
            record,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Root for outputs when no directory is given: `$PRIVSEG_OUT`, else `runs`.
pub fn output_root() -> PathBuf {
    std::env::var_os("PRIVSEG_OUT").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(ExperimentConfig::parse("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = ExperimentConfig::default();
        c.privacy.regime = "custom".into();
        c.privacy.noise_multiplier = Some(1.2);
        c.privacy.clip_norm = Some(0.5);
        c.privacy.delta = Some(1e-5);
        c.privacy.budget = Some(4.0);
        c.capture.rounds = vec![0, 3];
        c.capture.workers = vec![1];
        assert_eq!(ExperimentConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn presets_resolve_exactly() {
        for (name, preset) in [("low", PrivacyRegime::LOW), ("medium", PrivacyRegime::MEDIUM), ("high", PrivacyRegime::HIGH)] {
            let c = ExperimentConfig::parse(&format!("[privacy]\nregime = \"{name}\"\n")).unwrap();
            assert_eq!(c.regime().unwrap(), Some(preset));
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ExperimentConfig::parse("[model]\nbackbone = \"vgg\"\n").is_err());
        assert!(ExperimentConfig::parse("[privacy]\nregime = \"custom\"\n").is_err());
        assert!(ExperimentConfig::parse("[training]\nlearning_rate = 1\n").is_err());
    }

    #[test]
    fn epoch_arithmetic() {
        let mut c = ExperimentConfig::default();
        assert_eq!(c.steps_per_epoch(76), 9);
        assert_eq!(c.rounds(76), 270);
        c.training.mode = Mode::Federated;
        c.federation.sync_every = 2;
        // 25-sample shards, 3 steps per epoch, 90 steps in 45 rounds
        assert_eq!(c.steps_per_epoch(76), 3);
        assert_eq!(c.rounds(76), 45);
        assert_eq!(c.epoch_of_round(1, 76), 0);
        assert_eq!(c.epoch_of_round(2, 76), 1);
        c.training.batch_size = 1;
        assert_eq!(c.federation_config(76).unwrap().eval_every, 12);
    }
}
