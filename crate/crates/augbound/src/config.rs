//! Experiment configuration (one JSON file per run).

use crate::error::{HarnessError, Result};
use augbound_core::encoder::ProbeConfig;
use augbound_core::metrics::DistanceCounts;
use augbound_core::{Architecture, AugDistribution, GenerativeConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    PixelDistances,
    ReprDistances,
    BoundReport,
    DecompCheck,
    TrainSweep,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::PixelDistances => "pixel-distances",
            ExperimentKind::ReprDistances => "repr-distances",
            ExperimentKind::BoundReport => "bound-report",
            ExperimentKind::DecompCheck => "decomp-check",
            ExperimentKind::TrainSweep => "train-sweep",
        }
    }

    fn uses_sweep(self) -> bool {
        self != ExperimentKind::DecompCheck
    }

    fn uses_encoder(self) -> bool {
        matches!(self, ExperimentKind::ReprDistances | ExperimentKind::BoundReport | ExperimentKind::TrainSweep)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The augmentation parameter varied across sweep points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    CropScaleMin,
    ColorProb,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::CropScaleMin => "crop_scale_min",
            SweepParameter::ColorProb => "color_prob",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

impl Sweep {
    /// `base` with the swept parameter set to `value`.
    pub fn apply(&self, base: &AugDistribution, value: f64) -> AugDistribution {
        let mut d = *base;
        match self.parameter {
            SweepParameter::CropScaleMin => d.crop_scale_min = value,
            SweepParameter::ColorProb => d.color_prob = value,
        }
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub images_per_class: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig { images_per_class: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSpec {
    pub architecture: Architecture,
    #[serde(default)]
    pub hidden_dim: usize,
    #[serde(default)]
    pub output_dim: usize,
    #[serde(default = "yes")]
    pub normalize: bool,
    /// Start from a saved encoder instead of a seeded initialization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

fn yes() -> bool {
    true
}

/// SGD settings; the seed comes from the experiment seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub decay_epochs: Vec<usize>,
    pub decay_factor: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub steps_per_epoch: usize,
    pub epochs: usize,
    pub negatives: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            learning_rate: 0.5,
            decay_epochs: vec![300],
            decay_factor: 0.1,
            weight_decay: 1e-4,
            batch_size: 128,
            steps_per_epoch: 1,
            epochs: 400,
            negatives: 4,
        }
    }
}

impl TrainSection {
    pub fn to_train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            decay_epochs: self.decay_epochs.clone(),
            decay_factor: self.decay_factor,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            steps_per_epoch: self.steps_per_epoch,
            epochs: self.epochs,
            negatives: self.negatives,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub weight_decay: f64,
}

impl Default for ProbeSection {
    fn default() -> Self {
        ProbeSection { train_per_class: 32, test_per_class: 32, epochs: 500, learning_rate: 2.0, weight_decay: 0.0 }
    }
}

impl ProbeSection {
    pub fn probe_config(&self) -> ProbeConfig {
        ProbeConfig { epochs: self.epochs, learning_rate: self.learning_rate, weight_decay: self.weight_decay }
    }
}

/// A random finite world for the exhaustive checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub classes: usize,
    pub images_per_class: usize,
    pub augmentations: usize,
    pub k: usize,
    pub side: usize,
    pub output_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSection {
    /// Negatives per tuple.
    pub k: usize,
    /// Tuples for the population InfoNCE estimate.
    pub unsup_samples: usize,
    /// Draws for the sampled-class supervised risks.
    pub sup_samples: usize,
    /// Tuples in the empirical sample of the generalization bound.
    pub sample_size: usize,
    pub rademacher_draws: usize,
    pub delta: f64,
    /// Images and views per image for the centering check.
    pub centering_images: usize,
    pub centering_views: usize,
}

impl Default for BoundSection {
    fn default() -> Self {
        BoundSection {
            k: 4,
            unsup_samples: 2000,
            sup_samples: 2000,
            sample_size: 256,
            rademacher_draws: 32,
            delta: 0.05,
            centering_images: 8,
            centering_views: 64,
        }
    }
}

fn default_counts() -> DistanceCounts {
    DistanceCounts { anchors: 8, candidates: 16, max_partners: Some(4), max_views: None }
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Root of every random stream in the run.
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generative: Option<GenerativeConfig>,
    /// Parameters held fixed across the sweep.
    #[serde(default)]
    pub augmentation: AugDistribution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default = "default_counts")]
    pub counts: DistanceCounts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoder: Option<EncoderSpec>,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub probe: ProbeSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub world: Option<WorldConfig>,
    #[serde(default)]
    pub bound: BoundSection,
    /// External embedding table audited by `bound-report`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn check(ok: bool, path: &str, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(HarnessError::config(path, message))
    }
}

fn core_check(path: &str, r: augbound_core::Result<()>) -> Result<()> {
    r.map_err(|e| HarnessError::config(path, e.to_string()))
}

impl ExperimentConfig {
    /// Parses JSON; type errors carry the path of the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            HarnessError::config(path, e.into_inner().to_string())
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Reads a config file. Relative paths inside it (checkpoint, embeddings,
    /// output directory) resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(enc) = cfg.encoder.as_mut() {
            enc.checkpoint.as_mut().map(resolve);
        }
        cfg.embeddings.as_mut().map(resolve);
        resolve(&mut cfg.output_dir);
        Ok(cfg)
    }

    /// The augmentation distribution at every sweep point, in order.
    pub fn sweep_points(&self) -> Vec<(f64, AugDistribution)> {
        match &self.sweep {
            Some(s) => s.values.iter().map(|&v| (v, s.apply(&self.augmentation, v))).collect(),
            None => Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let kind = self.kind;
        core_check("augmentation", self.augmentation.validate())?;
        if let Some(s) = &self.sweep {
            check(!s.values.is_empty(), "sweep.values", "sweep list must not be empty")?;
            for (i, &v) in s.values.iter().enumerate() {
                check(v.is_finite(), &format!("sweep.values[{i}]"), "must be finite")?;
                core_check(&format!("sweep.values[{i}]"), s.apply(&self.augmentation, v).validate())?;
            }
        } else if kind.uses_sweep() {
            return Err(HarnessError::config("sweep", format!("required for {kind}")));
        }

        if kind == ExperimentKind::DecompCheck {
            let Some(w) = &self.world else {
                return Err(HarnessError::config("world", "required for decomp-check"));
            };
            for (name, v) in [
                ("classes", w.classes),
                ("images_per_class", w.images_per_class),
                ("augmentations", w.augmentations),
                ("k", w.k),
                ("output_dim", w.output_dim),
            ] {
                check(v > 0, &format!("world.{name}"), "must be positive")?;
            }
            check(w.side >= 2, "world.side", "must be at least 2")?;
            return Ok(());
        }

        let Some(g) = &self.generative else {
            return Err(HarnessError::config("generative", format!("required for {kind}")));
        };
        core_check("generative", g.validate())?;
        check(self.dataset.images_per_class > 0, "dataset.images_per_class", "must be positive")?;
        check(self.counts.anchors > 0, "counts.anchors", "must be positive")?;
        check(self.counts.candidates >= 2, "counts.candidates", "must be at least 2")?;
        check(self.counts.max_partners != Some(0), "counts.max_partners", "must be positive")?;

        if kind.uses_encoder() {
            let Some(e) = &self.encoder else {
                return Err(HarnessError::config("encoder", format!("required for {kind}")));
            };
            if e.checkpoint.is_none() {
                match e.architecture {
                    Architecture::FlattenIdentity => {}
                    Architecture::Linear => check(e.output_dim > 0, "encoder.output_dim", "must be positive")?,
                    Architecture::Mlp1 => {
                        check(e.output_dim > 0, "encoder.output_dim", "must be positive")?;
                        check(e.hidden_dim > 0, "encoder.hidden_dim", "must be positive")?;
                    }
                }
            }
            if kind == ExperimentKind::BoundReport {
                check(e.normalize, "encoder.normalize", "bound reports need unit-norm embeddings")?;
            }
        }
        if kind == ExperimentKind::BoundReport {
            let b = &self.bound;
            for (name, v) in [
                ("k", b.k),
                ("unsup_samples", b.unsup_samples),
                ("sup_samples", b.sup_samples),
                ("sample_size", b.sample_size),
                ("rademacher_draws", b.rademacher_draws),
                ("centering_images", b.centering_images),
                ("centering_views", b.centering_views),
            ] {
                check(v > 0, &format!("bound.{name}"), "must be positive")?;
            }
            check(b.delta > 0.0 && b.delta < 1.0, "bound.delta", "must lie in (0, 1)")?;
            check(g.num_classes >= 2, "generative.num_classes", "bound reports need at least two classes")?;
        }
        if kind == ExperimentKind::TrainSweep {
            core_check("train", self.train.to_train_config(self.seed).validate())?;
            check(self.probe.train_per_class > 0, "probe.train_per_class", "must be positive")?;
            check(self.probe.test_per_class > 0, "probe.test_per_class", "must be positive")?;
            check(g.num_classes >= 2, "generative.num_classes", "the probe needs at least two classes")?;
        }
        Ok(())
    }
}
