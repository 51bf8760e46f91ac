//! Experiment configuration: one TOML file drives dataset generation,
//! collection, training and evaluation. Unknown keys are rejected so a typo
//! cannot silently fall back to a default, and the canonical serialization
//! is hashed into every artifact the pipeline writes.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::collect::CollectParams;
use crate::condex::{Aggregator, Architecture, TrainConfig};
use crate::error::{CoreError, Result};
use crate::eval::{BenchmarkConfig, ContextStrategy};
use crate::objgen::{letter_category_count, DatasetParams};
use crate::physics::PhysicsParams;
use crate::render::{RenderConfig, Sampling, PATCH_SIZES};

/// Which model family a training run produces.
#[derive(Clone, Copy, Debug, Eq, PartialEq)]
pub enum ModelKind {
    Condex,
    Dexnet,
    Igml,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Condex => "condex",
            ModelKind::Dexnet => "dexnet",
            ModelKind::Igml => "igml",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "condex" => Ok(ModelKind::Condex),
            "dexnet" => Ok(ModelKind::Dexnet),
            "igml" => Ok(ModelKind::Igml),
            other => Err(CoreError::invalid(format!("unknown model '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    /// Number of letter categories; the last two become cross-category eval.
    pub categories: usize,
    pub instances_per_category: usize,
    /// Random grasps labeled per object.
    pub grasps_per_object: usize,
    /// Fingertip descent below the surface at the grasp point, m.
    pub finger_descent: f64,
    /// Mirror the second half of each category instead of fresh samples.
    pub flip_augment: bool,
    pub seed: u64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            categories: letter_category_count() as usize,
            instances_per_category: 210,
            grasps_per_object: 30,
            finger_descent: 0.005,
            flip_augment: false,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsSection {
    /// Normal force per jaw, N. Usually replaced by `calibrate`.
    pub clamp_force: f64,
    pub gravity: f64,
    pub torque_coeff: f64,
    pub jaw_face_length: f64,
    pub max_jaw_opening: f64,
}

impl Default for PhysicsSection {
    fn default() -> Self {
        let p = PhysicsParams::default();
        PhysicsSection {
            clamp_force: p.clamp_force,
            gravity: p.gravity,
            torque_coeff: p.torque_coeff,
            jaw_face_length: p.jaw_face_length,
            max_jaw_opening: p.max_jaw_opening,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderSection {
    /// Meters per pixel.
    pub resolution: f64,
    /// Camera plane height above the table, m.
    pub camera_height: f64,
    /// Square scene image side, px.
    pub image_size: usize,
    /// Grasp crop side, px (32 or 64).
    pub patch_size: usize,
    pub origin_x: f64,
    pub origin_y: f64,
}

impl Default for RenderSection {
    fn default() -> Self {
        let r = RenderConfig::default();
        RenderSection {
            resolution: r.resolution,
            camera_height: r.camera_height,
            image_size: r.image_size,
            patch_size: 64,
            origin_x: r.origin.0,
            origin_y: r.origin.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    /// "condex", "dexnet" or "igml".
    pub model: String,
    /// "mean" or "attention"; only the condex model reads it.
    pub aggregator: String,
    pub steps: usize,
    /// Tasks (objects) per batch.
    pub batch_tasks: usize,
    pub targets_per_task: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub lr: f64,
    /// Whole-episode label inversion with probability 1/2.
    pub augment: bool,
    pub seed: u64,
    pub conv1_channels: usize,
    pub conv1_kernel: usize,
    pub conv2_channels: usize,
    pub conv2_kernel: usize,
    pub hidden: usize,
    pub repr_dim: usize,
    /// Inner-loop settings; only the igml model reads them.
    pub adapt_steps: usize,
    pub inner_lr: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainingSection {
            model: "condex".into(),
            aggregator: "mean".into(),
            steps: t.steps,
            batch_tasks: t.batch_tasks,
            targets_per_task: t.targets_per_task,
            k_min: t.k_interval.0,
            k_max: t.k_interval.1,
            lr: t.lr,
            augment: t.augment,
            seed: t.seed,
            conv1_channels: 16,
            conv1_kernel: 7,
            conv2_channels: 16,
            conv2_kernel: 5,
            hidden: 64,
            repr_dim: 32,
            adapt_steps: 5,
            inner_lr: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Context sizes the error curve sweeps.
    pub k_values: Vec<usize>,
    /// Grasp attempts per object in the benchmark.
    pub trials: usize,
    /// Candidates ranked per attempt.
    pub pool_size: usize,
    /// Context observations gathered before the attempts.
    pub context_budget: usize,
    /// "random" or "accumulated".
    pub strategy: String,
    /// Targets per evaluation episode.
    pub targets_per_episode: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            k_values: (0..=20).collect(),
            trials: 30,
            pool_size: 20,
            context_budget: 15,
            strategy: "random".into(),
            targets_per_episode: 8,
        }
    }
}

/// The whole experiment file. Every section is optional in the TOML and
/// falls back to its defaults; unknown sections or keys are errors.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    pub physics: PhysicsSection,
    pub render: RenderSection,
    pub training: TrainingSection,
    pub eval: EvalSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| CoreError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Canonical serialization; also the hashing input.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CoreError::Config(e.to_string()))
    }

    /// SHA-256 over the canonical serialization. Embedded in shard headers
    /// and manifests so mixed-config artifacts are caught on load.
    pub fn content_hash(&self) -> Result<[u8; 32]> {
        let text = self.to_toml_string()?;
        let mut h = Sha256::new();
        h.update(text.as_bytes());
        Ok(h.finalize().into())
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.categories < 3 {
            return Err(CoreError::Config(
                "need >= 3 categories: two are reserved for cross-category eval".into(),
            ));
        }
        if self.dataset.categories > letter_category_count() as usize {
            return Err(CoreError::Config(format!(
                "only {} letter categories exist",
                letter_category_count()
            )));
        }
        if !PATCH_SIZES.contains(&self.render.patch_size) {
            return Err(CoreError::Config(format!(
                "patch size {} not supported (expected one of {PATCH_SIZES:?})",
                self.render.patch_size
            )));
        }
        self.model_kind()?;
        self.aggregator()?;
        self.strategy()?;
        self.physics_params().validate()?;
        self.render_config().validate()?;
        self.train_config().validate()?;
        self.architecture()?.validate()?;
        if self.eval.k_values.is_empty() {
            return Err(CoreError::Config("eval.k_values is empty".into()));
        }
        if self.eval.targets_per_episode == 0 {
            return Err(CoreError::Config("eval.targets_per_episode must be >= 1".into()));
        }
        let need = self.eval.k_values.iter().max().unwrap() + self.eval.targets_per_episode;
        if need > self.dataset.grasps_per_object {
            return Err(CoreError::Config(format!(
                "largest eval context + targets needs {need} observations per object, \
                 but only {} are collected",
                self.dataset.grasps_per_object
            )));
        }
        Ok(())
    }

    pub fn dataset_params(&self) -> DatasetParams {
        DatasetParams {
            categories: (0..self.dataset.categories as u32).collect(),
            instances_per_category: self.dataset.instances_per_category,
            seed: self.dataset.seed,
            flip_augment: self.dataset.flip_augment,
        }
    }

    pub fn collect_params(&self) -> CollectParams {
        CollectParams {
            grasps_per_object: self.dataset.grasps_per_object,
            patch_size: self.render.patch_size,
            finger_descent: self.dataset.finger_descent,
        }
    }

    pub fn physics_params(&self) -> PhysicsParams {
        PhysicsParams {
            clamp_force: self.physics.clamp_force,
            gravity: self.physics.gravity,
            torque_coeff: self.physics.torque_coeff,
            jaw_face_length: self.physics.jaw_face_length,
            max_jaw_opening: self.physics.max_jaw_opening,
        }
    }

    pub fn render_config(&self) -> RenderConfig {
        RenderConfig {
            resolution: self.render.resolution,
            camera_height: self.render.camera_height,
            image_size: self.render.image_size,
            origin: (self.render.origin_x, self.render.origin_y),
            sampling: Sampling::Bilinear,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            steps: self.training.steps,
            batch_tasks: self.training.batch_tasks,
            targets_per_task: self.training.targets_per_task,
            k_interval: (self.training.k_min, self.training.k_max),
            lr: self.training.lr,
            augment: self.training.augment,
            seed: self.training.seed,
        }
    }

    pub fn architecture(&self) -> Result<Architecture> {
        let arch = Architecture {
            patch_size: self.render.patch_size,
            conv1_channels: self.training.conv1_channels,
            conv1_kernel: self.training.conv1_kernel,
            conv2_channels: self.training.conv2_channels,
            conv2_kernel: self.training.conv2_kernel,
            hidden: self.training.hidden,
            repr_dim: self.training.repr_dim,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn model_kind(&self) -> Result<ModelKind> {
        self.training.model.parse()
    }

    pub fn aggregator(&self) -> Result<Aggregator> {
        self.training.aggregator.parse()
    }

    pub fn strategy(&self) -> Result<ContextStrategy> {
        self.eval.strategy.parse()
    }

    pub fn benchmark_config(&self, seed: u64) -> Result<BenchmarkConfig> {
        Ok(BenchmarkConfig {
            trials: self.eval.trials,
            pool_size: self.eval.pool_size,
            context_budget: self.eval.context_budget,
            strategy: self.strategy()?,
            seed,
        })
    }
}

/// Lowercase hex of a hash, as stored in manifests.
pub fn hash_hex(hash: &[u8; 32]) -> String {
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default_config() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.dataset.instances_per_category, 210);
        assert_eq!(cfg.train_config().k_interval, (1, 15));
        assert_eq!(cfg.eval.k_values.len(), 21);
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let cfg = ExperimentConfig::from_toml_str(
            "[training]\nsteps = 100\n\n[render]\npatch_size = 32\n",
        )
        .unwrap();
        assert_eq!(cfg.training.steps, 100);
        assert_eq!(cfg.training.batch_tasks, 16);
        assert_eq!(cfg.render.patch_size, 32);
        assert_eq!(cfg.collect_params().patch_size, 32);
    }

    #[test]
    fn unknown_keys_are_rejected_everywhere() {
        for text in [
            "[dataset]\ninstances = 210\n", // misspelled field
            "[simulation]\ngravity = 9.81\n", // unknown section
            "[training]\nlearning_rate = 0.001\n",
        ] {
            let got = ExperimentConfig::from_toml_str(text);
            assert!(matches!(got, Err(CoreError::Config(_))), "{text}");
        }
    }

    #[test]
    fn bad_values_fail_validation_not_conversion() {
        for text in [
            "[render]\npatch_size = 48\n",
            "[training]\nmodel = \"cnn\"\n",
            "[training]\naggregator = \"max\"\n",
            "[eval]\nstrategy = \"greedy\"\n",
            "[dataset]\ncategories = 2\n",
            "[training]\nk_min = 9\nk_max = 3\n",
            "[eval]\nk_values = [40]\n", // cannot be served by 30 grasps
        ] {
            assert!(ExperimentConfig::from_toml_str(text).is_err(), "{text}");
        }
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ExperimentConfig::default().content_hash().unwrap();
        let b = ExperimentConfig::default().content_hash().unwrap();
        assert_eq!(a, b);
        let mut cfg = ExperimentConfig::default();
        cfg.training.lr = 1.0001e-3;
        assert_ne!(cfg.content_hash().unwrap(), a);
        assert_eq!(hash_hex(&a).len(), 64);
    }

    #[test]
    fn conversions_match_the_section_values() {
        let cfg = ExperimentConfig::from_toml_str(
            "[physics]\nclamp_force = 25.0\n\n[dataset]\ncategories = 4\nseed = 7\n",
        )
        .unwrap();
        assert_eq!(cfg.physics_params().clamp_force, 25.0);
        assert_eq!(cfg.physics_params().gravity, 9.81);
        let dp = cfg.dataset_params();
        assert_eq!(dp.categories, vec![0, 1, 2, 3]);
        assert_eq!(dp.seed, 7);
        assert_eq!(cfg.model_kind().unwrap(), ModelKind::Condex);
        let arch = cfg.architecture().unwrap();
        assert_eq!(arch.patch_size, 64);
        assert_eq!(arch.repr_dim, 32);
    }
}
