//! Run configuration: one TOML document with a section per pipeline stage.
//! Every field has a default, unknown keys are rejected, and the config hash
//! is the SHA-256 of the canonical (key-sorted) JSON form.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use uwbloc_core::eval::LabelSource;
use uwbloc_core::go::GoConfig;
use uwbloc_core::sim::{BiasFieldParams, CampusParams, NoiseModel, TrialSettings};
use uwbloc_core::{TagMount, Vec3};
use uwbloc_models::{CellKind, MambaConfig, ModelConfig, RnnConfig, TrainConfig};

use crate::CliError;

pub const DESK_PROFILE: &str = include_str!("../configs/desk.toml");
pub const FULL_PROFILE: &str = include_str!("../configs/full.toml");

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentSection {
    pub campus: CampusParams,
    pub bias_field: BiasFieldParams,
}

/// Range noise; `max_range = 0` means unlimited.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub sigma_range: f64,
    pub p_outlier: f64,
    pub outlier_spread: f64,
    pub nlos_bias: f64,
    pub p_detect_los: f64,
    pub p_detect_nlos: f64,
    pub max_range: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            sigma_range: 0.1,
            p_outlier: 0.03,
            outlier_spread: 30.0,
            nlos_bias: 2.0,
            p_detect_los: 0.95,
            p_detect_nlos: 0.15,
            max_range: 150.0,
        }
    }
}

impl NoiseSection {
    pub fn model(&self) -> NoiseModel {
        NoiseModel {
            sigma_range: self.sigma_range,
            p_outlier: self.p_outlier,
            outlier_spread: self.outlier_spread,
            nlos_bias: self.nlos_bias,
            p_detect_los: self.p_detect_los,
            p_detect_nlos: self.p_detect_nlos,
            max_range: (self.max_range > 0.0).then_some(self.max_range),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySection {
    pub n_trials: usize,
    pub n_test: usize,
    pub waypoint_count: usize,
    /// Meters per second.
    pub speed: f64,
    /// Trajectory sample spacing, seconds.
    pub dt: f64,
    /// Ranging rate per tag-anchor pair, Hz.
    pub rate_hz: f64,
    pub mounts: Vec<TagMount>,
}

impl Default for TrajectorySection {
    fn default() -> Self {
        Self {
            n_trials: 23,
            n_test: 5,
            waypoint_count: 5,
            speed: 6.0,
            dt: 0.01,
            rate_hz: 10.0,
            mounts: vec![
                TagMount::new(0, Vec3::new(0.6, 0.0, 1.0)),
                TagMount::new(1, Vec3::new(-0.6, 0.0, 1.0)),
            ],
        }
    }
}

impl TrajectorySection {
    pub fn settings(&self, noise: &NoiseSection) -> TrialSettings {
        TrialSettings {
            mounts: self.mounts.clone(),
            noise: noise.model(),
            rate_hz: self.rate_hz,
            waypoint_count: self.waypoint_count,
            speed: self.speed,
            dt: self.dt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    /// Window length in 50 ms frames.
    pub window: usize,
    /// Number of tags fed to the learners, taken in mount order.
    pub tags: usize,
    pub labels: LabelSource,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            window: 100,
            tags: 2,
            labels: LabelSource::Osl,
        }
    }
}

/// Learned model families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mamba,
    Gru,
    Lstm,
    Bilstm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Mamba, ModelKind::Gru, ModelKind::Lstm, ModelKind::Bilstm];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mamba => "mamba",
            ModelKind::Gru => "gru",
            ModelKind::Lstm => "lstm",
            ModelKind::Bilstm => "bilstm",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown model '{s}' (expected mamba, gru, lstm or bilstm)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MambaSection {
    pub d_model: usize,
    pub n_blocks: usize,
    pub d_state: usize,
    pub expand: usize,
    pub conv_width: usize,
}

impl Default for MambaSection {
    fn default() -> Self {
        let m = MambaConfig::default();
        Self {
            d_model: m.d_model,
            n_blocks: m.n_blocks,
            d_state: m.d_state,
            expand: m.expand,
            conv_width: m.conv_width,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RnnSection {
    pub hidden_size: usize,
    pub n_layers: usize,
}

impl Default for RnnSection {
    fn default() -> Self {
        let r = RnnConfig::default();
        Self {
            hidden_size: r.hidden_size,
            n_layers: r.n_layers,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Models trained by `train` and scored by `evaluate`.
    pub methods: Vec<ModelKind>,
    pub mamba: MambaSection,
    pub rnn: RnnSection,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            methods: vec![ModelKind::Mamba, ModelKind::Bilstm],
            mamba: MambaSection::default(),
            rnn: RnnSection::default(),
        }
    }
}

impl ModelSection {
    /// Full model config for `kind` on data with the given dimensions.
    pub fn build(&self, kind: ModelKind, input_dim: usize, label_dim: usize, window: usize) -> ModelConfig {
        let rnn = |cell| {
            ModelConfig::Rnn(RnnConfig {
                cell,
                hidden_size: self.rnn.hidden_size,
                n_layers: self.rnn.n_layers,
                input_dim,
                label_dim,
            })
        };
        match kind {
            ModelKind::Mamba => ModelConfig::Mamba(MambaConfig {
                input_dim,
                d_model: self.mamba.d_model,
                n_blocks: self.mamba.n_blocks,
                d_state: self.mamba.d_state,
                expand: self.mamba.expand,
                conv_width: self.mamba.conv_width,
                label_dim,
                s: window,
            }),
            ModelKind::Gru => rnn(CellKind::Gru),
            ModelKind::Lstm => rnn(CellKind::Lstm),
            ModelKind::Bilstm => rnn(CellKind::BiLstm),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Score the test split every this many epochs during training; 0 only
    /// scores the final model.
    pub test_every: usize,
    pub ablation_models: Vec<ModelKind>,
    /// Epochs per ablation run; 0 uses `train.epochs`.
    pub ablation_epochs: usize,
    /// Training repeats per ablation cell; 0 uses `train.repeats`.
    pub ablation_repeats: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            test_every: 0,
            ablation_models: vec![ModelKind::Mamba, ModelKind::Bilstm],
            ablation_epochs: 0,
            ablation_repeats: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub environment: EnvironmentSection,
    pub noise: NoiseSection,
    pub trajectory: TrajectorySection,
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub go: GoConfig,
    pub eval: EvalSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// A bundled profile: `desk` (small, fast) or `full` (full sizes).
    pub fn profile(name: &str) -> Result<Self, CliError> {
        match name {
            "desk" => Self::from_toml(DESK_PROFILE),
            "full" => Self::from_toml(FULL_PROFILE),
            other => Err(CliError::Config(format!("unknown profile '{other}' (expected desk or full)"))),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        let t = &self.trajectory;
        if t.n_trials == 0 {
            return bad("trajectory.n_trials must be positive");
        }
        if t.mounts.is_empty() {
            return bad("trajectory.mounts must list at least one tag");
        }
        if self.dataset.tags == 0 || self.dataset.tags > t.mounts.len() {
            return bad("dataset.tags must be between 1 and the number of mounts");
        }
        if self.dataset.window == 0 {
            return bad("dataset.window must be positive");
        }
        if self.model.methods.is_empty() {
            return bad("model.methods must not be empty");
        }
        self.noise.model().validate()?;
        self.go.validate()?;
        self.train.validate()?;
        for kind in ModelKind::ALL {
            self.model.build(kind, 1, 1, self.dataset.window).validate()?;
        }
        Ok(())
    }

    /// SHA-256 (hex) of the key-sorted JSON form; independent of how the
    /// TOML source ordered or omitted keys.
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let canonical = serde_json::to_string(&value).expect("json value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// TOML with every field spelled out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
