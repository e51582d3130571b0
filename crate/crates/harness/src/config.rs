//! Experiment configuration, one TOML file per experiment.
//!
//! Every section has defaults, so an empty file is a valid configuration
//! (three synthetic users, default channel and requirement).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use marqoe_core::allocator::{QoeRequirement, SweepParams};
use marqoe_core::dtwin::{QoeHyperParams, TwinConfig};
use marqoe_core::geometry::{CellGrid, FrustumParams};
use marqoe_core::trace::{load_trace, user_id_from_file_name};
use marqoe_core::{synthetic, ChannelModel, PoseTrace, PredictorConfig, Scene, SnrDistribution};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
#[error("config: {0}")]
pub struct ConfigError(pub String);

fn bad(e: impl std::fmt::Display) -> ConfigError {
    ConfigError(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trace: TraceSection,
    pub geometry: GeometrySection,
    pub prediction: PredictorConfig,
    pub channel: ChannelSection,
    pub twin: TwinSection,
    pub requirement: RequirementSection,
    pub sweep: SweepSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            trace: TraceSection::default(),
            geometry: GeometrySection::default(),
            prediction: PredictorConfig::default(),
            channel: ChannelSection::default(),
            twin: TwinSection::default(),
            requirement: RequirementSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceSection {
    /// Directory of canonical `user_<id>.csv` files.
    pub dir: Option<PathBuf>,
    pub frame_rate: f64,
    /// Frames generated per synthetic user.
    pub frames: usize,
    pub synthetic: Vec<SyntheticUser>,
}

impl Default for TraceSection {
    fn default() -> Self {
        Self {
            dir: None,
            frame_rate: synthetic::FRAME_RATE,
            frames: 300,
            synthetic: vec![
                SyntheticUser::new("linear", SyntheticKind::LinearSweep),
                SyntheticUser::new("calm", SyntheticKind::Calm),
                SyntheticUser::new("restless", SyntheticKind::Restless),
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    Constant,
    LinearSweep,
    Calm,
    Restless,
    HeadMotion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticUser {
    pub id: String,
    pub kind: SyntheticKind,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticUser {
    pub fn new(id: &str, kind: SyntheticKind) -> Self {
        Self {
            id: id.to_string(),
            kind,
            seed: 0,
        }
    }

    pub fn generate(&self, frames: usize) -> PoseTrace {
        match self.kind {
            SyntheticKind::Constant => synthetic::constant(&self.id, frames, synthetic::viewer_pose()),
            SyntheticKind::LinearSweep => synthetic::linear_sweep(&self.id, frames),
            SyntheticKind::Calm => synthetic::oscillating(&self.id, frames, synthetic::Oscillation::calm()),
            SyntheticKind::Restless => synthetic::oscillating(&self.id, frames, synthetic::Oscillation::restless()),
            SyntheticKind::HeadMotion => synthetic::head_motion(&self.id, frames, self.seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub origin: [f64; 3],
    pub extent: [f64; 3],
    pub divisions: [usize; 3],
    pub h_fov_deg: f64,
    pub v_fov_deg: f64,
    pub near: f64,
    pub far: f64,
    pub occlusion: bool,
    pub occlusion_bucket_deg: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        let f = FrustumParams::default();
        Self {
            origin: [-0.5, 0.0, -0.25],
            extent: [1.0, 2.0, 0.5],
            divisions: [4, 4, 2],
            h_fov_deg: f.h_fov_deg,
            v_fov_deg: f.v_fov_deg,
            near: f.near,
            far: f.far,
            occlusion: true,
            occlusion_bucket_deg: f.occlusion_bucket_deg,
        }
    }
}

impl GeometrySection {
    pub fn scene(&self) -> Result<Scene, ConfigError> {
        let frustum = FrustumParams {
            h_fov_deg: self.h_fov_deg,
            v_fov_deg: self.v_fov_deg,
            near: self.near,
            far: self.far,
            occlusion_bucket_deg: self.occlusion_bucket_deg,
        };
        frustum.validate().map_err(bad)?;
        Ok(Scene {
            grid: CellGrid::new(self.origin, self.extent, self.divisions).map_err(bad)?,
            frustum,
            occlusion: self.occlusion,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnrKind {
    Exponential,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub snr: SnrKind,
    /// Mean SNR (linear), or the fixed SNR for `constant`.
    pub mean_snr: f64,
    /// Truncation point of the exponential SNR; defaults to 1% of the mean.
    pub gamma_min: Option<f64>,
    /// Bits uploaded per selected frame.
    pub alpha_bits: f64,
    /// Latency limit `T` in seconds.
    pub max_latency: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            snr: SnrKind::Exponential,
            mean_snr: 10.0,
            gamma_min: None,
            alpha_bits: 1e5,
            max_latency: 0.05,
        }
    }
}

impl ChannelSection {
    pub fn model(&self) -> Result<ChannelModel, ConfigError> {
        let snr = match self.snr {
            SnrKind::Constant => SnrDistribution::Constant { snr: self.mean_snr },
            SnrKind::Exponential => SnrDistribution::Exponential {
                mean: self.mean_snr,
                gamma_min: self.gamma_min.unwrap_or(0.01 * self.mean_snr),
            },
        };
        ChannelModel::new(snr, self.alpha_bits).map_err(bad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwinSection {
    /// Upload frequencies (Hz) the twin is trained on.
    pub frequencies: Vec<f64>,
    pub bins: usize,
    pub hidden: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub l2: f64,
    pub holdout_fraction: f64,
}

impl Default for TwinSection {
    fn default() -> Self {
        let t = TwinConfig::default();
        Self {
            frequencies: t.frequencies,
            bins: t.qoe.bins,
            hidden: t.qoe.hidden,
            learning_rate: t.qoe.learning_rate,
            max_epochs: t.qoe.max_epochs,
            patience: t.qoe.patience,
            l2: t.qoe.l2,
            holdout_fraction: t.qoe.holdout_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RequirementSection {
    pub vchr_threshold: f64,
    pub rho: f64,
    pub epsilon: f64,
    /// Per-user VCHR thresholds overriding `vchr_threshold`.
    pub per_user: BTreeMap<String, f64>,
}

impl Default for RequirementSection {
    fn default() -> Self {
        Self {
            vchr_threshold: 0.8,
            rho: 0.9,
            epsilon: 0.9,
            per_user: BTreeMap::new(),
        }
    }
}

impl RequirementSection {
    pub fn for_user(&self, user_id: &str) -> QoeRequirement {
        QoeRequirement {
            vchr_threshold: self.per_user.get(user_id).copied().unwrap_or(self.vchr_threshold),
            rho: self.rho,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub b_min: f64,
    pub b_max: f64,
    pub delta: f64,
    /// Frequencies for the `sweep` command; defaults to the twin's.
    pub lambdas: Option<Vec<f64>>,
    /// Replays per user for `allocate --validate`.
    pub replays: usize,
    /// Allowed shortfall of the replayed probability below `epsilon`.
    pub validation_band: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            b_min: 1e5,
            b_max: 2e7,
            delta: 1e5,
            lambdas: None,
            replays: 10_000,
            validation_band: 0.05,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(bad)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file, returning it with its raw bytes.
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), ConfigError> {
        let bytes = std::fs::read(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let text = std::str::from_utf8(&bytes).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(text)?;
        // relative trace directories are relative to the config file
        if let (Some(dir), Some(parent)) = (&cfg.trace.dir, path.parent()) {
            if dir.is_relative() {
                cfg.trace.dir = Some(parent.join(dir));
            }
        }
        cfg.check_files()?;
        Ok((cfg, bytes))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.trace.frame_rate > 0.0 && self.trace.frame_rate.is_finite()) {
            return Err(ConfigError(format!(
                "frame_rate must be positive, got {}",
                self.trace.frame_rate
            )));
        }
        if self.trace.frames == 0 {
            return Err(ConfigError("trace.frames must be positive".into()));
        }
        self.geometry.scene()?;
        self.prediction.validate().map_err(bad)?;
        self.channel.model()?;
        self.twin_config().qoe.validate().map_err(bad)?;
        if self.twin.frequencies.is_empty() {
            return Err(ConfigError("twin.frequencies is empty".into()));
        }
        for &f in self.twin.frequencies.iter().chain(self.sweep.lambdas.iter().flatten()) {
            if !(f > 0.0 && f <= self.trace.frame_rate) {
                return Err(ConfigError(format!("frequency {f} outside (0, frame_rate]")));
            }
        }
        if self.sweep.lambdas.as_ref().is_some_and(|l| l.is_empty()) {
            return Err(ConfigError("sweep.lambdas is empty".into()));
        }
        self.requirement.for_user("").validate().map_err(bad)?;
        for user in self.requirement.per_user.keys() {
            self.requirement
                .for_user(user)
                .validate()
                .map_err(|e| ConfigError(format!("user {user}: {e}")))?;
        }
        self.sweep_params().validate().map_err(bad)?;
        if !(0.0..1.0).contains(&self.sweep.validation_band) {
            return Err(ConfigError("sweep.validation_band outside [0, 1)".into()));
        }
        if self.trace.dir.is_none() && self.trace.synthetic.is_empty() {
            return Err(ConfigError("no users: set trace.dir or trace.synthetic".into()));
        }
        Ok(())
    }

    fn check_files(&self) -> Result<(), ConfigError> {
        if let Some(dir) = &self.trace.dir {
            if !dir.is_dir() {
                return Err(ConfigError(format!("trace directory {} does not exist", dir.display())));
            }
        }
        Ok(())
    }

    pub fn twin_config(&self) -> TwinConfig {
        TwinConfig {
            predictor: self.prediction.clone(),
            qoe: QoeHyperParams {
                bins: self.twin.bins,
                hidden: self.twin.hidden,
                learning_rate: self.twin.learning_rate,
                max_epochs: self.twin.max_epochs,
                patience: self.twin.patience,
                l2: self.twin.l2,
                holdout_fraction: self.twin.holdout_fraction,
                seed: self.seed,
            },
            frequencies: self.twin.frequencies.clone(),
        }
    }

    pub fn sweep_params(&self) -> SweepParams {
        SweepParams {
            b_min: self.sweep.b_min,
            b_max: self.sweep.b_max,
            delta: self.sweep.delta,
            max_latency: self.channel.max_latency,
        }
    }

    pub fn sweep_lambdas(&self) -> Vec<f64> {
        self.sweep
            .lambdas
            .clone()
            .unwrap_or_else(|| self.twin.frequencies.clone())
    }

    /// Traces from `trace.dir` followed by the synthetic users, sorted by id.
    pub fn load_users(&self) -> anyhow::Result<Vec<PoseTrace>> {
        let mut users = Vec::new();
        if let Some(dir) = &self.trace.dir {
            let mut files: Vec<(String, PathBuf)> = std::fs::read_dir(dir)?
                .filter_map(|e| e.ok())
                .filter_map(|e| {
                    let name = e.file_name().to_string_lossy().into_owned();
                    user_id_from_file_name(&name).map(|id| (id.to_string(), e.path()))
                })
                .collect();
            files.sort();
            for (id, path) in files {
                users.push(load_trace(&path, &id, self.trace.frame_rate)?);
            }
        }
        for s in &self.trace.synthetic {
            users.push(s.generate(self.trace.frames));
        }
        users.sort_by(|a, b| a.user_id().cmp(b.user_id()));
        if let Some(w) = users.windows(2).find(|w| w[0].user_id() == w[1].user_id()) {
            anyhow::bail!(ConfigError(format!("duplicate user id {}", w[0].user_id())));
        }
        Ok(users)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
