use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anchor_estimator::{NoiseParams, PriorParams};
use crate::controller::PidGains;
use crate::geometry::Vec3;
use crate::perception::PerceptionParams;
use crate::planner::TyingShape;
use crate::simulator::{
    CameraModel, Cylinder, DetectorParams, OdomDrift, RobotParams, MAX_REEL_RATE, MAX_WINCHES,
    MAX_WINCH_TENSION,
};
use crate::target_manager::TargetManagerConfig;

pub const SCHEMA_VERSION: u32 = 1;
pub const MAX_ANCHORS: usize = 4;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("serializing scenario: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("unsupported schema version {found}, expected {SCHEMA_VERSION}")]
    SchemaVersion { found: u32 },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotConfig {
    pub position: Vec3,
    #[serde(default)]
    pub yaw: f64,
    pub mass: f64,
    /// Camera head center in the robot frame.
    pub camera_offset: Vec3,
    #[serde(default)]
    pub params: RobotParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorConfig {
    /// Take-off pad in the robot frame; also the init frame origin.
    pub pad: Vec3,
    /// Wire exit of this anchor's winch in the robot frame.
    pub winch_exit: Vec3,
    #[serde(default)]
    pub yaw: f64,
    /// Name of the cylinder to tie to.
    pub target: String,
    #[serde(default)]
    pub mirrored: bool,
    #[serde(default = "zero3")]
    pub odom_offset_u: Vec3,
    #[serde(default)]
    pub odom_offset_phi: f64,
    #[serde(default)]
    pub drift: OdomDrift,
}

fn zero3() -> Vec3 {
    Vec3::zeros()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecognitionConfig {
    /// Camera (yaw, pitch) look directions in the robot frame, rad.
    pub views: Vec<[f64; 2]>,
    pub dwell_ticks: u32,
    /// A track is ready once its covariance trace drops below this.
    pub ready_trace: f64,
    /// Designated tracks must lie within this distance of their cylinder's
    /// center.
    pub designation_radius: f64,
}

impl Default for RecognitionConfig {
    fn default() -> Self {
        Self {
            views: vec![[0.0, 0.5]],
            dwell_ticks: 10,
            ready_trace: 0.01,
            designation_radius: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaunchConfig {
    pub hover_height: f64,
    /// Accepted camera fixes required before an anchor counts as launched.
    pub min_fixes: u32,
    pub settle_tolerance: f64,
    pub gate_threshold: f64,
}

impl Default for LaunchConfig {
    fn default() -> Self {
        Self {
            hover_height: 0.8,
            min_fixes: 15,
            settle_tolerance: 0.15,
            gate_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TyingConfig {
    pub reach_tolerance: f64,
    /// Tie all launched anchors at once instead of one after another.
    pub concurrent: bool,
    /// Keep feeding camera fixes to the estimator while tying.
    pub camera_fixes: bool,
    /// Ticks the camera stays on one anchor when several are tying.
    pub camera_dwell_ticks: u32,
    pub shape: TyingShape,
    /// Clearance below which an anchor-to-cylinder approach is logged.
    pub proximity_margin: f64,
}

impl Default for TyingConfig {
    fn default() -> Self {
        Self {
            reach_tolerance: 0.1,
            concurrent: false,
            camera_fixes: true,
            camera_dwell_ticks: 4,
            shape: TyingShape::default(),
            proximity_margin: 0.03,
        }
    }
}

/// What the robot does with its tied wires.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum DrivePlan {
    /// Reel every tied wire in at `reel_rate` under `tension`.
    Climb {
        pretension: f64,
        pretension_duration: f64,
        tension: f64,
        reel_rate: f64,
        duration: f64,
        min_rise: f64,
    },
    /// Lift with equal constant tension, then shift the robot along ±x, ±y
    /// and +z by biasing the tensions.
    Maneuver {
        pretension: f64,
        pretension_duration: f64,
        lift_tension: f64,
        lift_duration: f64,
        delta: f64,
        step_duration: f64,
        min_displacement: f64,
    },
}

impl DrivePlan {
    fn max_tension(&self) -> f64 {
        match self {
            DrivePlan::Climb { pretension, tension, .. } => pretension.max(*tension),
            DrivePlan::Maneuver {
                pretension,
                lift_tension,
                delta,
                ..
            } => pretension.max(lift_tension + delta),
        }
    }
}

/// Per-phase time budgets, s. Launch and tie budgets are per anchor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseBudgets {
    pub recognize: f64,
    pub launch: f64,
    pub tie: f64,
}

impl Default for PhaseBudgets {
    fn default() -> Self {
        Self {
            recognize: 30.0,
            launch: 30.0,
            tie: 120.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub name: String,
    pub seed: u64,
    pub ticks_per_second: u32,
    /// Simulated time limit, s.
    pub duration: f64,
    pub robot: RobotConfig,
    pub cylinders: Vec<Cylinder>,
    pub anchors: Vec<AnchorConfig>,
    pub drive: DrivePlan,
    #[serde(default)]
    pub recognition: RecognitionConfig,
    #[serde(default)]
    pub launch: LaunchConfig,
    #[serde(default)]
    pub tying: TyingConfig,
    #[serde(default)]
    pub budgets: PhaseBudgets,
    #[serde(default)]
    pub noise: NoiseParams,
    #[serde(default)]
    pub prior: PriorParams,
    #[serde(default)]
    pub gains: PidGains,
    #[serde(default)]
    pub camera: CameraModel,
    #[serde(default)]
    pub detector: DetectorParams,
    #[serde(default)]
    pub perception: PerceptionParams,
    #[serde(default)]
    pub targets: TargetManagerConfig,
}

/// Shipped scenario presets.
pub const PRESETS: [(&str, &str); 3] = [
    ("cliff", include_str!("../../scenarios/cliff.toml")),
    ("branch", include_str!("../../scenarios/branch.toml")),
    ("four-wire", include_str!("../../scenarios/four_wire.toml")),
];

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    pub fn preset(name: &str) -> Option<Self> {
        PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| Self::from_toml(text).expect("shipped preset is valid"))
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.ticks_per_second as f64
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::SchemaVersion {
                found: self.schema_version,
            });
        }
        if self.ticks_per_second == 0 {
            return bad("ticks_per_second must be positive".into());
        }
        if !(self.duration >= 0.0) {
            return bad("duration must be non-negative".into());
        }
        if self.anchors.is_empty() || self.anchors.len() > MAX_ANCHORS {
            return bad(format!("anchor count {} outside 1..={MAX_ANCHORS}", self.anchors.len()));
        }
        if self.anchors.len() > MAX_WINCHES {
            return bad("more anchors than winches".into());
        }
        if !(self.robot.mass > 0.0) {
            return bad("robot mass must be positive".into());
        }
        let mut names = BTreeSet::new();
        for c in &self.cylinders {
            if !(c.radius > 0.0) {
                return bad(format!("cylinder {} has non-positive radius", c.name));
            }
            if !((c.p1 - c.p0).norm() > 0.0) {
                return bad(format!("cylinder {} has a zero-length axis", c.name));
            }
            if !names.insert(c.name.as_str()) {
                return bad(format!("duplicate cylinder name {}", c.name));
            }
        }
        for (i, a) in self.anchors.iter().enumerate() {
            let Some(c) = self.cylinders.iter().find(|c| c.name == a.target) else {
                return bad(format!("anchor {i} targets unknown cylinder {}", a.target));
            };
            if c.label.detection_label().is_none() {
                return bad(format!("anchor {i} targets obstacle {}", a.target));
            }
        }
        if self.drive.max_tension() > MAX_WINCH_TENSION {
            return bad(format!("drive tension exceeds {MAX_WINCH_TENSION} N"));
        }
        if let DrivePlan::Climb { reel_rate, .. } = self.drive {
            if !(0.0..=MAX_REEL_RATE).contains(&reel_rate) {
                return bad(format!("reel rate outside [0, {MAX_REEL_RATE}] m/s"));
            }
        }
        if self.recognition.views.is_empty() {
            return bad("recognition needs at least one camera view".into());
        }
        Ok(())
    }
}
