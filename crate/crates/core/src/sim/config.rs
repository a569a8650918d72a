//! Scenario configuration document.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::scenario::{Scenario, ScenarioConfig};
use super::SimError;
use crate::comms::ChannelConfig;
use crate::geometry::Pose2;
use crate::mpc::MpcConfig;
use crate::planner::{PiGains, SpacingMode};
use crate::vehicle::VehicleParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Dmpc,
    Cmpc,
    Piloc,
    Pireflec,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 4] =
        [ControllerKind::Dmpc, ControllerKind::Cmpc, ControllerKind::Piloc, ControllerKind::Pireflec];

    pub fn name(&self) -> &'static str {
        match self {
            ControllerKind::Dmpc => "dmpc",
            ControllerKind::Cmpc => "cmpc",
            ControllerKind::Piloc => "piloc",
            ControllerKind::Pireflec => "pireflec",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name().eq_ignore_ascii_case(s.trim()))
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Which robot each follower keeps its distance to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    /// Every follower tracks the head robot at a multiple of the spacing.
    #[default]
    Star,
    /// Every follower tracks its immediate predecessor.
    Chain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobotConfig {
    /// Plant parameters.
    pub params: VehicleParams,
    /// Controller model parameters; the plant's when absent.
    pub model: Option<VehicleParams>,
    pub loc_noise_std: f64,
    /// Constant localization offset in the robot's body frame.
    pub loc_bias: Pose2,
}

impl Default for RobotConfig {
    fn default() -> Self {
        Self { params: VehicleParams::default(), model: None, loc_noise_std: 0.0, loc_bias: Pose2::IDENTITY }
    }
}

/// A forced speed reduction applied to one robot's command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    pub robot: usize,
    pub start_s: f64,
    pub duration_s: f64,
    #[serde(default)]
    pub speed_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvoyConfig {
    pub scenario: ScenarioConfig,
    pub robots: Vec<RobotConfig>,
    pub controller: ControllerKind,
    pub spacing_mode: SpacingMode,
    pub topology: Topology,
    pub d_target: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub v_des: f64,
    /// Time for the leader's reference speed to ramp from 0 to `v_des`.
    pub ramp_time_s: f64,
    pub control_rate_hz: f64,
    pub sim_dt: f64,
    /// Run length limit; `laps` (closed paths) or the usable path length
    /// (open paths) ends the run earlier.
    pub duration_s: Option<f64>,
    pub laps: f64,
    /// Leader start arc length; followers are placed behind it.
    pub start_s: Option<f64>,
    pub channel: ChannelConfig,
    pub mpc: MpcConfig,
    pub pi: PiGains,
    pub seed: u64,
    pub coupling_travel_m: f64,
    pub transient_distance_m: f64,
    /// Lateral distance beyond the corridor that aborts the run.
    pub abort_margin_m: f64,
    pub disturbance: Option<Disturbance>,
}

impl Default for ConvoyConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig {
                shape: Scenario::RoundedRect { width: 60.0, height: 30.0, corner_radius: 5.0 },
                corridor_half_width: 0.5,
            },
            robots: vec![RobotConfig::default(), RobotConfig::default()],
            controller: ControllerKind::Dmpc,
            spacing_mode: SpacingMode::Euclidean,
            topology: Topology::Star,
            d_target: 1.5,
            d_min: 1.0,
            d_max: 2.0,
            v_des: 0.7,
            ramp_time_s: 0.0,
            control_rate_hz: 10.0,
            sim_dt: 0.01,
            duration_s: None,
            laps: 1.0,
            start_s: None,
            channel: ChannelConfig::default(),
            mpc: MpcConfig::default(),
            pi: PiGains::default(),
            seed: 0,
            coupling_travel_m: 0.27,
            transient_distance_m: 4.0,
            abort_margin_m: 0.5,
            disturbance: None,
        }
    }
}

impl ConvoyConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| SimError::Config(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Number of sim ticks per control period.
    pub fn ticks_per_control(&self) -> usize {
        (1.0 / (self.control_rate_hz * self.sim_dt)).round().max(1.0) as usize
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.robots.is_empty() {
            return bad("at least one robot is required".into());
        }
        if self.robots.len() < 2 {
            return bad("following controllers need at least 2 robots".into());
        }
        if !(self.d_min < self.d_target && self.d_target < self.d_max && self.d_min > 0.0) {
            return bad(format!(
                "need 0 < d_min < d_target < d_max, got {} / {} / {}",
                self.d_min, self.d_target, self.d_max
            ));
        }
        if !(self.v_des > 0.0) {
            return bad("v_des must be positive".into());
        }
        if !(self.control_rate_hz > 0.0 && self.sim_dt > 0.0) {
            return bad("control rate and sim_dt must be positive".into());
        }
        if self.sim_dt > 1.0 / (2.0 * self.control_rate_hz) + 1e-12 {
            return bad(format!("sim_dt {} exceeds half the control period", self.sim_dt));
        }
        let ratio = 1.0 / (self.control_rate_hz * self.sim_dt);
        if (ratio - ratio.round()).abs() > 1e-6 {
            return bad("the control period must be a whole number of sim ticks".into());
        }
        if !(self.laps > 0.0) || self.duration_s.is_some_and(|d| !(d > 0.0)) {
            return bad("laps and duration must be positive".into());
        }
        if !(self.coupling_travel_m > 0.0 && self.transient_distance_m >= 0.0 && self.abort_margin_m > 0.0) {
            return bad("coupling travel and abort margin must be positive".into());
        }
        if !(self.ramp_time_s >= 0.0) {
            return bad("ramp_time_s must be non-negative".into());
        }
        if !(self.pi.kp >= 0.0 && self.pi.ki > 0.0) {
            return bad("PI gains need kp >= 0 and ki > 0".into());
        }
        self.mpc.validate().map_err(|e| SimError::Config(e.to_string()))?;
        self.channel.validate().map_err(|e| SimError::Config(e.to_string()))?;
        for (i, r) in self.robots.iter().enumerate() {
            r.params.validate().map_err(|e| SimError::Config(format!("robot {i}: {e}")))?;
            if let Some(m) = &r.model {
                m.validate().map_err(|e| SimError::Config(format!("robot {i} model: {e}")))?;
            }
            if !(r.loc_noise_std >= 0.0) || !r.loc_bias.is_finite() {
                return bad(format!("robot {i}: localization noise must be non-negative"));
            }
        }
        match self.controller {
            ControllerKind::Cmpc if self.robots.len() != 2 => {
                return bad("the centralized controller supports exactly 2 robots".into());
            }
            ControllerKind::Pireflec if self.topology == Topology::Star && self.robots.len() > 2 => {
                return bad("range sensing needs line of sight; use the chain topology beyond 2 robots".into());
            }
            _ => {}
        }
        if let Some(d) = &self.disturbance {
            if d.robot == 0 || d.robot >= self.robots.len() || !(d.duration_s > 0.0) {
                return bad("disturbance must target an existing follower for a positive duration".into());
            }
        }
        Ok(())
    }
}
