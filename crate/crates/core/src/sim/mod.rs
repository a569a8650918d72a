//! Closed-loop convoy simulation: plant stepping, localization, controller
//! scheduling, logging and metrics.

pub mod config;
mod engine;
pub mod log;
pub mod metrics;
pub mod scenario;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::geometry::Pose2;

pub use config::{ControllerKind, ConvoyConfig, Disturbance, RobotConfig, Topology};
pub use engine::run;
pub use log::TrajectoryLog;
pub use metrics::{compute_metrics, coupling_check, MetricsReport, SeriesStats};
pub use scenario::{generate_scenario, Scenario, ScenarioConfig};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    /// The log holds every row up to and including the offending tick.
    #[error("run aborted: {reason}")]
    Aborted { reason: String, log: Box<TrajectoryLog> },
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: TrajectoryLog,
    pub metrics: MetricsReport,
}

/// Random stream `stream` of the run seeded with `seed`. Each consumer owns
/// one stream, so adding a consumer never perturbs the others.
pub fn seed_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Noisy localization fix: the true pose shifted by `bias` in the body
/// frame, then perturbed per axis (`noise_std` on x and y, `noise_std / 1 m`
/// radians on the heading).
pub fn localize(truth: &Pose2, noise_std: f64, bias: &Pose2, rng: &mut ChaCha8Rng) -> Pose2 {
    let biased = truth.compose(bias);
    if !(noise_std > 0.0) {
        return biased;
    }
    let n = Normal::new(0.0, noise_std).expect("positive std");
    let (dx, dy, dth) = (n.sample(rng), n.sample(rng), n.sample(rng));
    Pose2::new(biased.x + dx, biased.y + dy, crate::geometry::wrap_angle(biased.theta + dth))
}
