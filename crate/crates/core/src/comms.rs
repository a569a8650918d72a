//! Simulated leader→follower link and the direct range sensor.
//!
//! Messages are delivered through a priority queue keyed by delivery time,
//! ties broken by send order, so a fixed seed gives a fixed delivery trace.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{wrap_angle, Pose2};
use crate::vehicle::ControlInput;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CommsError {
    #[error("invalid channel configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid rollout: {0}")]
    InvalidRollout(String),
}

/// Predicted trajectory published by a robot each control cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutMessage {
    pub sender: usize,
    pub stamp: f64,
    pub poses: Vec<Pose2>,
    pub times: Vec<f64>,
    pub current_fix: Pose2,
    pub fix_stamp: f64,
}

impl RolloutMessage {
    pub fn new(
        sender: usize,
        stamp: f64,
        poses: Vec<Pose2>,
        times: Vec<f64>,
        current_fix: Pose2,
        fix_stamp: f64,
    ) -> Result<Self, CommsError> {
        if poses.len() < 2 || poses.len() != times.len() {
            return Err(CommsError::InvalidRollout(format!("{} poses with {} stamps", poses.len(), times.len())));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(CommsError::InvalidRollout("stamps not strictly increasing".into()));
        }
        Ok(Self { sender, stamp, poses, times, current_fix, fix_stamp })
    }
}

/// A localization fix with the sender's speed, for constant-velocity
/// extrapolation on the receiving side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixMessage {
    pub sender: usize,
    pub stamp: f64,
    pub pose: Pose2,
    pub path_s: f64,
    pub speed: f64,
    pub u_act: ControlInput,
}

/// An input computed elsewhere (centralized MPC) for `target` to apply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandMessage {
    pub target: usize,
    pub stamp: f64,
    pub input: ControlInput,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Rollout(RolloutMessage),
    Fix(FixMessage),
    Command(CommandMessage),
}

/// Channel and range-sensor block of the scenario configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelConfig {
    pub base_delay_s: f64,
    pub jitter_std_s: f64,
    pub drop_prob: f64,
    pub range_noise_std_m: f64,
    pub range_bias_m: f64,
    pub range_max_m: f64,
    pub range_fov_rad: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            base_delay_s: 0.020,
            jitter_std_s: 0.005,
            drop_prob: 0.0,
            range_noise_std_m: 0.005,
            range_bias_m: 0.0,
            range_max_m: 10.0,
            range_fov_rad: 1.2,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<(), CommsError> {
        let bad = |m: &str| Err(CommsError::InvalidConfig(m.to_string()));
        if !(self.base_delay_s >= 0.0) {
            return bad("base_delay_s must be non-negative");
        }
        if !(self.jitter_std_s >= 0.0) {
            return bad("jitter_std_s must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return bad("drop_prob must lie in [0, 1]");
        }
        if !(self.range_noise_std_m >= 0.0 && self.range_max_m > 0.0 && self.range_fov_rad > 0.0) {
            return bad("range sensor noise, range and field of view must be positive");
        }
        Ok(())
    }

    pub fn range_sensor(&self) -> RangeSensor {
        RangeSensor {
            noise_std: self.range_noise_std_m,
            bias: self.range_bias_m,
            max_range: self.range_max_m,
            fov: self.range_fov_rad,
        }
    }
}

struct Pending<T> {
    deliver_at: f64,
    seq: u64,
    msg: T,
}

impl<T> PartialEq for Pending<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T> Eq for Pending<T> {}

impl<T> PartialOrd for Pending<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T> Ord for Pending<T> {
    // reversed: BinaryHeap is a max-heap and we pop the earliest delivery
    fn cmp(&self, other: &Self) -> Ordering {
        other.deliver_at.total_cmp(&self.deliver_at).then_with(|| other.seq.cmp(&self.seq))
    }
}

/// One directed link with its own random stream.
pub struct Channel<T> {
    config: ChannelConfig,
    rng: ChaCha8Rng,
    jitter: Option<Normal<f64>>,
    queue: BinaryHeap<Pending<T>>,
    next_seq: u64,
    dropped: u64,
}

impl<T> Channel<T> {
    pub fn new(config: ChannelConfig, rng: ChaCha8Rng) -> Result<Self, CommsError> {
        config.validate()?;
        let jitter = if config.jitter_std_s > 0.0 {
            Some(Normal::new(0.0, config.jitter_std_s).map_err(|e| CommsError::InvalidConfig(e.to_string()))?)
        } else {
            None
        };
        Ok(Self { config, rng, jitter, queue: BinaryHeap::new(), next_seq: 0, dropped: 0 })
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.config
    }

    /// Sample a jitter truncated to ±3σ and to no earlier than `now`.
    fn sample_jitter(&mut self) -> f64 {
        let Some(dist) = self.jitter else { return 0.0 };
        let limit = 3.0 * self.config.jitter_std_s;
        let floor = (-self.config.base_delay_s).max(-limit);
        for _ in 0..64 {
            let j = dist.sample(&mut self.rng);
            if j >= floor && j <= limit {
                return j;
            }
        }
        0.0
    }

    /// Enqueue `msg`, or drop it with probability `drop_prob`.
    /// Returns whether the message was accepted.
    pub fn send(&mut self, msg: T, now: f64) -> bool {
        let seq = self.next_seq;
        self.next_seq += 1;
        if self.config.drop_prob > 0.0 && self.rng.random::<f64>() < self.config.drop_prob {
            self.dropped += 1;
            return false;
        }
        let deliver_at = now + self.config.base_delay_s + self.sample_jitter();
        self.queue.push(Pending { deliver_at, seq, msg });
        true
    }

    /// Remove and return everything delivered by `now`, in delivery order.
    pub fn poll(&mut self, now: f64) -> Vec<T> {
        let mut out = Vec::new();
        while self.queue.peek().is_some_and(|p| p.deliver_at <= now + 1e-12) {
            out.push(self.queue.pop().expect("peeked").msg);
        }
        out
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeMeasurement {
    pub distance: f64,
    pub stamp: f64,
    pub valid: bool,
}

/// Line-of-sight range sensor mounted on the follower, facing forward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeSensor {
    pub noise_std: f64,
    pub bias: f64,
    pub max_range: f64,
    pub fov: f64,
}

/// Measure the leader's distance from the follower. Invalid when the leader
/// is out of range or outside the forward field of view.
pub fn measure_range(
    leader: &Pose2,
    follower: &Pose2,
    sensor: &RangeSensor,
    stamp: f64,
    rng: &mut ChaCha8Rng,
) -> RangeMeasurement {
    let dx = leader.x - follower.x;
    let dy = leader.y - follower.y;
    let gap = dx.hypot(dy);
    let bearing = wrap_angle(dy.atan2(dx) - follower.theta);
    let noise = if sensor.noise_std > 0.0 {
        Normal::new(0.0, sensor.noise_std).map(|n| n.sample(rng)).unwrap_or(0.0)
    } else {
        0.0
    };
    let distance = gap + sensor.bias + noise;
    let valid = gap <= sensor.max_range && bearing.abs() <= 0.5 * sensor.fov && distance > 0.0;
    RangeMeasurement { distance, stamp, valid }
}
