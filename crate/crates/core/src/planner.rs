//! Reference pose generation for leaders and followers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comms::RolloutMessage;
use crate::geometry::{self, Pose2};
use crate::path::{PathCoord, PathError, TeachPath};

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("horizon must have at least 2 steps, got {0}")]
    ShortHorizon(usize),
    #[error("time step must be positive, got {0}")]
    BadTimeStep(f64),
    #[error("desired speed must be positive, got {0}")]
    BadSpeed(f64),
    #[error("rollout is stale: query at {query:.3} s, rollout covers [{first:.3}, {last:.3}] s")]
    StaleRollout { query: f64, first: f64, last: f64 },
    #[error(transparent)]
    Path(#[from] PathError),
}

/// How the follower measures its distance to the robot ahead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpacingMode {
    #[default]
    Euclidean,
    #[serde(alias = "arc_length", alias = "arc")]
    ArcLength,
}

/// K reference poses at `times[k] = now + (k + 1)·ΔT`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePlan {
    pub poses: Vec<Pose2>,
    pub times: Vec<f64>,
    /// Path arc length of each pose.
    pub s: Vec<f64>,
    /// Arc length of the extrapolated current position.
    pub anchor_s: f64,
    /// Open path ran out; the terminal pose is repeated.
    pub truncated: bool,
    /// Steps where the Euclidean offset had no solution and the arc-length
    /// offset was used instead.
    pub fallbacks: usize,
    /// A negative commanded speed was clamped to zero.
    pub clamped: bool,
}

impl ReferencePlan {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

fn check_horizon(k: usize, dt: f64) -> Result<(), PlannerError> {
    if k < 2 {
        return Err(PlannerError::ShortHorizon(k));
    }
    if !(dt > 0.0) {
        return Err(PlannerError::BadTimeStep(dt));
    }
    Ok(())
}

/// Place references along the path from `anchor_s`, advancing by
/// `speeds[k]·ΔT` before step k.
pub fn plan_along(
    path: &TeachPath,
    anchor_s: f64,
    speeds: &[f64],
    dt: f64,
    now: f64,
) -> Result<ReferencePlan, PlannerError> {
    check_horizon(speeds.len(), dt)?;
    let mut truncated = false;
    let clamp_open = |s: f64, truncated: &mut bool| -> f64 {
        if path.is_closed() {
            s
        } else if s > path.length() {
            *truncated = true;
            path.length()
        } else {
            s.max(0.0)
        }
    };
    let anchor = clamp_open(anchor_s, &mut truncated);
    let mut poses = Vec::with_capacity(speeds.len());
    let mut times = Vec::with_capacity(speeds.len());
    let mut svals = Vec::with_capacity(speeds.len());
    let mut s = anchor_s;
    for (k, v) in speeds.iter().enumerate() {
        s += v * dt;
        let sk = clamp_open(s, &mut truncated);
        let sk = path.normalize_s(sk)?;
        poses.push(path.pose_at(sk)?);
        times.push(now + (k + 1) as f64 * dt);
        svals.push(sk);
    }
    Ok(ReferencePlan {
        poses,
        times,
        s: svals,
        anchor_s: path.normalize_s(anchor)?,
        truncated,
        fallbacks: 0,
        clamped: false,
    })
}

/// Leader references at constant `v_des`, anchored at the localization fix
/// extrapolated to `now`.
pub fn plan_leader(
    path: &TeachPath,
    loc: &PathCoord,
    fix_stamp: f64,
    v_des: f64,
    k: usize,
    dt: f64,
    now: f64,
) -> Result<ReferencePlan, PlannerError> {
    if !(v_des > 0.0) {
        return Err(PlannerError::BadSpeed(v_des));
    }
    let anchor = loc.s + v_des * (now - fix_stamp);
    plan_along(path, anchor, &vec![v_des; k], dt, now)
}

/// Follower references at the PI speed. Negative speeds are clamped to zero.
pub fn plan_follower_pi(
    path: &TeachPath,
    loc: &PathCoord,
    fix_stamp: f64,
    v_ref: f64,
    k: usize,
    dt: f64,
    now: f64,
) -> Result<ReferencePlan, PlannerError> {
    let clamped = v_ref < 0.0;
    let v = v_ref.max(0.0);
    let anchor = loc.s + v * (now - fix_stamp);
    let mut plan = plan_along(path, anchor, &vec![v; k], dt, now)?;
    plan.clamped = clamped;
    Ok(plan)
}

/// Rollout poses at `query_times`, interpolated on the SE(2) geodesic
/// between bracketing samples. Queries up to `max_extrapolation` seconds past
/// the last sample continue the last segment at constant velocity.
pub fn interpolate_rollout_within(
    rollout: &RolloutMessage,
    query_times: &[f64],
    max_extrapolation: f64,
) -> Result<Vec<Pose2>, PlannerError> {
    let t = &rollout.times;
    let p = &rollout.poses;
    let n = t.len();
    let (first, last) = (t[0], t[n - 1]);
    query_times
        .iter()
        .map(|&q| {
            if q < first - 1e-12 || q > last + max_extrapolation + 1e-12 {
                return Err(PlannerError::StaleRollout { query: q, first, last });
            }
            if q >= last {
                let alpha = (q - t[n - 2]) / (t[n - 1] - t[n - 2]);
                return Ok(geometry::geodesic(&p[n - 2], &p[n - 1], alpha));
            }
            let i = t.partition_point(|&ti| ti <= q).saturating_sub(1).min(n - 2);
            let alpha = ((q - t[i]) / (t[i + 1] - t[i])).clamp(0.0, 1.0);
            Ok(geometry::interpolate(&p[i], &p[i + 1], alpha).expect("alpha clamped"))
        })
        .collect()
}

/// [`interpolate_rollout_within`] with the extrapolation limit set to the
/// rollout's own last sample spacing.
pub fn interpolate_rollout(rollout: &RolloutMessage, query_times: &[f64]) -> Result<Vec<Pose2>, PlannerError> {
    let n = rollout.times.len();
    let spacing = rollout.times[n - 1] - rollout.times[n - 2];
    interpolate_rollout_within(rollout, query_times, spacing)
}

/// Follower references at distance `d_target` behind each predicted leader
/// pose. `hint_s` seeds the leader projection search on looping paths.
pub fn plan_follower_distance_aware(
    path: &TeachPath,
    leader_poses: &[Pose2],
    times: &[f64],
    d_target: f64,
    mode: SpacingMode,
    hint_s: Option<f64>,
) -> Result<ReferencePlan, PlannerError> {
    if leader_poses.len() < 2 {
        return Err(PlannerError::ShortHorizon(leader_poses.len()));
    }
    let mut poses = Vec::with_capacity(leader_poses.len());
    let mut svals = Vec::with_capacity(leader_poses.len());
    let mut fallbacks = 0;
    let mut hint = hint_s;
    for lp in leader_poses {
        let anchor = match hint {
            Some(h) => path.project_near(lp, h, 2.0 + 4.0 * d_target).coord,
            None => path.project(lp),
        };
        hint = Some(anchor.s);
        let on_path = PathCoord::on_path(anchor.s);
        let behind = match mode {
            SpacingMode::ArcLength => arc_or_start(path, &on_path, d_target)?,
            SpacingMode::Euclidean => match path.offset_behind_euclidean(&on_path, d_target) {
                Ok(c) => c,
                Err(PathError::NoSolution { .. }) => {
                    fallbacks += 1;
                    arc_or_start(path, &on_path, d_target)?
                }
                Err(e) => return Err(e.into()),
            },
        };
        poses.push(path.pose_at(behind.s)?);
        svals.push(behind.s);
    }
    let anchor_s = svals[0];
    Ok(ReferencePlan { poses, times: times.to_vec(), s: svals, anchor_s, truncated: false, fallbacks, clamped: false })
}

// open paths: a leader closer than d to the start pins the follower at s=0
fn arc_or_start(path: &TeachPath, anchor: &PathCoord, d: f64) -> Result<PathCoord, PathError> {
    match path.offset_behind_arclength(anchor, d) {
        Err(PathError::OutOfRange { .. }) => Ok(PathCoord::on_path(0.0)),
        other => other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PiGains {
    pub kp: f64,
    pub ki: f64,
}

impl Default for PiGains {
    fn default() -> Self {
        Self { kp: 1.2, ki: 0.4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PiState {
    pub integral: f64,
    pub last_update: f64,
}

/// One PI update. `e_dist` is positive when the gap is too large. The output
/// is an absolute speed, so at steady state the integral carries the convoy
/// speed; it is capped at `v_max / ki`.
pub fn pi_velocity(
    e_dist: f64,
    state: PiState,
    gains: PiGains,
    dt: f64,
    now: f64,
    v_bounds: (f64, f64),
) -> (f64, PiState) {
    let cap = if gains.ki > 0.0 { v_bounds.1.abs() / gains.ki } else { 0.0 };
    let integral = (state.integral + e_dist * dt).clamp(-cap, cap);
    let v = (gains.kp * e_dist + gains.ki * integral).clamp(v_bounds.0, v_bounds.1);
    (v, PiState { integral, last_update: now })
}
