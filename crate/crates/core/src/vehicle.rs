//! Kinematic bicycle plant with a first-order actuator lag.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{wrap_angle, Pose2};

/// Absolute local error tolerance of the plant integrator.
pub const PLANT_TOLERANCE: f64 = 1e-8;
const MAX_HALVINGS: u32 = 24;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VehicleError {
    #[error("steering angle {0} rad is not inside (-pi/2, pi/2)")]
    InvalidSteering(f64),
    #[error("invalid vehicle parameters: {0}")]
    InvalidParams(String),
}

/// Geometry and actuator limits of one vehicle. Rate limits are per MPC step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    pub wheelbase: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    pub dv_max: f64,
    pub ddelta_max: f64,
    pub actuator_tau: f64,
    /// Multiplier between commanded and realized speed. Plant-only; the
    /// controller model always assumes 1.
    pub speed_gain: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            wheelbase: 0.65,
            v_min: -1.5,
            v_max: 1.5,
            delta_min: -0.46,
            delta_max: 0.46,
            dv_max: 0.5,
            ddelta_max: 0.3,
            actuator_tau: 0.15,
            speed_gain: 1.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), VehicleError> {
        let bad = |m: &str| Err(VehicleError::InvalidParams(m.to_string()));
        if !(self.wheelbase > 0.0) {
            return bad("wheelbase must be positive");
        }
        if !(self.v_min <= 0.0 && 0.0 <= self.v_max) {
            return bad("speed bounds must bracket zero");
        }
        if (self.delta_min + self.delta_max).abs() > 1e-12 {
            return bad("steering bounds must be symmetric");
        }
        if !(self.delta_max > 0.0 && self.delta_max < FRAC_PI_2) {
            return bad("steering bound must lie in (0, pi/2)");
        }
        if !(self.dv_max > 0.0 && self.ddelta_max > 0.0) {
            return bad("rate limits must be positive");
        }
        if !(self.actuator_tau >= 0.0) {
            return bad("actuator time constant must be non-negative");
        }
        if !(self.speed_gain > 0.0) {
            return bad("speed gain must be positive");
        }
        Ok(())
    }

    pub fn clamp(&self, u: ControlInput) -> ControlInput {
        ControlInput { v: u.v.clamp(self.v_min, self.v_max), delta: u.delta.clamp(self.delta_min, self.delta_max) }
    }

    /// Radius of the tightest turn.
    pub fn min_turn_radius(&self) -> f64 {
        self.wheelbase / self.delta_max.tan()
    }
}

/// Forward speed and steering angle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub v: f64,
    pub delta: f64,
}

impl ControlInput {
    pub const ZERO: ControlInput = ControlInput { v: 0.0, delta: 0.0 };

    pub fn new(v: f64, delta: f64) -> Self {
        Self { v, delta }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.v, self.delta]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub pose: Pose2,
    /// Lagged actuator output actually driving the wheels.
    pub u_act: ControlInput,
}

impl VehicleState {
    pub fn at_rest(pose: Pose2) -> Self {
        Self { pose, u_act: ControlInput::ZERO }
    }
}

/// Bicycle-model rates `(ẋ, ẏ, θ̇)` with θ measured from the +x axis.
pub fn ode(pose: &Pose2, u: &ControlInput, params: &VehicleParams) -> Result<[f64; 3], VehicleError> {
    if !(u.delta.abs() < FRAC_PI_2) {
        return Err(VehicleError::InvalidSteering(u.delta));
    }
    Ok(rates(pose.theta, u, params.wheelbase))
}

#[inline]
fn rates(theta: f64, u: &ControlInput, wheelbase: f64) -> [f64; 3] {
    let (s, c) = theta.sin_cos();
    [u.v * c, u.v * s, u.v / wheelbase * u.delta.tan()]
}

// Dormand–Prince 5(4) tableau; the ODE is autonomous so the nodes are unused.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

/// One Dormand–Prince step: the 5th-order solution and the error estimate.
fn dopri_step(z: [f64; 3], u: &ControlInput, wheelbase: f64, h: f64) -> ([f64; 3], f64) {
    let mut k = [[0.0; 3]; 7];
    for i in 0..7 {
        let mut zi = z;
        for (j, kj) in k.iter().enumerate().take(i) {
            for d in 0..3 {
                zi[d] += h * A[i][j] * kj[d];
            }
        }
        k[i] = rates(zi[2], u, wheelbase);
    }
    let mut hi = z;
    let mut err: f64 = 0.0;
    for d in 0..3 {
        let mut s5 = 0.0;
        let mut s4 = 0.0;
        for i in 0..7 {
            s5 += B5[i] * k[i][d];
            s4 += B4[i] * k[i][d];
        }
        hi[d] += h * s5;
        err = err.max((h * (s5 - s4)).abs());
    }
    (hi, err)
}

/// Integrate over `h`, halving until every accepted piece meets the tolerance.
fn integrate(z: [f64; 3], u: &ControlInput, wheelbase: f64, h: f64, depth: u32) -> [f64; 3] {
    let (next, err) = dopri_step(z, u, wheelbase, h);
    if err <= PLANT_TOLERANCE || depth >= MAX_HALVINGS {
        return next;
    }
    let mid = integrate(z, u, wheelbase, 0.5 * h, depth + 1);
    integrate(mid, u, wheelbase, 0.5 * h, depth + 1)
}

/// Advance the plant by `dt` holding `u_cmd`.
///
/// The command is clamped to the box limits, the actuator lag is applied with
/// its exact discretization, and the pose is integrated with the lagged input
/// held over the step.
pub fn step(state: &VehicleState, u_cmd: ControlInput, dt: f64, params: &VehicleParams) -> VehicleState {
    let cmd = params.clamp(u_cmd);
    let u_act = if params.actuator_tau > 0.0 {
        let decay = (-dt / params.actuator_tau).exp();
        ControlInput {
            v: cmd.v + (state.u_act.v - cmd.v) * decay,
            delta: cmd.delta + (state.u_act.delta - cmd.delta) * decay,
        }
    } else {
        cmd
    };
    let driven = ControlInput { v: u_act.v * params.speed_gain, delta: u_act.delta };
    let z = [state.pose.x, state.pose.y, state.pose.theta];
    let [x, y, theta] = if driven.v == 0.0 || dt <= 0.0 { z } else { integrate(z, &driven, params.wheelbase, dt, 0) };
    VehicleState { pose: Pose2::new(x, y, wrap_angle(theta)), u_act }
}
