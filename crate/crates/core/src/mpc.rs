//! Horizon-K nonlinear programs for the leader, the distributed follower,
//! the centralized pair and the speed-constrained follower.
//!
//! Single shooting over the input sequence: states come from an RK4 rollout
//! of the bicycle model with first-order actuator lag, so the dynamics hold
//! by construction. Each Gauss-Newton iteration solves a small QP for the
//! input box and rate constraints with a primal active-set method; corridor
//! and spacing limits enter as exterior quadratic penalties.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dual::{Dual, Scalar};
use crate::geometry::{log_kernel, Pose2};
use crate::path::TeachPath;
use crate::vehicle::{ControlInput, VehicleParams, VehicleState};

pub const MAX_ITERATIONS: usize = 80;
pub const KKT_TOLERANCE: f64 = 1e-4;
pub const STEP_TOLERANCE: f64 = 1e-8;
pub const VIOLATION_TOLERANCE: f64 = 1e-6;
const OUTER_ITERATIONS: usize = 3;
const PENALTY_START: f64 = 1e3;
const PENALTY_GROWTH: f64 = 10.0;
const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 20;
const CORRIDOR_SEARCH_RADIUS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MpcError {
    #[error("weight matrix {0} is not positive definite")]
    NotPositiveDefinite(&'static str),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("cost is not finite at the initial guess")]
    NonFiniteCost,
}

/// Quadratic cost weights. Each matrix is stored with its Cholesky factor so
/// costs can be written as squared residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights {
    w_ref: Matrix3<f64>,
    w_cont: Matrix2<f64>,
    w_acc: Matrix2<f64>,
    w_dist: f64,
    l_ref: Matrix3<f64>,
    l_cont: Matrix2<f64>,
    l_acc: Matrix2<f64>,
}

impl CostWeights {
    /// `w_ref` is ordered (longitudinal, lateral, heading); `w_cont` and
    /// `w_acc` are ordered (speed, steering).
    pub fn new(w_ref: Matrix3<f64>, w_cont: Matrix2<f64>, w_acc: Matrix2<f64>, w_dist: f64) -> Result<Self, MpcError> {
        let l_ref = w_ref.cholesky().ok_or(MpcError::NotPositiveDefinite("w_ref"))?.l().transpose();
        let l_cont = w_cont.cholesky().ok_or(MpcError::NotPositiveDefinite("w_cont"))?.l().transpose();
        let l_acc = w_acc.cholesky().ok_or(MpcError::NotPositiveDefinite("w_acc"))?.l().transpose();
        if !(w_dist > 0.0) || !w_dist.is_finite() {
            return Err(MpcError::NotPositiveDefinite("w_dist"));
        }
        Ok(Self { w_ref, w_cont, w_acc, w_dist, l_ref, l_cont, l_acc })
    }

    pub fn diagonal(w_ref: [f64; 3], w_cont: [f64; 2], w_acc: [f64; 2], w_dist: f64) -> Result<Self, MpcError> {
        Self::new(
            Matrix3::from_diagonal(&w_ref.into()),
            Matrix2::from_diagonal(&w_cont.into()),
            Matrix2::from_diagonal(&w_acc.into()),
            w_dist,
        )
    }

    pub fn w_ref(&self) -> &Matrix3<f64> {
        &self.w_ref
    }

    pub fn w_cont(&self) -> &Matrix2<f64> {
        &self.w_cont
    }

    pub fn w_acc(&self) -> &Matrix2<f64> {
        &self.w_acc
    }

    pub fn w_dist(&self) -> f64 {
        self.w_dist
    }
}

/// Box and per-step rate limits on the inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputLimits {
    pub v: (f64, f64),
    pub delta: (f64, f64),
    /// Largest speed change between consecutive inputs (one ΔT apart).
    pub dv: f64,
    pub ddelta: f64,
}

impl InputLimits {
    fn bounds(&self, c: usize) -> (f64, f64, f64) {
        if c == 0 {
            (self.v.0, self.v.1, self.dv)
        } else {
            (self.delta.0, self.delta.1, self.ddelta)
        }
    }

    pub fn clamp(&self, u: ControlInput) -> ControlInput {
        ControlInput::new(u.v.clamp(self.v.0, self.v.1), u.delta.clamp(self.delta.0, self.delta.1))
    }
}

/// The controller's internal vehicle model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub wheelbase: f64,
    pub actuator_tau: f64,
    /// RK4 substeps per horizon step.
    pub substeps: usize,
}

impl ModelParams {
    pub fn from_vehicle(p: &VehicleParams) -> Self {
        Self { wheelbase: p.wheelbase, actuator_tau: p.actuator_tau, substeps: 3 }
    }
}

/// The weights/constraints block of a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    pub w_ref: [f64; 3],
    pub w_cont: [f64; 2],
    pub w_acc: [f64; 2],
    pub w_dist: f64,
    pub v_box: [f64; 2],
    pub delta_box: [f64; 2],
    pub dv_max: f64,
    pub ddelta_max: f64,
    #[serde(rename = "K")]
    pub horizon: usize,
    #[serde(rename = "dT")]
    pub dt: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            w_ref: [10.0, 20.0, 2.0],
            w_cont: [0.01, 0.1],
            w_acc: [2.0, 5.0],
            w_dist: 20.0,
            v_box: [-1.5, 1.5],
            delta_box: [-0.46, 0.46],
            dv_max: 0.5,
            ddelta_max: 0.3,
            horizon: 15,
            dt: 0.25,
        }
    }
}

impl MpcConfig {
    pub fn weights(&self) -> Result<CostWeights, MpcError> {
        CostWeights::diagonal(self.w_ref, self.w_cont, self.w_acc, self.w_dist)
    }

    pub fn limits(&self) -> InputLimits {
        InputLimits {
            v: (self.v_box[0], self.v_box[1]),
            delta: (self.delta_box[0], self.delta_box[1]),
            dv: self.dv_max,
            ddelta: self.ddelta_max,
        }
    }

    pub fn validate(&self) -> Result<(), MpcError> {
        self.weights()?;
        let bad = |m: String| Err(MpcError::InvalidProblem(m));
        if self.horizon < 2 {
            return bad(format!("K must be at least 2, got {}", self.horizon));
        }
        if !(self.dt > 0.0) {
            return bad(format!("dT must be positive, got {}", self.dt));
        }
        if !(self.v_box[0] <= 0.0 && 0.0 <= self.v_box[1]) || !(self.delta_box[0] < 0.0 && 0.0 < self.delta_box[1]) {
            return bad("input boxes must contain zero".into());
        }
        if !(self.dv_max > 0.0 && self.ddelta_max > 0.0) {
            return bad("rate limits must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Variant {
    Leader,
    /// The leader trajectory at the horizon times is fixed data.
    FollowerDistributed {
        leader_traj: Vec<Pose2>,
    },
    /// Vehicle 0 leads, vehicle 1 follows; both input sequences are free.
    Centralized,
    /// Speed fixed at `v_ref` on every step; only steering is optimized.
    FollowerPiConstrained {
        v_ref: f64,
    },
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Leader => "leader",
            Variant::FollowerDistributed { .. } => "follower_distributed",
            Variant::Centralized => "centralized",
            Variant::FollowerPiConstrained { .. } => "follower_pi",
        }
    }
}

/// Per-vehicle data of a problem.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleSetup {
    pub initial: VehicleState,
    /// Input applied in the previous control period (Δu reference for k = 0).
    pub u_prev: ControlInput,
    /// Reference pose for the state after each input.
    pub refs: Vec<Pose2>,
    /// Path arc length of each reference, seeds the corridor projection.
    pub ref_s: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MpcProblem<'a> {
    pub horizon: usize,
    pub dt: f64,
    pub vehicles: Vec<VehicleSetup>,
    pub weights: CostWeights,
    pub limits: InputLimits,
    pub model: ModelParams,
    /// Corridor constraint is applied when a path is given.
    pub path: Option<&'a TeachPath>,
    pub d_min: f64,
    pub d_max: f64,
    /// Spacing target per horizon step.
    pub d_targets: Vec<f64>,
    pub variant: Variant,
}

/// Cost per term at a solution.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub j_ref: f64,
    pub j_cont: f64,
    pub j_acc: f64,
    pub j_dist: f64,
    pub penalty: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.j_ref + self.j_cont + self.j_acc + self.j_dist
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    /// Pose after each input, per vehicle.
    pub states: Vec<Vec<Pose2>>,
    pub inputs: Vec<Vec<ControlInput>>,
    pub costs: CostBreakdown,
    pub kkt_residual: f64,
    /// Largest corridor or spacing violation in meters.
    pub constraint_violation_max: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Merit after every accepted step, per penalty level.
    pub merit_history: Vec<f64>,
}

/// Per-term costs of given trajectories. `u_prev` is the input applied before
/// the horizon; `leader` enables the spacing term with per-step targets.
pub fn eval_costs(
    states: &[Pose2],
    inputs: &[ControlInput],
    u_prev: ControlInput,
    refs: &[Pose2],
    weights: &CostWeights,
    leader: Option<(&[Pose2], &[f64])>,
) -> CostBreakdown {
    let mut out = CostBreakdown::default();
    let mut prev = u_prev;
    for k in 0..states.len() {
        let e = tracking_error::<f64>([states[k].x, states[k].y, states[k].theta], &refs[k]);
        let e = nalgebra::Vector3::from(e);
        out.j_ref += (e.transpose() * weights.w_ref * e)[0];
        let u = nalgebra::Vector2::new(inputs[k].v, inputs[k].delta);
        out.j_cont += (u.transpose() * weights.w_cont * u)[0];
        let du = nalgebra::Vector2::new(inputs[k].v - prev.v, inputs[k].delta - prev.delta);
        out.j_acc += (du.transpose() * weights.w_acc * du)[0];
        prev = inputs[k];
        if let Some((lead, targets)) = leader {
            let g = states[k].distance_to(&lead[k]);
            out.j_dist += weights.w_dist * (g - targets[k]).powi(2);
        }
    }
    out
}

/// `log(T_ref⁻¹ ∘ T)`: (longitudinal, lateral, heading) error in the
/// reference frame.
fn tracking_error<S: Scalar>(pose: [S; 3], reference: &Pose2) -> [S; 3] {
    let (s, c) = reference.theta.sin_cos();
    let dx = pose[0] - reference.x;
    let dy = pose[1] - reference.y;
    let rx = dx * c + dy * s;
    let ry = dy * c - dx * s;
    let rt = (pose[2] - reference.theta).wrap();
    log_kernel(rx, ry, rt)
}

fn model_rhs<S: Scalar>(x: &[S; 5], u: &[S; 2], p: &ModelParams) -> [S; 5] {
    let lag = p.actuator_tau > 1e-9;
    let v = x[3];
    [
        v * x[2].cos(),
        v * x[2].sin(),
        v * x[4].tan() / p.wheelbase,
        if lag { (u[0] - x[3]) / p.actuator_tau } else { S::cst(0.0) },
        if lag { (u[1] - x[4]) / p.actuator_tau } else { S::cst(0.0) },
    ]
}

/// Advance the model state (x, y, θ, v_act, δ_act) by `dt` under input `u`.
pub fn model_step<S: Scalar>(x: [S; 5], u: [S; 2], dt: f64, p: &ModelParams) -> [S; 5] {
    let mut x = x;
    if p.actuator_tau <= 1e-9 {
        x[3] = u[0];
        x[4] = u[1];
    }
    let m = p.substeps.max(1);
    let h = dt / m as f64;
    let axpy = |a: &[S; 5], b: &[S; 5], s: f64| -> [S; 5] { std::array::from_fn(|i| a[i] + b[i] * s) };
    for _ in 0..m {
        let k1 = model_rhs(&x, &u, p);
        let k2 = model_rhs(&axpy(&x, &k1, 0.5 * h), &u, p);
        let k3 = model_rhs(&axpy(&x, &k2, 0.5 * h), &u, p);
        let k4 = model_rhs(&axpy(&x, &k3, h), &u, p);
        x = std::array::from_fn(|i| x[i] + (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0));
    }
    x[2] = x[2].wrap();
    x
}

fn state_of(v: &VehicleState) -> [f64; 5] {
    [v.pose.x, v.pose.y, v.pose.theta, v.u_act.v, v.u_act.delta]
}

/// One linear inequality `Σ coef·z[idx] ≥ beta` over at most two variables.
#[derive(Debug, Clone, Copy)]
struct Con {
    idx: [usize; 2],
    coef: [f64; 2],
    nnz: usize,
    beta: f64,
}

impl Con {
    fn dot(&self, z: &DVector<f64>) -> f64 {
        (0..self.nnz).map(|j| self.coef[j] * z[self.idx[j]]).sum()
    }
}

struct Eval {
    merit: f64,
    costs: CostBreakdown,
    violation: f64,
    residuals: Vec<f64>,
    /// Row-major, `residuals.len() × n`.
    jacobian: Vec<f64>,
    poses: Vec<Vec<Pose2>>,
}

impl<'a> MpcProblem<'a> {
    pub fn validate(&self) -> Result<(), MpcError> {
        let bad = |m: String| Err(MpcError::InvalidProblem(m));
        let k = self.horizon;
        if k < 2 {
            return bad(format!("horizon must be at least 2, got {k}"));
        }
        if !(self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        let expected = if matches!(self.variant, Variant::Centralized) { 2 } else { 1 };
        if self.vehicles.len() != expected {
            return bad(format!("{} needs {expected} vehicle(s), got {}", self.variant.name(), self.vehicles.len()));
        }
        for v in &self.vehicles {
            if v.refs.len() != k || v.ref_s.len() != k {
                return bad(format!("expected {k} references, got {}", v.refs.len()));
            }
        }
        match &self.variant {
            Variant::FollowerDistributed { leader_traj } if leader_traj.len() != k => {
                return bad(format!("leader trajectory has {} poses, expected {k}", leader_traj.len()));
            }
            Variant::FollowerPiConstrained { v_ref } => {
                let u0 = self.vehicles[0].u_prev.v;
                if *v_ref < self.limits.v.0 || *v_ref > self.limits.v.1 || (v_ref - u0).abs() > self.limits.dv + 1e-12 {
                    return bad(format!("v_ref {v_ref} violates the speed limits"));
                }
            }
            _ => {}
        }
        if self.has_spacing() {
            if self.d_targets.len() != k {
                return bad(format!("expected {k} spacing targets, got {}", self.d_targets.len()));
            }
            if !self.d_targets.iter().all(|&d| self.d_min < d && d < self.d_max) {
                return bad("spacing targets must lie strictly between d_min and d_max".into());
            }
        }
        if let Some(path) = self.path {
            for v in &self.vehicles {
                if path.corridor_margin(&v.initial.pose) < -1.0 {
                    return bad("initial state is more than 1 m outside the corridor".into());
                }
            }
        }
        Ok(())
    }

    fn has_spacing(&self) -> bool {
        matches!(self.variant, Variant::FollowerDistributed { .. } | Variant::Centralized)
    }

    fn speed_is_free(&self) -> bool {
        !matches!(self.variant, Variant::FollowerPiConstrained { .. })
    }

    /// Number of decision variables.
    pub fn num_vars(&self) -> usize {
        let per = if self.speed_is_free() { 2 } else { 1 };
        self.vehicles.len() * self.horizon * per
    }

    /// Decision-variable index of component `c` (0 speed, 1 steering).
    fn var_index(&self, vehicle: usize, k: usize, c: usize) -> Option<usize> {
        if self.speed_is_free() {
            Some(vehicle * 2 * self.horizon + 2 * k + c)
        } else if c == 1 {
            Some(k)
        } else {
            None
        }
    }

    fn inputs_of(&self, z: &[f64]) -> Vec<Vec<ControlInput>> {
        (0..self.vehicles.len())
            .map(|a| {
                (0..self.horizon)
                    .map(|k| {
                        let v = match (self.var_index(a, k, 0), &self.variant) {
                            (Some(i), _) => z[i],
                            (None, Variant::FollowerPiConstrained { v_ref }) => *v_ref,
                            (None, _) => unreachable!("speed is free outside the PI variant"),
                        };
                        let d = z[self.var_index(a, k, 1).expect("steering always free")];
                        ControlInput::new(v, d)
                    })
                    .collect()
            })
            .collect()
    }

    fn pack(&self, inputs: &[Vec<ControlInput>]) -> Vec<f64> {
        let mut z = vec![0.0; self.num_vars()];
        for (a, seq) in inputs.iter().enumerate() {
            for (k, u) in seq.iter().enumerate() {
                for (c, val) in [u.v, u.delta].into_iter().enumerate() {
                    if let Some(i) = self.var_index(a, k, c) {
                        z[i] = val;
                    }
                }
            }
        }
        z
    }

    fn constraints(&self) -> Vec<Con> {
        let mut out = Vec::new();
        for (a, veh) in self.vehicles.iter().enumerate() {
            let prev = self.limits.clamp(veh.u_prev);
            for c in 0..2 {
                let (lo, hi, rate) = self.limits.bounds(c);
                let prev_c = if c == 0 { prev.v } else { prev.delta };
                for k in 0..self.horizon {
                    let Some(i) = self.var_index(a, k, c) else { continue };
                    let (l, h) = if k == 0 { (lo.max(prev_c - rate), hi.min(prev_c + rate)) } else { (lo, hi) };
                    out.push(Con { idx: [i, 0], coef: [1.0, 0.0], nnz: 1, beta: l });
                    out.push(Con { idx: [i, 0], coef: [-1.0, 0.0], nnz: 1, beta: -h });
                    if k > 0 {
                        let j = self.var_index(a, k - 1, c).expect("same component");
                        out.push(Con { idx: [i, j], coef: [1.0, -1.0], nnz: 2, beta: -rate });
                        out.push(Con { idx: [i, j], coef: [-1.0, 1.0], nnz: 2, beta: -rate });
                    }
                }
            }
        }
        out
    }

    /// Feasible point nearest-in-sequence to `z`: each input is clamped to
    /// its box intersected with the rate window around the previous one.
    fn sequential_clamp(&self, z: &mut [f64]) {
        for (a, veh) in self.vehicles.iter().enumerate() {
            let prev = self.limits.clamp(veh.u_prev);
            for c in 0..2 {
                let (lo, hi, rate) = self.limits.bounds(c);
                let mut last = if c == 0 { prev.v } else { prev.delta };
                for k in 0..self.horizon {
                    let Some(i) = self.var_index(a, k, c) else {
                        if let Variant::FollowerPiConstrained { v_ref } = self.variant {
                            last = v_ref;
                        }
                        continue;
                    };
                    z[i] = z[i].clamp(lo.max(last - rate), hi.min(last + rate));
                    last = z[i];
                }
            }
        }
    }

    /// Cold start holds the current actuator state; a warm start is used
    /// as given. Either way the result is made feasible.
    pub fn initial_guess(&self, warm: Option<&MpcSolution>) -> Vec<f64> {
        let inputs: Vec<Vec<ControlInput>> = match warm {
            Some(w) if w.inputs.len() == self.vehicles.len() && w.inputs.iter().all(|s| s.len() == self.horizon) => {
                w.inputs.clone()
            }
            _ => self.vehicles.iter().map(|v| vec![v.initial.u_act; self.horizon]).collect(),
        };
        let mut z = self.pack(&inputs);
        self.sequential_clamp(&mut z);
        z
    }

    fn evaluate(&self, z: &[f64], mu: f64, want_jac: bool) -> Eval {
        let n = self.num_vars();
        let kh = self.horizon;
        let inputs = self.inputs_of(z);
        let mut residuals = Vec::new();
        let mut jacobian = Vec::new();
        let mut costs = CostBreakdown::default();
        let mut violation: f64 = 0.0;
        let mut poses = Vec::with_capacity(self.vehicles.len());
        // dp/dz rows (x, y, θ) per vehicle per step
        let mut pose_sens: Vec<Vec<[Vec<f64>; 3]>> = Vec::with_capacity(self.vehicles.len());

        let push = |r: f64, row: Option<Vec<f64>>, residuals: &mut Vec<f64>, jacobian: &mut Vec<f64>| {
            residuals.push(r);
            if want_jac {
                jacobian.extend(row.unwrap_or_else(|| vec![0.0; n]));
            }
        };

        for (a, veh) in self.vehicles.iter().enumerate() {
            let mut x = state_of(&veh.initial);
            let mut sens = vec![vec![0.0; n]; 5];
            let mut traj = Vec::with_capacity(kh);
            let mut traj_sens = Vec::with_capacity(kh);
            for (k, u) in inputs[a].iter().enumerate() {
                if want_jac {
                    let xd: [Dual<7>; 5] = std::array::from_fn(|i| Dual::var(x[i], i));
                    let ud: [Dual<7>; 2] = [Dual::var(u.v, 5), Dual::var(u.delta, 6)];
                    let out = model_step(xd, ud, self.dt, &self.model);
                    let mut next = vec![vec![0.0; n]; 5];
                    for r in 0..5 {
                        for (m, srow) in sens.iter().enumerate() {
                            let a_rm = out[r].eps[m];
                            if a_rm != 0.0 {
                                for (dst, s) in next[r].iter_mut().zip(srow) {
                                    *dst += a_rm * s;
                                }
                            }
                        }
                        for c in 0..2 {
                            if let Some(i) = self.var_index(a, k, c) {
                                next[r][i] += out[r].eps[5 + c];
                            }
                        }
                    }
                    sens = next;
                    x = std::array::from_fn(|i| out[i].re);
                } else {
                    x = model_step(x, [u.v, u.delta], self.dt, &self.model);
                }
                traj.push(Pose2 { x: x[0], y: x[1], theta: x[2] });
                if want_jac {
                    traj_sens.push([sens[0].clone(), sens[1].clone(), sens[2].clone()]);
                }
            }

            // reference tracking
            let lt = self.weights.l_ref;
            for k in 0..kh {
                let p = traj[k];
                let (e, de) = if want_jac {
                    let pd: [Dual<3>; 3] = [Dual::var(p.x, 0), Dual::var(p.y, 1), Dual::var(p.theta, 2)];
                    let ed = tracking_error(pd, &veh.refs[k]);
                    (ed.map(|d| d.re), Some(ed.map(|d| d.eps)))
                } else {
                    (tracking_error([p.x, p.y, p.theta], &veh.refs[k]), None)
                };
                for row in 0..3 {
                    let r: f64 = (0..3).map(|m| lt[(row, m)] * e[m]).sum();
                    costs.j_ref += r * r;
                    let jrow = de.map(|de| {
                        let mut out = vec![0.0; n];
                        for m in 0..3 {
                            let coef = lt[(row, m)];
                            if coef == 0.0 {
                                continue;
                            }
                            for q in 0..3 {
                                let c = coef * de[m][q];
                                if c != 0.0 {
                                    for (o, s) in out.iter_mut().zip(&traj_sens[k][q]) {
                                        *o += c * s;
                                    }
                                }
                            }
                        }
                        out
                    });
                    push(r, jrow, &mut residuals, &mut jacobian);
                }
            }

            // input magnitude and rate
            let mut prev = veh.u_prev;
            for (k, u) in inputs[a].iter().enumerate() {
                let uu = [u.v, u.delta];
                let du = [u.v - prev.v, u.delta - prev.delta];
                for (l, vals, is_rate) in [(&self.weights.l_cont, uu, false), (&self.weights.l_acc, du, true)] {
                    for row in 0..2 {
                        let r = l[(row, 0)] * vals[0] + l[(row, 1)] * vals[1];
                        if is_rate {
                            costs.j_acc += r * r;
                        } else {
                            costs.j_cont += r * r;
                        }
                        let jrow = want_jac.then(|| {
                            let mut out = vec![0.0; n];
                            for c in 0..2 {
                                if let Some(i) = self.var_index(a, k, c) {
                                    out[i] += l[(row, c)];
                                }
                                if is_rate && k > 0 {
                                    if let Some(j) = self.var_index(a, k - 1, c) {
                                        out[j] -= l[(row, c)];
                                    }
                                }
                            }
                            out
                        });
                        push(r, jrow, &mut residuals, &mut jacobian);
                    }
                }
                prev = *u;
            }

            // corridor penalty
            if let Some(path) = self.path {
                let hw = path.corridor_half_width();
                for k in 0..kh {
                    let proj = path.project_near(&traj[k], veh.ref_s[k], CORRIDOR_SEARCH_RADIUS);
                    let lat = proj.coord.lateral;
                    let over = lat.abs() - hw;
                    if over > 0.0 {
                        violation = violation.max(over);
                        let r = mu.sqrt() * over;
                        costs.penalty += r * r;
                        let jrow = want_jac.then(|| {
                            let sg = lat.signum() * mu.sqrt();
                            let (gx, gy) = (-proj.tangent[1] * sg, proj.tangent[0] * sg);
                            traj_sens[k][0].iter().zip(&traj_sens[k][1]).map(|(sx, sy)| gx * sx + gy * sy).collect()
                        });
                        push(r, jrow, &mut residuals, &mut jacobian);
                    }
                }
            }

            poses.push(traj);
            pose_sens.push(traj_sens);
        }

        // spacing term and limits
        if self.has_spacing() {
            let (follower, lead_fixed) = match &self.variant {
                Variant::FollowerDistributed { leader_traj } => (0, Some(leader_traj)),
                _ => (1, None),
            };
            for k in 0..kh {
                let pf = poses[follower][k];
                let pl = match lead_fixed {
                    Some(t) => t[k],
                    None => poses[0][k],
                };
                let (dx, dy) = (pf.x - pl.x, pf.y - pl.y);
                let g = dx.hypot(dy).max(1e-12);
                let grad = |scale: f64| -> Vec<f64> {
                    let (nx, ny) = (scale * dx / g, scale * dy / g);
                    let mut out = vec![0.0; n];
                    let fs = &pose_sens[follower][k];
                    for (i, o) in out.iter_mut().enumerate() {
                        *o = nx * fs[0][i] + ny * fs[1][i];
                    }
                    if lead_fixed.is_none() {
                        let ls = &pose_sens[0][k];
                        for (i, o) in out.iter_mut().enumerate() {
                            *o -= nx * ls[0][i] + ny * ls[1][i];
                        }
                    }
                    out
                };
                let sw = self.weights.w_dist.sqrt();
                let r = sw * (g - self.d_targets[k]);
                costs.j_dist += r * r;
                push(r, want_jac.then(|| grad(sw)), &mut residuals, &mut jacobian);
                let sm = mu.sqrt();
                if g < self.d_min {
                    violation = violation.max(self.d_min - g);
                    let r = sm * (self.d_min - g);
                    costs.penalty += r * r;
                    push(r, want_jac.then(|| grad(-sm)), &mut residuals, &mut jacobian);
                } else if g > self.d_max {
                    violation = violation.max(g - self.d_max);
                    let r = sm * (g - self.d_max);
                    costs.penalty += r * r;
                    push(r, want_jac.then(|| grad(sm)), &mut residuals, &mut jacobian);
                }
            }
        }

        let merit = residuals.iter().map(|r| r * r).sum();
        Eval { merit, costs, violation, residuals, jacobian, poses }
    }

    /// Total cost including penalties at the first penalty level.
    pub fn objective(&self, z: &[f64]) -> f64 {
        self.evaluate(z, PENALTY_START, false).merit
    }

    /// Exact gradient of [`Self::objective`].
    pub fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let ev = self.evaluate(z, PENALTY_START, true);
        gradient_of(&ev, z.len())
    }

    /// Rollout of the model from the initial states under `z`.
    pub fn rollout(&self, z: &[f64]) -> Vec<Vec<Pose2>> {
        self.evaluate(z, PENALTY_START, false).poses
    }
}

fn gradient_of(ev: &Eval, n: usize) -> Vec<f64> {
    let mut g = vec![0.0; n];
    for (r, row) in ev.residuals.iter().zip(ev.jacobian.chunks(n)) {
        for (gi, j) in g.iter_mut().zip(row) {
            *gi += 2.0 * r * j;
        }
    }
    g
}

/// Solve `min ½pᵀHp + gᵀp` subject to `cons` at `z + p`, starting from the
/// feasible `p = 0`. Returns the step.
fn solve_qp(h: &DMatrix<f64>, g: &DVector<f64>, cons: &[Con], z: &DVector<f64>) -> DVector<f64> {
    let n = g.len();
    let mut p = DVector::zeros(n);
    let mut working: Vec<usize> = Vec::new();
    for _ in 0..(10 * n + 20) {
        let q = h * &p + g;
        let w = working.len();
        let mut kkt = DMatrix::zeros(n + w, n + w);
        kkt.view_mut((0, 0), (n, n)).copy_from(h);
        for (col, &ci) in working.iter().enumerate() {
            let c = &cons[ci];
            for j in 0..c.nnz {
                kkt[(c.idx[j], n + col)] = -c.coef[j];
                kkt[(n + col, c.idx[j])] = c.coef[j];
            }
            kkt[(n + col, n + col)] = -1e-14;
        }
        let mut rhs = DVector::zeros(n + w);
        rhs.rows_mut(0, n).copy_from(&(-q));
        let Some(sol) = kkt.lu().solve(&rhs) else { break };
        let d = sol.rows(0, n).into_owned();
        let scale = 1.0 + p.amax();
        if d.amax() <= 1e-13 * scale {
            let worst = (0..w).map(|col| (col, sol[n + col])).min_by(|a, b| a.1.total_cmp(&b.1));
            match worst {
                Some((col, m)) if m < -1e-12 => {
                    working.remove(col);
                }
                _ => break,
            }
            continue;
        }
        let zp = z + &p;
        let mut t = 1.0;
        let mut blocking = None;
        for (i, c) in cons.iter().enumerate() {
            if working.contains(&i) {
                continue;
            }
            let cd = c.dot(&d);
            if cd < -1e-15 {
                let slack = (c.dot(&zp) - c.beta).max(0.0);
                let ti = slack / -cd;
                if ti < t {
                    t = ti;
                    blocking = Some(i);
                }
            }
        }
        p += t * d;
        if let Some(b) = blocking {
            working.push(b);
        }
    }
    p
}

/// Gauss-Newton SQP. Always returns the best iterate; `converged` reports
/// whether the optimality and feasibility tolerances were met.
pub fn solve(problem: &MpcProblem<'_>, warm_start: Option<&MpcSolution>) -> Result<MpcSolution, MpcError> {
    problem.validate()?;
    let n = problem.num_vars();
    let cons = problem.constraints();
    let mut z = problem.initial_guess(warm_start);
    let mut mu = PENALTY_START;
    if !problem.evaluate(&z, mu, false).merit.is_finite() {
        return Err(MpcError::NonFiniteCost);
    }

    let mut iterations = 0;
    let mut history = Vec::new();
    let mut kkt = f64::INFINITY;
    let mut damping = 1e-9;
    for outer in 0..OUTER_ITERATIONS {
        loop {
            let ev = problem.evaluate(&z, mu, true);
            let m = ev.residuals.len();
            let jac = DMatrix::from_row_slice(m, n, &ev.jacobian);
            let r = DVector::from_column_slice(&ev.residuals);
            let g = 2.0 * jac.transpose() * &r;
            let h_gn = 2.0 * jac.transpose() * &jac;
            let mut h = h_gn.clone();
            let diag_scale = 1.0 + h_gn.diagonal().amax();
            for i in 0..n {
                h[(i, i)] += damping * diag_scale;
            }
            let zv = DVector::from_column_slice(&z);
            let p = solve_qp(&h, &g, &cons, &zv);
            kkt = (&h_gn * &p).amax() / (1.0 + ev.merit);
            if history.is_empty() {
                history.push(ev.merit);
            }
            if kkt < KKT_TOLERANCE && p.amax() < STEP_TOLERANCE {
                break;
            }
            if iterations >= MAX_ITERATIONS {
                break;
            }

            let slope = g.dot(&p);
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..=MAX_BACKTRACKS {
                let mut trial: Vec<f64> = (0..n).map(|i| z[i] + alpha * p[i]).collect();
                problem.sequential_clamp(&mut trial);
                let f = problem.evaluate(&trial, mu, false).merit;
                if f.is_finite() && f <= ev.merit + ARMIJO_C * alpha * slope.min(0.0) {
                    accepted = Some((trial, f));
                    break;
                }
                alpha *= 0.5;
            }
            iterations += 1;
            match accepted {
                Some((trial, f)) => {
                    z = trial;
                    history.push(f);
                    damping = (damping * 0.1).max(1e-12);
                    if kkt < KKT_TOLERANCE {
                        break;
                    }
                }
                None => {
                    damping *= 100.0;
                    if damping > 1e6 {
                        break;
                    }
                }
            }
        }
        let ev = problem.evaluate(&z, mu, false);
        if ev.violation < VIOLATION_TOLERANCE || outer + 1 == OUTER_ITERATIONS || iterations >= MAX_ITERATIONS {
            break;
        }
        mu *= PENALTY_GROWTH;
        history.push(f64::NAN);
    }

    let ev = problem.evaluate(&z, mu, false);
    let inputs = problem.inputs_of(&z);
    Ok(MpcSolution {
        states: ev.poses,
        inputs,
        costs: ev.costs,
        kkt_residual: kkt,
        constraint_violation_max: ev.violation,
        iterations,
        converged: kkt < KKT_TOLERANCE && ev.violation < VIOLATION_TOLERANCE,
        merit_history: history,
    })
}

/// Receding-horizon shift: drop the first `steps` entries and repeat the
/// last one.
pub fn warm_shift(previous: &MpcSolution, steps: usize) -> MpcSolution {
    fn shift<T: Copy>(v: &[T], steps: usize) -> Vec<T> {
        let k = v.len();
        (0..k).map(|i| v[(i + steps).min(k - 1)]).collect()
    }
    MpcSolution {
        states: previous.states.iter().map(|s| shift(s, steps)).collect(),
        inputs: previous.inputs.iter().map(|s| shift(s, steps)).collect(),
        merit_history: Vec::new(),
        ..previous.clone()
    }
}
