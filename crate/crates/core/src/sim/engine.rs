//! The fixed-step simulation loop.

use rand_chacha::ChaCha8Rng;

use super::config::{ControllerKind, ConvoyConfig, Topology};
use super::log::*;
use super::metrics::compute_metrics;
use super::{localize, seed_stream, RunOutput, SimError};
use crate::comms::{measure_range, Channel, CommandMessage, FixMessage, Message, RangeSensor, RolloutMessage};
use crate::geometry::Pose2;
use crate::mpc::{self, CostWeights, InputLimits, ModelParams, MpcProblem, MpcSolution, Variant, VehicleSetup};
use crate::path::{PathCoord, TeachPath};
use crate::planner::{
    interpolate_rollout_within, pi_velocity, plan_along, plan_follower_distance_aware, plan_follower_pi, PiState,
    ReferencePlan, SpacingMode,
};
use crate::vehicle::{self, ControlInput, VehicleParams, VehicleState};

const STREAM_LOCALIZATION: u64 = 100;
const STREAM_RANGE: u64 = 200;
const STREAM_DOWNLINK: u64 = 1000;
const STREAM_UPLINK: u64 = 2000;

/// Search radius when tracking a robot's arc length from tick to tick.
const TRACK_RADIUS: f64 = 2.0;
/// The run aborts when the leader advances less than [`STALL_DISTANCE`]
/// within this many seconds.
const STALL_TIMEOUT_S: f64 = 10.0;
const STALL_DISTANCE: f64 = 0.05;
/// Oldest rollout age (beyond its last sample) still extrapolated.
const ROLLOUT_EXTRAPOLATION_LIMIT: f64 = 1.0;

struct Robot {
    params: VehicleParams,
    model: ModelParams,
    loc_noise: f64,
    loc_bias: Pose2,
    state: VehicleState,
    /// Input currently applied to the plant.
    command: ControlInput,
    fix: Pose2,
    fix_s: f64,
    true_s: f64,
    travel: f64,
    loc_rng: ChaCha8Rng,
    range_rng: ChaCha8Rng,
    warm: Option<(f64, MpcSolution)>,
    /// Last trajectory this robot predicted for itself.
    own_rollout: Option<RolloutMessage>,
    latest_rollout: Option<RolloutMessage>,
    latest_fix: Option<FixMessage>,
    target_hint: Option<f64>,
    pi: PiState,
    last_e: Option<f64>,
}

struct Engine<'a> {
    cfg: &'a ConvoyConfig,
    path: &'a TeachPath,
    robots: Vec<Robot>,
    /// Tracked robot of each follower (index 0 unused).
    targets: Vec<usize>,
    offsets: Vec<f64>,
    d_min: Vec<f64>,
    d_max: Vec<f64>,
    downlinks: Vec<Option<Channel<Message>>>,
    uplink: Option<Channel<Message>>,
    /// Last command the centralized solver sent to the follower.
    cmpc_sent: ControlInput,
    weights: CostWeights,
    limits: InputLimits,
    sensor: RangeSensor,
    horizon: usize,
    mpc_dt: f64,
    control_dt: f64,
    log: TrajectoryLog,
    flags: u32,
    /// Time and leader travel when the leader last made progress.
    progress_mark: (f64, f64),
}

/// Run one simulation of `config` with the given seed.
pub fn run(config: &ConvoyConfig, seed: u64) -> Result<RunOutput, SimError> {
    config.validate()?;
    let path = config.scenario.build().map_err(cfg_err)?;
    let mut engine = Engine::new(config, &path, seed)?;
    engine.simulate()?;
    let metrics = compute_metrics(&engine.log, config.transient_distance_m, config.coupling_travel_m);
    Ok(RunOutput { log: engine.log, metrics })
}

fn cfg_err(e: impl std::fmt::Display) -> SimError {
    SimError::Config(e.to_string())
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a ConvoyConfig, path: &'a TeachPath, seed: u64) -> Result<Self, SimError> {
        let n = cfg.robots.len();
        let (targets, offsets): (Vec<usize>, Vec<f64>) = (0..n)
            .map(|i| match (i, cfg.topology) {
                (0, _) => (0, 0.0),
                (_, Topology::Star) => (0, i as f64 * cfg.d_target),
                (_, Topology::Chain) => (i - 1, cfg.d_target),
            })
            .unzip();
        let d_min = offsets.iter().map(|o| o - (cfg.d_target - cfg.d_min)).collect();
        let d_max = offsets.iter().map(|o| o + (cfg.d_max - cfg.d_target)).collect();

        let start = match cfg.start_s {
            Some(s) => s,
            None if path.is_closed() => 0.0,
            None => {
                // room behind the leader for the whole convoy
                let mut behind = vec![0.0; n];
                for i in 1..n {
                    behind[i] = behind[targets[i]] + offsets[i];
                }
                behind.into_iter().fold(0.0, f64::max)
            }
        };
        let mut s_init = vec![path.normalize_s(start).map_err(cfg_err)?];
        for i in 1..n {
            let anchor = PathCoord::on_path(s_init[targets[i]]);
            let behind = match cfg.spacing_mode {
                SpacingMode::Euclidean => path.offset_behind_euclidean(&anchor, offsets[i]),
                SpacingMode::ArcLength => path.offset_behind_arclength(&anchor, offsets[i]),
            }
            .map_err(|e| SimError::Config(format!("cannot place robot {i} behind robot {}: {e}", targets[i])))?;
            s_init.push(behind.s);
        }

        let mut robots = Vec::with_capacity(n);
        for (i, rc) in cfg.robots.iter().enumerate() {
            let pose = path.pose_at(s_init[i]).map_err(cfg_err)?;
            robots.push(Robot {
                params: rc.params,
                model: ModelParams::from_vehicle(rc.model.as_ref().unwrap_or(&rc.params)),
                loc_noise: rc.loc_noise_std,
                loc_bias: rc.loc_bias,
                state: VehicleState::at_rest(pose),
                command: ControlInput::ZERO,
                fix: pose,
                fix_s: s_init[i],
                true_s: s_init[i],
                travel: 0.0,
                loc_rng: seed_stream(seed, STREAM_LOCALIZATION + i as u64),
                range_rng: seed_stream(seed, STREAM_RANGE + i as u64),
                warm: None,
                own_rollout: None,
                latest_rollout: None,
                latest_fix: None,
                target_hint: (i > 0).then(|| s_init[targets[i]]),
                pi: PiState::default(),
                last_e: None,
            });
        }

        let channel = |stream: u64| Channel::new(cfg.channel, seed_stream(seed, stream)).map_err(cfg_err);
        let mut downlinks = vec![None];
        for i in 1..n {
            let needed = cfg.controller != ControllerKind::Pireflec;
            downlinks.push(if needed { Some(channel(STREAM_DOWNLINK + i as u64)?) } else { None });
        }
        let uplink = if cfg.controller == ControllerKind::Cmpc { Some(channel(STREAM_UPLINK + 1)?) } else { None };

        let log = TrajectoryLog::new(cfg.sim_dt, n, cfg.d_target, targets[1..].to_vec(), offsets[1..].to_vec());
        Ok(Self {
            cfg,
            path,
            robots,
            targets,
            offsets,
            d_min,
            d_max,
            downlinks,
            uplink,
            cmpc_sent: ControlInput::ZERO,
            weights: cfg.mpc.weights().map_err(cfg_err)?,
            limits: cfg.mpc.limits(),
            sensor: cfg.channel.range_sensor(),
            horizon: cfg.mpc.horizon,
            mpc_dt: cfg.mpc.dt,
            control_dt: 1.0 / cfg.control_rate_hz,
            log,
            flags: 0,
            progress_mark: (0.0, 0.0),
        })
    }

    fn flag(&mut self, f: u32) {
        self.flags |= f;
        self.log.record_event(f);
    }

    fn time_limit(&self) -> f64 {
        if let Some(d) = self.cfg.duration_s {
            return d;
        }
        let distance = if self.path.is_closed() { self.cfg.laps * self.path.length() } else { self.path.length() };
        3.0 * distance / self.cfg.v_des + self.cfg.ramp_time_s + 60.0
    }

    fn finished(&self) -> bool {
        let lead = &self.robots[0];
        if self.path.is_closed() {
            lead.travel >= self.cfg.laps * self.path.length()
        } else {
            let usable = self.path.length() - self.cfg.v_des * self.horizon as f64 * self.mpc_dt - 0.5;
            lead.true_s >= usable
        }
    }

    fn simulate(&mut self) -> Result<(), SimError> {
        let ticks_per_control = self.cfg.ticks_per_control();
        let limit = self.time_limit();
        let dt = self.cfg.sim_dt;
        let mut tick: u64 = 0;
        loop {
            let t = tick as f64 * dt;
            self.flags = 0;
            for i in 1..self.robots.len() {
                self.deliver(i, t);
            }
            if tick.is_multiple_of(ticks_per_control as u64) {
                self.control_cycle(t);
            }
            self.record(t)?;
            if self.finished() || t + 0.5 * dt >= limit {
                return Ok(());
            }
            self.step_plants(t, dt);
            tick += 1;
        }
    }

    fn deliver(&mut self, i: usize, t: f64) {
        let Some(ch) = self.downlinks[i].as_mut() else { return };
        for msg in ch.poll(t) {
            let r = &mut self.robots[i];
            match msg {
                Message::Rollout(m) => {
                    if r.latest_rollout.as_ref().is_none_or(|old| m.stamp >= old.stamp) {
                        r.latest_rollout = Some(m);
                    }
                }
                Message::Fix(m) => {
                    if r.latest_fix.is_none_or(|old| m.stamp >= old.stamp) {
                        r.latest_fix = Some(m);
                    }
                }
                Message::Command(m) => r.command = m.input,
            }
        }
    }

    fn fix_message(&self, i: usize, t: f64) -> FixMessage {
        let r = &self.robots[i];
        FixMessage { sender: i, stamp: t, pose: r.fix, path_s: r.fix_s, speed: r.state.u_act.v, u_act: r.state.u_act }
    }

    fn control_cycle(&mut self, t: f64) {
        for r in &mut self.robots {
            r.fix = localize(&r.state.pose, r.loc_noise, &r.loc_bias, &mut r.loc_rng);
            r.fix_s = self.path.project_near(&r.fix, r.fix_s, TRACK_RADIUS).coord.s;
        }
        if self.cfg.controller == ControllerKind::Cmpc {
            let msg = Message::Fix(self.fix_message(1, t));
            if !self.uplink.as_mut().expect("uplink exists").send(msg, t) {
                self.flag(FLAG_DROPPED);
            }
        }
        for i in 0..self.robots.len() {
            if i > 0 {
                self.deliver(i, t);
            }
            let command = match (self.cfg.controller, i) {
                (ControllerKind::Cmpc, 0) => self.centralized(t),
                (ControllerKind::Cmpc, _) => continue,
                (_, 0) => self.leader(t),
                (ControllerKind::Dmpc, _) => self.distributed_follower(i, t),
                (ControllerKind::Piloc, _) => self.pi_follower(i, t, false),
                (ControllerKind::Pireflec, _) => self.pi_follower(i, t, true),
            };
            if let Some(u) = command {
                self.robots[i].command = u;
            }
        }
    }

    fn leader_speed(&self, t: f64) -> f64 {
        if self.cfg.ramp_time_s > 0.0 {
            self.cfg.v_des * (t / self.cfg.ramp_time_s).min(1.0)
        } else {
            self.cfg.v_des
        }
    }

    fn horizon_times(&self, t: f64) -> Vec<f64> {
        (1..=self.horizon).map(|k| t + k as f64 * self.mpc_dt).collect()
    }

    fn leader_plan(&mut self, t: f64) -> Option<ReferencePlan> {
        let speeds: Vec<f64> =
            (0..self.horizon).map(|k| self.leader_speed(t + (k as f64 + 0.5) * self.mpc_dt)).collect();
        match plan_along(self.path, self.robots[0].fix_s, &speeds, self.mpc_dt, t) {
            Ok(plan) => {
                if plan.truncated {
                    self.flag(FLAG_PLAN_TRUNCATED);
                }
                Some(plan)
            }
            Err(_) => {
                self.flag(FLAG_NO_DATA);
                None
            }
        }
    }

    fn setup(&self, i: usize, plan: &ReferencePlan) -> VehicleSetup {
        let r = &self.robots[i];
        VehicleSetup {
            initial: VehicleState { pose: r.fix, u_act: r.state.u_act },
            u_prev: r.command,
            refs: plan.poses.clone(),
            ref_s: plan.s.clone(),
        }
    }

    fn problem(&self, vehicles: Vec<VehicleSetup>, model: ModelParams, i: usize, variant: Variant) -> MpcProblem<'a> {
        MpcProblem {
            horizon: self.horizon,
            dt: self.mpc_dt,
            vehicles,
            weights: self.weights.clone(),
            limits: self.limits,
            model,
            path: Some(self.path),
            d_min: self.d_min[i],
            d_max: self.d_max[i],
            d_targets: Vec::new(),
            variant,
        }
    }

    /// Spacing target per step: the offset itself for chordal spacing, the
    /// chord between the planned poses for arc-length spacing.
    fn spacing_targets(&self, i: usize, leader: &[Pose2], follower: &[Pose2]) -> Vec<f64> {
        let margin = 1e-6;
        leader
            .iter()
            .zip(follower)
            .map(|(l, f)| match self.cfg.spacing_mode {
                SpacingMode::Euclidean => self.offsets[i],
                SpacingMode::ArcLength => l.distance_to(f).clamp(self.d_min[i] + margin, self.d_max[i] - margin),
            })
            .collect()
    }

    /// Solve with a time-shifted warm start; `None` means hold the previous
    /// input.
    fn solve(&mut self, owner: usize, problem: &MpcProblem<'_>, t: f64) -> Option<MpcSolution> {
        let warm = self.robots[owner].warm.as_ref().map(|(stamp, prev)| time_shift(prev, t - stamp, self.mpc_dt));
        self.log.solver.solves += 1;
        match mpc::solve(problem, warm.as_ref()) {
            Ok(sol) => {
                self.log.solver.iterations += sol.iterations as u64;
                self.log.solver.max_kkt = self.log.solver.max_kkt.max(sol.kkt_residual);
                if !sol.converged {
                    self.log.solver.nonconverged += 1;
                    self.flag(FLAG_NONCONVERGED);
                }
                self.robots[owner].warm = Some((t, sol.clone()));
                Some(sol)
            }
            Err(_) => {
                self.log.solver.failures += 1;
                self.flag(FLAG_NONCONVERGED);
                None
            }
        }
    }

    fn rollout_of(&self, i: usize, sol: &MpcSolution, vehicle: usize, t: f64) -> RolloutMessage {
        let mut poses = vec![self.robots[i].fix];
        poses.extend_from_slice(&sol.states[vehicle]);
        let mut times = vec![t];
        times.extend(self.horizon_times(t));
        RolloutMessage::new(i, t, poses, times, self.robots[i].fix, t).expect("horizon has increasing stamps")
    }

    fn publish(&mut self, sender: usize, msg: Message, t: f64) {
        for f in 1..self.robots.len() {
            if self.targets[f] != sender {
                continue;
            }
            if let Some(ch) = self.downlinks[f].as_mut() {
                if !ch.send(msg.clone(), t) {
                    self.flag(FLAG_DROPPED);
                }
            }
        }
    }

    /// Publish this robot's state for its followers after it has planned.
    fn share(&mut self, i: usize, sol: Option<&MpcSolution>, t: f64) {
        match self.cfg.controller {
            ControllerKind::Dmpc => {
                if let Some(sol) = sol {
                    let ro = self.rollout_of(i, sol, 0, t);
                    self.robots[i].own_rollout = Some(ro.clone());
                    self.publish(i, Message::Rollout(ro), t);
                }
            }
            ControllerKind::Piloc => {
                let fix = self.fix_message(i, t);
                self.publish(i, Message::Fix(fix), t);
            }
            _ => {}
        }
    }

    fn accept(&self, sol: &Option<MpcSolution>, vehicle: usize) -> Option<ControlInput> {
        sol.as_ref().filter(|s| usable(s)).map(|s| s.inputs[vehicle][0])
    }

    fn leader(&mut self, t: f64) -> Option<ControlInput> {
        let plan = self.leader_plan(t)?;
        let setup = self.setup(0, &plan);
        let problem = self.problem(vec![setup], self.robots[0].model, 0, Variant::Leader);
        let sol = self.solve(0, &problem, t);
        self.share(0, sol.as_ref(), t);
        self.accept(&sol, 0)
    }

    /// Predicted poses of robot `i`'s target at the horizon times.
    fn predicted_target(&mut self, rollout: &RolloutMessage, times: &[f64]) -> Option<Vec<Pose2>> {
        let last = *rollout.times.last().expect("rollout has samples");
        if times.last().copied().unwrap_or(last) - last > self.mpc_dt + 1e-9 {
            self.flag(FLAG_STALE_ROLLOUT);
        }
        match interpolate_rollout_within(rollout, times, ROLLOUT_EXTRAPOLATION_LIMIT) {
            Ok(p) => Some(p),
            Err(_) => {
                self.flag(FLAG_NO_DATA);
                None
            }
        }
    }

    fn follower_plan(&mut self, i: usize, leader: &[Pose2], times: &[f64]) -> Option<ReferencePlan> {
        let hint = self.robots[i].target_hint;
        match plan_follower_distance_aware(self.path, leader, times, self.offsets[i], self.cfg.spacing_mode, hint) {
            Ok(plan) => {
                if plan.fallbacks > 0 {
                    self.flag(FLAG_REF_FALLBACK);
                }
                let behind = PathCoord::on_path(plan.s[0]);
                self.robots[i].target_hint =
                    self.path.normalize_s(behind.s + self.offsets[i]).ok().or(Some(self.path.project(&leader[0]).s));
                Some(plan)
            }
            Err(_) => {
                self.flag(FLAG_NO_DATA);
                None
            }
        }
    }

    fn distributed_follower(&mut self, i: usize, t: f64) -> Option<ControlInput> {
        let Some(rollout) = self.robots[i].latest_rollout.clone() else {
            self.flag(FLAG_NO_DATA);
            self.share(i, None, t);
            return None;
        };
        let times = self.horizon_times(t);
        let leader = self.predicted_target(&rollout, &times)?;
        let plan = self.follower_plan(i, &leader, &times)?;
        let setup = self.setup(i, &plan);
        let mut problem = self.problem(
            vec![setup],
            self.robots[i].model,
            i,
            Variant::FollowerDistributed { leader_traj: leader.clone() },
        );
        problem.d_targets = self.spacing_targets(i, &leader, &plan.poses);
        let sol = self.solve(i, &problem, t);
        self.share(i, sol.as_ref(), t);
        self.accept(&sol, 0)
    }

    fn pi_follower(&mut self, i: usize, t: f64, reflector: bool) -> Option<ControlInput> {
        let target = self.targets[i];
        let gap = if reflector {
            let (lead, me) = (self.robots[target].state.pose, self.robots[i].state.pose);
            let m = measure_range(&lead, &me, &self.sensor, t, &mut self.robots[i].range_rng);
            if m.valid {
                Some(m.distance)
            } else {
                self.flag(FLAG_RANGE_INVALID);
                None
            }
        } else if let Some(fx) = self.robots[i].latest_fix {
            let age = t - fx.stamp;
            let me = &self.robots[i];
            Some(match self.cfg.spacing_mode {
                SpacingMode::Euclidean => fx.pose.compose(&Pose2::new(fx.speed * age, 0.0, 0.0)).distance_to(&me.fix),
                SpacingMode::ArcLength => self.path.arc_gap(fx.path_s + fx.speed * age, me.fix_s),
            })
        } else {
            self.flag(FLAG_NO_DATA);
            None
        };
        let e = match gap.map(|g| g - self.offsets[i]).or(self.robots[i].last_e) {
            Some(e) => e,
            None => {
                self.share(i, None, t);
                return None;
            }
        };
        let r = &self.robots[i];
        let (v, pi) = pi_velocity(e, r.pi, self.cfg.pi, self.control_dt, t, self.limits.v);
        let u0 = r.command.v;
        self.robots[i].pi = pi;
        self.robots[i].last_e = Some(e);
        if v < 0.0 {
            self.flag(FLAG_PI_CLAMPED);
        }
        let (lo, hi) = ((u0 - self.limits.dv).max(self.limits.v.0), (u0 + self.limits.dv).min(self.limits.v.1));
        let v_ref = v.max(0.0);
        let v_ref = if v_ref < lo || v_ref > hi {
            self.flag(FLAG_INPUT_CLAMPED);
            v_ref.clamp(lo, hi)
        } else {
            v_ref
        };

        let here = PathCoord::on_path(self.robots[i].fix_s);
        let plan = match plan_follower_pi(self.path, &here, t, v_ref, self.horizon, self.mpc_dt, t) {
            Ok(p) => p,
            Err(_) => {
                self.flag(FLAG_NO_DATA);
                return None;
            }
        };
        if plan.truncated {
            self.flag(FLAG_PLAN_TRUNCATED);
        }
        let setup = self.setup(i, &plan);
        let problem = self.problem(vec![setup], self.robots[i].model, i, Variant::FollowerPiConstrained { v_ref });
        let sol = self.solve(i, &problem, t);
        self.share(i, sol.as_ref(), t);
        self.accept(&sol, 0)
    }

    fn centralized(&mut self, t: f64) -> Option<ControlInput> {
        if let Some(ch) = self.uplink.as_mut() {
            for msg in ch.poll(t) {
                if let Message::Fix(m) = msg {
                    if self.robots[0].latest_fix.is_none_or(|old| m.stamp >= old.stamp) {
                        self.robots[0].latest_fix = Some(m);
                    }
                }
            }
        }
        let plan = self.leader_plan(t)?;
        let lead_setup = self.setup(0, &plan);
        let Some(ff) = self.robots[0].latest_fix else {
            self.flag(FLAG_NO_DATA);
            let problem = self.problem(vec![lead_setup], self.robots[0].model, 0, Variant::Leader);
            let sol = self.solve(0, &problem, t);
            return self.accept(&sol, 0);
        };

        let times = self.horizon_times(t);
        let predicted = match self.robots[0].own_rollout.clone() {
            Some(ro) => interpolate_rollout_within(&ro, &times, ROLLOUT_EXTRAPOLATION_LIMIT).ok(),
            None => None,
        };
        let leader_poses = predicted.unwrap_or_else(|| plan.poses.clone());
        let fplan = self.follower_plan(1, &leader_poses, &times)?;

        let age = t - ff.stamp;
        let follower_setup = VehicleSetup {
            initial: VehicleState { pose: ff.pose.compose(&Pose2::new(ff.speed * age, 0.0, 0.0)), u_act: ff.u_act },
            u_prev: self.cmpc_sent,
            refs: fplan.poses.clone(),
            ref_s: fplan.s.clone(),
        };
        let mut problem = self.problem(vec![lead_setup, follower_setup], self.robots[0].model, 1, Variant::Centralized);
        problem.d_targets = self.spacing_targets(1, &leader_poses, &fplan.poses);
        let sol = self.solve(0, &problem, t);
        let s = sol.as_ref()?;
        self.robots[0].own_rollout = Some(self.rollout_of(0, s, 0, t));
        if !usable(s) {
            return None;
        }
        let cmd = CommandMessage { target: 1, stamp: t, input: s.inputs[1][0] };
        self.cmpc_sent = cmd.input;
        let input = s.inputs[0][0];
        if !self.downlinks[1].as_mut().expect("downlink exists").send(Message::Command(cmd), t) {
            self.flag(FLAG_DROPPED);
        }
        Some(input)
    }

    /// Gap between robots `ahead` and `behind` in the configured spacing
    /// metric, from true poses.
    fn gap(&self, ahead: usize, behind: usize) -> f64 {
        let (a, b) = (&self.robots[ahead], &self.robots[behind]);
        match self.cfg.spacing_mode {
            SpacingMode::Euclidean => a.state.pose.distance_to(&b.state.pose),
            SpacingMode::ArcLength => self.path.arc_gap(a.true_s, b.true_s),
        }
    }

    fn record(&mut self, t: f64) -> Result<(), SimError> {
        let n = self.robots.len();
        let mut samples = Vec::with_capacity(n);
        let mut outside = None;
        for (i, r) in self.robots.iter().enumerate() {
            let lateral = self.path.project_near(&r.state.pose, r.true_s, TRACK_RADIUS).coord.lateral;
            if lateral.abs() > self.path.corridor_half_width() + self.cfg.abort_margin_m && outside.is_none() {
                outside = Some((i, lateral));
            }
            samples.push(RobotSample {
                pose: r.state.pose,
                estimate: r.fix,
                command: r.command,
                actual: r.state.u_act,
                lateral,
            });
        }
        let gaps: Vec<f64> = (0..n - 1).map(|j| self.gap(j, j + 1)).collect();
        if gaps.iter().any(|g| (g - self.cfg.d_target).abs() > self.cfg.coupling_travel_m) {
            self.flag(FLAG_COUPLING_VIOLATION);
        }
        let target_errors = (1..n).map(|i| self.gap(self.targets[i], i) - self.offsets[i]).collect();
        self.log.rows.push(LogRow {
            time: t,
            robots: samples,
            gaps,
            flags: self.flags,
            leader_travel: self.robots[0].travel,
            target_errors,
        });
        let travel = self.robots[0].travel;
        if travel - self.progress_mark.1 >= STALL_DISTANCE {
            self.progress_mark = (t, travel);
        }
        let reason = if let Some((i, lateral)) = outside {
            format!(
                "robot {i} left the corridor at t = {t:.2} s (lateral offset {lateral:.3} m, limit {:.3} m)",
                self.path.corridor_half_width() + self.cfg.abort_margin_m
            )
        } else if t - self.progress_mark.0 > STALL_TIMEOUT_S {
            format!("robot 0 stalled: no progress since t = {:.2} s at travel {travel:.3} m", self.progress_mark.0)
        } else {
            return Ok(());
        };
        Err(SimError::Aborted {
            reason,
            log: Box::new(std::mem::replace(&mut self.log, TrajectoryLog::new(0.0, 0, 0.0, vec![], vec![]))),
        })
    }

    fn step_plants(&mut self, t: f64, dt: f64) {
        for (i, r) in self.robots.iter_mut().enumerate() {
            let mut u = r.command;
            if let Some(d) = &self.cfg.disturbance {
                if d.robot == i && t >= d.start_s && t < d.start_s + d.duration_s {
                    u.v *= d.speed_scale;
                }
            }
            r.state = vehicle::step(&r.state, u, dt, &r.params);
            let s = self.path.project_near(&r.state.pose, r.true_s, TRACK_RADIUS).coord.s;
            r.travel += self.path.arc_gap(s, r.true_s);
            r.true_s = s;
        }
    }
}

/// Converged, or stationary with only a residual constraint violation. The
/// latter happens when the spacing or corridor bounds cannot be met from
/// the current state; the least-violation plan is applied instead of
/// holding the previous input.
fn usable(sol: &MpcSolution) -> bool {
    sol.converged || sol.kkt_residual < mpc::KKT_TOLERANCE
}

/// Warm start for a solve `elapsed` seconds after `prev`: input k takes the
/// previous input covering the same absolute time.
fn time_shift(prev: &MpcSolution, elapsed: f64, dt: f64) -> MpcSolution {
    let shift = |k: usize, len: usize| (((k as f64 * dt + elapsed) / dt + 1e-9).floor().max(0.0) as usize).min(len - 1);
    let mut out = prev.clone();
    for (dst, src) in out.inputs.iter_mut().zip(&prev.inputs) {
        for (k, u) in dst.iter_mut().enumerate() {
            *u = src[shift(k, src.len())];
        }
    }
    for (dst, src) in out.states.iter_mut().zip(&prev.states) {
        for (k, p) in dst.iter_mut().enumerate() {
            *p = src[shift(k, src.len())];
        }
    }
    out.merit_history.clear();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::scenario::{Scenario, ScenarioConfig};

    fn straight_config(controller: ControllerKind) -> ConvoyConfig {
        ConvoyConfig {
            scenario: ScenarioConfig { shape: Scenario::Straight { length: 30.0 }, corridor_half_width: 0.5 },
            controller,
            ..ConvoyConfig::default()
        }
    }

    #[test]
    fn time_shift_maps_absolute_time() {
        let inputs: Vec<ControlInput> = (0..4).map(|k| ControlInput::new(k as f64, 0.0)).collect();
        let prev = MpcSolution {
            states: vec![vec![Pose2::IDENTITY; 4]],
            inputs: vec![inputs],
            costs: Default::default(),
            kkt_residual: 0.0,
            constraint_violation_max: 0.0,
            iterations: 0,
            converged: true,
            merit_history: vec![1.0],
        };
        let v = |s: &MpcSolution| s.inputs[0].iter().map(|u| u.v).collect::<Vec<_>>();
        assert_eq!(v(&time_shift(&prev, 0.1, 0.25)), vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(v(&time_shift(&prev, 0.3, 0.25)), vec![1.0, 2.0, 3.0, 3.0]);
        assert_eq!(v(&time_shift(&prev, 0.25, 0.25)), vec![1.0, 2.0, 3.0, 3.0]);
    }

    #[test]
    fn followers_are_placed_at_the_spacing() {
        let cfg = ConvoyConfig { duration_s: Some(0.05), ..straight_config(ControllerKind::Dmpc) };
        let out = run(&cfg, 1).unwrap();
        let first = &out.log.rows[0];
        assert!((first.gaps[0] - 1.5).abs() < 1e-9, "{:?}", first.gaps);
        assert!((first.robots[0].pose.x - 1.5).abs() < 1e-9);
    }

    #[test]
    fn reflector_runs_without_a_channel() {
        let mut cfg = straight_config(ControllerKind::Pireflec);
        cfg.channel.drop_prob = 1.0;
        cfg.duration_s = Some(8.0);
        let out = run(&cfg, 3).unwrap();
        assert_eq!(out.log.event_counts[4], 0, "no messages are sent");
        let last = out.log.rows.last().unwrap();
        assert!(last.robots[1].pose.x > 1.0, "follower moved");
    }

    #[test]
    fn same_seed_same_log() {
        let mut cfg = straight_config(ControllerKind::Dmpc);
        cfg.duration_s = Some(5.0);
        for r in &mut cfg.robots {
            r.loc_noise_std = 0.01;
        }
        let a = run(&cfg, 9).unwrap();
        let b = run(&cfg, 9).unwrap();
        assert_eq!(a.log.to_csv_string(), b.log.to_csv_string());
        assert_eq!(a.metrics.to_json(), b.metrics.to_json());
    }

    #[test]
    fn corridor_exit_aborts_with_partial_log() {
        // the leader steers its biased fix onto the path, which puts its true
        // pose 0.7 m to the side
        let mut cfg = straight_config(ControllerKind::Dmpc);
        cfg.scenario.corridor_half_width = 0.1;
        cfg.robots[0].loc_bias = Pose2::new(0.0, 0.7, 0.0);
        match run(&cfg, 0) {
            Err(SimError::Aborted { log, reason }) => {
                assert!(!log.rows.is_empty());
                assert!(reason.contains("robot 0 left the corridor"), "{reason}");
            }
            other => panic!("expected abort, got {:?}", other.map(|o| o.metrics)),
        }
    }

    #[test]
    fn unreachable_corner_stalls_and_aborts() {
        // a 90° corner is out of reach for the minimum turn radius: the
        // closest feasible arc passes R(√2 − 1) ≈ 0.64 m from the vertex
        let cfg = ConvoyConfig {
            scenario: ScenarioConfig {
                shape: Scenario::SharpCorner { leg: 10.0, radius: 0.0 },
                corridor_half_width: 0.1,
            },
            ..ConvoyConfig::default()
        };
        match run(&cfg, 0) {
            Err(SimError::Aborted { log, reason }) => {
                assert!(reason.contains("robot 0"), "{reason}");
                assert!(log.rows.last().unwrap().time < 40.0);
            }
            other => panic!("expected abort, got {:?}", other.map(|o| o.metrics)),
        }
    }
}
