//! Convoy path tracking for Ackermann vehicles sharing a teach path.
//!
//! Four follower controllers are provided: distributed MPC on the leader's
//! shared rollout, centralized MPC, and two PI spacing loops (one on
//! localization, one on a direct range sensor). [`sim::run`] closes the loop
//! against a kinematic plant with a simulated channel.

// NaN must fail every validity check, so bounds are written as negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod comms;
pub mod dual;
pub mod geometry;
pub mod mpc;
pub mod path;
pub mod planner;
pub mod sim;
pub mod vehicle;

pub use geometry::{Pose2, Twist2};
pub use path::{PathCoord, TeachPath};
pub use vehicle::{ControlInput, VehicleParams, VehicleState};
