//! Planar rigid-body poses and the SE(2) exponential / logarithm.
//!
//! Twists are ordered `(rho_x, rho_y, phi)`: translation part first, rotation
//! last. Every constructor wraps the heading into (−π, π].

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dual::Scalar;

/// Below this rotation magnitude exp/log switch to the series form of the
/// V matrix.
pub const SMALL_ANGLE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeometryError {
    #[error("interpolation parameter {0} outside [0, 1]")]
    AlphaOutOfRange(f64),
}

/// Wrap an angle into (−π, π].
#[inline]
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// An element of SE(2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

/// An element of se(2) in vector form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Twist2 {
    pub rho_x: f64,
    pub rho_y: f64,
    pub phi: f64,
}

impl Pose2 {
    pub const IDENTITY: Pose2 = Pose2 { x: 0.0, y: 0.0, theta: 0.0 };

    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: wrap_angle(theta) }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn distance_to(&self, other: &Pose2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        compose(self, other)
    }

    pub fn inverse(&self) -> Pose2 {
        inverse(self)
    }
}

impl Default for Pose2 {
    fn default() -> Self {
        Pose2::IDENTITY
    }
}

impl fmt::Display for Pose2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.4}, {:.4}, {:.4})", self.x, self.y, self.theta)
    }
}

impl Twist2 {
    pub fn new(rho_x: f64, rho_y: f64, phi: f64) -> Self {
        Self { rho_x, rho_y, phi }
    }

    pub fn scale(&self, s: f64) -> Twist2 {
        Twist2::new(self.rho_x * s, self.rho_y * s, self.phi * s)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.rho_x, self.rho_y, self.phi]
    }
}

/// Group product `a · b`.
pub fn compose(a: &Pose2, b: &Pose2) -> Pose2 {
    let (s, c) = a.theta.sin_cos();
    Pose2::new(a.x + c * b.x - s * b.y, a.y + s * b.x + c * b.y, a.theta + b.theta)
}

pub fn inverse(a: &Pose2) -> Pose2 {
    let (s, c) = a.theta.sin_cos();
    Pose2::new(-(c * a.x + s * a.y), s * a.x - c * a.y, -a.theta)
}

/// Closed-form exponential, generic so the MPC can differentiate it.
/// Returns `(x, y, theta)` with `theta` unwrapped.
pub(crate) fn exp_kernel<S: Scalar>(rho_x: S, rho_y: S, phi: S) -> [S; 3] {
    // V = [[a, -b], [b, a]], a = sin φ / φ, b = (1 - cos φ) / φ
    let (a, b) = if phi.re().abs() < SMALL_ANGLE {
        (S::cst(1.0) - phi * phi / 6.0, phi * 0.5)
    } else {
        let half = (phi * 0.5).sin();
        (phi.sin() / phi, half * half * 2.0 / phi)
    };
    [a * rho_x - b * rho_y, b * rho_x + a * rho_y, phi]
}

/// Closed-form logarithm of `(x, y, theta)`; `theta` must already be wrapped.
pub(crate) fn log_kernel<S: Scalar>(x: S, y: S, theta: S) -> [S; 3] {
    // V⁻¹ = [[h cot h, h], [-h, h cot h]] with h = φ / 2
    let h = theta * 0.5;
    let c = if theta.re().abs() < SMALL_ANGLE { S::cst(1.0) - theta * theta / 12.0 } else { h * h.cos() / h.sin() };
    [c * x + h * y, c * y - h * x, theta]
}

pub fn exp_se2(xi: &Twist2) -> Pose2 {
    let [x, y, theta] = exp_kernel(xi.rho_x, xi.rho_y, xi.phi);
    Pose2::new(x, y, theta)
}

pub fn log_se2(t: &Pose2) -> Twist2 {
    let [rho_x, rho_y, phi] = log_kernel(t.x, t.y, wrap_angle(t.theta));
    Twist2 { rho_x, rho_y, phi }
}

/// Geodesic interpolation `exp(α · log(b ∘ a⁻¹)) ∘ a`. The endpoints are
/// returned exactly.
pub fn interpolate(a: &Pose2, b: &Pose2, alpha: f64) -> Result<Pose2, GeometryError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(GeometryError::AlphaOutOfRange(alpha));
    }
    if alpha == 0.0 {
        return Ok(*a);
    }
    if alpha == 1.0 {
        return Ok(*b);
    }
    Ok(geodesic(a, b, alpha))
}

/// Same curve as [`interpolate`] without the range check; `alpha > 1`
/// extrapolates along the constant twist.
pub(crate) fn geodesic(a: &Pose2, b: &Pose2, alpha: f64) -> Pose2 {
    let delta = log_se2(&compose(b, &inverse(a)));
    compose(&exp_se2(&delta.scale(alpha)), a)
}
