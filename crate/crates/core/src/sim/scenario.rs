//! Analytic test routes.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::geometry::Pose2;
use crate::path::{PathError, PathFile, TeachPath};

/// Arc sampling step in radians.
const ARC_STEP: f64 = PI / 180.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Scenario {
    Straight {
        length: f64,
    },
    Circle {
        radius: f64,
    },
    /// Straight lead-in, `spans` quarter arcs of alternating direction,
    /// straight lead-out.
    SCurve {
        radius: f64,
        spans: usize,
        #[serde(default = "default_lead")]
        lead: f64,
    },
    /// Closed loop starting mid-way along the bottom side.
    RoundedRect {
        width: f64,
        height: f64,
        corner_radius: f64,
    },
    /// Two legs joined by a 90° left turn of radius `radius` (0 for a
    /// true corner).
    SharpCorner {
        #[serde(default = "default_leg")]
        leg: f64,
        #[serde(default)]
        radius: f64,
    },
    /// Waypoints from a path file.
    File {
        path: String,
    },
}

fn default_lead() -> f64 {
    5.0
}

fn default_leg() -> f64 {
    20.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(flatten)]
    pub shape: Scenario,
    #[serde(default = "default_half_width")]
    pub corridor_half_width: f64,
}

fn default_half_width() -> f64 {
    0.5
}

impl ScenarioConfig {
    pub fn build(&self) -> Result<TeachPath, PathError> {
        if let Scenario::File { path } = &self.shape {
            let mut file = PathFile::load(path)?;
            file.corridor_half_width = self.corridor_half_width;
            return file.build();
        }
        let (pts, closed) = generate_scenario(&self.shape)?;
        TeachPath::build(&pts, self.corridor_half_width, closed)
    }
}

fn arc(out: &mut Vec<Pose2>, center: (f64, f64), r: f64, from: f64, sweep: f64) {
    let n = (sweep.abs() / ARC_STEP).ceil().max(1.0) as usize;
    for i in 1..=n {
        let a = from + sweep * i as f64 / n as f64;
        out.push(Pose2::new(center.0 + r * a.cos(), center.1 + r * a.sin(), 0.0));
    }
}

fn positive(name: &str, v: f64) -> Result<(), PathError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(PathError::InvalidPath(format!("{name} must be positive, got {v}")))
    }
}

/// Waypoints and the closed flag of an analytic route. Headings are left at
/// zero; the path builder derives them from the tangents.
pub fn generate_scenario(shape: &Scenario) -> Result<(Vec<Pose2>, bool), PathError> {
    match *shape {
        Scenario::Straight { length } => {
            positive("length", length)?;
            Ok((vec![Pose2::new(0.0, 0.0, 0.0), Pose2::new(length, 0.0, 0.0)], false))
        }
        Scenario::Circle { radius } => {
            positive("radius", radius)?;
            let pts = (0..360)
                .map(|i| {
                    let a = i as f64 * ARC_STEP - FRAC_PI_2;
                    Pose2::new(radius * a.cos(), radius + radius * a.sin(), 0.0)
                })
                .collect();
            Ok((pts, true))
        }
        Scenario::SCurve { radius, spans, lead } => {
            positive("radius", radius)?;
            positive("lead", lead)?;
            if spans == 0 {
                return Err(PathError::InvalidPath("spans must be at least 1".into()));
            }
            let mut pts = vec![Pose2::new(0.0, 0.0, 0.0), Pose2::new(lead, 0.0, 0.0)];
            let (mut x, mut y, mut heading) = (lead, 0.0, 0.0f64);
            for i in 0..spans {
                let left = i % 2 == 0;
                let side = if left { 1.0 } else { -1.0 };
                let normal = heading + side * FRAC_PI_2;
                let center = (x + radius * normal.cos(), y + radius * normal.sin());
                let from = normal + PI;
                arc(&mut pts, center, radius, from, side * FRAC_PI_2);
                heading += side * FRAC_PI_2;
                let last = pts.last().expect("arc pushed points");
                x = last.x;
                y = last.y;
            }
            pts.push(Pose2::new(x + lead * heading.cos(), y + lead * heading.sin(), 0.0));
            Ok((pts, false))
        }
        Scenario::RoundedRect { width, height, corner_radius: r } => {
            positive("width", width)?;
            positive("height", height)?;
            positive("corner_radius", r)?;
            if 2.0 * r > width.min(height) {
                return Err(PathError::InvalidPath("corner radius too large for the rectangle".into()));
            }
            let mut pts = vec![Pose2::new(0.5 * width, 0.0, 0.0), Pose2::new(width - r, 0.0, 0.0)];
            arc(&mut pts, (width - r, r), r, -FRAC_PI_2, FRAC_PI_2);
            pts.push(Pose2::new(width, height - r, 0.0));
            arc(&mut pts, (width - r, height - r), r, 0.0, FRAC_PI_2);
            pts.push(Pose2::new(r, height, 0.0));
            arc(&mut pts, (r, height - r), r, FRAC_PI_2, FRAC_PI_2);
            pts.push(Pose2::new(0.0, r, 0.0));
            arc(&mut pts, (r, r), r, PI, FRAC_PI_2);
            dedup(&mut pts);
            Ok((pts, true))
        }
        Scenario::SharpCorner { leg, radius } => {
            positive("leg", leg)?;
            if !(radius >= 0.0) || radius >= leg {
                return Err(PathError::InvalidPath(format!("corner radius {radius} must lie in [0, leg)")));
            }
            let mut pts = vec![Pose2::new(0.0, 0.0, 0.0), Pose2::new(leg - radius, 0.0, 0.0)];
            if radius > 0.0 {
                arc(&mut pts, (leg - radius, radius), radius, -FRAC_PI_2, FRAC_PI_2);
            }
            pts.push(Pose2::new(leg, leg, 0.0));
            dedup(&mut pts);
            Ok((pts, false))
        }
        Scenario::File { .. } => Err(PathError::InvalidPath("file scenarios are loaded, not generated".into())),
    }
}

fn dedup(pts: &mut Vec<Pose2>) {
    pts.dedup_by(|b, a| a.distance_to(b) < 1e-9);
}
