//! Teach path: an arc-length parameterized pose polyline with a corridor.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, wrap_angle, Pose2};

/// Maximum spacing between consecutive vertices after resampling.
pub const RESAMPLE_SPACING: f64 = 0.1;
/// Bisection tolerance for the chordal back-offset search.
pub const OFFSET_TOLERANCE: f64 = 1e-4;
const SEARCH_WINDOW_FACTOR: f64 = 4.0;
const SCAN_STEP: f64 = 0.05;

#[derive(Debug, Error)]
pub enum PathError {
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("arc length {s} outside [0, {length}] on an open path")]
    OutOfRange { s: f64, length: f64 },
    #[error("no point at chordal distance {distance} behind s = {anchor_s}")]
    NoSolution { anchor_s: f64, distance: f64 },
    #[error("offset distance must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("reading path file: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing path file: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathVertex {
    pub pose: Pose2,
    pub s: f64,
}

/// Position of a pose relative to the path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathCoord {
    pub s: f64,
    /// Signed offset, positive to the left of the direction of travel.
    pub lateral: f64,
    pub heading_err: f64,
}

impl PathCoord {
    pub fn on_path(s: f64) -> Self {
        Self { s, lateral: 0.0, heading_err: 0.0 }
    }
}

/// Projection result with the supporting segment, used where the gradient
/// of the lateral offset is needed.
#[derive(Debug, Clone, Copy)]
pub struct Projection {
    pub coord: PathCoord,
    pub segment: usize,
    /// Unit tangent of the supporting segment.
    pub tangent: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct TeachPath {
    vertices: Vec<PathVertex>,
    closed: bool,
    corridor_half_width: f64,
    length: f64,
}

/// One waypoint of a path file; `theta` is ignored because headings are
/// recomputed from segment tangents.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WaypointSpec {
    pub x: f64,
    pub y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

/// On-disk path description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathFile {
    pub waypoints: Vec<WaypointSpec>,
    pub corridor_half_width: f64,
    #[serde(default)]
    pub closed: bool,
}

impl PathFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PathError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn build(&self) -> Result<TeachPath, PathError> {
        let poses: Vec<Pose2> = self.waypoints.iter().map(|w| Pose2::new(w.x, w.y, w.theta.unwrap_or(0.0))).collect();
        TeachPath::build(&poses, self.corridor_half_width, self.closed)
    }
}

impl TeachPath {
    /// Resample `waypoints` to at most [`RESAMPLE_SPACING`] between vertices.
    /// A closed path gets the segment from the last waypoint back to the
    /// first; repeating the first waypoint at the end is accepted.
    pub fn build(waypoints: &[Pose2], corridor_half_width: f64, closed: bool) -> Result<TeachPath, PathError> {
        if !(corridor_half_width > 0.0) {
            return Err(PathError::InvalidPath(format!(
                "corridor half-width must be positive, got {corridor_half_width}"
            )));
        }
        let mut pts: Vec<[f64; 2]> = waypoints.iter().map(|w| [w.x, w.y]).collect();
        if pts.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(PathError::InvalidPath("non-finite waypoint".into()));
        }
        if closed && pts.len() > 2 && dist(pts[0], pts[pts.len() - 1]) < 1e-9 {
            pts.pop();
        }
        if pts.len() < 2 {
            return Err(PathError::InvalidPath("at least two waypoints required".into()));
        }
        for (i, w) in pts.windows(2).enumerate() {
            if dist(w[0], w[1]) < 1e-9 {
                return Err(PathError::InvalidPath(format!("waypoints {i} and {} coincide", i + 1)));
            }
        }
        if closed {
            pts.push(pts[0]);
        }

        let mut vertices = Vec::new();
        let mut s = 0.0;
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let len = dist(a, b);
            let heading = (b[1] - a[1]).atan2(b[0] - a[0]);
            let n = ((len / RESAMPLE_SPACING) - 1e-9).ceil().max(1.0) as usize;
            for j in 0..n {
                let t = j as f64 / n as f64;
                vertices.push(PathVertex {
                    pose: Pose2::new(a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), heading),
                    s: s + t * len,
                });
            }
            s += len;
        }
        if !closed {
            let last = pts[pts.len() - 1];
            let heading = vertices.last().map(|v| v.pose.theta).unwrap_or(0.0);
            vertices.push(PathVertex { pose: Pose2::new(last[0], last[1], heading), s });
        }
        Ok(TeachPath { vertices, closed, corridor_half_width, length: s })
    }

    pub fn vertices(&self) -> &[PathVertex] {
        &self.vertices
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn corridor_half_width(&self) -> f64 {
        self.corridor_half_width
    }

    fn segment_count(&self) -> usize {
        if self.closed {
            self.vertices.len()
        } else {
            self.vertices.len() - 1
        }
    }

    /// Endpoints and start arc length of segment `i`.
    fn segment(&self, i: usize) -> (&PathVertex, &PathVertex, f64) {
        let a = &self.vertices[i];
        let b = &self.vertices[(i + 1) % self.vertices.len()];
        let end_s = if i + 1 == self.vertices.len() { self.length } else { b.s };
        (a, b, end_s)
    }

    /// Canonical arc length: wrapped on closed paths, checked on open ones.
    pub fn normalize_s(&self, s: f64) -> Result<f64, PathError> {
        if self.closed {
            let w = s.rem_euclid(self.length);
            Ok(if w >= self.length { 0.0 } else { w })
        } else if s < -1e-12 || s > self.length + 1e-12 {
            Err(PathError::OutOfRange { s, length: self.length })
        } else {
            Ok(s.clamp(0.0, self.length))
        }
    }

    fn segment_at(&self, s: f64) -> usize {
        // last vertex with vertex.s <= s
        let idx = self.vertices.partition_point(|v| v.s <= s);
        idx.saturating_sub(1).min(self.segment_count() - 1)
    }

    pub fn pose_at(&self, s: f64) -> Result<Pose2, PathError> {
        let s = self.normalize_s(s)?;
        let i = self.segment_at(s);
        let (a, b, end_s) = self.segment(i);
        let alpha = ((s - a.s) / (end_s - a.s)).clamp(0.0, 1.0);
        let x = a.pose.x + alpha * (b.pose.x - a.pose.x);
        let y = a.pose.y + alpha * (b.pose.y - a.pose.y);
        let theta = geometry::interpolate(&a.pose, &b.pose, alpha).map(|p| p.theta).unwrap_or(a.pose.theta);
        Ok(Pose2::new(x, y, theta))
    }

    /// Heading of the path at `s` (same convention as [`Self::pose_at`]).
    pub fn heading_at(&self, s: f64) -> Result<f64, PathError> {
        Ok(self.pose_at(s)?.theta)
    }

    fn project_segment(&self, i: usize, p: [f64; 2]) -> (f64, f64, [f64; 2]) {
        let (a, b, end_s) = self.segment(i);
        let len = end_s - a.s;
        let t_hat = [(b.pose.x - a.pose.x) / len, (b.pose.y - a.pose.y) / len];
        let rel = [p[0] - a.pose.x, p[1] - a.pose.y];
        let along = (rel[0] * t_hat[0] + rel[1] * t_hat[1]).clamp(0.0, len);
        let q = [a.pose.x + along * t_hat[0], a.pose.y + along * t_hat[1]];
        let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
        (d2, a.s + along, t_hat)
    }

    fn finish_projection(&self, p: &Pose2, best: (usize, f64, [f64; 2])) -> Projection {
        let (segment, s, t_hat) = best;
        let (a, _, _) = self.segment(segment);
        let rel = [p.x - a.pose.x, p.y - a.pose.y];
        let lateral = t_hat[0] * rel[1] - t_hat[1] * rel[0];
        let s = if self.closed && s >= self.length { 0.0 } else { s };
        let heading = self.heading_at(s).unwrap_or(a.pose.theta);
        Projection {
            coord: PathCoord { s, lateral, heading_err: wrap_angle(p.theta - heading) },
            segment,
            tangent: t_hat,
        }
    }

    /// Global nearest point on the polyline; ties go to the smallest `s`.
    pub fn project(&self, p: &Pose2) -> PathCoord {
        self.project_detailed(p).coord
    }

    pub fn project_detailed(&self, p: &Pose2) -> Projection {
        let pt = [p.x, p.y];
        let mut best = (0usize, f64::INFINITY, 0.0, [1.0, 0.0]);
        for i in 0..self.segment_count() {
            let (d2, s, t_hat) = self.project_segment(i, pt);
            if d2 < best.1 - 1e-15 {
                best = (i, d2, s, t_hat);
            }
        }
        self.finish_projection(p, (best.0, best.2, best.3))
    }

    /// Nearest point restricted to segments overlapping `[center - radius,
    /// center + radius]` (wrapping on closed paths).
    pub fn project_near(&self, p: &Pose2, center_s: f64, radius: f64) -> Projection {
        if 2.0 * radius >= self.length {
            return self.project_detailed(p);
        }
        let pt = [p.x, p.y];
        let mut best = (usize::MAX, f64::INFINITY, 0.0, [1.0, 0.0]);
        let mut consider = |lo: f64, hi: f64| {
            let first = self.segment_at(lo.max(0.0));
            for i in first..self.segment_count() {
                if self.vertices[i].s > hi {
                    break;
                }
                let (d2, s, t_hat) = self.project_segment(i, pt);
                if d2 < best.1 - 1e-15 {
                    best = (i, d2, s, t_hat);
                }
            }
        };
        let (lo, hi) = (center_s - radius, center_s + radius);
        if self.closed && lo < 0.0 {
            consider(lo + self.length, self.length);
            consider(0.0, hi);
        } else if self.closed && hi > self.length {
            consider(0.0, hi - self.length);
            consider(lo, self.length);
        } else {
            consider(lo.max(0.0), hi.min(self.length));
        }
        if best.0 == usize::MAX {
            return self.project_detailed(p);
        }
        self.finish_projection(p, (best.0, best.2, best.3))
    }

    /// Largest `s* < anchor.s` whose path point lies at chordal distance `d`
    /// from the anchor point, searched within `[anchor.s − 4d, anchor.s]`.
    pub fn offset_behind_euclidean(&self, anchor: &PathCoord, d: f64) -> Result<PathCoord, PathError> {
        if !(d > 0.0) {
            return Err(PathError::NonPositiveDistance(d));
        }
        let origin = self.pose_at(anchor.s)?;
        let gap = |s: f64| -> Result<f64, PathError> {
            let q = self.pose_at(s)?;
            Ok(q.distance_to(&origin) - d)
        };
        let mut lower = anchor.s - SEARCH_WINDOW_FACTOR * d;
        if !self.closed {
            lower = lower.max(0.0);
        }
        let no_solution = || PathError::NoSolution { anchor_s: anchor.s, distance: d };

        // walk backwards until the chord first reaches d, then bisect
        let mut hi = anchor.s;
        loop {
            let lo = (hi - SCAN_STEP).max(lower);
            if lo >= hi {
                return Err(no_solution());
            }
            let g_lo = gap(lo)?;
            if lo == lower && g_lo < 0.0 && g_lo > -OFFSET_TOLERANCE {
                // the search boundary itself is the solution up to rounding
                return Ok(PathCoord::on_path(self.normalize_s(lo)?));
            }
            if g_lo >= 0.0 {
                let (mut inside, mut outside) = (hi, lo);
                while (inside - outside).abs() > 1e-12 {
                    let mid = 0.5 * (inside + outside);
                    let g = gap(mid)?;
                    if g == 0.0 {
                        return Ok(PathCoord::on_path(self.normalize_s(mid)?));
                    }
                    if g < 0.0 {
                        inside = mid;
                    } else {
                        outside = mid;
                    }
                }
                let s = 0.5 * (inside + outside);
                if gap(s)?.abs() > OFFSET_TOLERANCE {
                    return Err(no_solution());
                }
                return Ok(PathCoord::on_path(self.normalize_s(s)?));
            }
            hi = lo;
        }
    }

    /// `s* = anchor.s − d`, wrapped on closed paths.
    pub fn offset_behind_arclength(&self, anchor: &PathCoord, d: f64) -> Result<PathCoord, PathError> {
        if !(d > 0.0) {
            return Err(PathError::NonPositiveDistance(d));
        }
        let s = anchor.s - d;
        if !self.closed && s < 0.0 {
            return Err(PathError::OutOfRange { s, length: self.length });
        }
        Ok(PathCoord::on_path(self.normalize_s(s)?))
    }

    /// Half-width minus the absolute lateral offset; negative means outside.
    pub fn corridor_margin(&self, p: &Pose2) -> f64 {
        self.corridor_half_width - self.project(p).lateral.abs()
    }

    /// Signed arc-length difference `s_ahead − s_behind`, taken modulo the
    /// length on closed paths so it lies in (−L/2, L/2].
    pub fn arc_gap(&self, s_ahead: f64, s_behind: f64) -> f64 {
        let raw = s_ahead - s_behind;
        if self.closed {
            let w = raw.rem_euclid(self.length);
            if w > 0.5 * self.length {
                w - self.length
            } else {
                w
            }
        } else {
            raw
        }
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn straight(len: f64) -> TeachPath {
        TeachPath::build(&[Pose2::IDENTITY, Pose2::new(len, 0.0, 0.0)], 0.5, false).unwrap()
    }

    fn circle(r: f64) -> TeachPath {
        let pts: Vec<Pose2> = (0..360)
            .map(|i| {
                let a = (i as f64).to_radians();
                Pose2::new(r * a.cos(), r * a.sin(), 0.0)
            })
            .collect();
        TeachPath::build(&pts, 0.5, true).unwrap()
    }

    /// Nearest vertex of a 1 mm resampling of the path.
    fn dense_nearest(path: &TeachPath, p: &Pose2) -> (f64, f64) {
        let n = (path.length() / 1e-3) as usize;
        (0..=n)
            .map(|i| {
                let s = (i as f64 * 1e-3).min(path.length());
                (s, path.pose_at(s).unwrap().distance_to(p))
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
    }

    #[test]
    fn build_examples() {
        let p = straight(10.0);
        assert_eq!(p.vertices().len(), 101);
        assert!((p.length() - 10.0).abs() < 1e-12);

        let square = [(0.0, 0.0), (4.0, 0.0), (4.0, 4.0), (0.0, 4.0)].map(|(x, y)| Pose2::new(x, y, 0.0));
        let sq = TeachPath::build(&square, 0.5, true).unwrap();
        assert!((sq.length() - 16.0).abs() < 1e-12);
        assert_eq!(sq.vertices().len(), 160);

        let c = circle(5.0);
        assert!((c.length() - 10.0 * PI).abs() / (10.0 * PI) < 1e-3);
    }

    #[test]
    fn build_rejects_degenerate_input() {
        let dup = [Pose2::IDENTITY, Pose2::IDENTITY, Pose2::new(1.0, 0.0, 0.0)];
        assert!(matches!(TeachPath::build(&dup, 0.5, false), Err(PathError::InvalidPath(_))));
        assert!(TeachPath::build(&[Pose2::IDENTITY], 0.5, false).is_err());
        assert!(TeachPath::build(&[Pose2::IDENTITY, Pose2::new(1.0, 0.0, 0.0)], 0.0, false).is_err());
    }

    #[test]
    fn vertex_invariants_hold() {
        let c = circle(3.0);
        let v = c.vertices();
        assert_eq!(v[0].s, 0.0);
        for w in v.windows(2) {
            assert!(w[1].s > w[0].s);
            let d = w[0].pose.distance_to(&w[1].pose);
            assert!(d <= RESAMPLE_SPACING + 1e-12);
            let dir = (w[1].pose.y - w[0].pose.y).atan2(w[1].pose.x - w[0].pose.x);
            assert!(wrap_angle(dir - w[0].pose.theta).abs() < 0.2);
        }
    }

    #[test]
    fn project_examples() {
        let p = straight(10.0);
        let c = p.project(&Pose2::new(2.0, 0.5, 0.0));
        assert!((c.s - 2.0).abs() < 1e-12 && (c.lateral - 0.5).abs() < 1e-12);
        assert_eq!(c.heading_err, 0.0);
        let right = p.project(&Pose2::new(3.0, -0.25, 0.1));
        assert!((right.lateral + 0.25).abs() < 1e-12 && (right.heading_err - 0.1).abs() < 1e-12);

        let beyond = p.project(&Pose2::new(12.0, 0.3, 0.0));
        assert_eq!(beyond.s, 10.0);

        let circ = circle(5.0);
        for (x, y) in [(7.0, 1.0), (-2.0, 6.5), (0.3, -8.0)] {
            let q = Pose2::new(x, y, 0.0);
            let got = circ.project(&q);
            let (_, oracle) = dense_nearest(&circ, &q);
            // exterior point: left of a counter-clockwise circle is inside
            assert!((got.lateral.abs() - oracle).abs() < 1e-3);
            assert!(got.lateral < 0.0);
            assert!((got.lateral.abs() - ((x * x + y * y).sqrt() - 5.0)).abs() < 2e-3);
        }
    }

    #[test]
    fn project_ties_take_smallest_s() {
        // a point equidistant from both legs of a U
        let u = [(0.0, 0.0), (4.0, 0.0), (4.0, 2.0), (0.0, 2.0)].map(|(x, y)| Pose2::new(x, y, 0.0));
        let path = TeachPath::build(&u, 2.0, false).unwrap();
        let c = path.project(&Pose2::new(1.0, 1.0, 0.0));
        assert!((c.s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pose_at_examples() {
        let p = straight(10.0);
        let q = p.pose_at(3.3).unwrap();
        assert!((q.x - 3.3).abs() < 1e-12 && q.y == 0.0 && q.theta == 0.0);
        assert_eq!(p.pose_at(0.0).unwrap(), p.vertices()[0].pose);
        assert!(matches!(p.pose_at(10.5), Err(PathError::OutOfRange { .. })));
        assert!(p.pose_at(-0.1).is_err());

        let c = circle(5.0);
        let q = c.pose_at(5.0 * PI / 2.0).unwrap();
        assert!(q.x.abs() < 1e-3 && (q.y - 5.0).abs() < 1e-3);
        assert!(wrap_angle(q.theta - PI).abs() < 0.02);
        // closed paths accept any s
        let wrapped = c.pose_at(c.length() + 1.0).unwrap();
        assert!(wrapped.distance_to(&c.pose_at(1.0).unwrap()) < 1e-9);
    }

    #[test]
    fn euclidean_offset_examples() {
        let p = straight(20.0);
        let got = p.offset_behind_euclidean(&PathCoord::on_path(10.0), 1.5).unwrap();
        assert!((got.s - 8.5).abs() < 1e-4);

        let c = circle(5.0);
        let anchor = PathCoord::on_path(12.0);
        let got = c.offset_behind_euclidean(&anchor, 1.5).unwrap();
        let analytic = 2.0 * 5.0 * (1.5f64 / 10.0).asin();
        assert!((analytic - 1.50565).abs() < 1e-4);
        assert!(((anchor.s - got.s) - analytic).abs() < 2e-3);
        let chord = c.pose_at(got.s).unwrap().distance_to(&c.pose_at(anchor.s).unwrap());
        assert!((chord - 1.5).abs() < 1e-4);
    }

    #[test]
    fn euclidean_offset_across_a_corner_matches_dense_sampling() {
        let pts = [(0.0, 0.0), (5.0, 0.0), (5.0, 5.0)].map(|(x, y)| Pose2::new(x, y, 0.0));
        let p = TeachPath::build(&pts, 0.5, false).unwrap();
        let anchor = PathCoord::on_path(5.5);
        let got = p.offset_behind_euclidean(&anchor, 1.5).unwrap();
        let a = p.pose_at(anchor.s).unwrap();
        // brute force: largest 1 mm sample below anchor with chord closest to d
        let mut best = (0.0, f64::INFINITY);
        let mut s = anchor.s;
        while s > (anchor.s - 6.0).max(0.0) {
            let err = (p.pose_at(s).unwrap().distance_to(&a) - 1.5).abs();
            if err < best.1 {
                best = (s, err);
            }
            s -= 1e-3;
        }
        assert!((got.s - best.0).abs() < 2e-3);
        // legs of the right triangle: 0.5 up, sqrt(1.5² − 0.5²) back
        assert!((got.s - (5.0 - (1.5f64.powi(2) - 0.25).sqrt())).abs() < 1e-4);
    }

    #[test]
    fn euclidean_offset_reports_no_solution() {
        let p = straight(10.0);
        assert!(matches!(p.offset_behind_euclidean(&PathCoord::on_path(1.0), 1.5), Err(PathError::NoSolution { .. })));
        assert!(p.offset_behind_euclidean(&PathCoord::on_path(5.0), 0.0).is_err());
    }

    #[test]
    fn arclength_offset_examples() {
        let p = straight(20.0);
        assert_eq!(p.offset_behind_arclength(&PathCoord::on_path(10.0), 1.5).unwrap().s, 8.5);
        let sq = [(0.0, 0.0), (4.0, 0.0), (4.0, 4.0), (0.0, 4.0)].map(|(x, y)| Pose2::new(x, y, 0.0));
        let sq = TeachPath::build(&sq, 0.5, true).unwrap();
        let got = sq.offset_behind_arclength(&PathCoord::on_path(0.5), 1.5).unwrap();
        assert!((got.s - 15.0).abs() < 1e-12);
        assert!(matches!(
            p.offset_behind_arclength(&PathCoord::on_path(10.0), 0.0),
            Err(PathError::NonPositiveDistance(_))
        ));
        assert!(matches!(p.offset_behind_arclength(&PathCoord::on_path(1.0), 1.5), Err(PathError::OutOfRange { .. })));
    }

    #[test]
    fn corridor_margin_examples() {
        let p = straight(10.0);
        assert!((p.corridor_margin(&Pose2::new(3.0, 0.0, 0.0)) - 0.5).abs() < 1e-12);
        assert!(p.corridor_margin(&Pose2::new(3.0, 0.5, 0.0)).abs() < 1e-12);
        assert!((p.corridor_margin(&Pose2::new(3.0, -0.7, 0.0)) + 0.2).abs() < 1e-12);
    }

    #[test]
    fn path_file_round_trip() {
        let json = r#"{"waypoints":[{"x":0,"y":0},{"x":3,"y":4,"theta":0.5}],
                       "corridor_half_width":0.4,"closed":false}"#;
        let file: PathFile = serde_json::from_str(json).unwrap();
        let p = file.build().unwrap();
        assert!((p.length() - 5.0).abs() < 1e-12);
        assert_eq!(p.corridor_half_width(), 0.4);
    }

    fn random_path() -> impl Strategy<Value = TeachPath> {
        prop::collection::vec((1.0..4.0f64, -1.0..1.0f64), 2..6).prop_map(|steps| {
            let mut pts = vec![Pose2::IDENTITY];
            let (mut x, mut y, mut h) = (0.0, 0.0, 0.0);
            for (len, turn) in steps {
                h += turn;
                x += len * f64::cos(h);
                y += len * f64::sin(h);
                pts.push(Pose2::new(x, y, 0.0));
            }
            TeachPath::build(&pts, 0.5, false).unwrap()
        })
    }

    proptest! {
        #[test]
        fn project_recovers_arc_length(path in random_path(), frac in 0.0..1.0f64) {
            let s = frac * path.length();
            let q = path.pose_at(s).unwrap();
            let c = path.project(&q);
            // a self-approaching path can map to another branch at equal distance
            let back = path.pose_at(c.s).unwrap();
            prop_assert!(back.distance_to(&q) < 1e-9);
            prop_assert!((c.s - s).abs() <= RESAMPLE_SPACING || c.lateral.abs() < 1e-9);
        }

        #[test]
        fn euclidean_offset_solves_chord_equation(path in random_path(), frac in 0.3..1.0f64, d in 0.3..1.5f64) {
            let anchor = PathCoord::on_path(frac * path.length());
            if let Ok(found) = path.offset_behind_euclidean(&anchor, d) {
                let chord = path.pose_at(found.s).unwrap().distance_to(&path.pose_at(anchor.s).unwrap());
                prop_assert!((chord - d).abs() < OFFSET_TOLERANCE);
                // arc is never shorter than the chord
                prop_assert!(anchor.s - found.s >= d - OFFSET_TOLERANCE);
            }
        }
    }
}
