//! Per-tick trajectory log and its CSV rendering.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

use crate::geometry::Pose2;
use crate::vehicle::ControlInput;

pub const FLAG_NONCONVERGED: u32 = 1;
pub const FLAG_REF_FALLBACK: u32 = 2;
pub const FLAG_INPUT_CLAMPED: u32 = 4;
pub const FLAG_COUPLING_VIOLATION: u32 = 8;
pub const FLAG_DROPPED: u32 = 16;
pub const FLAG_STALE_ROLLOUT: u32 = 32;
pub const FLAG_NO_DATA: u32 = 64;
pub const FLAG_RANGE_INVALID: u32 = 128;
pub const FLAG_PI_CLAMPED: u32 = 256;
pub const FLAG_PLAN_TRUNCATED: u32 = 512;

/// Names of the flag bits, lowest bit first.
pub const FLAG_NAMES: [&str; 10] = [
    "nonconverged",
    "ref_fallback",
    "input_clamped",
    "coupling_violation",
    "dropped",
    "stale_rollout",
    "no_data",
    "range_invalid",
    "pi_clamped",
    "plan_truncated",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotSample {
    pub pose: Pose2,
    pub estimate: Pose2,
    pub command: ControlInput,
    pub actual: ControlInput,
    pub lateral: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub time: f64,
    pub robots: Vec<RobotSample>,
    /// Gap between robot j and robot j + 1.
    pub gaps: Vec<f64>,
    pub flags: u32,
    /// Distance travelled by the head robot since the start.
    pub leader_travel: f64,
    /// Per follower (index i − 1): measured gap to its tracked robot minus
    /// its commanded offset.
    pub target_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolverStats {
    pub solves: u64,
    pub nonconverged: u64,
    pub failures: u64,
    pub iterations: u64,
    pub max_kkt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub sim_dt: f64,
    pub num_robots: usize,
    /// Spacing target of every adjacent pair.
    pub d_target: f64,
    /// Commanded offset of each follower to its tracked robot.
    pub follower_offsets: Vec<f64>,
    /// Tracked robot of each follower.
    pub follower_targets: Vec<usize>,
    pub rows: Vec<LogRow>,
    pub solver: SolverStats,
    /// Total per flag bit, counted once per occurrence.
    pub event_counts: [u64; 10],
}

impl TrajectoryLog {
    pub fn new(sim_dt: f64, num_robots: usize, d_target: f64, targets: Vec<usize>, offsets: Vec<f64>) -> Self {
        Self {
            sim_dt,
            num_robots,
            d_target,
            follower_offsets: offsets,
            follower_targets: targets,
            rows: Vec::new(),
            solver: SolverStats::default(),
            event_counts: [0; 10],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn record_event(&mut self, flag: u32) {
        for (bit, count) in self.event_counts.iter_mut().enumerate() {
            if flag & (1 << bit) != 0 {
                *count += 1;
            }
        }
    }

    pub fn header(&self) -> String {
        let mut h = String::from("time_s");
        for i in 0..self.num_robots {
            for c in [
                "x",
                "y",
                "theta",
                "est_x",
                "est_y",
                "est_theta",
                "v_cmd",
                "delta_cmd",
                "v_act",
                "delta_act",
                "lat_err",
            ] {
                let _ = write!(h, ",{c}_{i}");
            }
        }
        for j in 0..self.num_robots.saturating_sub(1) {
            let _ = write!(h, ",gap_{j}");
        }
        h.push_str(",flags");
        h
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", self.header())?;
        let mut line = String::new();
        for row in &self.rows {
            line.clear();
            line.push_str(&fmt6(row.time));
            for r in &row.robots {
                for v in [
                    r.pose.x,
                    r.pose.y,
                    r.pose.theta,
                    r.estimate.x,
                    r.estimate.y,
                    r.estimate.theta,
                    r.command.v,
                    r.command.delta,
                    r.actual.v,
                    r.actual.delta,
                    r.lateral,
                ] {
                    line.push(',');
                    line.push_str(&fmt6(v));
                }
            }
            for g in &row.gaps {
                line.push(',');
                line.push_str(&fmt6(*g));
            }
            let _ = write!(line, ",{}", row.flags);
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(io::BufWriter::new(file))
    }
}

/// Round to 6 significant digits.
pub fn round6(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

/// Shortest decimal rendering of `x` rounded to 6 significant digits.
pub fn fmt6(x: f64) -> String {
    let r = round6(x);
    if r == 0.0 {
        return "0".to_string();
    }
    r.to_string()
}
