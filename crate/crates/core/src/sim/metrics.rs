//! Spacing and path-tracking statistics of a run.

use serde::{Serialize, Serializer};

use super::log::{round6, LogRow, TrajectoryLog, FLAG_NAMES};

fn ser6<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(round6(*x))
}

fn ser6_opt<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => s.serialize_some(&round6(*v)),
        None => s.serialize_none(),
    }
}

/// Mean, RMSE, population standard deviation and signed extreme of a
/// series. Population statistics make `rmse² = mean² + std²` exact up to
/// rounding.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct SeriesStats {
    #[serde(serialize_with = "ser6")]
    pub mean: f64,
    #[serde(serialize_with = "ser6")]
    pub rmse: f64,
    #[serde(serialize_with = "ser6")]
    pub std_dev: f64,
    /// Signed value of largest magnitude.
    #[serde(serialize_with = "ser6")]
    pub max: f64,
    pub count: usize,
}

impl SeriesStats {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return Self::default();
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let rmse = (v.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
        let std_dev = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
        let max = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        Self { mean, rmse, std_dev, max, count: v.len() }
    }

    pub fn scaled(self, k: f64) -> Self {
        Self { mean: self.mean * k, rmse: self.rmse * k, std_dev: self.std_dev * k, max: self.max * k, ..self }
    }
}

/// Number of separate episodes with `|gap − d_target| > travel`.
pub fn coupling_check(gaps: &[f64], d_target: f64, travel: f64) -> usize {
    let mut events = 0;
    let mut inside = false;
    for g in gaps {
        let out = (g - d_target).abs() > travel;
        if out && !inside {
            events += 1;
        }
        inside = out;
    }
    events
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransientReport {
    /// Signed spacing error of largest magnitude during the window.
    #[serde(serialize_with = "ser6")]
    pub peak_err_cm: f64,
    /// Head-robot travel after which every gap stays within the settling
    /// band around its steady-state mean; absent when it never settles.
    #[serde(serialize_with = "ser6_opt")]
    pub settling_distance_m: Option<f64>,
    #[serde(serialize_with = "ser6")]
    pub window_m: f64,
    #[serde(serialize_with = "ser6")]
    pub settling_band_cm: f64,
    pub coupling_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FollowerReport {
    pub robot: usize,
    pub target: usize,
    #[serde(serialize_with = "ser6")]
    pub offset_m: f64,
    #[serde(serialize_with = "ser6")]
    pub mean_err_cm: f64,
    #[serde(serialize_with = "ser6")]
    pub rmse_cm: f64,
    #[serde(serialize_with = "ser6")]
    pub max_err_cm: f64,
    /// Signed error of largest magnitude over the whole run.
    #[serde(serialize_with = "ser6")]
    pub peak_err_cm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverReport {
    pub solves: u64,
    pub nonconverged: u64,
    pub failures: u64,
    #[serde(serialize_with = "ser6")]
    pub mean_iterations: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    #[serde(serialize_with = "ser6")]
    pub mean_err_cm: f64,
    #[serde(serialize_with = "ser6")]
    pub rmse_cm: f64,
    #[serde(serialize_with = "ser6")]
    pub std_dev_cm: f64,
    #[serde(serialize_with = "ser6")]
    pub max_err_cm: f64,
    #[serde(serialize_with = "ser6")]
    pub leader_rmse_cm: f64,
    #[serde(serialize_with = "ser6")]
    pub leader_max_cm: f64,
    #[serde(serialize_with = "ser6")]
    pub follower_rmse_cm: f64,
    #[serde(serialize_with = "ser6")]
    pub follower_max_cm: f64,
    /// Episodes beyond the coupling travel after the transient window.
    pub coupling_violations: usize,
    pub transient: TransientReport,
    pub followers: Vec<FollowerReport>,
    pub events: std::collections::BTreeMap<String, u64>,
    pub solver: SolverReport,
    #[serde(serialize_with = "ser6")]
    pub duration_s: f64,
    #[serde(serialize_with = "ser6")]
    pub leader_travel_m: f64,
    pub samples: usize,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}

/// Settling band for the transient report.
pub const SETTLING_BAND_M: f64 = 0.02;

/// Statistics of a log. Rows before `transient_m` of head-robot travel form
/// the transient section; everything after feeds the main statistics.
pub fn compute_metrics(log: &TrajectoryLog, transient_m: f64, travel: f64) -> MetricsReport {
    let steady: Vec<_> = log.rows.iter().filter(|r| r.leader_travel >= transient_m).collect();
    let early: Vec<_> = log.rows.iter().filter(|r| r.leader_travel < transient_m).collect();

    let spacing = SeriesStats::of(steady.iter().flat_map(|r| r.gaps.iter().map(|g| g - log.d_target))).scaled(100.0);
    let leader = SeriesStats::of(steady.iter().map(|r| r.robots[0].lateral)).scaled(100.0);
    let followers = SeriesStats::of(steady.iter().flat_map(|r| r.robots[1..].iter().map(|s| s.lateral))).scaled(100.0);
    let lat_max = |robots: &mut dyn Iterator<Item = f64>| robots.fold(0.0f64, |m, v| m.max(v.abs())) * 100.0;

    let pairs = log.num_robots.saturating_sub(1);
    let violations = |rows: &[&LogRow]| -> usize {
        (0..pairs)
            .map(|j| {
                let series: Vec<f64> = rows.iter().map(|r| r.gaps[j]).collect();
                coupling_check(&series, log.d_target, travel)
            })
            .sum()
    };

    let peak = SeriesStats::of(early.iter().flat_map(|r| r.gaps.iter().map(|g| g - log.d_target))).max * 100.0;
    let center = log.d_target + spacing.mean / 100.0;
    let last_outside = log.rows.iter().rposition(|r| r.gaps.iter().any(|g| (g - center).abs() > SETTLING_BAND_M));
    let settling = match last_outside {
        None => Some(0.0),
        Some(i) if i + 1 < log.rows.len() => Some(log.rows[i + 1].leader_travel),
        Some(_) => None,
    };

    let follower_reports = (0..pairs)
        .map(|f| {
            let st = SeriesStats::of(steady.iter().map(|r| r.target_errors[f])).scaled(100.0);
            let all = SeriesStats::of(log.rows.iter().map(|r| r.target_errors[f])).scaled(100.0);
            FollowerReport {
                robot: f + 1,
                target: log.follower_targets[f],
                offset_m: log.follower_offsets[f],
                mean_err_cm: st.mean,
                rmse_cm: st.rmse,
                max_err_cm: st.max,
                peak_err_cm: all.max,
            }
        })
        .collect();

    let events = FLAG_NAMES
        .iter()
        .zip(log.event_counts.iter())
        .filter(|(n, _)| **n != "coupling_violation")
        .map(|(n, c)| (n.to_string(), *c))
        .collect();
    let s = &log.solver;

    MetricsReport {
        mean_err_cm: spacing.mean,
        rmse_cm: spacing.rmse,
        std_dev_cm: spacing.std_dev,
        max_err_cm: spacing.max,
        leader_rmse_cm: leader.rmse,
        leader_max_cm: lat_max(&mut steady.iter().map(|r| r.robots[0].lateral)),
        follower_rmse_cm: followers.rmse,
        follower_max_cm: lat_max(&mut steady.iter().flat_map(|r| r.robots[1..].iter().map(|s| s.lateral))),
        coupling_violations: violations(&steady),
        transient: TransientReport {
            peak_err_cm: peak,
            settling_distance_m: settling,
            window_m: transient_m,
            settling_band_cm: SETTLING_BAND_M * 100.0,
            coupling_violations: violations(&early),
        },
        followers: follower_reports,
        events,
        solver: SolverReport {
            solves: s.solves,
            nonconverged: s.nonconverged,
            failures: s.failures,
            mean_iterations: if s.solves > 0 { s.iterations as f64 / s.solves as f64 } else { 0.0 },
        },
        duration_s: log.rows.last().map_or(0.0, |r| r.time),
        leader_travel_m: log.rows.last().map_or(0.0, |r| r.leader_travel),
        samples: spacing.count,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose2;
    use crate::sim::log::RobotSample;
    use crate::vehicle::ControlInput;
    use proptest::prelude::*;

    #[test]
    fn alternating_series() {
        let s = SeriesStats::of([1.0, -1.0, 1.0, -1.0]);
        assert_eq!((s.mean, s.rmse, s.std_dev, s.max.abs()), (0.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn constant_series() {
        let s = SeriesStats::of(vec![-0.3; 7]);
        assert!((s.mean + 0.3).abs() < 1e-15);
        assert!(s.std_dev < 1e-7);
        assert!((s.rmse - 0.3).abs() < 1e-15);
        assert_eq!(s.max, -0.3);
    }

    #[test]
    fn max_keeps_sign_of_largest_magnitude() {
        assert_eq!(SeriesStats::of([0.1, -17.3, 12.9]).max, -17.3);
        assert_eq!(SeriesStats::of([0.1, 17.3, -12.9]).max, 17.3);
    }

    #[test]
    fn coupling_examples() {
        assert_eq!(coupling_check(&[1.5; 10], 1.5, 0.27), 0);
        assert_eq!(coupling_check(&[1.78], 1.5, 0.27), 1);
        assert_eq!(coupling_check(&[1.5, 1.78, 1.79, 1.5, 1.2, 1.5], 1.5, 0.27), 2);
    }

    fn row(t: f64, travel: f64, gap: f64, lat: f64) -> LogRow {
        let s = RobotSample {
            pose: Pose2::IDENTITY,
            estimate: Pose2::IDENTITY,
            command: ControlInput::ZERO,
            actual: ControlInput::ZERO,
            lateral: lat,
        };
        LogRow {
            time: t,
            robots: vec![s, s],
            gaps: vec![gap],
            flags: 0,
            leader_travel: travel,
            target_errors: vec![gap - 1.5],
        }
    }

    #[test]
    fn transient_window_is_split_off() {
        let mut log = TrajectoryLog::new(0.1, 2, 1.5, vec![0], vec![1.5]);
        log.rows.push(row(0.0, 0.0, 1.9, 0.0));
        log.rows.push(row(0.1, 2.0, 1.6, 0.0));
        for i in 0..10 {
            log.rows.push(row(0.2 + i as f64 * 0.1, 4.0 + i as f64, 1.51, 0.02));
        }
        let m = compute_metrics(&log, 4.0, 0.27);
        assert!((m.mean_err_cm - 1.0).abs() < 1e-9);
        assert!((m.transient.peak_err_cm - 40.0).abs() < 1e-9);
        assert_eq!(m.transient.settling_distance_m, Some(4.0));
        assert_eq!(m.transient.coupling_violations, 1);
        assert_eq!(m.coupling_violations, 0);
        assert!((m.leader_rmse_cm - 2.0).abs() < 1e-9);
        assert!((m.follower_max_cm - 2.0).abs() < 1e-9);
        assert_eq!(m.samples, 10);
        let json: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        for k in [
            "mean_err_cm",
            "rmse_cm",
            "std_dev_cm",
            "max_err_cm",
            "leader_rmse_cm",
            "leader_max_cm",
            "follower_rmse_cm",
            "follower_max_cm",
        ] {
            assert!(json[k].is_number(), "{k}");
        }
    }

    proptest! {
        #[test]
        fn rmse_identity(v in proptest::collection::vec(-50.0f64..50.0, 1..200)) {
            let s = SeriesStats::of(v.iter().copied());
            prop_assert!((s.rmse * s.rmse - (s.mean * s.mean + s.std_dev * s.std_dev)).abs() <= 1e-9 * (1.0 + s.rmse * s.rmse));
            prop_assert!(s.max.abs() >= s.rmse - 1e-12);
        }
    }
}
