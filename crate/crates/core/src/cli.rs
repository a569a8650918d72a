//! Command-line front end.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::sim::log::{fmt6, round6};
use crate::sim::{self, ControllerKind, ConvoyConfig, MetricsReport, RunOutput, SimError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_ABORT: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "convoy", version, about = "Convoy path-tracking simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one scenario and write trajectory.csv and metrics.json.
    Run(RunArgs),
    /// Run several controllers over several seeds and tabulate the metrics.
    Compare(CompareArgs),
    /// Run one controller once per value of a numeric config key.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Defaults to the seed in the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Dotted-key override, e.g. `channel.base_delay_s=0.1`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Comma-separated subset of dmpc,cmpc,piloc,pireflec.
    #[arg(long, default_value = "dmpc,cmpc,piloc,pireflec")]
    pub controllers: String,
    #[arg(long, default_value_t = 3)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub key: String,
    /// Comma-separated numbers.
    #[arg(long, allow_hyphen_values = true)]
    pub values: String,
    #[arg(long)]
    pub controller: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

/// Parse arguments and execute; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    }
}

/// Walk a dotted key through nested objects.
fn lookup<'v>(root: &'v mut Value, key: &str) -> Option<&'v mut Value> {
    key.split('.').try_fold(root, |v, part| match v {
        Value::Object(m) => m.get_mut(part),
        Value::Array(a) => part.parse::<usize>().ok().and_then(move |i| a.get_mut(i)),
        _ => None,
    })
}

/// Apply `key=value` overrides to a fully populated config document. Keys
/// must already exist; values are JSON when they parse as JSON and strings
/// otherwise.
pub fn apply_overrides(doc: &mut Value, overrides: &[String]) -> Result<(), String> {
    for o in overrides {
        let (key, raw) = o.split_once('=').ok_or_else(|| format!("override `{o}` is not KEY=VALUE"))?;
        let slot = lookup(doc, key.trim()).ok_or_else(|| format!("unknown config key `{}`", key.trim()))?;
        *slot = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    }
    Ok(())
}

/// Load a config file, fill defaults and apply overrides.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<ConvoyConfig, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let parsed: ConvoyConfig = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut doc = serde_json::to_value(&parsed).map_err(|e| e.to_string())?;
    apply_overrides(&mut doc, overrides)?;
    let cfg: ConvoyConfig = serde_json::from_value(doc).map_err(|e| format!("after overrides: {e}"))?;
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn write_outputs(dir: &Path, out: &RunOutput) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    out.log.save_csv(dir.join("trajectory.csv"))?;
    fs::write(dir.join("metrics.json"), out.metrics.to_json() + "\n")
}

enum Outcome {
    Done(Box<MetricsReport>),
    Aborted(String),
    Failed(String),
}

/// Run and write the per-run artifacts into `dir`.
fn run_into(cfg: &ConvoyConfig, seed: u64, dir: &Path) -> Outcome {
    match sim::run(cfg, seed) {
        Ok(out) => match write_outputs(dir, &out) {
            Ok(()) => Outcome::Done(Box::new(out.metrics)),
            Err(e) => Outcome::Failed(format!("{}: {e}", dir.display())),
        },
        Err(SimError::Aborted { reason, log }) => {
            let saved = fs::create_dir_all(dir).and_then(|_| log.save_csv(dir.join("trajectory.csv")));
            match saved {
                Ok(()) => Outcome::Aborted(reason),
                Err(e) => Outcome::Failed(format!("{}: {e}", dir.display())),
            }
        }
        Err(e) => Outcome::Failed(e.to_string()),
    }
}

pub fn cmd_run(a: &RunArgs) -> i32 {
    let cfg = match load_config(&a.config, &a.overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    match run_into(&cfg, a.seed.unwrap_or(cfg.seed), &a.out) {
        Outcome::Done(_) => EXIT_OK,
        Outcome::Aborted(reason) => {
            eprintln!("aborted: {reason}");
            EXIT_ABORT
        }
        Outcome::Failed(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

/// Table-II rows of one controller, pooled over trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub controller: String,
    pub trials: u64,
    pub completed: u64,
    pub aborted_seeds: Vec<u64>,
    pub mean_err_cm: Option<f64>,
    pub rmse_cm: Option<f64>,
    pub std_dev_cm: Option<f64>,
    pub max_err_cm: Option<f64>,
    pub leader_rmse_cm: Option<f64>,
    pub leader_max_cm: Option<f64>,
    pub follower_rmse_cm: Option<f64>,
    pub follower_max_cm: Option<f64>,
    pub coupling_violations: u64,
}

fn pool(controller: ControllerKind, trials: u64, runs: &[(u64, &MetricsReport)], aborted: Vec<u64>) -> ComparisonRow {
    let n: f64 = runs.iter().map(|(_, m)| m.samples as f64).sum();
    let weighted = |f: &dyn Fn(&MetricsReport) -> f64| -> Option<f64> {
        (n > 0.0).then(|| runs.iter().map(|(_, m)| m.samples as f64 * f(m)).sum::<f64>() / n)
    };
    let mean = weighted(&|m| m.mean_err_cm);
    let ms = weighted(&|m| m.rmse_cm * m.rmse_cm);
    let lead_ms = weighted(&|m| m.leader_rmse_cm * m.leader_rmse_cm);
    let fol_ms = weighted(&|m| m.follower_rmse_cm * m.follower_rmse_cm);
    let extreme = |f: &dyn Fn(&MetricsReport) -> f64| -> Option<f64> {
        runs.iter().map(|(_, m)| f(m)).fold(None, |acc: Option<f64>, v| match acc {
            Some(a) if a.abs() >= v.abs() => Some(a),
            _ => Some(v),
        })
    };
    let r6 = |x: Option<f64>| x.map(round6);
    ComparisonRow {
        controller: controller.name().to_string(),
        trials,
        completed: runs.len() as u64,
        aborted_seeds: aborted,
        mean_err_cm: r6(mean),
        rmse_cm: r6(ms.map(f64::sqrt)),
        std_dev_cm: r6(ms.zip(mean).map(|(ms, m)| (ms - m * m).max(0.0).sqrt())),
        max_err_cm: r6(extreme(&|m| m.max_err_cm)),
        leader_rmse_cm: r6(lead_ms.map(f64::sqrt)),
        leader_max_cm: r6(extreme(&|m| m.leader_max_cm)),
        follower_rmse_cm: r6(fol_ms.map(f64::sqrt)),
        follower_max_cm: r6(extreme(&|m| m.follower_max_cm)),
        coupling_violations: runs.iter().map(|(_, m)| m.coupling_violations as u64).sum(),
    }
}

/// Aligned text rendering: one column per controller, one line per metric.
pub fn render_table(rows: &[ComparisonRow]) -> String {
    let cell = |x: Option<f64>| x.map_or_else(|| "aborted".to_string(), fmt6);
    let lines: Vec<(&str, Vec<String>)> = vec![
        ("Mean Err. (cm)", rows.iter().map(|r| cell(r.mean_err_cm)).collect()),
        ("RMSE (cm)", rows.iter().map(|r| cell(r.rmse_cm)).collect()),
        ("Std. Dev. (cm)", rows.iter().map(|r| cell(r.std_dev_cm)).collect()),
        ("Max Err. (cm)", rows.iter().map(|r| cell(r.max_err_cm)).collect()),
        ("Leader RMSE (cm)", rows.iter().map(|r| cell(r.leader_rmse_cm)).collect()),
        ("Leader Max (cm)", rows.iter().map(|r| cell(r.leader_max_cm)).collect()),
        ("Follower RMSE (cm)", rows.iter().map(|r| cell(r.follower_rmse_cm)).collect()),
        ("Follower Max (cm)", rows.iter().map(|r| cell(r.follower_max_cm)).collect()),
        ("Coupling violations", rows.iter().map(|r| r.coupling_violations.to_string()).collect()),
        ("Completed runs", rows.iter().map(|r| format!("{}/{}", r.completed, r.trials)).collect()),
    ];
    let label_w = lines.iter().map(|(l, _)| l.len()).max().unwrap_or(0);
    let col_w: Vec<usize> = (0..rows.len())
        .map(|c| lines.iter().map(|(_, v)| v[c].len()).chain([rows[c].controller.len()]).max().unwrap_or(0))
        .collect();
    let mut s = format!("{:label_w$}", "");
    for (r, w) in rows.iter().zip(&col_w) {
        let _ = write!(s, "  {:>w$}", r.controller.to_uppercase());
    }
    s.push('\n');
    for (label, vals) in &lines {
        let _ = write!(s, "{label:label_w$}");
        for (v, w) in vals.iter().zip(&col_w) {
            let _ = write!(s, "  {v:>w$}");
        }
        s.push('\n');
    }
    s
}

pub fn parse_controllers(list: &str) -> Result<Vec<ControllerKind>, String> {
    let mut out = Vec::new();
    for part in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let c = ControllerKind::parse(part).ok_or_else(|| format!("unknown controller `{part}`"))?;
        if !out.contains(&c) {
            out.push(c);
        }
    }
    if out.is_empty() {
        return Err("no controllers given".into());
    }
    Ok(out)
}

pub fn cmd_compare(a: &CompareArgs) -> i32 {
    let prepared = load_config(&a.config, &a.overrides).and_then(|cfg| {
        if a.trials == 0 {
            return Err("trials must be at least 1".into());
        }
        let controllers = parse_controllers(&a.controllers)?;
        let configs = controllers
            .iter()
            .map(|&c| {
                let cfg = ConvoyConfig { controller: c, ..cfg.clone() };
                cfg.validate().map(|_| (c, cfg)).map_err(|e| format!("{c}: {e}"))
            })
            .collect::<Result<Vec<_>, String>>()?;
        Ok(configs)
    });
    let configs = match prepared {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let jobs: Vec<(usize, u64)> =
        (0..configs.len()).flat_map(|c| (0..a.trials).map(move |t| (c, a.seed + t))).collect();
    let outcomes: Vec<Outcome> = jobs
        .par_iter()
        .map(|&(c, seed)| {
            let (kind, cfg) = &configs[c];
            run_into(cfg, seed, &a.out.join(kind.name()).join(format!("seed_{seed}")))
        })
        .collect();

    let mut code = EXIT_OK;
    let mut rows = Vec::new();
    for (c, (kind, _)) in configs.iter().enumerate() {
        let mut done = Vec::new();
        let mut aborted = Vec::new();
        for ((jc, seed), outcome) in jobs.iter().zip(&outcomes) {
            if *jc != c {
                continue;
            }
            match outcome {
                Outcome::Done(m) => done.push((*seed, m.as_ref())),
                Outcome::Aborted(reason) => {
                    eprintln!("{kind} seed {seed} aborted: {reason}");
                    aborted.push(*seed);
                    code = code.max(EXIT_ABORT);
                }
                Outcome::Failed(e) => {
                    eprintln!("{kind} seed {seed} failed: {e}");
                    aborted.push(*seed);
                    code = EXIT_CONFIG;
                }
            }
        }
        rows.push(pool(*kind, a.trials, &done, aborted));
    }
    let written = fs::create_dir_all(&a.out)
        .and_then(|_| {
            let json = serde_json::to_string_pretty(&rows).expect("rows serialize");
            fs::write(a.out.join("comparison.json"), json + "\n")
        })
        .and_then(|_| fs::write(a.out.join("comparison.txt"), render_table(&rows)));
    if let Err(e) = written {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    print!("{}", render_table(&rows));
    code
}

pub fn parse_values(list: &str) -> Result<Vec<f64>, String> {
    let vals = list
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<f64>().map_err(|_| format!("`{p}` is not a number")))
        .collect::<Result<Vec<_>, _>>()?;
    if vals.is_empty() {
        return Err("empty value list".into());
    }
    Ok(vals)
}

pub fn cmd_sweep(a: &SweepArgs) -> i32 {
    let prepared = (|| -> Result<(ConvoyConfig, Vec<f64>, Vec<ConvoyConfig>), String> {
        let mut base = load_config(&a.config, &a.overrides)?;
        if let Some(c) = &a.controller {
            base.controller = ControllerKind::parse(c).ok_or_else(|| format!("unknown controller `{c}`"))?;
        }
        let values = parse_values(&a.values)?;
        let mut doc = serde_json::to_value(&base).map_err(|e| e.to_string())?;
        match lookup(&mut doc, &a.key) {
            Some(v) if v.is_number() => {}
            Some(_) => return Err(format!("config key `{}` is not numeric", a.key)),
            None => return Err(format!("unknown config key `{}`", a.key)),
        }
        let configs = values
            .iter()
            .map(|v| {
                let cfg = load_config(&a.config, &[a.overrides.clone(), vec![format!("{}={v}", a.key)]].concat())?;
                Ok(ConvoyConfig { controller: base.controller, ..cfg })
            })
            .collect::<Result<Vec<_>, String>>()?;
        Ok((base, values, configs))
    })();
    let (base, values, configs) = match prepared {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let seed = a.seed.unwrap_or(base.seed);
    let outcomes: Vec<Outcome> =
        configs.par_iter().enumerate().map(|(i, cfg)| run_into(cfg, seed, &a.out.join(format!("value_{i}")))).collect();
    let mut code = EXIT_OK;
    let mut csv = String::from("value,rmse_cm,max_err_cm\n");
    for (v, o) in values.iter().zip(&outcomes) {
        match o {
            Outcome::Done(m) => {
                let _ = writeln!(csv, "{},{},{}", fmt6(*v), fmt6(m.rmse_cm), fmt6(m.max_err_cm));
            }
            Outcome::Aborted(reason) => {
                eprintln!("{}={v} aborted: {reason}", a.key);
                let _ = writeln!(csv, "{},aborted,aborted", fmt6(*v));
                code = code.max(EXIT_ABORT);
            }
            Outcome::Failed(e) => {
                eprintln!("{}={v} failed: {e}", a.key);
                let _ = writeln!(csv, "{},failed,failed", fmt6(*v));
                code = EXIT_CONFIG;
            }
        }
    }
    if let Err(e) = fs::create_dir_all(&a.out).and_then(|_| fs::write(a.out.join("summary.csv"), &csv)) {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    print!("{csv}");
    code
}
