//! Result files. Everything except `manifest.json` is a deterministic
//! function of the configuration and seeds; timings and timestamps live only
//! in the manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use super::config::ExperimentConfig;
use super::runner::{convergence_report, pair_gaps, summarize, Calibration, GainPattern, RunRecord};
use crate::error::Result;
use crate::feasible::Trajectory;

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn stem(r: &RunRecord) -> String {
    format!("{}_{}_{}_seed{}", r.scheme, r.axis, r.value, r.seed)
}

/// Relative path of a run's trace file; empty for failed runs.
pub fn trace_file(r: &RunRecord) -> String {
    if r.outcome.is_ok() {
        format!("traces/{}.csv", stem(r))
    } else {
        String::new()
    }
}

/// `results.csv`: one row per run.
pub fn write_results(dir: &Path, config_hash: &str, records: &[RunRecord]) -> Result<PathBuf> {
    let path = dir.join("results.csv");
    let gaps = pair_gaps(records);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "config_hash",
        "scheme",
        "axis",
        "value",
        "seed",
        "asr",
        "gap",
        "trace_file",
        "error",
    ])?;
    for r in records {
        let gap = gaps
            .iter()
            .find(|g| g.value == r.value && g.seed == r.seed)
            .map(|g| g.gap);
        let error = r.outcome.as_ref().err().cloned().unwrap_or_default();
        w.write_record([
            config_hash.to_string(),
            r.scheme.to_string(),
            r.axis.to_string(),
            r.value.to_string(),
            r.seed.to_string(),
            fmt_opt(r.asr()),
            fmt_opt(gap),
            trace_file(r),
            error,
        ])?;
    }
    w.flush()?;
    Ok(path)
}

/// `summary.csv`: mean and sample standard deviation over seeds.
pub fn write_summary(dir: &Path, records: &[RunRecord]) -> Result<PathBuf> {
    let path = dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["scheme", "axis", "value", "runs", "failures", "mean_asr", "stddev_asr"])?;
    for s in summarize(records) {
        w.write_record([
            s.scheme,
            s.axis.to_string(),
            s.value.to_string(),
            s.runs.to_string(),
            s.failures.to_string(),
            fmt_opt(Some(s.mean).filter(|v| v.is_finite())),
            fmt_opt(Some(s.stddev).filter(|v| v.is_finite())),
        ])?;
    }
    w.flush()?;
    Ok(path)
}

/// `gap.csv`: paired per-seed differences.
pub fn write_gap(dir: &Path, records: &[RunRecord]) -> Result<PathBuf> {
    let path = dir.join("gap.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["axis", "value", "seed", "ma_asr", "uav_asr", "gap"])?;
    for g in pair_gaps(records) {
        w.write_record([
            g.axis.to_string(),
            g.value.to_string(),
            g.seed.to_string(),
            g.ma_asr.to_string(),
            g.uav_asr.to_string(),
            g.gap.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(path)
}

/// `convergence.csv`: final value and first iteration within `rel` of it.
pub fn write_convergence(dir: &Path, records: &[RunRecord], rel: f64) -> Result<PathBuf> {
    let path = dir.join("convergence.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "scheme",
        "value",
        "seed",
        "final_asr",
        "iterations",
        "first_within_1pct",
    ])?;
    for c in convergence_report(records, rel) {
        w.write_record([
            c.scheme.to_string(),
            c.value.to_string(),
            c.seed.to_string(),
            c.final_asr.to_string(),
            c.iterations.to_string(),
            c.first_within.map(|i| i.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(path)
}

/// `traces/<scheme>_<axis>_<value>_seed<k>.csv` per successful run.
pub fn write_traces(dir: &Path, records: &[RunRecord]) -> Result<Vec<PathBuf>> {
    let tdir = dir.join("traces");
    fs::create_dir_all(&tdir)?;
    let mut paths = Vec::new();
    for r in records {
        let Ok(o) = &r.outcome else { continue };
        let path = dir.join(trace_file(r));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["iteration", "objective", "best_objective", "temperature", "accepted"])?;
        for t in o.trace() {
            w.write_record([
                t.iteration.to_string(),
                t.objective.to_string(),
                t.best_objective.to_string(),
                t.temperature.to_string(),
                t.accepted.to_string(),
            ])?;
        }
        w.flush()?;
        paths.push(path);
    }
    Ok(paths)
}

/// Waypoints with speed (slots 1..=N) and acceleration (1..N-1).
pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let speeds = traj.speeds();
    let accels = traj.accelerations();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["slot", "x", "y", "speed", "acceleration"])?;
    for (n, q) in traj.waypoints.iter().enumerate() {
        let speed = n.checked_sub(1).and_then(|i| speeds.get(i)).copied();
        let accel = n.checked_sub(1).and_then(|i| accels.get(i)).copied();
        w.write_record([
            n.to_string(),
            q.x.to_string(),
            q.y.to_string(),
            fmt_opt(speed),
            fmt_opt(accel),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `trajectories/*.csv` for every successful trajectory run.
pub fn write_trajectories(dir: &Path, records: &[RunRecord]) -> Result<Vec<PathBuf>> {
    let tdir = dir.join("trajectories");
    let mut paths = Vec::new();
    for r in records {
        let Some(traj) = r.outcome.as_ref().ok().and_then(|o| o.trajectory()) else {
            continue;
        };
        fs::create_dir_all(&tdir)?;
        let path = tdir.join(format!("{}.csv", stem(r)));
        write_trajectory(&path, traj)?;
        paths.push(path);
    }
    Ok(paths)
}

/// `gains/<scheme>_slot<n>{,_markers,_sphere}.csv`.
pub fn write_gains(dir: &Path, patterns: &[GainPattern]) -> Result<Vec<PathBuf>> {
    let gdir = dir.join("gains");
    fs::create_dir_all(&gdir)?;
    let mut paths = Vec::new();
    for p in patterns {
        let base = format!("{}_slot{}", p.scheme, p.slot);

        let path = gdir.join(format!("{base}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["cos_alpha", "gain_db"])?;
        for (c, g) in p.cos_grid.iter().zip(&p.gain_db) {
            w.write_record([c.to_string(), g.to_string()])?;
        }
        w.flush()?;
        paths.push(path);

        let path = gdir.join(format!("{base}_markers.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["user", "cos_alpha", "gain_db"])?;
        w.write_record(["bob".to_string(), p.bob.0.to_string(), p.bob.1.to_string()])?;
        w.write_record(["eve".to_string(), p.eve.0.to_string(), p.eve.1.to_string()])?;
        w.flush()?;
        paths.push(path);

        let path = gdir.join(format!("{base}_sphere.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["theta_deg", "phi_deg", "gain_db"])?;
        for (t, ph, g) in &p.sphere {
            w.write_record([t.to_string(), ph.to_string(), g.to_string()])?;
        }
        w.flush()?;
        paths.push(path);
    }
    Ok(paths)
}

#[derive(Debug, Serialize)]
struct ManifestRun<'a> {
    scheme: String,
    value: f64,
    seed: u64,
    runtime_s: f64,
    error: Option<&'a str>,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config_hash: &'a str,
    config: &'a ExperimentConfig,
    calibration: Option<&'a Calibration>,
    started_unix_s: f64,
    finished_unix_s: f64,
    runs: Vec<ManifestRun<'a>>,
    files: Vec<String>,
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Everything a run needs to be reproduced, plus timings.
pub struct ManifestInput<'a> {
    pub command: &'a str,
    pub config_hash: &'a str,
    pub config: &'a ExperimentConfig,
    pub calibration: Option<&'a Calibration>,
    pub started_unix_s: f64,
    pub records: &'a [RunRecord],
    pub files: &'a [PathBuf],
}

pub fn write_manifest(dir: &Path, m: &ManifestInput<'_>) -> Result<PathBuf> {
    let path = dir.join("manifest.json");
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: m.command,
        config_hash: m.config_hash,
        config: m.config,
        calibration: m.calibration,
        started_unix_s: m.started_unix_s,
        finished_unix_s: unix_now(),
        runs: m
            .records
            .iter()
            .map(|r| ManifestRun {
                scheme: r.scheme.to_string(),
                value: r.value,
                seed: r.seed,
                runtime_s: r.runtime_s,
                error: r.outcome.as_ref().err().map(String::as_str),
            })
            .collect(),
        files: m
            .files
            .iter()
            .map(|p| p.strip_prefix(dir).unwrap_or(p).display().to_string())
            .collect(),
    };
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}
