//! Running configured experiments: single points, sweeps, the noise
//! calibration and the derived gap, summary and convergence tables.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ScenarioConfig, Scheme, SweepAxis};
use crate::error::{Error, Result};
use crate::feasible::Trajectory;
use crate::geometry::{beam_gain_grid, direction_cosine, Position3D};
use crate::ma::{solve_p1, MaSolution};
use crate::sca::{solve_p2, UavSolution};
use crate::IterationRecord;

/// Solution of one scheme at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    Ma(MaSolution),
    Uav(UavSolution),
}

impl Outcome {
    pub fn asr(&self) -> f64 {
        match self {
            Outcome::Ma(s) => s.asr,
            Outcome::Uav(s) => s.asr,
        }
    }

    pub fn trace(&self) -> &[IterationRecord] {
        match self {
            Outcome::Ma(s) => &s.trace,
            Outcome::Uav(s) => &s.trace,
        }
    }

    pub fn trajectory(&self) -> Option<&Trajectory> {
        match self {
            Outcome::Uav(s) => Some(&s.trajectory),
            Outcome::Ma(_) => None,
        }
    }
}

/// One (scheme, sweep value, seed) run. Failures are kept as messages so a
/// sweep continues past them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scheme: Scheme,
    pub axis: SweepAxis,
    pub value: f64,
    pub seed: u64,
    pub outcome: std::result::Result<Outcome, String>,
    pub runtime_s: f64,
}

impl RunRecord {
    pub fn asr(&self) -> Option<f64> {
        self.outcome.as_ref().ok().map(Outcome::asr)
    }
}

/// Solves one scheme on a scenario.
pub fn solve_scenario(
    config: &ExperimentConfig,
    scenario: &ScenarioConfig,
    scheme: Scheme,
    seed: u64,
) -> Result<Outcome> {
    match scheme {
        Scheme::Ma => Ok(Outcome::Ma(solve_p1(&scenario.ma_problem(&config.solver, seed)?)?)),
        Scheme::Uav => Ok(Outcome::Uav(solve_p2(&scenario.uav_problem(
            &config.solver,
            &config.sca,
            seed,
        ))?)),
        Scheme::Both => Err(Error::invalid("scheme", "expand 'both' before solving")),
    }
}

/// Runs every (scheme, value, seed) combination. `progress` is called once
/// per finished run, from worker threads. Records come back sorted by
/// value, then scheme, then seed, independent of scheduling.
pub fn run_grid(
    config: &ExperimentConfig,
    schemes: &[Scheme],
    axis: SweepAxis,
    values: &[f64],
    seeds: &[u64],
    progress: &(dyn Fn(&RunRecord) + Sync),
) -> Vec<RunRecord> {
    let mut jobs = Vec::new();
    for (vi, &value) in values.iter().enumerate() {
        for &scheme in schemes.iter().flat_map(|s| s.expand()).collect::<Vec<_>>().iter() {
            for &seed in seeds {
                jobs.push((vi, value, scheme, seed));
            }
        }
    }
    let mut out: Vec<(usize, RunRecord)> = jobs
        .into_par_iter()
        .map(|(vi, value, scheme, seed)| {
            let start = Instant::now();
            let scenario = config.scenario_at(axis, value);
            let outcome = solve_scenario(config, &scenario, scheme, seed).map_err(|e| e.to_string());
            let record = RunRecord {
                scheme,
                axis,
                value,
                seed,
                outcome,
                runtime_s: start.elapsed().as_secs_f64(),
            };
            progress(&record);
            (vi, record)
        })
        .collect();
    out.sort_by(|(va, a), (vb, b)| va.cmp(vb).then(a.scheme.cmp(&b.scheme)).then(a.seed.cmp(&b.seed)));
    out.into_iter().map(|(_, r)| r).collect()
}

/// Result of the noise calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub target_asr: f64,
    pub noise_dbm: f64,
    pub achieved_asr: f64,
    pub evaluations: usize,
}

/// Bisects the common noise level (in dBm) so that the calibration run of
/// the movable-antenna scheme reaches the target. Fails when the bracket
/// does not contain the target.
pub fn calibrate_noise(config: &ExperimentConfig) -> Result<Calibration> {
    let cal = config
        .calibration
        .clone()
        .ok_or_else(|| Error::invalid("calibration", "no [calibration] table in the configuration"))?;
    let seed = config.run.seeds.first().copied().unwrap_or(0);
    let mut evaluations = 0;
    let mut eval = |noise_dbm: f64| -> Result<f64> {
        evaluations += 1;
        let mut s = config.scenario.clone();
        s.antennas = cal.antennas;
        s.p_max = cal.p_max;
        s.altitude = cal.altitude;
        s.noise_dbm = noise_dbm;
        Ok(solve_scenario(config, &s, Scheme::Ma, seed)?.asr())
    };
    let (mut lo, mut hi) = (cal.bracket_dbm[0], cal.bracket_dbm[1]);
    let (f_lo, f_hi) = (eval(lo)?, eval(hi)?);
    if !(f_lo >= cal.target_asr && f_hi <= cal.target_asr) {
        return Err(Error::Infeasible(format!(
            "target {} bps/Hz outside [{f_hi}, {f_lo}] reached over noise bracket [{lo}, {hi}] dBm",
            cal.target_asr
        )));
    }
    let (mut best, mut best_f) = (lo, f_lo);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let f = eval(mid)?;
        if (f - cal.target_asr).abs() < (best_f - cal.target_asr).abs() {
            best = mid;
            best_f = f;
        }
        if (f - cal.target_asr).abs() <= cal.tolerance || hi - lo < 1e-9 {
            break;
        }
        if f > cal.target_asr {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Calibration {
        target_asr: cal.target_asr,
        noise_dbm: best,
        achieved_asr: best_f,
        evaluations,
    })
}

/// Applies the calibration (when configured) to the scenario noise.
pub fn prepare(config: &ExperimentConfig) -> Result<(ExperimentConfig, Option<Calibration>)> {
    let mut out = config.clone();
    if config.calibration.is_none() {
        return Ok((out, None));
    }
    let cal = calibrate_noise(config)?;
    out.scenario.noise_dbm = cal.noise_dbm;
    Ok((out, Some(cal)))
}

/// `ASR_MA - ASR_UAV` for one sweep value and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub axis: SweepAxis,
    pub value: f64,
    pub seed: u64,
    pub ma_asr: f64,
    pub uav_asr: f64,
    pub gap: f64,
}

/// Signed gap `asr_ma - asr_uav`; positive when micro-mobility wins.
pub fn compute_gap(asr_ma: f64, asr_uav: f64) -> f64 {
    asr_ma - asr_uav
}

/// Pairs successful MA and UAV runs with the same value and seed.
pub fn pair_gaps(records: &[RunRecord]) -> Vec<GapRecord> {
    let mut out = Vec::new();
    for ma in records.iter().filter(|r| r.scheme == Scheme::Ma) {
        let Some(ma_asr) = ma.asr() else { continue };
        let partner = records
            .iter()
            .find(|r| r.scheme == Scheme::Uav && r.seed == ma.seed && r.value == ma.value && r.axis == ma.axis);
        if let Some(uav_asr) = partner.and_then(RunRecord::asr) {
            out.push(GapRecord {
                axis: ma.axis,
                value: ma.value,
                seed: ma.seed,
                ma_asr,
                uav_asr,
                gap: compute_gap(ma_asr, uav_asr),
            });
        }
    }
    out
}

/// Mean and sample standard deviation over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scheme: String,
    pub axis: SweepAxis,
    pub value: f64,
    pub runs: usize,
    pub failures: usize,
    pub mean: f64,
    pub stddev: f64,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Per (scheme, value) ASR statistics, plus a `gap` row per value when both
/// schemes ran. Order follows the records.
pub fn summarize(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(f64, Scheme)> = Vec::new();
    for r in records {
        if !keys.iter().any(|&(v, s)| v == r.value && s == r.scheme) {
            keys.push((r.value, r.scheme));
        }
    }
    let axis = records.first().map(|r| r.axis).unwrap_or(SweepAxis::None);
    let gaps = pair_gaps(records);
    let mut out = Vec::new();
    for (i, &(value, scheme)) in keys.iter().enumerate() {
        let group: Vec<&RunRecord> = records
            .iter()
            .filter(|r| r.value == value && r.scheme == scheme)
            .collect();
        let asrs: Vec<f64> = group.iter().filter_map(|r| r.asr()).collect();
        let (mean, stddev) = mean_std(&asrs);
        out.push(SummaryRow {
            scheme: scheme.to_string(),
            axis,
            value,
            runs: group.len(),
            failures: group.len() - asrs.len(),
            mean,
            stddev,
        });
        let value_done = keys.get(i + 1).is_none_or(|&(v, _)| v != value);
        if value_done {
            let g: Vec<f64> = gaps.iter().filter(|g| g.value == value).map(|g| g.gap).collect();
            if !g.is_empty() {
                let (mean, stddev) = mean_std(&g);
                out.push(SummaryRow {
                    scheme: "gap".into(),
                    axis,
                    value,
                    runs: g.len(),
                    failures: 0,
                    mean,
                    stddev,
                });
            }
        }
    }
    out
}

/// Converged objective and the first iteration whose best-so-far value is
/// within `rel` of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub scheme: Scheme,
    pub value: f64,
    pub seed: u64,
    pub final_asr: f64,
    pub iterations: usize,
    pub first_within: Option<usize>,
}

pub fn first_within(trace: &[IterationRecord], rel: f64) -> Option<usize> {
    let last = trace.last()?.best_objective;
    trace
        .iter()
        .find(|r| (r.best_objective - last).abs() <= rel * last.abs())
        .map(|r| r.iteration)
}

pub fn convergence_report(records: &[RunRecord], rel: f64) -> Vec<ConvergenceRow> {
    records
        .iter()
        .filter_map(|r| {
            let o = r.outcome.as_ref().ok()?;
            Some(ConvergenceRow {
                scheme: r.scheme,
                value: r.value,
                seed: r.seed,
                final_asr: o.asr(),
                iterations: o.trace().len(),
                first_within: first_within(o.trace(), rel),
            })
        })
        .collect()
}

/// Array gain of one slot's beamformer over direction cosines, over the
/// (θ, φ) sphere, and at the two users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainPattern {
    pub scheme: Scheme,
    pub slot: usize,
    pub cos_grid: Vec<f64>,
    pub gain_db: Vec<f64>,
    /// (θ degrees, φ degrees, gain dB); direction cosine `sin θ cos φ`.
    pub sphere: Vec<(f64, f64, f64)>,
    pub bob: (f64, f64),
    pub eve: (f64, f64),
}

/// Gain patterns for the configured slots of a solved outcome.
pub fn gain_patterns(
    config: &ExperimentConfig,
    scenario: &ScenarioConfig,
    outcome: &Outcome,
) -> Result<Vec<GainPattern>> {
    let g = &config.gain;
    let geometry = scenario.geometry();
    let lambda = scenario.wavelength;
    let cos_grid: Vec<f64> = (0..g.points)
        .map(|i| -1.0 + 2.0 * i as f64 / (g.points - 1) as f64)
        .collect();
    let angles: Vec<(f64, f64)> = (0..g.angle_points)
        .flat_map(|i| {
            let theta = 180.0 * i as f64 / (g.angle_points - 1) as f64;
            (0..g.angle_points).map(move |j| (theta, 360.0 * j as f64 / (g.angle_points - 1) as f64))
        })
        .collect();
    let sphere_cos: Vec<f64> = angles
        .iter()
        .map(|&(t, p)| t.to_radians().sin() * p.to_radians().cos())
        .collect();
    let fpa: Vec<f64> = (0..scenario.antennas)
        .map(|m| m as f64 * scenario.fpa_spacing * lambda)
        .collect();
    let mut out = Vec::new();
    for &slot in &g.slots {
        let (scheme, x, w, uav): (Scheme, &[f64], _, Position3D) = match outcome {
            Outcome::Ma(s) => (
                Scheme::Ma,
                &s.antenna_schedule.positions[slot][..],
                &s.beam_schedule.beams[slot],
                geometry.uav_at(scenario.start[0], scenario.start[1]),
            ),
            Outcome::Uav(s) => (
                Scheme::Uav,
                &fpa[..],
                &s.beam_schedule.beams[slot],
                s.trajectory.waypoints[slot + 1],
            ),
        };
        let gain_db = beam_gain_grid(w, x, lambda, &cos_grid, g.floor_db)?;
        let sphere_db = beam_gain_grid(w, x, lambda, &sphere_cos, g.floor_db)?;
        let marker = |user: &Position3D| -> Result<(f64, f64)> {
            let c = direction_cosine(&uav, user);
            Ok((c, beam_gain_grid(w, x, lambda, &[c], g.floor_db)?[0]))
        };
        out.push(GainPattern {
            scheme,
            slot,
            cos_grid: cos_grid.clone(),
            gain_db,
            sphere: angles.iter().zip(sphere_db).map(|(&(t, p), db)| (t, p, db)).collect(),
            bob: marker(&geometry.bob)?,
            eve: marker(&geometry.eve)?,
        });
    }
    Ok(out)
}
