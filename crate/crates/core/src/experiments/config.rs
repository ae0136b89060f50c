//! Experiment configuration: a TOML document with `[scenario]`, `[solver]`,
//! `[sca]`, `[sweep]`, `[run]`, `[gain]` and optional `[calibration]` tables.
//! Unknown keys are rejected.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::feasible::AntennaLimits;
use crate::geometry::{dbm_to_watts, free_space_beta0, Position3D, ScenarioGeometry};
use crate::ma::{MaProblem, SolverParams};
use crate::sca::{ScaParams, UavProblem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub bob: [f64; 2],
    pub eve: [f64; 2],
    /// Eavesdropper present; when false its SNR is identically zero.
    pub eve_enabled: bool,
    /// UAV start (and hover point of the movable-antenna scheme).
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub altitude: f64,
    pub antennas: usize,
    pub slots: usize,
    /// Slot duration in seconds.
    pub dt: f64,
    pub p_max: f64,
    /// Receiver noise at Bob and Eve in dBm.
    pub noise_dbm: f64,
    pub wavelength: f64,
    /// Reference gain at 1 m; free-space `(λ/4π)²` when absent.
    pub beta0: Option<f64>,
    pub alpha: f64,
    pub v_max: f64,
    pub a_max: f64,
    /// Movement region of the movable elements, in wavelengths from 0.
    pub region: f64,
    /// Minimum element spacing, in wavelengths.
    pub min_spacing: f64,
    /// Largest per-slot travel of one element, in meters.
    pub max_step: f64,
    /// Element spacing of the fixed array on the UAV, in wavelengths.
    pub fpa_spacing: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            bob: [0.0, 0.0],
            eve: [400.0, 0.0],
            eve_enabled: true,
            start: [200.0, 200.0],
            end: [200.0, -200.0],
            altitude: 50.0,
            antennas: 4,
            slots: 40,
            dt: 1.0,
            p_max: 1.0,
            noise_dbm: -90.0,
            wavelength: crate::geometry::DEFAULT_WAVELENGTH,
            beta0: None,
            alpha: 2.0,
            v_max: 15.0,
            a_max: 3.0,
            region: 4.0,
            min_spacing: 0.5,
            max_step: 0.01,
            fpa_spacing: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Ma,
    Uav,
    Both,
}

impl Scheme {
    /// Concrete schemes to run.
    pub fn expand(self) -> Vec<Scheme> {
        match self {
            Scheme::Both => vec![Scheme::Ma, Scheme::Uav],
            s => vec![s],
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Ma => "ma",
            Scheme::Uav => "uav",
            Scheme::Both => "both",
        })
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ma" => Ok(Scheme::Ma),
            "uav" => Ok(Scheme::Uav),
            "both" => Ok(Scheme::Both),
            other => Err(Error::Config(vec![format!(
                "unknown scheme '{other}' (expected ma, uav or both)"
            )])),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    None,
    Antennas,
    /// Transmit budget in watts.
    Power,
    /// Receiver noise in dBm.
    Noise,
    /// Flight altitude in meters.
    Altitude,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::None => "none",
            SweepAxis::Antennas => "antennas",
            SweepAxis::Power => "power",
            SweepAxis::Noise => "noise",
            SweepAxis::Altitude => "altitude",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            axis: SweepAxis::None,
            values: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scheme: Scheme,
    pub seeds: Vec<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Both,
            seeds: vec![0, 1, 2, 3, 4],
        }
    }
}

/// Gain-pattern grid sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainConfig {
    /// Points of the direction-cosine grid over [-1, 1].
    pub points: usize,
    /// Points per angle of the (θ, φ) grid.
    pub angle_points: usize,
    /// Slots to export (0-based).
    pub slots: Vec<usize>,
    pub floor_db: f64,
}

impl Default for GainConfig {
    fn default() -> Self {
        Self {
            points: 2001,
            angle_points: 181,
            slots: vec![0],
            floor_db: crate::geometry::DEFAULT_GAIN_FLOOR_DB,
        }
    }
}

/// One-off noise calibration: bisect the common noise level so that the
/// movable-antenna run of the scenario (with `antennas`, `p_max` and
/// `altitude` overridden) reaches `target_asr` for the first seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    pub target_asr: f64,
    pub antennas: usize,
    pub p_max: f64,
    pub altitude: f64,
    /// Bisection bracket in dBm.
    pub bracket_dbm: [f64; 2],
    pub tolerance: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            target_asr: 4.1046,
            antennas: 4,
            p_max: 1.0,
            altitude: 50.0,
            bracket_dbm: [-150.0, -40.0],
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub solver: SolverParams,
    pub sca: ScaParams,
    pub sweep: SweepConfig,
    pub run: RunConfig,
    pub gain: GainConfig,
    pub calibration: Option<CalibrationConfig>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))?;
        let problems = config.problems();
        if problems.is_empty() {
            Ok(config)
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(vec![e.to_string()]))
    }

    /// Short content hash of the canonical serialization.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml_string()?.as_bytes());
        Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
    }

    /// Every problem with the configuration; empty when it is valid.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let s = &self.scenario;
        let mut check = |ok: bool, msg: String| {
            if !ok {
                out.push(msg);
            }
        };
        let finite2 = |p: [f64; 2]| p.iter().all(|v| v.is_finite());
        for (name, p) in [("bob", s.bob), ("eve", s.eve), ("start", s.start), ("end", s.end)] {
            check(finite2(p), format!("scenario.{name}: coordinates must be finite"));
        }
        check(
            s.altitude > 0.0 && s.altitude.is_finite(),
            format!("scenario.altitude: must be positive, got {}", s.altitude),
        );
        check(
            (1..=64).contains(&s.antennas),
            format!("scenario.antennas: must lie in 1..=64, got {}", s.antennas),
        );
        check(s.slots >= 1, "scenario.slots: must be at least 1".into());
        check(
            s.dt > 0.0 && s.dt.is_finite(),
            format!("scenario.dt: must be positive, got {}", s.dt),
        );
        check(
            s.p_max > 0.0 && s.p_max.is_finite(),
            format!("scenario.p_max: must be positive, got {}", s.p_max),
        );
        check(s.noise_dbm.is_finite(), "scenario.noise_dbm: must be finite".into());
        check(
            s.wavelength > 0.0 && s.wavelength.is_finite(),
            "scenario.wavelength: must be positive".into(),
        );
        if let Some(b) = s.beta0 {
            check(
                b > 0.0 && b.is_finite(),
                format!("scenario.beta0: must be positive, got {b}"),
            );
        }
        check(
            s.alpha >= 2.0 && s.alpha.is_finite(),
            format!("scenario.alpha: must be >= 2, got {}", s.alpha),
        );
        check(
            s.v_max > 0.0,
            format!("scenario.v_max: must be positive, got {}", s.v_max),
        );
        check(
            s.a_max >= 0.0,
            format!("scenario.a_max: must be nonnegative, got {}", s.a_max),
        );
        check(
            s.region > 0.0,
            format!("scenario.region: must be positive, got {}", s.region),
        );
        check(
            s.min_spacing >= 0.0,
            format!("scenario.min_spacing: must be nonnegative, got {}", s.min_spacing),
        );
        check(
            s.max_step > 0.0,
            format!("scenario.max_step: must be positive, got {}", s.max_step),
        );
        check(
            s.fpa_spacing > 0.0,
            format!("scenario.fpa_spacing: must be positive, got {}", s.fpa_spacing),
        );
        if s.antennas >= 1 && s.min_spacing >= 0.0 && s.region > 0.0 {
            check(
                (s.antennas - 1) as f64 * s.min_spacing <= s.region + 1e-12,
                format!(
                    "scenario: {} elements at spacing {}λ do not fit in a {}λ region",
                    s.antennas, s.min_spacing, s.region
                ),
            );
        }

        if let Err(e) = self.solver.validate() {
            out.push(format!("solver: {e}"));
        }
        if !(self.sca.steps_per_block >= 1 && self.sca.tolerance > 0.0) {
            out.push("sca: steps_per_block must be >= 1 and tolerance positive".into());
        }

        let sw = &self.sweep;
        match sw.axis {
            SweepAxis::None => {}
            axis => {
                if sw.values.is_empty() {
                    out.push(format!("sweep.values: must not be empty for axis '{axis}'"));
                }
                for v in &sw.values {
                    let ok = match axis {
                        SweepAxis::Antennas => *v >= 1.0 && v.fract() == 0.0 && *v <= 64.0,
                        SweepAxis::Power | SweepAxis::Altitude => *v > 0.0 && v.is_finite(),
                        SweepAxis::Noise => v.is_finite(),
                        SweepAxis::None => true,
                    };
                    if !ok {
                        out.push(format!("sweep.values: {v} is not a valid {axis} value"));
                    }
                }
            }
        }
        if self.run.seeds.is_empty() {
            out.push("run.seeds: at least one seed is required".into());
        }
        let g = &self.gain;
        if g.points < 2 || g.angle_points < 2 {
            out.push("gain: grids need at least two points".into());
        }
        if let Some(&bad) = g.slots.iter().find(|&&n| n >= s.slots.max(1)) {
            out.push(format!("gain.slots: slot {bad} is outside 0..{}", s.slots));
        }
        if let Some(c) = &self.calibration {
            if !(c.target_asr > 0.0 && c.target_asr.is_finite()) {
                out.push("calibration.target_asr: must be positive".into());
            }
            if !(c.bracket_dbm[0] < c.bracket_dbm[1]) {
                out.push("calibration.bracket_dbm: lower end must be below upper end".into());
            }
            if c.antennas == 0 || !(c.p_max > 0.0) || !(c.altitude > 0.0) || !(c.tolerance > 0.0) {
                out.push("calibration: antennas, p_max, altitude and tolerance must be positive".into());
            }
        }
        out
    }

    /// Scenario with one sweep value applied.
    pub fn scenario_at(&self, axis: SweepAxis, value: f64) -> ScenarioConfig {
        let mut s = self.scenario.clone();
        match axis {
            SweepAxis::None => {}
            SweepAxis::Antennas => s.antennas = value as usize,
            SweepAxis::Power => s.p_max = value,
            SweepAxis::Noise => s.noise_dbm = value,
            SweepAxis::Altitude => s.altitude = value,
        }
        s
    }

    /// Sweep points to run; a single point with value 0 for axis `none`.
    pub fn sweep_points(&self) -> Vec<f64> {
        match self.sweep.axis {
            SweepAxis::None => vec![0.0],
            _ => self.sweep.values.clone(),
        }
    }
}

impl ScenarioConfig {
    pub fn geometry(&self) -> ScenarioGeometry {
        let noise = dbm_to_watts(self.noise_dbm);
        ScenarioGeometry {
            bob: Position3D::new(self.bob[0], self.bob[1], 0.0),
            eve: Position3D::new(self.eve[0], self.eve[1], 0.0),
            altitude: self.altitude,
            wavelength: self.wavelength,
            beta0: self.beta0.unwrap_or_else(|| free_space_beta0(self.wavelength)),
            alpha: self.alpha,
            noise_bob: noise,
            noise_eve: if self.eve_enabled { noise } else { f64::INFINITY },
            p_max: self.p_max,
        }
    }

    pub fn ma_problem(&self, solver: &SolverParams, seed: u64) -> Result<MaProblem> {
        let geometry = self.geometry();
        let l = self.wavelength;
        let limits = AntennaLimits::uniform(self.antennas, 0.0, self.region * l, self.min_spacing * l, self.max_step)?;
        Ok(MaProblem {
            hover: geometry.uav_at(self.start[0], self.start[1]),
            geometry,
            slots: self.slots,
            limits,
            params: solver.clone(),
            seed,
        })
    }

    pub fn uav_problem(&self, solver: &SolverParams, sca: &ScaParams, seed: u64) -> UavProblem {
        let geometry = self.geometry();
        let spacing = self.fpa_spacing * self.wavelength;
        UavProblem {
            start: geometry.uav_at(self.start[0], self.start[1]),
            end: geometry.uav_at(self.end[0], self.end[1]),
            geometry,
            slots: self.slots,
            dt: self.dt,
            v_max: self.v_max,
            a_max: self.a_max,
            layout: (0..self.antennas).map(|m| m as f64 * spacing).collect(),
            params: solver.clone(),
            sca: *sca,
            seed,
        }
    }
}
