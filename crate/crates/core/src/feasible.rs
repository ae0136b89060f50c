//! Constraint sets of the two secrecy problems and the projections onto them.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Position3D;

/// Absolute tolerance used by the post-hoc validators.
pub const FEASIBILITY_TOL: f64 = 1e-8;

/// Movement region, spacing and per-slot travel limits of the movable elements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntennaLimits {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub min_spacing: f64,
    pub max_step: f64,
}

impl AntennaLimits {
    /// Same region `[lower, upper]` for each of `m` elements.
    pub fn uniform(m: usize, lower: f64, upper: f64, min_spacing: f64, max_step: f64) -> Result<Self> {
        let limits = Self {
            lower: vec![lower; m],
            upper: vec![upper; m],
            min_spacing,
            max_step,
        };
        limits.validate()?;
        Ok(limits)
    }

    pub fn antennas(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return Err(Error::invalid(
                "antenna bounds",
                "need one [lower, upper] pair per element",
            ));
        }
        if !(self.min_spacing >= 0.0) {
            return Err(Error::invalid("min_spacing", "must be nonnegative"));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::invalid("max_step", "must be positive"));
        }
        for (lo, hi) in self.lower.iter().zip(&self.upper) {
            if !(lo <= hi) {
                return Err(Error::invalid(
                    "antenna bounds",
                    format!("lower {lo} exceeds upper {hi}"),
                ));
            }
        }
        // Smallest feasible layout must fit under every upper bound.
        let mut floor = f64::NEG_INFINITY;
        for (lo, hi) in self.lower.iter().zip(&self.upper) {
            floor = lo.max(floor + self.min_spacing);
            if floor > hi + 1e-15 {
                return Err(Error::Infeasible(format!(
                    "{} elements with spacing {} do not fit in the movement region",
                    self.lower.len(),
                    self.min_spacing
                )));
            }
        }
        Ok(())
    }

    /// Uniform layout with the given spacing starting at the lower bound of
    /// the first element.
    pub fn uniform_layout(&self, spacing: f64) -> Vec<f64> {
        (0..self.antennas())
            .map(|m| self.lower[0] + m as f64 * spacing)
            .collect()
    }
}

/// Per-slot positions of the movable elements, `positions[n][m]`, together with
/// the layout the array starts from before slot 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntennaSchedule {
    pub initial: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    pub limits: AntennaLimits,
}

impl AntennaSchedule {
    pub fn constant(initial: Vec<f64>, slots: usize, limits: AntennaLimits) -> Self {
        Self {
            positions: vec![initial.clone(); slots],
            initial,
            limits,
        }
    }

    pub fn slots(&self) -> usize {
        self.positions.len()
    }

    /// Human-readable list of every violated constraint.
    pub fn violations(&self, tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        let l = &self.limits;
        let mut prev = &self.initial;
        for (n, slot) in self.positions.iter().enumerate() {
            if slot.len() != l.antennas() {
                out.push(format!(
                    "slot {n}: {} positions for {} elements",
                    slot.len(),
                    l.antennas()
                ));
                continue;
            }
            for (m, &x) in slot.iter().enumerate() {
                if x < l.lower[m] - tol || x > l.upper[m] + tol {
                    out.push(format!(
                        "slot {n} element {m}: position {x} outside [{}, {}]",
                        l.lower[m], l.upper[m]
                    ));
                }
                if (x - prev[m]).abs() > l.max_step + tol {
                    out.push(format!(
                        "slot {n} element {m}: moved {} > {}",
                        (x - prev[m]).abs(),
                        l.max_step
                    ));
                }
            }
            for m in 1..slot.len() {
                if slot[m] - slot[m - 1] < l.min_spacing - tol {
                    out.push(format!(
                        "slot {n}: gap {} between elements {} and {m} below {}",
                        slot[m] - slot[m - 1],
                        m - 1,
                        l.min_spacing
                    ));
                }
            }
            prev = slot;
        }
        out
    }
}

/// Per-slot transmit beams under a common power budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamSchedule {
    pub beams: Vec<Vec<Complex64>>,
    pub p_max: f64,
}

impl BeamSchedule {
    pub fn violations(&self) -> Vec<String> {
        self.beams
            .iter()
            .enumerate()
            .filter_map(|(n, w)| {
                let p = power(w);
                (p > self.p_max * (1.0 + 1e-9) || !p.is_finite())
                    .then(|| format!("slot {n}: transmit power {p} exceeds {}", self.p_max))
            })
            .collect()
    }
}

/// UAV waypoints `q[0..=N]` at a fixed altitude. Slot `n` (1-based) is served
/// from waypoint `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub waypoints: Vec<Position3D>,
    pub start: Position3D,
    pub end: Position3D,
    pub dt: f64,
    pub v_max: f64,
    pub a_max: f64,
}

impl Trajectory {
    pub fn straight_line(start: Position3D, end: Position3D, slots: usize, dt: f64, v_max: f64, a_max: f64) -> Self {
        let waypoints = (0..=slots)
            .map(|i| {
                let t = i as f64 / slots as f64;
                Position3D::new(
                    start.x + t * (end.x - start.x),
                    start.y + t * (end.y - start.y),
                    start.z,
                )
            })
            .collect();
        Self {
            waypoints,
            start,
            end,
            dt,
            v_max,
            a_max,
        }
    }

    pub fn slots(&self) -> usize {
        self.waypoints.len().saturating_sub(1)
    }

    /// Speeds `|q[n] - q[n-1]| / dt` for n = 1..=N.
    pub fn speeds(&self) -> Vec<f64> {
        self.waypoints
            .windows(2)
            .map(|p| p[0].horizontal_distance(&p[1]) / self.dt)
            .collect()
    }

    /// Accelerations `|v[n+1] - v[n]| / dt` for n = 1..N-1.
    pub fn accelerations(&self) -> Vec<f64> {
        let dt2 = self.dt * self.dt;
        self.waypoints
            .windows(3)
            .map(|p| {
                let ax = p[2].x - 2.0 * p[1].x + p[0].x;
                let ay = p[2].y - 2.0 * p[1].y + p[0].y;
                ax.hypot(ay) / dt2
            })
            .collect()
    }

    /// Smallest distance from any served waypoint (1..=N) to `target`.
    pub fn min_distance_to(&self, target: &Position3D) -> f64 {
        self.waypoints
            .iter()
            .skip(1)
            .map(|q| crate::geometry::distance(q, target))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KinematicQuantity {
    Speed,
    Acceleration,
    StartPin,
    EndPin,
    Altitude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicViolation {
    pub slot: usize,
    pub quantity: KinematicQuantity,
    pub value: f64,
    pub bound: f64,
}

pub fn check_kinematics(traj: &Trajectory) -> Vec<KinematicViolation> {
    check_kinematics_with_tol(traj, FEASIBILITY_TOL)
}

pub fn check_kinematics_with_tol(traj: &Trajectory, tol: f64) -> Vec<KinematicViolation> {
    let mut out = Vec::new();
    let n = traj.slots();
    if n == 0 {
        return out;
    }
    let first = traj.waypoints[0];
    let last = traj.waypoints[n];
    let pin = |q: &Position3D, p: &Position3D| ((q.x - p.x).hypot(q.y - p.y)).max((q.z - p.z).abs());
    if pin(&first, &traj.start) > tol {
        out.push(KinematicViolation {
            slot: 0,
            quantity: KinematicQuantity::StartPin,
            value: pin(&first, &traj.start),
            bound: 0.0,
        });
    }
    if pin(&last, &traj.end) > tol {
        out.push(KinematicViolation {
            slot: n,
            quantity: KinematicQuantity::EndPin,
            value: pin(&last, &traj.end),
            bound: 0.0,
        });
    }
    for (i, q) in traj.waypoints.iter().enumerate() {
        if (q.z - traj.start.z).abs() > tol {
            out.push(KinematicViolation {
                slot: i,
                quantity: KinematicQuantity::Altitude,
                value: q.z,
                bound: traj.start.z,
            });
        }
    }
    for (i, v) in traj.speeds().into_iter().enumerate() {
        if v > traj.v_max + tol {
            out.push(KinematicViolation {
                slot: i + 1,
                quantity: KinematicQuantity::Speed,
                value: v,
                bound: traj.v_max,
            });
        }
    }
    for (i, a) in traj.accelerations().into_iter().enumerate() {
        if a > traj.a_max + tol {
            out.push(KinematicViolation {
                slot: i + 1,
                quantity: KinematicQuantity::Acceleration,
                value: a,
                bound: traj.a_max,
            });
        }
    }
    out
}

pub fn power(w: &[Complex64]) -> f64 {
    w.iter().map(|c| c.norm_sqr()).sum()
}

/// Scales `w` back onto the power ball `Σ|w_m|² ≤ p_max`.
pub fn project_power(w: &[Complex64], p_max: f64) -> Vec<Complex64> {
    let q = power(w);
    if q <= p_max || q == 0.0 {
        return w.to_vec();
    }
    let scale = (p_max / q).sqrt();
    let mut out: Vec<Complex64> = w.iter().map(|c| c * scale).collect();
    // Rounding can leave the power a few ulps above the budget.
    while power(&out) > p_max {
        out.iter_mut().for_each(|c| *c *= 1.0 - 1e-15);
    }
    out
}

pub fn project_antenna_step(candidate: f64, previous: f64, max_step: f64) -> f64 {
    let delta = candidate - previous;
    if delta.abs() <= max_step {
        candidate
    } else {
        previous + max_step * delta.signum()
    }
}

pub fn clamp_bounds(x: f64, lo: f64, hi: f64) -> Result<f64> {
    if lo > hi {
        return Err(Error::invalid("bounds", format!("lower {lo} exceeds upper {hi}")));
    }
    Ok(x.max(lo).min(hi))
}

/// Pushes elements apart to at least `min_spacing` while keeping them inside
/// `[lo, hi]` and in index order.
pub fn enforce_min_spacing(positions: &[f64], min_spacing: f64, lo: f64, hi: f64) -> Result<Vec<f64>> {
    let m = positions.len();
    repair_layout(positions, min_spacing, &vec![lo; m], &vec![hi; m])
}

/// Order-preserving repair onto `{x : lo ≤ x ≤ hi, x[m+1] - x[m] ≥ d}` with
/// per-element boxes.
///
/// A forward sweep raises each element to `max(x, lo, prev + d)`; a backward
/// sweep lowers it to `min(x, hi, next - d)`. When the set is nonempty the
/// result is feasible after this single pair of sweeps, and feasible inputs
/// are returned unchanged.
pub(crate) fn repair_layout(positions: &[f64], d: f64, lo: &[f64], hi: &[f64]) -> Result<Vec<f64>> {
    let m = positions.len();
    if lo.len() != m || hi.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: lo.len(),
        });
    }
    let mut floor = f64::NEG_INFINITY;
    let mut ceil = f64::INFINITY;
    for i in 0..m {
        floor = lo[i].max(floor + d);
        let j = m - 1 - i;
        ceil = hi[j].min(ceil - d);
        if lo[i] > hi[i] || floor > hi[i] + 1e-15 || ceil < lo[j] - 1e-15 {
            return Err(Error::Infeasible(format!(
                "{m} elements cannot keep spacing {d} inside their movement boxes"
            )));
        }
    }
    let mut out = positions.to_vec();
    for i in 0..m {
        let mut v = out[i].max(lo[i]);
        if i > 0 {
            v = v.max(out[i - 1] + d);
        }
        out[i] = v;
    }
    for i in (0..m).rev() {
        let mut v = out[i].min(hi[i]);
        if i + 1 < m {
            v = v.min(out[i + 1] - d);
        }
        out[i] = v;
    }
    Ok(out)
}

/// Projects a candidate slot layout onto the feasible set given the layout
/// of the previous slot: the per-element step box intersected with the region
/// bounds, followed by the spacing repair.
pub fn project_layout(candidate: &[f64], previous: &[f64], limits: &AntennaLimits) -> Result<Vec<f64>> {
    let m = limits.antennas();
    if candidate.len() != m || previous.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: candidate.len().min(previous.len()),
        });
    }
    let lo: Vec<f64> = (0..m)
        .map(|i| limits.lower[i].max(previous[i] - limits.max_step))
        .collect();
    let hi: Vec<f64> = (0..m)
        .map(|i| limits.upper[i].min(previous[i] + limits.max_step))
        .collect();
    let stepped: Vec<f64> = (0..m)
        .map(|i| project_antenna_step(candidate[i], previous[i], limits.max_step))
        .collect();
    repair_layout(&stepped, limits.min_spacing, &lo, &hi)
}
