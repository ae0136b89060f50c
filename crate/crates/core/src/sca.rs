//! UAV macro-mobility: the array is fixed and the UAV trajectory is shaped by
//! successive convex approximation, alternating with beam updates under the
//! same annealing layer as the movable-antenna solver.
//!
//! With the beams and steering vectors frozen, slot `n` contributes
//! `log2(1 + s1/d_b²) - log2(1 + s2/d_e²)`. Slack variables `u ≥ d_b²` and
//! `H² ≤ w ≤ d_e²` relax the distances; the Bob term is replaced by its
//! tangent in `u` and the Eve distance by its tangent plane in `q`. Both
//! replacements are conservative, so every subproblem solution improves the
//! frozen objective.

use std::f64::consts::LN_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::annealing::{accept, acceptance_probability, cool, AnnealSchedule};
use crate::error::{Error, Result};
use crate::feasible::{check_kinematics, BeamSchedule, KinematicViolation, Trajectory};
use crate::geometry::{
    average_secrecy_rate, beam_response, channel_vector, direction_cosine, raw_secrecy_rate, snr, steering_vector,
    Position3D, ScenarioGeometry, User,
};
use crate::linalg::BandedSpd;
use crate::ma::SolverParams;
use crate::pga::{mrt_beam, pga_beamforming, SlotChannel};
use crate::{IterationRecord, SolverRng};

/// Squared-distance slacks, one pair per slot (slot `n` is index `n - 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlackState {
    pub u: Vec<f64>,
    pub w_slack: Vec<f64>,
}

/// `u[n] = d_b²(q[n])`, `w[n] = d_e²(q[n])`.
pub fn init_slacks(trajectory: &Trajectory, geometry: &ScenarioGeometry) -> SlackState {
    let served = &trajectory.waypoints[1..];
    let d2 = |q: &Position3D, p: &Position3D| sq(q.x - p.x) + sq(q.y - p.y) + sq(q.z - p.z);
    SlackState {
        u: served.iter().map(|q| d2(q, &geometry.bob)).collect(),
        w_slack: served.iter().map(|q| d2(q, &geometry.eve)).collect(),
    }
}

/// First-order lower bound of `log2(1 + s/u)` around `u0`, minus its value
/// at `u0`: `-s (u - u0) / (ln2 · u0 (u0 + s))`.
pub fn taylor_term(u: f64, u0: f64, s: f64) -> f64 {
    -s * (u - u0) / (LN_2 * u0 * (u0 + s))
}

fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / LN_2
}

/// Convexified trajectory subproblem around a feasible trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexSubproblem {
    /// Linearization point `q0[0..=N]`; entries 0 and N are pinned.
    pub q0: Vec<[f64; 2]>,
    pub u0: Vec<f64>,
    pub w0: Vec<f64>,
    pub s1: Vec<f64>,
    pub s2: Vec<f64>,
    pub bob: [f64; 2],
    pub eve: [f64; 2],
    pub altitude: f64,
    /// Largest distance a waypoint may move in one slot, `v_max · Δt`.
    pub step: f64,
    /// Largest second difference of waypoints, `a_max · Δt²`.
    pub curvature: f64,
    /// Upper bound on `u`, far above any reachable `d_b²`, which keeps the
    /// problem bounded when `s1 = 0`.
    pub u_cap: f64,
}

/// Result of [`solve_convex_subproblem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubproblemSolution {
    pub q: Vec<[f64; 2]>,
    pub u: Vec<f64>,
    pub w_slack: Vec<f64>,
    /// Convexified objective (a lower bound of the frozen objective).
    pub objective: f64,
    /// Duality-gap bound `m / t` of the last barrier stage; 0 when the
    /// linearization point was returned.
    pub residual: f64,
    pub newton_steps: usize,
}

fn sq(v: f64) -> f64 {
    v * v
}

fn dist2(q: [f64; 2], p: [f64; 2], h: f64) -> f64 {
    sq(q[0] - p[0]) + sq(q[1] - p[1]) + h * h
}

impl ConvexSubproblem {
    /// Builds the subproblem from explicit `s1`, `s2` values.
    pub fn new(
        trajectory: &Trajectory,
        slacks: &SlackState,
        s1: Vec<f64>,
        s2: Vec<f64>,
        geometry: &ScenarioGeometry,
    ) -> Result<Self> {
        let n = trajectory.slots();
        if n == 0 {
            return Err(Error::invalid("slots", "need at least one time slot"));
        }
        for (name, len) in [
            ("u", slacks.u.len()),
            ("w_slack", slacks.w_slack.len()),
            ("s1", s1.len()),
            ("s2", s2.len()),
        ] {
            if len != n {
                return Err(Error::invalid(name, format!("expected {n} entries, got {len}")));
            }
        }
        if let Some(u) = slacks.u.iter().find(|u| !(**u > 0.0)) {
            return Err(Error::invalid(
                "u",
                format!("linearization slack must be positive, got {u}"),
            ));
        }
        if s1.iter().chain(&s2).any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::invalid("s1/s2", "must be finite and nonnegative"));
        }
        let q0: Vec<[f64; 2]> = trajectory.waypoints.iter().map(|p| [p.x, p.y]).collect();
        let bob = [geometry.bob.x, geometry.bob.y];
        let h = geometry.altitude;
        let reach = trajectory.v_max * trajectory.dt * n as f64;
        let far = q0.iter().map(|q| dist2(*q, bob, 0.0).sqrt()).fold(0.0, f64::max) + reach;
        Ok(Self {
            q0,
            u0: slacks.u.clone(),
            w0: slacks.w_slack.clone(),
            s1,
            s2,
            bob,
            eve: [geometry.eve.x, geometry.eve.y],
            altitude: h,
            step: trajectory.v_max * trajectory.dt,
            curvature: trajectory.a_max * trajectory.dt * trajectory.dt,
            u_cap: 4.0 * (far * far + h * h) + 1.0,
        })
    }

    pub fn slots(&self) -> usize {
        self.u0.len()
    }

    /// Tangent plane of `d_e²` at the linearization point of slot `n` (1-based).
    pub fn eve_plane(&self, n: usize, q: [f64; 2]) -> f64 {
        let p = self.q0[n];
        dist2(p, self.eve, self.altitude)
            + 2.0 * (p[0] - self.eve[0]) * (q[0] - p[0])
            + 2.0 * (p[1] - self.eve[1]) * (q[1] - p[1])
    }

    /// Convexified objective at `(u, w)`.
    pub fn surrogate_objective(&self, u: &[f64], w: &[f64]) -> f64 {
        let n = self.slots();
        (0..n)
            .map(|i| {
                log2_1p(self.s1[i] / self.u0[i]) + taylor_term(u[i], self.u0[i], self.s1[i])
                    - log2_1p(self.s2[i] / w[i])
            })
            .sum::<f64>()
            / n as f64
    }

    /// Frozen (non-convexified) objective of a trajectory `q[0..=N]`.
    pub fn true_objective(&self, q: &[[f64; 2]]) -> f64 {
        let n = self.slots();
        (0..n)
            .map(|i| {
                let p = q[i + 1];
                log2_1p(self.s1[i] / dist2(p, self.bob, self.altitude))
                    - log2_1p(self.s2[i] / dist2(p, self.eve, self.altitude))
            })
            .sum::<f64>()
            / n as f64
    }

    /// Convexified objective with the slacks set to their best values for
    /// `q`; `None` when `q` violates `w ≥ H²`.
    pub fn surrogate_at(&self, q: &[[f64; 2]]) -> Option<f64> {
        let (u, w) = self.tight_slacks(q)?;
        Some(self.surrogate_objective(&u, &w))
    }

    fn tight_slacks(&self, q: &[[f64; 2]]) -> Option<(Vec<f64>, Vec<f64>)> {
        let h2 = self.altitude * self.altitude;
        let n = self.slots();
        let u: Vec<f64> = (1..=n).map(|i| dist2(q[i], self.bob, self.altitude)).collect();
        let w: Vec<f64> = (1..=n).map(|i| self.eve_plane(i, q[i])).collect();
        if w.iter().any(|w| *w < h2 * (1.0 - 1e-12)) {
            return None;
        }
        Some((u, w.into_iter().map(|w| w.max(h2)).collect()))
    }

    /// Largest violation of the convexified constraints at `(q, u, w)`.
    pub fn max_violation(&self, q: &[[f64; 2]], u: &[f64], w: &[f64]) -> f64 {
        let n = self.slots();
        let h2 = self.altitude * self.altitude;
        let mut worst: f64 = 0.0;
        for i in 1..=n {
            worst = worst.max(dist2(q[i], self.bob, self.altitude) - u[i - 1]);
            worst = worst.max(w[i - 1] - self.eve_plane(i, q[i]));
            worst = worst.max(h2 - w[i - 1]);
            worst = worst.max(sq(q[i][0] - q[i - 1][0]) + sq(q[i][1] - q[i - 1][1]) - sq(self.step));
        }
        for i in 1..n {
            let ax = q[i + 1][0] - 2.0 * q[i][0] + q[i - 1][0];
            let ay = q[i + 1][1] - 2.0 * q[i][1] + q[i - 1][1];
            worst = worst.max(ax * ax + ay * ay - sq(self.curvature));
        }
        worst
            .max((q[0][0] - self.q0[0][0]).abs().max((q[0][1] - self.q0[0][1]).abs()))
            .max((q[n][0] - self.q0[n][0]).abs().max((q[n][1] - self.q0[n][1]).abs()))
    }
}

/// Variable layout: slot `n < N` owns `[x, y, u, w]` at `4(n-1)`, slot `N`
/// owns `[u, w]` at `4(N-1)`.
struct Layout {
    slots: usize,
}

impl Layout {
    fn dim(&self) -> usize {
        4 * (self.slots - 1) + 2
    }
    fn xy(&self, n: usize) -> Option<usize> {
        (n >= 1 && n < self.slots).then(|| 4 * (n - 1))
    }
    fn u(&self, n: usize) -> usize {
        if n < self.slots {
            4 * (n - 1) + 2
        } else {
            4 * (n - 1)
        }
    }
    fn w(&self, n: usize) -> usize {
        self.u(n) + 1
    }
}

/// One constraint `f(z) ≤ 0` with a sparse gradient and Hessian.
struct Term {
    value: f64,
    grad: Vec<(usize, f64)>,
    hess: Vec<(usize, usize, f64)>,
}

struct Barrier<'a> {
    sub: &'a ConvexSubproblem,
    layout: Layout,
}

impl<'a> Barrier<'a> {
    fn point(&self, z: &[f64], n: usize) -> [f64; 2] {
        match self.layout.xy(n) {
            Some(k) => [z[k], z[k + 1]],
            None => self.sub.q0[n],
        }
    }

    /// `‖Σ c_j q[n_j]‖² - r²`.
    fn quadratic(&self, z: &[f64], terms: &[(usize, f64)], r: f64) -> Term {
        let mut res = [0.0; 2];
        for &(n, c) in terms {
            let p = self.point(z, n);
            res[0] += c * p[0];
            res[1] += c * p[1];
        }
        let mut grad = Vec::new();
        let mut hess = Vec::new();
        for (a, &(na, ca)) in terms.iter().enumerate() {
            let Some(ka) = self.layout.xy(na) else { continue };
            grad.push((ka, 2.0 * ca * res[0]));
            grad.push((ka + 1, 2.0 * ca * res[1]));
            for &(nb, cb) in &terms[..=a] {
                let Some(kb) = self.layout.xy(nb) else { continue };
                hess.push((ka, kb, 2.0 * ca * cb));
                hess.push((ka + 1, kb + 1, 2.0 * ca * cb));
            }
        }
        Term {
            value: res[0] * res[0] + res[1] * res[1] - r * r,
            grad,
            hess,
        }
    }

    fn constraints(&self, z: &[f64]) -> Vec<Term> {
        let s = self.sub;
        let n_slots = s.slots();
        let h2 = s.altitude * s.altitude;
        let mut out = Vec::with_capacity(7 * n_slots);
        for n in 1..=n_slots {
            let (iu, iw) = (self.layout.u(n), self.layout.w(n));
            let q = self.point(z, n);
            let xy = self.layout.xy(n);

            // Bob distance below its slack.
            let mut grad = vec![(iu, -1.0)];
            let mut hess = Vec::new();
            if let Some(k) = xy {
                grad.push((k, 2.0 * (q[0] - s.bob[0])));
                grad.push((k + 1, 2.0 * (q[1] - s.bob[1])));
                hess.push((k, k, 2.0));
                hess.push((k + 1, k + 1, 2.0));
            }
            out.push(Term {
                value: dist2(q, s.bob, s.altitude) - z[iu],
                grad,
                hess,
            });

            // Eve slack below the tangent plane of its distance.
            let p = s.q0[n];
            let mut grad = vec![(iw, 1.0)];
            if let Some(k) = xy {
                grad.push((k, -2.0 * (p[0] - s.eve[0])));
                grad.push((k + 1, -2.0 * (p[1] - s.eve[1])));
            }
            out.push(Term {
                value: z[iw] - s.eve_plane(n, q),
                grad,
                hess: Vec::new(),
            });

            out.push(Term {
                value: h2 - z[iw],
                grad: vec![(iw, -1.0)],
                hess: Vec::new(),
            });
            out.push(Term {
                value: z[iu] - s.u_cap,
                grad: vec![(iu, 1.0)],
                hess: Vec::new(),
            });

            out.push(self.quadratic(z, &[(n, 1.0), (n - 1, -1.0)], s.step));
            if n < n_slots {
                out.push(self.quadratic(z, &[(n + 1, 1.0), (n, -2.0), (n - 1, 1.0)], s.curvature));
            }
        }
        out
    }

    /// Objective to minimize: the negated convexified objective without its
    /// constant part, times `N`.
    fn objective(&self, z: &[f64]) -> f64 {
        let s = self.sub;
        (1..=s.slots())
            .map(|n| {
                let i = n - 1;
                let c = s.s1[i] / (LN_2 * s.u0[i] * (s.u0[i] + s.s1[i]));
                c * z[self.layout.u(n)] + log2_1p(s.s2[i] / z[self.layout.w(n)])
            })
            .sum()
    }

    /// `t·f0 - Σ ln(-f_i)`, or `None` outside the strict interior.
    fn value(&self, z: &[f64], t: f64) -> Option<f64> {
        let mut v = t * self.objective(z);
        for c in self.constraints(z) {
            if !(c.value < 0.0) {
                return None;
            }
            v -= (-c.value).ln();
        }
        v.is_finite().then_some(v)
    }

    fn gradient_hessian(&self, z: &[f64], t: f64) -> (Vec<f64>, BandedSpd) {
        let s = self.sub;
        let dim = self.layout.dim();
        let mut g = vec![0.0; dim];
        let mut h = BandedSpd::zeros(dim, 9);
        for n in 1..=s.slots() {
            let i = n - 1;
            let c = s.s1[i] / (LN_2 * s.u0[i] * (s.u0[i] + s.s1[i]));
            let (iu, iw) = (self.layout.u(n), self.layout.w(n));
            g[iu] += t * c;
            let w = z[iw];
            let s2 = s.s2[i];
            g[iw] += t * (1.0 / (w + s2) - 1.0 / w) / LN_2;
            h.add(iw, iw, t * (1.0 / (w * w) - 1.0 / sq(w + s2)) / LN_2);
        }
        for c in self.constraints(z) {
            let inv = 1.0 / (-c.value);
            for &(k, d) in &c.grad {
                g[k] += d * inv;
            }
            for (a, &(ka, da)) in c.grad.iter().enumerate() {
                for &(kb, db) in &c.grad[..=a] {
                    h.add(ka, kb, da * db * inv * inv);
                }
            }
            for &(ka, kb, d) in &c.hess {
                h.add(ka, kb, d * inv);
            }
        }
        (g, h)
    }
}

/// Strictly feasible interior start: blend the linearization trajectory
/// towards the straight line between the pinned endpoints.
fn interior_start(barrier: &Barrier) -> Option<Vec<f64>> {
    let s = barrier.sub;
    let n = s.slots();
    let h2 = s.altitude * s.altitude;
    let (a, b) = (s.q0[0], s.q0[n]);
    for theta in [0.0, 1e-6, 1e-4, 1e-3, 1e-2, 0.1, 0.3, 0.6, 1.0] {
        let mut z = vec![0.0; barrier.layout.dim()];
        for k in 1..=n {
            let f = k as f64 / n as f64;
            let line = [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])];
            let q = [
                (1.0 - theta) * s.q0[k][0] + theta * line[0],
                (1.0 - theta) * s.q0[k][1] + theta * line[1],
            ];
            if let Some(kx) = barrier.layout.xy(k) {
                z[kx] = q[0];
                z[kx + 1] = q[1];
            }
            let q = barrier.point(&z, k);
            let db2 = dist2(q, s.bob, s.altitude);
            z[barrier.layout.u(k)] = db2 + 1e-3 * db2.max(1.0);
            let plane = s.eve_plane(k, q);
            z[barrier.layout.w(k)] = h2 + 0.99 * (plane - h2);
        }
        if barrier.constraints(&z).iter().all(|c| c.value < 0.0) {
            return Some(z);
        }
    }
    None
}

/// Log-barrier interior-point solve of the convexified subproblem.
///
/// Newton steps on the banded system, barrier weight multiplied by 10 per
/// stage until `m / t < tol`, Armijo backtracking with factor 0.5. When no
/// strictly feasible point exists (for instance a singleton feasible set) or
/// the barrier solution is not better, the linearization point is returned.
pub fn solve_convex_subproblem(sub: &ConvexSubproblem, tol: f64) -> Result<SubproblemSolution> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance", "must be positive"));
    }
    let n = sub.slots();
    let fallback = SubproblemSolution {
        q: sub.q0.clone(),
        u: sub.u0.clone(),
        w_slack: sub.w0.clone(),
        objective: sub.surrogate_objective(&sub.u0, &sub.w0),
        residual: 0.0,
        newton_steps: 0,
    };
    let barrier = Barrier {
        sub,
        layout: Layout { slots: n },
    };
    let Some(mut z) = interior_start(&barrier) else {
        return Ok(fallback);
    };
    let m = barrier.constraints(&z).len() as f64;
    let mut t = 1.0;
    let mut steps = 0;
    let max_stages = 40;
    for stage in 0.. {
        let mut fz = barrier.value(&z, t).ok_or_else(|| Error::NonFinite {
            iteration: steps,
            detail: "barrier left the strict interior".into(),
        })?;
        for _ in 0..100 {
            let (g, h) = barrier.gradient_hessian(&z, t);
            let dz = newton_direction(h, &g)?;
            let slope: f64 = g.iter().zip(&dz).map(|(a, b)| a * b).sum();
            steps += 1;
            if -slope / 2.0 <= tol || !(slope < 0.0) {
                break;
            }
            let mut step = 1.0;
            let mut moved = false;
            while step > 1e-14 {
                let cand: Vec<f64> = z.iter().zip(&dz).map(|(a, d)| a + step * d).collect();
                if let Some(fc) = barrier.value(&cand, t) {
                    if fc <= fz + 0.25 * step * slope {
                        z = cand;
                        fz = fc;
                        moved = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        if m / t < tol || stage >= max_stages {
            break;
        }
        t *= 10.0;
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NoConvergence {
            iterations: steps,
            residual: m / t,
        });
    }
    let q: Vec<[f64; 2]> = (0..=n).map(|k| barrier.point(&z, k)).collect();
    let u: Vec<f64> = (1..=n).map(|k| z[barrier.layout.u(k)]).collect();
    let w: Vec<f64> = (1..=n).map(|k| z[barrier.layout.w(k)]).collect();
    let objective = sub.surrogate_objective(&u, &w);
    if objective < fallback.objective {
        return Ok(fallback);
    }
    Ok(SubproblemSolution {
        q,
        u,
        w_slack: w,
        objective,
        residual: m / t,
        newton_steps: steps,
    })
}

/// Solves `H d = -g`, adding a growing diagonal shift if the factorization
/// breaks down numerically.
fn newton_direction(h: BandedSpd, g: &[f64]) -> Result<Vec<f64>> {
    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
    let scale = (0..h.dim()).map(|i| h.get(i, i).abs()).fold(0.0, f64::max).max(1e-300);
    let mut shift = 0.0;
    for _ in 0..12 {
        let mut m = h.clone();
        if shift > 0.0 {
            for i in 0..m.dim() {
                m.add(i, i, shift);
            }
        }
        if let Ok(chol) = m.factor() {
            return Ok(chol.solve(&neg));
        }
        shift = if shift == 0.0 { 1e-12 * scale } else { shift * 100.0 };
    }
    Err(Error::NoConvergence {
        iterations: 0,
        residual: f64::NAN,
    })
}

/// Numerical settings of the trajectory block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScaParams {
    /// SCA rounds per trajectory block (steering frozen within a block).
    pub steps_per_block: usize,
    /// Barrier gap and Newton decrement tolerance.
    pub tolerance: f64,
}

impl Default for ScaParams {
    fn default() -> Self {
        Self {
            steps_per_block: 5,
            tolerance: 1e-9,
        }
    }
}

/// One instance of the macro-mobility problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavProblem {
    pub geometry: ScenarioGeometry,
    pub start: Position3D,
    pub end: Position3D,
    pub slots: usize,
    pub dt: f64,
    pub v_max: f64,
    pub a_max: f64,
    /// Fixed element positions along the array axis.
    pub layout: Vec<f64>,
    pub params: SolverParams,
    pub sca: ScaParams,
    pub seed: u64,
}

impl UavProblem {
    /// Reference mission from (200, 200) to (200, -200) at the given altitude,
    /// 15 m/s and 3 m/s² limits, and a uniform `λ/2` array.
    pub fn reference(altitude: f64, antennas: usize, slots: usize, dt: f64) -> Self {
        let geometry = ScenarioGeometry::reference(altitude);
        let spacing = geometry.wavelength / 2.0;
        Self {
            start: geometry.uav_at(200.0, 200.0),
            end: geometry.uav_at(200.0, -200.0),
            geometry,
            slots,
            dt,
            v_max: 15.0,
            a_max: 3.0,
            layout: (0..antennas).map(|m| m as f64 * spacing).collect(),
            params: SolverParams::default(),
            sca: ScaParams::default(),
            seed: 0,
        }
    }

    pub fn straight_line(&self) -> Trajectory {
        Trajectory::straight_line(self.start, self.end, self.slots, self.dt, self.v_max, self.a_max)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.params.validate()?;
        if self.slots == 0 {
            return Err(Error::invalid("slots", "need at least one time slot"));
        }
        if self.layout.is_empty() || self.layout.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("layout", "need at least one finite element position"));
        }
        if self.geometry.alpha != 2.0 {
            return Err(Error::invalid(
                "alpha",
                "the trajectory relaxation assumes free-space loss (alpha = 2)",
            ));
        }
        if !(self.dt > 0.0 && self.v_max > 0.0 && self.a_max >= 0.0) {
            return Err(Error::invalid(
                "kinematics",
                "dt and v_max must be positive, a_max nonnegative",
            ));
        }
        for (name, p) in [("start", &self.start), ("end", &self.end)] {
            if !p.is_finite() || p.z != self.geometry.altitude {
                return Err(Error::invalid(
                    if name == "start" { "start" } else { "end" },
                    "endpoint must be finite and at the flight altitude",
                ));
            }
        }
        if !(self.sca.steps_per_block >= 1 && self.sca.tolerance > 0.0) {
            return Err(Error::invalid(
                "sca",
                "need at least one step per block and a positive tolerance",
            ));
        }
        let speed = self.start.horizontal_distance(&self.end) / (self.slots as f64 * self.dt);
        if speed > self.v_max * (1.0 + 1e-12) {
            return Err(Error::Infeasible(format!(
                "reaching the end point in {} slots needs {speed:.3} m/s, above v_max = {}",
                self.slots, self.v_max
            )));
        }
        Ok(())
    }

    fn slot_channel(&self, q: &Position3D) -> Result<SlotChannel> {
        let g = &self.geometry;
        Ok(SlotChannel {
            a_b: steering_vector(&self.layout, direction_cosine(q, &g.bob), g.wavelength)?
                .entries()
                .to_vec(),
            a_e: steering_vector(&self.layout, direction_cosine(q, &g.eve), g.wavelength)?
                .entries()
                .to_vec(),
            eps_b: g.snr_scale(q, User::Bob),
            eps_e: g.snr_scale(q, User::Eve),
        })
    }

    /// `s1[n] = β0 |a_b^H w|² / σ_b²` and `s2[n]` likewise, with steering
    /// vectors taken at the given trajectory.
    pub fn beam_scales(&self, trajectory: &Trajectory, beams: &BeamSchedule) -> Result<(Vec<f64>, Vec<f64>)> {
        let g = &self.geometry;
        let mut s1 = Vec::with_capacity(self.slots);
        let mut s2 = Vec::with_capacity(self.slots);
        for (q, w) in trajectory.waypoints[1..].iter().zip(&beams.beams) {
            let ch = self.slot_channel(q)?;
            s1.push(g.beta0 * beam_response(&ch.a_b, w).norm_sqr() / g.noise_bob);
            s2.push(g.beta0 * beam_response(&ch.a_e, w).norm_sqr() / g.noise_eve);
        }
        Ok((s1, s2))
    }
}

/// Builds the convexified subproblem at `trajectory` for the given beams.
pub fn linearize_subproblem(
    problem: &UavProblem,
    trajectory: &Trajectory,
    slacks: &SlackState,
    beams: &BeamSchedule,
) -> Result<ConvexSubproblem> {
    let (s1, s2) = problem.beam_scales(trajectory, beams)?;
    ConvexSubproblem::new(trajectory, slacks, s1, s2, &problem.geometry)
}

/// Output of [`solve_p2`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavSolution {
    pub trajectory: Trajectory,
    pub beam_schedule: BeamSchedule,
    pub asr: f64,
    pub per_slot_rates: Vec<f64>,
    pub trace: Vec<IterationRecord>,
    /// Frozen-beam objective after each SCA round, one list per outer
    /// iteration (entry 0 is the value at block entry).
    pub sca_objectives: Vec<Vec<f64>>,
}

impl UavSolution {
    pub fn violations(&self) -> Vec<String> {
        let mut v: Vec<String> = check_kinematics(&self.trajectory)
            .iter()
            .map(
                |KinematicViolation {
                     slot,
                     quantity,
                     value,
                     bound,
                 }| { format!("slot {slot}: {quantity:?} {value} exceeds {bound}") },
            )
            .collect();
        v.extend(self.beam_schedule.violations());
        v
    }
}

/// Unclipped per-slot rate differences evaluated through the channel model.
pub fn slot_rates(problem: &UavProblem, trajectory: &Trajectory, beams: &BeamSchedule) -> Result<Vec<f64>> {
    if trajectory.slots() != problem.slots || beams.beams.len() != problem.slots {
        return Err(Error::DimensionMismatch {
            expected: problem.slots,
            got: trajectory.slots().min(beams.beams.len()),
        });
    }
    let g = &problem.geometry;
    trajectory.waypoints[1..]
        .iter()
        .zip(&beams.beams)
        .map(|(q, w)| {
            let hb = channel_vector(g, &problem.layout, q, User::Bob)?;
            let he = channel_vector(g, &problem.layout, q, User::Eve)?;
            Ok(raw_secrecy_rate(snr(&hb, w, g.noise_bob)?, snr(&he, w, g.noise_eve)?))
        })
        .collect()
}

fn clipped_objective(problem: &UavProblem, trajectory: &Trajectory, beams: &BeamSchedule) -> Result<f64> {
    let mut total = 0.0;
    for (q, w) in trajectory.waypoints[1..].iter().zip(&beams.beams) {
        total += problem.slot_channel(q)?.objective(w).max(0.0);
    }
    let tau = total / problem.slots as f64;
    if tau.is_finite() {
        Ok(tau)
    } else {
        Err(Error::NonFinite {
            iteration: 0,
            detail: format!("average secrecy rate evaluated to {tau}"),
        })
    }
}

fn with_waypoints(base: &Trajectory, q: &[[f64; 2]]) -> Trajectory {
    let z = base.start.z;
    let mut t = base.clone();
    t.waypoints = q.iter().map(|p| Position3D::new(p[0], p[1], z)).collect();
    t.waypoints[0] = base.start;
    let n = t.waypoints.len() - 1;
    t.waypoints[n] = base.end;
    t
}

/// Trajectory block: SCA rounds with the beams and steering vectors frozen at
/// block entry. Returns the trajectory and the frozen objective sequence.
pub fn optimize_trajectory_block(
    problem: &UavProblem,
    trajectory: &Trajectory,
    beams: &BeamSchedule,
) -> Result<(Trajectory, Vec<f64>)> {
    let (s1, s2) = problem.beam_scales(trajectory, beams)?;
    let mut current = trajectory.clone();
    let slacks = init_slacks(&current, &problem.geometry);
    let first = ConvexSubproblem::new(&current, &slacks, s1.clone(), s2.clone(), &problem.geometry)?;
    let q0: Vec<[f64; 2]> = current.waypoints.iter().map(|p| [p.x, p.y]).collect();
    let mut sequence = vec![first.true_objective(&q0)];
    for _ in 0..problem.sca.steps_per_block {
        let slacks = init_slacks(&current, &problem.geometry);
        let sub = ConvexSubproblem::new(&current, &slacks, s1.clone(), s2.clone(), &problem.geometry)?;
        let sol = solve_convex_subproblem(&sub, problem.sca.tolerance)?;
        let next = with_waypoints(&current, &sol.q);
        if !check_kinematics(&next).is_empty() {
            break;
        }
        let value = sub.true_objective(&sol.q);
        let done = (value - sequence[sequence.len() - 1]).abs() <= problem.sca.tolerance;
        sequence.push(value);
        current = next;
        if done {
            break;
        }
    }
    Ok((current, sequence))
}

/// Beam block for the macro scheme: per-slot PGA at the current waypoints.
pub fn optimize_uav_beams(
    problem: &UavProblem,
    trajectory: &Trajectory,
    beams: &BeamSchedule,
    rng: &mut SolverRng,
) -> Result<BeamSchedule> {
    let p_max = problem.geometry.p_max;
    let mut out = beams.clone();
    for (n, q) in trajectory.waypoints[1..].iter().enumerate() {
        let channel = problem.slot_channel(q)?;
        let mut start = beams.beams[n].clone();
        if problem.params.mrt_warm_start {
            let mrt = mrt_beam(&channel.a_b, p_max);
            if channel.objective(&mrt) > channel.objective(&start) {
                start = mrt;
            }
        }
        out.beams[n] = pga_beamforming(&start, &channel, p_max, &problem.params.beam, rng)?.point;
    }
    Ok(out)
}

/// Alternating trajectory and beam optimization under simulated-annealing
/// acceptance, starting from the straight line with MRT beams.
pub fn solve_p2(problem: &UavProblem) -> Result<UavSolution> {
    problem.validate()?;
    let params = &problem.params;
    let mut schedule = AnnealSchedule::new(params.initial_temperature, params.cooling, problem.seed)?;
    let mut rng = schedule.rng();

    let mut trajectory = problem.straight_line();
    let mut beams = BeamSchedule {
        beams: trajectory.waypoints[1..]
            .iter()
            .map(|q| Ok(mrt_beam(&problem.slot_channel(q)?.a_b, problem.geometry.p_max)))
            .collect::<Result<Vec<_>>>()?,
        p_max: problem.geometry.p_max,
    };
    let mut tau = clipped_objective(problem, &trajectory, &beams)?;
    let (mut best_traj, mut best_beams, mut best_tau) = (trajectory.clone(), beams.clone(), tau);
    let mut trace = Vec::with_capacity(params.max_iterations);
    let mut sca_objectives = Vec::with_capacity(params.max_iterations);
    let mut since_best = 0;

    for k in 1..=params.max_iterations {
        let (cand_traj, sequence) = optimize_trajectory_block(problem, &trajectory, &beams)?;
        let cand_beams = optimize_uav_beams(problem, &cand_traj, &beams, &mut rng)?;
        let tau_new = clipped_objective(problem, &cand_traj, &cand_beams).map_err(|e| match e {
            Error::NonFinite { detail, .. } => Error::NonFinite { iteration: k, detail },
            other => other,
        })?;
        sca_objectives.push(sequence);

        schedule = cool(&schedule);
        let accepted = accept(acceptance_probability(tau_new, tau, schedule.temperature), &mut rng);
        if accepted {
            trajectory = cand_traj;
            beams = cand_beams;
            tau = tau_new;
        }
        if tau > best_tau {
            best_tau = tau;
            best_traj.clone_from(&trajectory);
            best_beams.clone_from(&beams);
            since_best = 0;
        } else {
            since_best += 1;
        }
        trace.push(IterationRecord {
            iteration: k,
            objective: tau,
            best_objective: best_tau,
            temperature: schedule.temperature,
            accepted,
        });
        if params.patience > 0 && since_best >= params.patience {
            break;
        }
    }

    let raw = slot_rates(problem, &best_traj, &best_beams)?;
    for (w, r) in best_beams.beams.iter_mut().zip(&raw) {
        if *r < 0.0 {
            w.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        }
    }
    let per_slot_rates: Vec<f64> = slot_rates(problem, &best_traj, &best_beams)?
        .into_iter()
        .map(|r| r.max(0.0))
        .collect();
    Ok(UavSolution {
        asr: average_secrecy_rate(&per_slot_rates)?,
        trajectory: best_traj,
        beam_schedule: best_beams,
        per_slot_rates,
        trace,
        sca_objectives,
    })
}
