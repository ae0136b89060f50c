//! Movable-antenna micro-mobility: the UAV hovers while its array elements
//! slide along the array axis. Element positions and beams are optimized
//! alternately with projected gradient ascent inside a simulated-annealing
//! acceptance loop.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::annealing::{accept, acceptance_probability, cool, AnnealSchedule};
use crate::error::{Error, Result};
use crate::feasible::{project_layout, repair_layout, AntennaLimits, AntennaSchedule, BeamSchedule, FEASIBILITY_TOL};
use crate::geometry::{
    average_secrecy_rate, channel_vector, direction_cosine, raw_secrecy_rate, snr, Position3D, ScenarioGeometry, User,
};
use crate::pga::{mrt_beam, pga_beamforming, pga_positions, PgaParams, PositionContext, SlotChannel};
use crate::{IterationRecord, SolverRng};

/// Outer-loop and inner-loop settings of the alternating optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverParams {
    /// Outer (annealing) iterations, `I_max`.
    pub max_iterations: usize,
    /// Stop after this many outer iterations without a new best; 0 disables.
    pub patience: usize,
    pub beam: PgaParams,
    pub position: PgaParams,
    /// Uniform-spacing restarts tried by the position block besides the
    /// current layout.
    pub position_restarts: usize,
    /// Half-width, in wavelengths, of the random layout shift proposed at the
    /// start of every outer iteration after the first. 0 disables it.
    pub perturbation: f64,
    /// Also start the beam block from maximum-ratio transmission towards Bob
    /// when that beats the current beam.
    pub mrt_warm_start: bool,
    pub initial_temperature: f64,
    pub cooling: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            max_iterations: 300,
            patience: 0,
            beam: PgaParams::beams(),
            position: PgaParams {
                iterations: 30,
                rate: 2e-4,
                ..PgaParams::positions()
            },
            position_restarts: 16,
            perturbation: 0.5,
            mrt_warm_start: true,
            initial_temperature: 1.0,
            cooling: 0.8,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations", "must be at least 1"));
        }
        self.beam.validate("beam")?;
        self.position.validate("position")?;
        if !(self.perturbation >= 0.0 && self.perturbation.is_finite()) {
            return Err(Error::invalid("perturbation", "must be finite and nonnegative"));
        }
        AnnealSchedule::new(self.initial_temperature, self.cooling, 0)?;
        Ok(())
    }
}

/// One instance of the micro-mobility problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaProblem {
    pub geometry: ScenarioGeometry,
    /// Where the UAV hovers for the whole mission.
    pub hover: Position3D,
    pub slots: usize,
    pub limits: AntennaLimits,
    pub params: SolverParams,
    pub seed: u64,
}

impl MaProblem {
    /// Reference scenario: hover over (200, 200) at the given altitude, elements
    /// confined to `[0, 4λ]` with `λ/2` minimum spacing and 1 cm travel per slot.
    pub fn reference(altitude: f64, antennas: usize, slots: usize) -> Result<Self> {
        let geometry = ScenarioGeometry::reference(altitude);
        let lambda = geometry.wavelength;
        let limits = AntennaLimits::uniform(antennas, 0.0, 4.0 * lambda, lambda / 2.0, 0.01)?;
        Ok(Self {
            hover: geometry.uav_at(200.0, 200.0),
            geometry,
            slots,
            limits,
            params: SolverParams::default(),
            seed: 0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.slots == 0 {
            return Err(Error::invalid("slots", "need at least one time slot"));
        }
        self.geometry.validate()?;
        self.limits.validate()?;
        if !(self.hover.is_finite() && self.hover.z > 0.0) {
            return Err(Error::invalid("hover", "UAV position must be finite and airborne"));
        }
        self.params.validate()
    }

    pub fn antennas(&self) -> usize {
        self.limits.antennas()
    }

    /// Geometry seen by the per-slot blocks. The UAV hovers, so every slot
    /// shares it.
    pub fn position_context(&self) -> PositionContext {
        let g = &self.geometry;
        PositionContext {
            cos_b: direction_cosine(&self.hover, &g.bob),
            cos_e: direction_cosine(&self.hover, &g.eve),
            wavelength: g.wavelength,
            eps_b: g.snr_scale(&self.hover, User::Bob),
            eps_e: g.snr_scale(&self.hover, User::Eve),
        }
    }

    /// Uniform layout at `max(λ/2, d_min)` spacing from the lower bound, with
    /// MRT towards Bob at full power in every slot.
    pub fn initial_point(&self) -> Result<(AntennaSchedule, BeamSchedule)> {
        let spacing = (self.geometry.wavelength / 2.0).max(self.limits.min_spacing);
        let layout = repair_layout(
            &self.limits.uniform_layout(spacing),
            self.limits.min_spacing,
            &self.limits.lower,
            &self.limits.upper,
        )?;
        let ctx = self.position_context();
        let a_b = ctx.slot_channel(&layout)?.a_b;
        let beam = mrt_beam(&a_b, self.geometry.p_max);
        Ok((
            AntennaSchedule::constant(layout, self.slots, self.limits.clone()),
            BeamSchedule {
                beams: vec![beam; self.slots],
                p_max: self.geometry.p_max,
            },
        ))
    }
}

/// Output of [`solve_p1`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaSolution {
    pub antenna_schedule: AntennaSchedule,
    pub beam_schedule: BeamSchedule,
    pub asr: f64,
    pub per_slot_rates: Vec<f64>,
    pub trace: Vec<IterationRecord>,
}

impl MaSolution {
    pub fn violations(&self) -> Vec<String> {
        let mut v = self.antenna_schedule.violations(FEASIBILITY_TOL);
        v.extend(self.beam_schedule.violations());
        v
    }
}

fn check_shapes(problem: &MaProblem, layout: &AntennaSchedule, beams: &BeamSchedule) -> Result<()> {
    if layout.slots() != problem.slots || beams.beams.len() != problem.slots {
        return Err(Error::DimensionMismatch {
            expected: problem.slots,
            got: layout.slots().min(beams.beams.len()),
        });
    }
    let m = problem.antennas();
    if let Some(bad) = beams
        .beams
        .iter()
        .map(|v| v.len())
        .chain(layout.positions.iter().map(|v| v.len()))
        .find(|&l| l != m)
    {
        return Err(Error::DimensionMismatch { expected: m, got: bad });
    }
    Ok(())
}

/// Unclipped per-slot rate differences evaluated through the channel model.
pub fn slot_rates(problem: &MaProblem, layout: &AntennaSchedule, beams: &BeamSchedule) -> Result<Vec<f64>> {
    check_shapes(problem, layout, beams)?;
    let g = &problem.geometry;
    layout
        .positions
        .iter()
        .zip(&beams.beams)
        .map(|(x, w)| {
            let hb = channel_vector(g, x, &problem.hover, User::Bob)?;
            let he = channel_vector(g, x, &problem.hover, User::Eve)?;
            Ok(raw_secrecy_rate(snr(&hb, w, g.noise_bob)?, snr(&he, w, g.noise_eve)?))
        })
        .collect()
}

/// Average of the clipped per-slot rates, the quantity the annealer compares.
fn clipped_objective(ctx: &PositionContext, layout: &AntennaSchedule, beams: &BeamSchedule) -> Result<f64> {
    let mut total = 0.0;
    for (x, w) in layout.positions.iter().zip(&beams.beams) {
        total += ctx.objective(x, w)?.max(0.0);
    }
    let tau = total / layout.positions.len() as f64;
    if tau.is_finite() {
        Ok(tau)
    } else {
        Err(Error::NonFinite {
            iteration: 0,
            detail: format!("average secrecy rate evaluated to {tau}"),
        })
    }
}

/// Translates `layout` as a whole to the offset closest to zero that puts
/// every element inside its movement box around `previous`. Common shifts do
/// not change any beam response magnitude, so this only buys room for the
/// spacing. Layouts that fit no offset are returned unchanged.
fn fit_into_box(layout: &[f64], previous: &[f64], limits: &AntennaLimits) -> Vec<f64> {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for (i, (&x, &p)) in layout.iter().zip(previous).enumerate() {
        lo = lo.max(limits.lower[i].max(p - limits.max_step) - x);
        hi = hi.min(limits.upper[i].min(p + limits.max_step) - x);
    }
    if lo > hi {
        return layout.to_vec();
    }
    let shift = 0.0f64.clamp(lo, hi);
    layout.iter().map(|x| x + shift).collect()
}

/// Layouts with uniform spacing between `d_min` and `region / (M - 1)`,
/// centered on `center`.
fn restart_layouts(limits: &AntennaLimits, center: f64, count: usize) -> Vec<Vec<f64>> {
    let m = limits.antennas();
    if m < 2 || count == 0 {
        return Vec::new();
    }
    let region = limits.upper[m - 1] - limits.lower[0];
    let lo = limits.min_spacing;
    let hi = (region / (m - 1) as f64).max(lo);
    (0..count)
        .map(|k| {
            let s = if count == 1 {
                lo
            } else {
                lo + (hi - lo) * k as f64 / (count - 1) as f64
            };
            let half = s * (m - 1) as f64 / 2.0;
            (0..m).map(|i| center - half + i as f64 * s).collect()
        })
        .collect()
}

/// Position block: per-slot PGA on the element positions with the beams held
/// fixed, slots visited in time order so each movement box is taken around
/// the already-updated previous slot.
pub fn optimize_positions_block(
    problem: &MaProblem,
    beams: &BeamSchedule,
    layout: &AntennaSchedule,
    rng: &mut SolverRng,
) -> Result<AntennaSchedule> {
    positions_block(problem, beams, layout, problem.params.position_restarts, rng)
}

fn positions_block(
    problem: &MaProblem,
    beams: &BeamSchedule,
    layout: &AntennaSchedule,
    restarts: usize,
    rng: &mut SolverRng,
) -> Result<AntennaSchedule> {
    check_shapes(problem, layout, beams)?;
    let ctx = problem.position_context();
    let params = &problem.params;
    let mut out = layout.clone();
    for n in 0..problem.slots {
        let previous = if n == 0 {
            out.initial.clone()
        } else {
            out.positions[n - 1].clone()
        };
        let w = &beams.beams[n];
        let current = &layout.positions[n];
        let mut best = pga_positions(current, &previous, w, &ctx, &problem.limits, &params.position, rng)?;
        let center = current.iter().sum::<f64>() / current.len() as f64;
        for start in restart_layouts(&problem.limits, center, restarts) {
            let start = fit_into_box(&start, &previous, &problem.limits);
            let run = pga_positions(&start, &previous, w, &ctx, &problem.limits, &params.position, rng)?;
            if run.objective > best.objective {
                best = run;
            }
        }
        out.positions[n] = best.point;
    }
    Ok(out)
}

/// Beam block: per-slot PGA on the beam under the power budget with the
/// layout held fixed.
pub fn optimize_beamforming_block(
    problem: &MaProblem,
    layout: &AntennaSchedule,
    beams: &BeamSchedule,
    rng: &mut SolverRng,
) -> Result<BeamSchedule> {
    check_shapes(problem, layout, beams)?;
    let ctx = problem.position_context();
    let p_max = problem.geometry.p_max;
    let mut out = beams.clone();
    for (n, x) in layout.positions.iter().enumerate() {
        let channel: SlotChannel = ctx.slot_channel(x)?;
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

/// Random spacing change proposed before the blocks: offsets `r · s · u` with
/// `r ~ U[0, 1]`, `u ~ U[-1, 1]^M`, minus their mean. With equal odds it is
/// applied to every slot or to one uniformly chosen slot. Each moved slot is
/// fitted into its movement box, the chain is re-projected, and a moved slot
/// switches to MRT towards Bob when that beats its current beam on the new
/// layout.
fn perturb(
    problem: &MaProblem,
    layout: &AntennaSchedule,
    beams: &BeamSchedule,
    rng: &mut SolverRng,
) -> Result<(AntennaSchedule, BeamSchedule)> {
    let ctx = problem.position_context();
    let scale = problem.params.perturbation * problem.geometry.wavelength * rng.gen::<f64>();
    let mut shift: Vec<f64> = (0..problem.antennas())
        .map(|_| scale * rng.gen_range(-1.0..=1.0))
        .collect();
    let mean = shift.iter().sum::<f64>() / shift.len() as f64;
    shift.iter_mut().for_each(|d| *d -= mean);
    let only = if rng.gen::<bool>() {
        Some(rng.gen_range(0..problem.slots))
    } else {
        None
    };
    let mut out = layout.clone();
    let mut out_beams = beams.clone();
    for n in 0..problem.slots {
        let previous = if n == 0 {
            out.initial.clone()
        } else {
            out.positions[n - 1].clone()
        };
        let moved: Vec<f64> = if only.is_none_or(|k| k == n) {
            let shifted: Vec<f64> = layout.positions[n].iter().zip(&shift).map(|(x, d)| x + d).collect();
            fit_into_box(&shifted, &previous, &problem.limits)
        } else {
            layout.positions[n].clone()
        };
        out.positions[n] = project_layout(&moved, &previous, &problem.limits)?;
        if out.positions[n] != layout.positions[n] {
            let channel = ctx.slot_channel(&out.positions[n])?;
            let mrt = mrt_beam(&channel.a_b, problem.geometry.p_max);
            if channel.objective(&mrt) > channel.objective(&beams.beams[n]) {
                out_beams.beams[n] = mrt;
            }
        }
    }
    Ok((out, out_beams))
}

/// Alternating optimization of positions and beams under simulated-annealing
/// acceptance. Slots whose best rate difference is still negative transmit
/// nothing.
pub fn solve_p1(problem: &MaProblem) -> Result<MaSolution> {
    problem.validate()?;
    let params = &problem.params;
    let ctx = problem.position_context();
    let mut schedule = AnnealSchedule::new(params.initial_temperature, params.cooling, problem.seed)?;
    let mut rng = schedule.rng();

    let (mut layout, mut beams) = problem.initial_point()?;
    let mut tau = clipped_objective(&ctx, &layout, &beams)?;
    let (mut best_layout, mut best_beams, mut best_tau) = (layout.clone(), beams.clone(), tau);
    let mut trace = Vec::with_capacity(params.max_iterations);
    let mut since_best = 0;

    for k in 1..=params.max_iterations {
        // Restarts are scored with the current beams, which still match the
        // unperturbed layout, so a perturbed proposal is only refined locally.
        let (start, start_beams, restarts) = if k > 1 && params.perturbation > 0.0 {
            let (l, b) = perturb(problem, &layout, &beams, &mut rng)?;
            (l, b, 0)
        } else {
            (layout.clone(), beams.clone(), params.position_restarts)
        };
        let cand_layout = positions_block(problem, &start_beams, &start, restarts, &mut rng)?;
        let cand_beams = optimize_beamforming_block(problem, &cand_layout, &start_beams, &mut rng)?;
        let tau_new = clipped_objective(&ctx, &cand_layout, &cand_beams).map_err(|e| match e {
            Error::NonFinite { detail, .. } => Error::NonFinite { iteration: k, detail },
            other => other,
        })?;

        schedule = cool(&schedule);
        let p = acceptance_probability(tau_new, tau, schedule.temperature);
        let accepted = accept(p, &mut rng);
        if accepted {
            layout = cand_layout;
            beams = cand_beams;
            tau = tau_new;
        }
        if tau > best_tau {
            best_tau = tau;
            best_layout.clone_from(&layout);
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

    finish(problem, best_layout, best_beams, trace)
}

/// Applies transmission suspension and recomputes the rates from the
/// schedules through the channel model.
fn finish(
    problem: &MaProblem,
    layout: AntennaSchedule,
    mut beams: BeamSchedule,
    trace: Vec<IterationRecord>,
) -> Result<MaSolution> {
    let raw = slot_rates(problem, &layout, &beams)?;
    for (w, r) in beams.beams.iter_mut().zip(&raw) {
        if *r < 0.0 {
            w.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        }
    }
    let per_slot_rates: Vec<f64> = slot_rates(problem, &layout, &beams)?
        .into_iter()
        .map(|r| r.max(0.0))
        .collect();
    let asr = average_secrecy_rate(&per_slot_rates)?;
    Ok(MaSolution {
        antenna_schedule: layout,
        beam_schedule: beams,
        asr,
        per_slot_rates,
        trace,
    })
}

/// Closed-form rate of a lone user served by MRT from `m` elements.
pub fn single_user_capacity(eps: f64, antennas: usize, p_max: f64) -> f64 {
    (eps * antennas as f64 * p_max).ln_1p() / std::f64::consts::LN_2
}
