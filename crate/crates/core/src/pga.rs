//! Projected gradient ascent on the per-slot secrecy rate.
//!
//! Complex beams are optimized over the 2M real coordinates `(Re w, Im w)`.
//! A complex gradient `g` returned here packs `∂f/∂Re w_m + j ∂f/∂Im w_m`.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feasible::{project_layout, project_power, AntennaLimits};
use crate::geometry::{beam_response, steering_vector};
use crate::SolverRng;

/// Per-slot channel seen by the beam block: steering vectors of both users and
/// their SNR scales `ε = β0 / (d² σ²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotChannel {
    pub a_b: Vec<Complex64>,
    pub a_e: Vec<Complex64>,
    pub eps_b: f64,
    pub eps_e: f64,
}

impl SlotChannel {
    /// Unclipped rate difference `log2(1 + ε_b|a_b^H w|²) - log2(1 + ε_e|a_e^H w|²)`.
    pub fn objective(&self, w: &[Complex64]) -> f64 {
        rate_difference(
            self.eps_b * beam_response(&self.a_b, w).norm_sqr(),
            self.eps_e * beam_response(&self.a_e, w).norm_sqr(),
        )
    }
}

fn rate_difference(gamma_b: f64, gamma_e: f64) -> f64 {
    (gamma_b.ln_1p() - gamma_e.ln_1p()) / LN_2
}

/// Gradient of the slot rate difference with respect to the beam.
pub fn grad_beamforming(a_b: &[Complex64], a_e: &[Complex64], w: &[Complex64], eps1: f64, eps2: f64) -> Vec<Complex64> {
    let sb = beam_response(a_b, w);
    let se = beam_response(a_e, w);
    let cb = 2.0 * eps1 / (LN_2 * (1.0 + eps1 * sb.norm_sqr()));
    let ce = 2.0 * eps2 / (LN_2 * (1.0 + eps2 * se.norm_sqr()));
    a_b.iter()
        .zip(a_e)
        .map(|(ab, ae)| ab * sb * cb - ae * se * ce)
        .collect()
}

/// Geometry the position block sees for one slot. Direction cosines are
/// frozen: element motion is far too small to change the departure angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionContext {
    pub cos_b: f64,
    pub cos_e: f64,
    pub wavelength: f64,
    pub eps_b: f64,
    pub eps_e: f64,
}

impl PositionContext {
    pub fn slot_channel(&self, x: &[f64]) -> Result<SlotChannel> {
        Ok(SlotChannel {
            a_b: steering_vector(x, self.cos_b, self.wavelength)?.entries().to_vec(),
            a_e: steering_vector(x, self.cos_e, self.wavelength)?.entries().to_vec(),
            eps_b: self.eps_b,
            eps_e: self.eps_e,
        })
    }

    pub fn objective(&self, x: &[f64], w: &[Complex64]) -> Result<f64> {
        Ok(self.slot_channel(x)?.objective(w))
    }
}

/// `∂|a^H w|² / ∂x_m` for `a_m = exp(j k x_m)`, with `k = 2π cos α / λ`.
fn response_position_grad(x: &[f64], w: &[Complex64], k: f64) -> Vec<f64> {
    let terms: Vec<Complex64> = x
        .iter()
        .zip(w)
        .map(|(&xm, wm)| Complex64::from_polar(1.0, -k * xm) * wm)
        .collect();
    let s: Complex64 = terms.iter().sum();
    // ∂s/∂x_m = -j k conj(a_m) w_m
    terms
        .iter()
        .map(|t| 2.0 * (s.conj() * Complex64::new(0.0, -k) * t).re)
        .collect()
}

/// Gradient of the slot rate difference with respect to element positions.
pub fn grad_positions(x: &[f64], w: &[Complex64], ctx: &PositionContext) -> Vec<f64> {
    let kb = 2.0 * PI / ctx.wavelength * ctx.cos_b;
    let ke = 2.0 * PI / ctx.wavelength * ctx.cos_e;
    let gb = response_position_grad(x, w, kb);
    let ge = response_position_grad(x, w, ke);
    let resp = |k: f64| -> f64 {
        x.iter()
            .zip(w)
            .map(|(&xm, wm)| Complex64::from_polar(1.0, -k * xm) * wm)
            .sum::<Complex64>()
            .norm_sqr()
    };
    let cb = ctx.eps_b / (LN_2 * (1.0 + ctx.eps_b * resp(kb)));
    let ce = ctx.eps_e / (LN_2 * (1.0 + ctx.eps_e * resp(ke)));
    gb.iter().zip(&ge).map(|(b, e)| cb * b - ce * e).collect()
}

/// Diagonal AdaGrad accumulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaGradState {
    pub accum: Vec<f64>,
    pub base_rate: f64,
    pub epsilon: f64,
}

impl AdaGradState {
    pub fn new(dim: usize, base_rate: f64, epsilon: f64) -> Result<Self> {
        if !(base_rate > 0.0) {
            return Err(Error::invalid("base_rate", "must be positive"));
        }
        if !(epsilon > 0.0) {
            return Err(Error::invalid("epsilon", "must be positive"));
        }
        Ok(Self {
            accum: vec![0.0; dim],
            base_rate,
            epsilon,
        })
    }

    /// `accum += g²; step = η g / sqrt(accum + ε)`.
    pub fn step(&mut self, grad: &[f64]) -> Vec<f64> {
        debug_assert_eq!(grad.len(), self.accum.len());
        grad.iter()
            .zip(self.accum.iter_mut())
            .map(|(&g, acc)| {
                *acc += g * g;
                self.base_rate * g / (*acc + self.epsilon).sqrt()
            })
            .collect()
    }

    /// Complex gradients keep one accumulator per entry fed with `|g_m|²`,
    /// so every entry moves along its own gradient phase.
    pub fn step_complex(&mut self, grad: &[Complex64]) -> Vec<Complex64> {
        debug_assert_eq!(grad.len(), self.accum.len());
        grad.iter()
            .zip(self.accum.iter_mut())
            .map(|(g, acc)| {
                *acc += g.norm_sqr();
                g * (self.base_rate / (*acc + self.epsilon).sqrt())
            })
            .collect()
    }
}

pub fn adagrad_step(state: &AdaGradState, grad: &[f64]) -> Result<(AdaGradState, Vec<f64>)> {
    if grad.len() != state.accum.len() {
        return Err(Error::DimensionMismatch {
            expected: state.accum.len(),
            got: grad.len(),
        });
    }
    let mut next = state.clone();
    let step = next.step(grad);
    Ok((next, step))
}

/// Mean of `samples` gradient evaluations, accumulated as a running mean so a
/// deterministic `grad_fn` reproduces a single evaluation bit for bit.
pub fn mc_average_gradient<T, F>(mut grad_fn: F, samples: usize) -> Result<Vec<T>>
where
    T: Copy + std::ops::Sub<Output = T> + std::ops::Add<Output = T> + std::ops::Div<f64, Output = T>,
    F: FnMut(usize) -> Vec<T>,
{
    if samples == 0 {
        return Err(Error::invalid(
            "mc_samples",
            "at least one Monte Carlo sample is required",
        ));
    }
    let mut mean = grad_fn(0);
    for k in 1..samples {
        let g = grad_fn(k);
        let kf = (k + 1) as f64;
        for (m, gi) in mean.iter_mut().zip(g) {
            *m = *m + (gi - *m) / kf;
        }
    }
    Ok(mean)
}

/// Inner-loop settings shared by the beam and position blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PgaParams {
    pub iterations: usize,
    pub mc_samples: usize,
    /// AdaGrad base rate. For beams it is relative to `sqrt(p_max)`; for
    /// positions it is in meters.
    pub rate: f64,
    pub epsilon: f64,
    /// Standard deviation of zero-mean Gaussian noise added to each gradient
    /// sample. Zero gives the deterministic line-of-sight gradient.
    pub gradient_noise: f64,
}

impl PgaParams {
    pub fn beams() -> Self {
        Self {
            iterations: 60,
            mc_samples: 1,
            rate: 0.2,
            epsilon: 1e-8,
            gradient_noise: 0.0,
        }
    }

    pub fn positions() -> Self {
        Self {
            iterations: 15,
            mc_samples: 1,
            rate: 1e-4,
            epsilon: 1e-8,
            gradient_noise: 0.0,
        }
    }

    pub fn validate(&self, name: &'static str) -> Result<()> {
        if self.mc_samples == 0 {
            return Err(Error::invalid(name, "mc_samples must be at least 1"));
        }
        if !(self.rate > 0.0 && self.epsilon > 0.0 && self.gradient_noise >= 0.0) {
            return Err(Error::invalid(
                name,
                "rate and epsilon must be positive, gradient noise nonnegative",
            ));
        }
        Ok(())
    }
}

/// Result of an inner PGA run: the best iterate and the objective trace
/// (entry 0 is the starting objective).
#[derive(Debug, Clone, PartialEq)]
pub struct PgaOutcome<T> {
    pub point: Vec<T>,
    pub objective: f64,
    pub trace: Vec<f64>,
}

fn noisy<T: Copy>(g: Vec<T>, sigma: f64, rng: &mut SolverRng, perturb: impl Fn(T, &mut SolverRng, f64) -> T) -> Vec<T> {
    if sigma == 0.0 {
        return g;
    }
    g.into_iter().map(|v| perturb(v, rng, sigma)).collect()
}

fn check_finite(value: f64, iteration: usize, what: &str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            iteration,
            detail: format!("{what} objective is {value}"),
        })
    }
}

/// Projected AdaGrad ascent on one slot's beam under the power budget.
pub fn pga_beamforming(
    initial: &[Complex64],
    channel: &SlotChannel,
    p_max: f64,
    params: &PgaParams,
    rng: &mut SolverRng,
) -> Result<PgaOutcome<Complex64>> {
    let mut w = project_power(initial, p_max);
    let mut best = w.clone();
    let mut best_obj = channel.objective(&w);
    check_finite(best_obj, 0, "beam")?;
    let mut trace = Vec::with_capacity(params.iterations + 1);
    trace.push(best_obj);
    let mut ada = AdaGradState::new(w.len(), params.rate * p_max.sqrt(), params.epsilon)?;
    for k in 1..=params.iterations {
        let g = mc_average_gradient(
            |_| {
                let g = grad_beamforming(&channel.a_b, &channel.a_e, &w, channel.eps_b, channel.eps_e);
                noisy(g, params.gradient_noise, rng, |v, r, s| {
                    v + Complex64::new(r.sample::<f64, _>(StandardNormal), r.sample::<f64, _>(StandardNormal)) * s
                })
            },
            params.mc_samples,
        )?;
        let step = ada.step_complex(&g);
        let candidate: Vec<Complex64> = w.iter().zip(&step).map(|(a, b)| a + b).collect();
        w = project_power(&candidate, p_max);
        let obj = channel.objective(&w);
        check_finite(obj, k, "beam")?;
        trace.push(obj);
        if obj > best_obj {
            best_obj = obj;
            best.clone_from(&w);
        }
    }
    Ok(PgaOutcome {
        point: best,
        objective: best_obj,
        trace,
    })
}

/// Projected AdaGrad ascent on one slot's element positions for a fixed beam.
/// Every iterate is projected onto the movement box around `previous` and the
/// spacing constraint.
pub fn pga_positions(
    initial: &[f64],
    previous: &[f64],
    w: &[Complex64],
    ctx: &PositionContext,
    limits: &AntennaLimits,
    params: &PgaParams,
    rng: &mut SolverRng,
) -> Result<PgaOutcome<f64>> {
    let mut x = project_layout(initial, previous, limits)?;
    let mut best = x.clone();
    let mut best_obj = ctx.objective(&x, w)?;
    check_finite(best_obj, 0, "position")?;
    let mut trace = Vec::with_capacity(params.iterations + 1);
    trace.push(best_obj);
    let mut ada = AdaGradState::new(x.len(), params.rate, params.epsilon)?;
    for k in 1..=params.iterations {
        let g = mc_average_gradient(
            |_| {
                let g = grad_positions(&x, w, ctx);
                noisy(g, params.gradient_noise, rng, |v, r, s| {
                    v + s * r.sample::<f64, _>(StandardNormal)
                })
            },
            params.mc_samples,
        )?;
        let step = ada.step(&g);
        let candidate: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
        x = project_layout(&candidate, previous, limits)?;
        let obj = ctx.objective(&x, w)?;
        check_finite(obj, k, "position")?;
        trace.push(obj);
        if obj > best_obj {
            best_obj = obj;
            best.clone_from(&x);
        }
    }
    Ok(PgaOutcome {
        point: best,
        objective: best_obj,
        trace,
    })
}

/// Maximum-ratio beam towards `a` at full power.
pub fn mrt_beam(a: &[Complex64], p_max: f64) -> Vec<Complex64> {
    let norm = a.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![Complex64::new(0.0, 0.0); a.len()];
    }
    let scale = p_max.sqrt() / norm;
    a.iter().map(|c| c * scale).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rng() -> SolverRng {
        SolverRng::seed_from_u64(7)
    }

    #[test]
    fn beam_gradient_examples() {
        let a = vec![c(1.0, 0.0), c(0.0, 1.0)];
        let g = grad_beamforming(&a, &a, &[c(0.0, 0.0); 2], 1.0, 2.0);
        assert!(g.iter().all(|v| v.norm() == 0.0));

        let g = grad_beamforming(&[c(1.0, 0.0)], &[c(1.0, 0.0)], &[c(1.0, 0.0)], 1.0, 0.0);
        assert!((g[0].re - 1.0 / LN_2).abs() < 1e-12);
        assert!(g[0].im.abs() < 1e-15);

        let w = vec![c(0.3, -0.2), c(0.1, 0.7)];
        let g = grad_beamforming(&a, &a, &w, 1.5, 1.5);
        assert!(g.iter().all(|v| v.norm() < 1e-15));
    }

    #[test]
    fn position_gradient_vanishes_when_insensitive() {
        let w = vec![c(0.5, 0.1), c(-0.2, 0.4), c(0.3, 0.3)];
        let ctx = PositionContext {
            cos_b: 0.0,
            cos_e: 0.0,
            wavelength: 0.0107,
            eps_b: 3.0,
            eps_e: 1.0,
        };
        assert!(grad_positions(&[0.0, 0.006, 0.02], &w, &ctx).iter().all(|g| *g == 0.0));

        let ctx = PositionContext {
            cos_b: -0.7,
            cos_e: 0.7,
            ..ctx
        };
        let g = grad_positions(&[0.013], &[c(0.8, 0.1)], &ctx);
        assert!(g[0].abs() < 1e-12);
    }

    #[test]
    fn position_gradient_matches_finite_difference_two_elements() {
        let p: f64 = 1.0;
        let s = (p / 2.0).sqrt();
        let w = vec![c(s, 0.0), c(s, 0.0)];
        let ctx = PositionContext {
            cos_b: 1.0,
            cos_e: -0.3,
            wavelength: 1.0,
            eps_b: 2.0,
            eps_e: 0.5,
        };
        let x = [0.0, 0.25];
        let g = grad_positions(&x, &w, &ctx);
        let h = 1e-6;
        for m in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[m] += h;
            xm[m] -= h;
            let fd = (ctx.objective(&xp, &w).unwrap() - ctx.objective(&xm, &w).unwrap()) / (2.0 * h);
            assert!((fd - g[m]).abs() <= 1e-5 * g[m].abs(), "m={m} fd={fd} g={}", g[m]);
        }
    }

    #[test]
    fn adagrad_examples() {
        let s = AdaGradState::new(1, 0.1, 1e-8).unwrap();
        let (s1, step) = adagrad_step(&s, &[1.0]).unwrap();
        assert!((step[0] - 0.1 / (1.0f64 + 1e-8).sqrt()).abs() < 1e-15);
        let (s2, step) = adagrad_step(&s1, &[1.0]).unwrap();
        assert!((step[0] - 0.1 / (2.0f64 + 1e-8).sqrt()).abs() < 1e-15);
        assert!((step[0] - 0.0707).abs() < 1e-4);
        let (s3, step) = adagrad_step(&s2, &[0.0]).unwrap();
        assert_eq!(step, vec![0.0]);
        assert_eq!(s3.accum, s2.accum);
        assert!(adagrad_step(&s, &[1.0, 2.0]).is_err());
        assert!(AdaGradState::new(1, 0.0, 1e-8).is_err());
    }

    #[test]
    fn mc_average_examples() {
        let det = |_k: usize| vec![0.1f64, -3.7, 1e-17];
        assert_eq!(
            mc_average_gradient(det, 10).unwrap(),
            mc_average_gradient(det, 1).unwrap()
        );
        let seq = [1.0f64, 3.0];
        assert_eq!(mc_average_gradient(|k| vec![seq[k]], 2).unwrap(), vec![2.0]);
        assert!(mc_average_gradient(det, 0).is_err());
    }

    #[test]
    fn mc_average_converges_under_noise() {
        let mut r = rng();
        let sigma = 0.5;
        let truth = [1.0, -2.0];
        let samples = 1000;
        let avg = mc_average_gradient(
            |_| {
                truth
                    .iter()
                    .map(|t| t + sigma * r.sample::<f64, _>(StandardNormal))
                    .collect::<Vec<f64>>()
            },
            samples,
        )
        .unwrap();
        for (a, t) in avg.iter().zip(truth) {
            assert!((a - t).abs() <= 3.0 * sigma / (samples as f64).sqrt());
        }
    }

    fn mrt_channel(m: usize, eps_e: f64) -> SlotChannel {
        let x: Vec<f64> = (0..m).map(|i| i as f64 * 0.00535).collect();
        SlotChannel {
            a_b: steering_vector(&x, -0.6963, 0.0107).unwrap().entries().to_vec(),
            a_e: steering_vector(&x, 0.6963, 0.0107).unwrap().entries().to_vec(),
            eps_b: 4.0,
            eps_e,
        }
    }

    #[test]
    fn pga_reaches_mrt_without_eve() {
        let ch = mrt_channel(4, 0.0);
        let init = vec![c(0.5, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        let params = PgaParams {
            iterations: 300,
            ..PgaParams::beams()
        };
        let out = pga_beamforming(&init, &ch, 1.0, &params, &mut rng()).unwrap();
        let gain = beam_response(&ch.a_b, &out.point).norm_sqr();
        assert!(gain >= 0.99 * 4.0, "gain {gain}");
        for w in out.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "trace not monotone: {:?}", w);
        }
    }

    #[test]
    fn pga_keeps_mrt_fixed_point() {
        let ch = mrt_channel(4, 0.0);
        let init = mrt_beam(&ch.a_b, 1.0);
        let out = pga_beamforming(&init, &ch, 1.0, &PgaParams::beams(), &mut rng()).unwrap();
        assert!((out.objective - out.trace[0]).abs() < 1e-6);
        for w in out.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
    }

    #[test]
    fn pga_beats_closed_form_baselines_with_eve() {
        let ch = mrt_channel(2, 3.0);
        let mrt = mrt_beam(&ch.a_b, 1.0);
        // Zero forcing: project a_b onto the orthogonal complement of a_e.
        let ae_norm2: f64 = ch.a_e.iter().map(|v| v.norm_sqr()).sum();
        let coef = beam_response(&ch.a_e, &ch.a_b) / ae_norm2;
        let zf_dir: Vec<Complex64> = ch.a_b.iter().zip(&ch.a_e).map(|(b, e)| b - e * coef).collect();
        let zf = mrt_beam(&zf_dir, 1.0);
        let params = PgaParams {
            iterations: 500,
            ..PgaParams::beams()
        };
        let out = pga_beamforming(&mrt, &ch, 1.0, &params, &mut rng()).unwrap();
        assert!(out.objective >= ch.objective(&mrt) - 1e-6);
        assert!(out.objective >= ch.objective(&zf) - 1e-6);
        assert!(crate::feasible::power(&out.point) <= 1.0);
    }
}
