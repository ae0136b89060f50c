//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. Tolerances and budgets are pinned below.

#![allow(clippy::field_reassign_with_default)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use mobisec::experiments::output::write_results;
use mobisec::experiments::*;
use mobisec::feasible::{power, BeamSchedule, FEASIBILITY_TOL};
use mobisec::geometry::{beam_response, direction_cosine, steering_vector, Position3D};
use mobisec::ma::{optimize_beamforming_block, solve_p1, MaProblem};
use mobisec::pga::{grad_beamforming, grad_positions, PositionContext, SlotChannel};
use mobisec::sca::{init_slacks, linearize_subproblem, solve_p2, UavProblem};
use mobisec::SolverRng;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

const GRAD_REL_TOL: f64 = 1e-5;
const GRAD_MIN_MAGNITUDE: f64 = 1e-9;
const MRT_FRACTION: f64 = 0.99;
const BRUTE_FORCE_MARGIN: f64 = 0.05;
const SCA_MONOTONE_SLACK: f64 = 1e-6;
const TANGENCY_TOL: f64 = 1e-10;
const M4_TARGET: (f64, f64) = (4.10, 0.4);
const M5_TARGET: (f64, f64) = (5.32, 0.5);
const SECURITY_GAP_DB: f64 = 15.0;
const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
/// Outer iterations without improvement before a trajectory run stops; the
/// macro-mobility runs settle within the first few iterations.
const UAV_PATIENCE: usize = 20;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

/// Shared state between criteria: the calibrated configuration and every
/// solution's constraint violations for the final audit.
#[derive(Default)]
struct State {
    calibrated: Option<ExperimentConfig>,
    audited: usize,
    violations: Vec<String>,
}

impl State {
    fn audit(&mut self, what: &str, v: Vec<String>) {
        self.audited += 1;
        self.violations.extend(v.into_iter().map(|s| format!("{what}: {s}")));
    }

    fn audit_outcome(&mut self, what: &str, o: &Outcome) {
        match o {
            Outcome::Ma(s) => self.audit(what, s.violations()),
            Outcome::Uav(s) => self.audit(what, s.violations()),
        }
    }

    fn config(&mut self) -> ExperimentConfig {
        if self.calibrated.is_none() {
            let mut c = ExperimentConfig::default();
            c.calibration = Some(CalibrationConfig::default());
            self.calibrated = Some(prepare(&c).expect("calibration").0);
        }
        self.calibrated.clone().unwrap()
    }
}

fn random_beam(m: usize, p: f64, rng: &mut SolverRng) -> Vec<Complex64> {
    let w: Vec<Complex64> = (0..m)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let s = (p / power(&w)).sqrt();
    w.iter().map(|v| v * s).collect()
}

fn random_layout(m: usize, region: f64, d_min: f64, rng: &mut SolverRng) -> Vec<f64> {
    let free = region - (m as f64 - 1.0) * d_min;
    let mut u: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..free)).collect();
    u.sort_by(f64::total_cmp);
    u.iter().enumerate().map(|(i, v)| v + i as f64 * d_min).collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn criterion_1(_: &mut State) -> Verdict {
    let mut rng = SolverRng::seed_from_u64(1);
    let base = ScenarioConfig::default();
    let g = base.geometry();
    let l = base.wavelength;
    let (mut states, mut checked, mut worst) = (0, 0, 0.0f64);
    let mut failures = Vec::new();
    for &m in [1usize, 2, 4, 8].iter().cycle().take(120) {
        let uav = g.uav_at(rng.gen_range(-300.0..300.0), rng.gen_range(-300.0..300.0));
        let ctx = PositionContext {
            cos_b: direction_cosine(&uav, &g.bob),
            cos_e: direction_cosine(&uav, &g.eve),
            wavelength: l,
            eps_b: g.snr_scale(&uav, mobisec::geometry::User::Bob),
            eps_e: g.snr_scale(&uav, mobisec::geometry::User::Eve),
        };
        let x = random_layout(m, 4.0 * l, l / 2.0, &mut rng);
        let w = random_beam(m, rng.gen_range(0.1..1.0), &mut rng);
        states += 1;

        let mut compare = |analytic: f64, fd: f64, what: String| {
            if analytic.abs() > GRAD_MIN_MAGNITUDE {
                checked += 1;
                let rel = (analytic - fd).abs() / analytic.abs();
                worst = worst.max(rel);
                if rel >= GRAD_REL_TOL {
                    failures.push(format!("{what}: {analytic} vs {fd}"));
                }
            }
        };

        let gx = grad_positions(&x, &w, &ctx);
        let h = 1e-7;
        for i in 0..m {
            let (mut up, mut dn) = (x.clone(), x.clone());
            up[i] += h;
            dn[i] -= h;
            let fd = (ctx.objective(&up, &w).unwrap() - ctx.objective(&dn, &w).unwrap()) / (2.0 * h);
            compare(gx[i], fd, format!("M={m} position {i}"));
        }

        let ch: SlotChannel = ctx.slot_channel(&x).unwrap();
        let gw = grad_beamforming(&ch.a_b, &ch.a_e, &w, ch.eps_b, ch.eps_e);
        let h = 1e-6;
        for i in 0..m {
            for (part, dir) in [(0, Complex64::new(h, 0.0)), (1, Complex64::new(0.0, h))] {
                let (mut up, mut dn) = (w.clone(), w.clone());
                up[i] += dir;
                dn[i] -= dir;
                let fd = (ch.objective(&up) - ch.objective(&dn)) / (2.0 * h);
                let analytic = if part == 0 { gw[i].re } else { gw[i].im };
                compare(analytic, fd, format!("M={m} beam {i}.{part}"));
            }
        }
    }
    verdict(
        failures.is_empty() && states >= 100,
        format!(
            "{states} states, {checked} coordinates, worst relative error {worst:.2e} (tol {GRAD_REL_TOL:.0e}){}",
            failures
                .first()
                .map(|f| format!(", first miss {f}"))
                .unwrap_or_default()
        ),
    )
}

fn criterion_2(state: &mut State) -> Verdict {
    let mut worst = f64::INFINITY;
    for m in [2usize, 4, 8] {
        let mut s = ScenarioConfig::default();
        s.antennas = m;
        s.eve_enabled = false;
        let mut solver = mobisec::ma::SolverParams::default();
        solver.mrt_warm_start = false;
        let p = s.ma_problem(&solver, m as u64).unwrap();
        let (layout, _) = p.initial_point().unwrap();
        let mut rng = SolverRng::seed_from_u64(100 + m as u64);
        let start = BeamSchedule {
            beams: (0..p.slots)
                .map(|_| random_beam(m, p.geometry.p_max, &mut rng))
                .collect(),
            p_max: p.geometry.p_max,
        };
        let out = optimize_beamforming_block(&p, &layout, &start, &mut rng).unwrap();
        state.audit(&format!("criterion 2 M={m}"), out.violations());
        let ctx = p.position_context();
        for (n, w) in out.beams.iter().enumerate() {
            let a_b = ctx.slot_channel(&layout.positions[n]).unwrap().a_b;
            worst = worst.min(beam_response(&a_b, w).norm_sqr() / (m as f64 * p.geometry.p_max));
        }
    }
    verdict(
        worst >= MRT_FRACTION,
        format!("worst |a_b^H w|^2 / (M P) over M in {{2,4,8}} and 40 slots: {worst:.5} (need {MRT_FRACTION})"),
    )
}

/// Joint oracle for M = 2, N = 1: 2000 reachable inter-element gaps times 10^6
/// full-power beams. The rate only depends on the gap, and for a positive
/// rate full power is optimal, so this covers the feasible set.
fn criterion_3(state: &mut State) -> Verdict {
    let mut s = ScenarioConfig::default();
    s.antennas = 2;
    let solver = mobisec::ma::SolverParams::default();
    let p0 = MaProblem {
        slots: 1,
        ..s.ma_problem(&solver, 0).unwrap()
    };
    let ctx = p0.position_context();
    let l = s.wavelength;
    let (lo, hi) = (l / 2.0, l / 2.0 + s.max_step);
    let pmax = p0.geometry.p_max;

    let mut rng = SolverRng::seed_from_u64(2024);
    // |w1 + e^{-jφ} w2|^2 = P + 2 Re(conj(w1) w2 e^{-jφ}) for a = [1, e^{jφ}].
    let z: Vec<(f64, f64)> = (0..1_000_000)
        .map(|_| {
            let w = random_beam(2, pmax, &mut rng);
            let c = w[0].conj() * w[1];
            (c.re, c.im)
        })
        .collect();
    let mut best_ratio = 0.0f64;
    for i in 0..2000 {
        let gap = lo + (hi - lo) * i as f64 / 1999.0;
        let a_b = steering_vector(&[0.0, gap], ctx.cos_b, l).unwrap();
        let a_e = steering_vector(&[0.0, gap], ctx.cos_e, l).unwrap();
        let (pb, pe) = (a_b.entries()[1], a_e.entries()[1]);
        for &(re, im) in &z {
            // Re(c · conj(a2)) with c = conj(w1) w2.
            let gb = pmax + 2.0 * (re * pb.re + im * pb.im);
            let ge = pmax + 2.0 * (re * pe.re + im * pe.im);
            let ratio = (1.0 + ctx.eps_b * gb) / (1.0 + ctx.eps_e * ge);
            best_ratio = best_ratio.max(ratio);
        }
    }
    let oracle = best_ratio.log2().max(0.0);

    let mut hits = 0;
    let mut values = Vec::new();
    for seed in 0..10 {
        let p = MaProblem { seed, ..p0.clone() };
        let sol = solve_p1(&p).unwrap();
        state.audit(&format!("criterion 3 seed {seed}"), sol.violations());
        if sol.asr >= oracle - BRUTE_FORCE_MARGIN {
            hits += 1;
        }
        values.push(sol.asr);
    }
    let worst = values.iter().cloned().fold(f64::INFINITY, f64::min);
    verdict(
        hits >= 9,
        format!("oracle {oracle:.4}, solver within {BRUTE_FORCE_MARGIN} on {hits}/10 seeds (worst {worst:.4})"),
    )
}

fn criterion_4(state: &mut State) -> Verdict {
    let mut rng = SolverRng::seed_from_u64(44);
    let (mut worst_drop, mut worst_tangent, mut worst_above) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    let mut blocks = 0;
    for k in 0..20 {
        let slots = if k % 2 == 0 { 10 } else { 20 };
        let altitude = if k % 3 == 0 { 100.0 } else { 50.0 };
        let mut p = UavProblem::reference(altitude, [2, 4][k % 2], slots, 1.0);
        p.geometry.bob = Position3D::new(rng.gen_range(-300.0..300.0), rng.gen_range(-300.0..300.0), 0.0);
        p.geometry.eve = Position3D::new(rng.gen_range(-300.0..300.0), rng.gen_range(-300.0..300.0), 0.0);
        let (sx, sy) = (rng.gen_range(-200.0..200.0), rng.gen_range(-200.0..200.0));
        let reach = rng.gen_range(0.3..0.95) * p.v_max * p.dt * slots as f64;
        let heading: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        p.start = p.geometry.uav_at(sx, sy);
        p.end = p
            .geometry
            .uav_at(sx + reach * heading.cos(), sy + reach * heading.sin());
        p.params.max_iterations = 4;
        p.seed = k as u64;
        let sol = solve_p2(&p).unwrap();
        state.audit(&format!("criterion 4 instance {k}"), sol.violations());
        for seq in &sol.sca_objectives {
            blocks += 1;
            for w in seq.windows(2) {
                worst_drop = worst_drop.max(w[0] - w[1]);
            }
        }

        let traj = &sol.trajectory;
        let sub = linearize_subproblem(&p, traj, &init_slacks(traj, &p.geometry), &sol.beam_schedule).unwrap();
        worst_tangent = worst_tangent.max((sub.surrogate_at(&sub.q0).unwrap() - sub.true_objective(&sub.q0)).abs());
        for _ in 0..50 {
            let scale = rng.gen_range(0.01..30.0);
            let q: Vec<[f64; 2]> = sub
                .q0
                .iter()
                .map(|c| {
                    [
                        c[0] + scale * rng.gen_range(-1.0..1.0),
                        c[1] + scale * rng.gen_range(-1.0..1.0),
                    ]
                })
                .collect();
            if let Some(s) = sub.surrogate_at(&q) {
                worst_above = worst_above.max(s - sub.true_objective(&q));
            }
        }
    }
    verdict(
        worst_drop <= SCA_MONOTONE_SLACK && worst_tangent < TANGENCY_TOL && worst_above < TANGENCY_TOL,
        format!(
            "20 instances, {blocks} SCA blocks: largest objective drop {worst_drop:.2e} (slack {SCA_MONOTONE_SLACK:.0e}), \
             tangency error {worst_tangent:.2e}, surrogate above true by at most {worst_above:.2e} (tol {TANGENCY_TOL:.0e})"
        ),
    )
}

fn ma_mean(state: &mut State, config: &ExperimentConfig, antennas: usize, what: &str) -> f64 {
    let mut s = config.scenario.clone();
    s.antennas = antennas;
    let asr: Vec<f64> = SEEDS
        .iter()
        .map(|&seed| {
            let o = solve_scenario(config, &s, Scheme::Ma, seed).unwrap();
            state.audit_outcome(what, &o);
            o.asr()
        })
        .collect();
    mean(&asr)
}

fn criterion_5(state: &mut State) -> Verdict {
    let config = state.config();
    let noise = config.scenario.noise_dbm;
    let m4 = ma_mean(state, &config, 4, "criterion 5 M=4");
    let m5 = ma_mean(state, &config, 5, "criterion 5 M=5");
    let ok4 = (m4 - M4_TARGET.0).abs() <= M4_TARGET.1;
    let ok5 = (m5 - M5_TARGET.0).abs() <= M5_TARGET.1;
    verdict(
        ok4 && ok5,
        format!(
            "calibrated noise {noise:.4} dBm; M=4 mean {m4:.4} (target {} ± {}) {}; M=5 mean {m5:.4} (target {} ± {}) {}",
            M4_TARGET.0,
            M4_TARGET.1,
            if ok4 { "ok" } else { "miss" },
            M5_TARGET.0,
            M5_TARGET.1,
            if ok5 { "ok" } else { "miss" }
        ),
    )
}

fn criterion_6(state: &mut State) -> Verdict {
    let mut config = state.config();
    config.scenario.antennas = 2;
    config.scenario.p_max = 1.0;
    config.gain.slots = (0..config.scenario.slots).collect();
    let o = solve_scenario(&config, &config.scenario, Scheme::Ma, 0).unwrap();
    state.audit_outcome("criterion 6", &o);
    let patterns = gain_patterns(&config, &config.scenario, &o).unwrap();
    let gaps: Vec<f64> = patterns.iter().map(|p| p.bob.1 - p.eve.1).collect();
    let min = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
    let first = gaps[0];
    verdict(
        min >= SECURITY_GAP_DB,
        format!(
            "gain(Bob) - gain(Eve): slot 0 {first:.3} dB, minimum over {} slots {min:.3} dB (need {SECURITY_GAP_DB} dB)",
            gaps.len()
        ),
    )
}

fn uav_config(config: &ExperimentConfig) -> ExperimentConfig {
    let mut c = config.clone();
    c.solver.patience = UAV_PATIENCE;
    c
}

fn sweep_means(
    state: &mut State,
    config: &ExperimentConfig,
    scheme: Scheme,
    axis: SweepAxis,
    values: &[f64],
) -> Vec<f64> {
    let records = run_grid(config, &[scheme], axis, values, &SEEDS, &|_| {});
    values
        .iter()
        .map(|&v| {
            let asr: Vec<f64> = records
                .iter()
                .filter(|r| r.value == v)
                .map(|r| {
                    let o = r.outcome.as_ref().expect("sweep run failed");
                    state.audit_outcome(&format!("criterion 7 {scheme} {axis}={v}"), o);
                    o.asr()
                })
                .collect();
            mean(&asr)
        })
        .collect()
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("/")
}

fn criterion_7(state: &mut State) -> Verdict {
    let ma = state.config();
    let uav = uav_config(&ma);
    let mut parts = Vec::new();
    let mut all = true;
    let mut check = |ok: bool, text: String| {
        all &= ok;
        parts.push(format!("{} {text}", if ok { "ok" } else { "MISS" }));
    };
    let increasing = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
    let decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);

    let powers = [0.1, 1.0, 10.0];
    let p_ma = sweep_means(state, &ma, Scheme::Ma, SweepAxis::Power, &powers);
    let p_uav = sweep_means(state, &uav, Scheme::Uav, SweepAxis::Power, &powers);
    check(
        increasing(&p_ma) && increasing(&p_uav),
        format!("P 0.1/1/10 W: MA {} UAV {}", fmt(&p_ma), fmt(&p_uav)),
    );

    let antennas: Vec<f64> = (2..=8).map(f64::from).collect();
    let m_ma = sweep_means(state, &ma, Scheme::Ma, SweepAxis::Antennas, &antennas);
    let peak = (0..m_ma.len()).max_by(|&a, &b| m_ma[a].total_cmp(&m_ma[b])).unwrap();
    let peak_m = antennas[peak];
    check(
        (peak_m == 4.0 || peak_m == 5.0) && decreasing(&m_ma[peak..]),
        format!("MA over M=2..8: {} (peak at M={peak_m})", fmt(&m_ma)),
    );

    let heights = [50.0, 100.0];
    let h_ma = sweep_means(state, &ma, Scheme::Ma, SweepAxis::Altitude, &heights);
    let h_uav = sweep_means(state, &uav, Scheme::Uav, SweepAxis::Altitude, &heights);
    check(
        h_ma[0] > h_ma[1] && h_uav[0] > h_uav[1],
        format!("H 50/100 m: MA {} UAV {}", fmt(&h_ma), fmt(&h_uav)),
    );

    let n0 = ma.scenario.noise_dbm;
    let noises = [n0 - 10.0, n0, n0 + 10.0];
    let n_ma = sweep_means(state, &ma, Scheme::Ma, SweepAxis::Noise, &noises);
    let n_uav = sweep_means(state, &uav, Scheme::Uav, SweepAxis::Noise, &noises);
    check(
        decreasing(&n_ma) && decreasing(&n_uav),
        format!("noise {n0:.1}±10 dBm: MA {} UAV {}", fmt(&n_ma), fmt(&n_uav)),
    );

    let mut long = uav.clone();
    long.scenario.slots = 60;
    let geometry = long.scenario.geometry();
    let straight = long
        .scenario
        .uav_problem(&long.solver, &long.sca, 0)
        .straight_line()
        .min_distance_to(&geometry.bob);
    let dists: Vec<f64> = SEEDS
        .iter()
        .map(|&seed| {
            let o = solve_scenario(&long, &long.scenario, Scheme::Uav, seed).unwrap();
            state.audit_outcome("criterion 7 N=60", &o);
            o.trajectory().unwrap().min_distance_to(&geometry.bob)
        })
        .collect();
    let d = mean(&dists);
    check(
        d < straight,
        format!("N=60 min distance to Bob {d:.2} m vs straight line {straight:.2} m"),
    );

    verdict(all, parts.join("; "))
}

fn criterion_8(state: &mut State) -> Verdict {
    let mut config = uav_config(&state.config());
    config.sweep.axis = SweepAxis::Power;
    config.sweep.values = vec![1.0];
    config.run.seeds = vec![0, 1];
    let hash = config.hash().unwrap();
    let files: Vec<Vec<u8>> = (0..2)
        .map(|_| {
            let records = run_grid(
                &config,
                &[Scheme::Both],
                config.sweep.axis,
                &config.sweep.values,
                &config.run.seeds,
                &|_| {},
            );
            let dir = tempfile::tempdir().unwrap();
            std::fs::read(write_results(dir.path(), &hash, &records).unwrap()).unwrap()
        })
        .collect();
    verdict(
        files[0] == files[1],
        format!(
            "two executions of a 4-run sweep: results.csv {} ({} bytes)",
            if files[0] == files[1] { "identical" } else { "differs" },
            files[0].len()
        ),
    )
}

fn criterion_9(state: &mut State) -> Verdict {
    verdict(
        state.violations.is_empty(),
        format!(
            "{} solutions from criteria 2-7 audited at tolerance {FEASIBILITY_TOL:.0e}: {} violations{}",
            state.audited,
            state.violations.len(),
            state
                .violations
                .first()
                .map(|v| format!(", first: {v}"))
                .unwrap_or_default()
        ),
    )
}

type Criterion = (usize, &'static str, Option<f64>, fn(&mut State) -> Verdict);

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "gradient oracle", Some(10.0), criterion_1),
        (2, "MRT oracle", Some(30.0), criterion_2),
        (3, "tiny-instance brute force", Some(300.0), criterion_3),
        (4, "SCA monotonicity and tangency", Some(300.0), criterion_4),
        (5, "convergence values after calibration", Some(1200.0), criterion_5),
        (6, "beam-gain security gap", Some(300.0), criterion_6),
        (7, "qualitative trends", Some(3600.0), criterion_7),
        (8, "determinism", None, criterion_8),
        (9, "feasibility audit", None, criterion_9),
    ];
    // Optional criterion numbers on the command line run a subset.
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut state = State::default();
    let (mut passed, mut failed) = (0, 0);
    for (id, name, budget, run) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| run(&mut state)));
        let secs = start.elapsed().as_secs_f64();
        let (pass, detail) = match result {
            Ok(o) => {
                let in_time = budget.is_none_or(|b| secs < b);
                let detail = if in_time {
                    o.detail
                } else {
                    format!("{} (over the {}s budget)", o.detail, budget.unwrap())
                };
                (o.pass && in_time, detail)
            }
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        if pass {
            passed += 1;
        } else {
            failed += 1;
        }
        println!(
            "{} criterion {id} ({name}) [{secs:.1}s]: {detail}",
            if pass { "PASS" } else { "FAIL" }
        );
    }
    println!("acceptance: {passed} passed, {failed} failed");
    if failed > 0 {
        std::process::exit(1);
    }
}
