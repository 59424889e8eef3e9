//! Acceptance criteria. Each test prints one `criterion k: PASS|FAIL` line
//! followed by the measured values; tolerances are pinned below.
//!
//! Run with `cargo test --release -p qcbound-validation --test acceptance -- --nocapture`.

use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use qcbound::baselines::{all_baselines, nearest_unitary, propagator_of};
use qcbound::design::{gradient, multistart, objective_value, DesignOptions, Objective};
use qcbound::linalg::{c, expm_hermitian, frobenius, identity, random_complex, real_diag, sigma_x, sigma_z, CMat, CVec};
use qcbound::model::{self, build_time_grid, LeakageCap, ObjectiveSpec, Pulse, Scenario, SystemSpec};
use qcbound::open_system::{propagate_lindblad_held, simulate_lindblad, LindbladSpec};
use qcbound::propagator::{binarize_pulse, simulate, simulate_shifted, trajectory_difference};
use qcbound::qcqp::{build_scenario_problem, BuildOptions, Discretization};
use qcbound::sdr::{bound_coherence, bound_gate_fidelity, bound_state_transfer, BoundOptions, SdpStatus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---- pinned tolerances -------------------------------------------------
const DOMINANCE_TOL: f64 = 1e-6;
const MULTISTART_SEEDS: usize = 20;
const TIGHTNESS_GAP: f64 = 0.05;
const LEAKAGE_MONOTONE_TOL: f64 = 1e-6;
const LEAKAGE_MIN_DROP: f64 = 0.05;
const TRIVIAL_TOL: f64 = 1e-6;
const ORDER_RATIO: (f64, f64) = (3.0, 5.0);
const UNITARITY_TOL: f64 = 1e-6;
const GRADIENT_REL_TOL: f64 = 1e-6;
const FEASIBILITY_TOL_PER_VAR: f64 = 1e-9;
const HOMOGENIZATION_RATIO: f64 = 0.55;
const HOMOGENIZATION_SECONDS: f64 = 60.0;
const SUBSET_IDENTITY_TOL: f64 = 1e-10;
const BASELINE_FACTOR: f64 = 0.1;
const TRANSFER_THRESHOLD: f64 = 0.99;
const TRACE_TOL: f64 = 1e-8;
const CLOSED_LIMIT_TOL: f64 = 1e-9;

/// Writes straight to stderr, which the test harness does not capture, so the
/// verdict line shows for passing criteria too.
fn report(k: usize, pass: bool, details: &[String]) {
    let mut out = format!("criterion {k}: {}\n", if pass { "PASS" } else { "FAIL" });
    for d in details {
        out += &format!("    {d}\n");
    }
    let _ = std::io::stderr().lock().write_all(out.as_bytes());
    assert!(pass, "criterion {k} failed");
}

fn on_grid(s: &Scenario, t: f64, n: usize) -> Scenario {
    s.with_grid(build_time_grid(0.0, t, n).unwrap())
}

fn designed(s: &Scenario) -> f64 {
    let obj = Objective::from_spec(&s.objective);
    multistart(s, &obj, MULTISTART_SEEDS, 2024, &DesignOptions::default()).unwrap().best().objective_value
}

/// (bound, status) comparable with the designed objective.
fn bound_of(s: &Scenario, options: &BoundOptions) -> (f64, SdpStatus) {
    let n = s.grid.n_steps;
    match s.objective {
        ObjectiveSpec::StateTransfer { .. } => {
            let sol = bound_state_transfer(s, n, options).unwrap();
            (sol.bound, sol.status)
        }
        ObjectiveSpec::GateFidelity { .. } => {
            let g = bound_gate_fidelity(s, n, options).unwrap();
            (g.solution.bound, g.solution.status)
        }
        // the designer maximizes |ρ↑↓|, bounded by the phase-grid magnitude bound
        ObjectiveSpec::Coherence { .. } => {
            let cb = bound_coherence(s, n, options).unwrap();
            (cb.magnitude_bound, cb.status)
        }
    }
}

#[test]
fn criterion_01_dominance() {
    let mut points: Vec<(Scenario, BoundOptions)> = Vec::new();
    let std_opts = BoundOptions::default();
    for t in [5.0, 15.0, 30.0] {
        points.push((on_grid(&model::doublewell(), t, 60), std_opts));
    }
    for t in [2.0, 5.0, 8.0] {
        points.push((on_grid(&model::transmon(), t, 60), std_opts));
    }
    for t in [4.0, 8.0, 12.0] {
        points.push((on_grid(&model::hadamard(), t, 60), std_opts));
    }
    // full constraint set (stride 1): stride 2 leaves the 8-dim lift nearly free
    let spin_opts = BoundOptions { n_phases: 4, build: BuildOptions { node_stride: 1 }, ..BoundOptions::default() };
    for eps in [0.5, 1.0, 2.0] {
        for t in [1.0, 2.0] {
            points.push((on_grid(&model::spinbath(eps).unwrap(), t, 16), spin_opts));
        }
    }
    let mut pass = true;
    let mut lines = Vec::new();
    for (s, opts) in &points {
        let start = Instant::now();
        let (bound, status) = bound_of(s, opts);
        let best = designed(s);
        let ok = bound >= best - DOMINANCE_TOL;
        pass &= ok;
        lines.push(format!(
            "{} eps_max={} T={} N={}: bound {bound:.6} [{status}] vs designed {best:.6} (margin {:+.2e}, {:.0}s) {}",
            s.name,
            s.system.eps_max,
            s.grid.t_final,
            s.grid.n_steps,
            bound - best,
            start.elapsed().as_secs_f64(),
            if ok { "ok" } else { "VIOLATED" }
        ));
    }
    report(1, pass, &lines);
}

#[test]
fn criterion_02_hadamard_tightness() {
    let mut lines = Vec::new();
    let mut pass = true;
    // fixed step h = 0.2
    for t in [2.0, 4.0, 6.0, 8.0, 10.0] {
        let s = on_grid(&model::hadamard(), t, (5.0 * t) as usize);
        let (bound, status) = bound_of(&s, &BoundOptions::default());
        let best = designed(&s);
        let gap = bound - best;
        let ok = gap <= TIGHTNESS_GAP;
        pass &= ok;
        lines.push(format!("T={t} N={}: bound {bound:.6} [{status}], best f² {best:.6}, gap {gap:.2e}", s.grid.n_steps));
    }
    report(2, pass, &lines);
}

#[test]
fn criterion_03_leakage_monotonicity() {
    let base = on_grid(&model::transmon(), 5.0, 60);
    let mut bounds = Vec::new();
    let mut lines = Vec::new();
    for cap in [1.0, 1e-1, 1e-2, 1e-3] {
        let mut s = base.clone();
        s.leakage = vec![LeakageCap { level: 2, cap, time_indices: (0..=60).collect() }];
        let sol = bound_state_transfer(&s, 60, &BoundOptions::default()).unwrap();
        lines.push(format!("cap {cap:e}: P1 bound {:.6} [{}]", sol.bound, sol.status));
        bounds.push(sol.bound);
    }
    let monotone = bounds.windows(2).all(|w| w[1] <= w[0] + LEAKAGE_MONOTONE_TOL);
    let drop = bounds[0] - bounds[3];
    lines.push(format!("non-increasing: {monotone}; drop from cap 1 to 1e-3: {drop:.4}"));
    report(3, monotone && drop >= LEAKAGE_MIN_DROP, &lines);
}

#[test]
fn criterion_04_trivial_time_limits() {
    let opts = BoundOptions::default();
    let mut lines = Vec::new();
    let mut pass = true;
    for s in [model::doublewell(), model::transmon()] {
        let b = bound_state_transfer(&s, 0, &opts).unwrap().bound;
        pass &= b.abs() <= TRIVIAL_TOL;
        lines.push(format!("{} state transfer at T = t0: {b:.3e}", s.name));
    }
    let g = bound_gate_fidelity(&model::hadamard(), 0, &opts).unwrap().solution.bound;
    let want = (model::hadamard_target().adjoint().trace().norm() / 2.0).powi(2);
    pass &= (g - 0.5).abs() <= TRIVIAL_TOL && (want - 0.5).abs() < 1e-15;
    lines.push(format!("hadamard gate bound at T = t0: {g:.9} (|Tr U†|²/4 = {want})"));
    report(4, pass, &lines);
}

/// Square wave derived from `cos(ω t)`: `±ε_max` with switches at
/// `(k + 1/2) π / ω = 0.8 (2k + 1)`, which lie on every grid below. At a
/// switch node the pulse takes the mean of the one-sided limits.
fn square_wave(t: f64, eps_max: f64) -> f64 {
    let omega = PI / 1.6;
    let cs = (omega * t).cos();
    if cs.abs() < 1e-9 {
        0.0
    } else {
        eps_max * cs.signum()
    }
}

fn is_switch(t: f64) -> bool {
    let x = t / 0.8;
    (x - x.round()).abs() < 1e-9 && (x.round() as i64) % 2 == 1
}

/// RK4 for `U' = -i H(t) U` with `H` piecewise constant between switches.
fn rk4_reference(sys: &SystemSpec, t_end: f64, steps: usize) -> Vec<CMat> {
    let h = t_end / steps as f64;
    let mut u = identity(sys.dim());
    let mut out = vec![u.clone()];
    let ham = |t: f64| &sys.h0 + &sys.hc * c(square_wave(t, sys.eps_max), 0.0);
    let mi = c(0.0, -1.0);
    for k in 0..steps {
        // sample H strictly inside the step so switches never fall on a stage
        let hk = ham((k as f64 + 0.5) * h);
        let f = |v: &CMat| &hk * v * mi;
        let k1 = f(&u);
        let k2 = f(&(&u + &k1 * c(0.5 * h, 0.0)));
        let k3 = f(&(&u + &k2 * c(0.5 * h, 0.0)));
        let k4 = f(&(&u + &k3 * c(h, 0.0)));
        u += (k1 + k2 * c(2.0, 0.0) + k3 * c(2.0, 0.0) + k4) * c(h / 6.0, 0.0);
        out.push(u.clone());
    }
    out
}

#[test]
fn criterion_05_propagator_order_and_unitarity() {
    let s = model::transmon();
    let t_end = 12.0;
    let coarse = [60usize, 120, 240];
    // RK4 on a grid 10x finer than the finest Nyström grid
    let fine_steps = 10 * coarse[2];
    let reference = rk4_reference(&s.system, t_end, fine_steps);
    let mut errors = Vec::new();
    let mut lines = Vec::new();
    for &n in &coarse {
        let grid = build_time_grid(0.0, t_end, n).unwrap();
        let pulse = Pulse::from_fn(&grid, |t| square_wave(t, s.system.eps_max));
        let traj = simulate(&s.system, &grid, &pulse, &identity(3)).unwrap();
        let stride = fine_steps / n;
        // compare on the coarsest grid's nodes away from switches, where the
        // trapezoid endpoint rule is one-sided
        let err = (0..=coarse[0])
            .map(|k| k * (n / coarse[0]))
            .filter(|&i| !is_switch(grid.node(i)))
            .map(|i| frobenius(&(&traj.blocks[i] - &reference[i * stride])))
            .fold(0.0, f64::max);
        lines.push(format!("N={n}: max error {err:.3e}"));
        errors.push(err);
    }
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    let order_ok = ratios.iter().all(|r| (ORDER_RATIO.0..=ORDER_RATIO.1).contains(r));
    lines.push(format!("halving ratios {ratios:.3?} (want within {ORDER_RATIO:?})"));

    let grid = build_time_grid(0.0, t_end, 200).unwrap();
    let pulse = Pulse::from_fn(&grid, |t| square_wave(t, s.system.eps_max));
    let residual = simulate(&s.system, &grid, &pulse, &identity(3)).unwrap().unitarity_residual();
    let zero = simulate(&s.system, &grid, &Pulse::constant(&grid, 0.0), &identity(3)).unwrap().unitarity_residual();
    let unitary_ok = residual <= UNITARITY_TOL;
    lines.push(format!(
        "unitarity residual max_i |U_i†U_i - I|_F at N=200, T=12: {residual:.3e} (limit {UNITARITY_TOL:e}; zero pulse {zero:.1e})"
    ));
    report(5, order_ok && unitary_ok, &lines);
}

#[test]
fn criterion_06_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let scenarios = [model::doublewell(), model::transmon(), model::hadamard(), model::spinbath(1.0).unwrap()];
    let mut worst = 0.0f64;
    let mut lines = Vec::new();
    for case in 0..20 {
        let base = &scenarios[case % 4];
        let n = rng.random_range(4..=12);
        let t = rng.random_range(1.0..4.0);
        let s = on_grid(base, t, n);
        let (lo, hi) = (s.system.eps_min, s.system.eps_max);
        let margin = 1e-3 * (hi - lo);
        let pulse = Pulse::new((0..=n).map(|_| rng.random_range(lo + margin..hi - margin)).collect());
        let obj = Objective::from_spec(&s.objective);
        let g = gradient(&s, &pulse, &obj).unwrap();
        let delta = 1e-5 * (hi - lo);
        let fd: Vec<f64> = (0..=n)
            .map(|k| {
                let mut p = pulse.clone();
                p.values[k] += delta;
                let up = objective_value(&s, &p, &obj).unwrap().0;
                p.values[k] -= 2.0 * delta;
                let down = objective_value(&s, &p, &obj).unwrap().0;
                (up - down) / (2.0 * delta)
            })
            .collect();
        let num = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den = g.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-300);
        let rel = num / den;
        worst = worst.max(rel);
        lines.push(format!("case {case:2}: {} N={n} T={t:.2}: relative error {rel:.2e}", s.name));
    }
    lines.push(format!("worst {worst:.2e} (limit {GRADIENT_REL_TOL:e})"));
    report(6, worst <= GRADIENT_REL_TOL, &lines);
}

fn toy_two_level(n: usize, t: f64) -> Scenario {
    Scenario {
        name: "toy".into(),
        system: SystemSpec { h0: real_diag(&[0.0, 0.6]), hc: sigma_x() * c(-0.8, 0.0), eps_min: -0.5, eps_max: 0.5 },
        grid: build_time_grid(0.0, t, n).unwrap(),
        objective: ObjectiveSpec::StateTransfer { initial_level: 0, target_level: 1 },
        leakage: Vec::new(),
        lindblad: None,
    }
}

#[test]
fn criterion_07_constraint_feasibility() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cases = [
        on_grid(&model::doublewell(), 5.0, 10),
        on_grid(&model::transmon(), 3.0, 10),
        on_grid(&model::hadamard(), 4.0, 10),
        on_grid(&model::spinbath(1.0).unwrap(), 1.0, 6),
    ];
    let mut pass = true;
    let mut lines = Vec::new();
    for s in &cases {
        let n_last = s.grid.n_steps;
        let (problem, disc) = build_scenario_problem(s, n_last, 0.0, &BuildOptions::default()).unwrap();
        let tol = FEASIBILITY_TOL_PER_VAR * problem.n as f64;
        let init = s.initial_columns();
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let pulse = Pulse::new(
                (0..s.grid.len()).map(|_| if rng.random_bool(0.5) { s.system.eps_max } else { s.system.eps_min }).collect(),
            );
            let traj = simulate_shifted(&s.system, &s.grid, &pulse, &init).unwrap();
            let shifted: Vec<f64> = pulse.values.iter().map(|v| v - s.system.eps_min).collect();
            let phi = disc.phi_from_trajectory(&traj, &[shifted]);
            worst = worst.max(problem.max_violation(phi.as_slice()));
        }
        pass &= worst <= tol;
        lines.push(format!(
            "{}: {} constraints, n = {}, worst residual over 100 bang-bang pulses {worst:.2e} (limit {tol:.1e})",
            s.name,
            problem.constraints.len(),
            problem.n
        ));
    }
    // exhaustive check on a 2-level toy with N = 5 (2⁶ binary pulses)
    let toy = toy_two_level(5, 3.0);
    let sol = bound_state_transfer(&toy, 5, &BoundOptions::default()).unwrap();
    let mut best = f64::NEG_INFINITY;
    let mut count = 0;
    for mask in 0..(1u32 << 6) {
        let values = (0..6).map(|k| if mask >> k & 1 == 1 { 0.5 } else { -0.5 }).collect();
        let traj = simulate_shifted(&toy.system, &toy.grid, &Pulse::new(values), &toy.initial_columns()).unwrap();
        best = best.max(traj.final_block()[(1, 0)].norm_sqr());
        count += 1;
    }
    let ok = best <= sol.bound + DOMINANCE_TOL;
    pass &= ok;
    lines.push(format!("toy: {count} pulses, best enumerated {best:.6} <= bound {:.6} [{}]: {ok}", sol.bound, sol.status));
    report(7, pass, &lines);
}

#[test]
fn criterion_08_homogenization() {
    let start = Instant::now();
    // the cosine amplitude 0.5 needs a box of ±0.5
    let mut system = model::transmon().system;
    system.eps_min = -0.5;
    system.eps_max = 0.5;
    let omega1 = 1.9;
    // switches are placed on grid nodes, so the step must be small against
    // τ² for the node quantization (relative O(h/τ)) to stay below the O(τ)
    // homogenization error being measured: h = 12/6400 ≈ τ²/12 at τ = 0.15
    let grid = build_time_grid(0.0, 12.0, 6400).unwrap();
    let cols = identity(3);
    let smooth = Pulse::from_fn(&grid, |t| 0.5 * (omega1 * t).cos());
    let reference = simulate(&system, &grid, &smooth, &cols).unwrap();
    let mut diffs = Vec::new();
    for tau in [0.3, 0.15] {
        let bang = binarize_pulse(&smooth, &grid, tau, system.eps_min, system.eps_max).unwrap();
        let traj = simulate(&system, &grid, &bang, &cols).unwrap();
        diffs.push(trajectory_difference(&traj, &reference, &grid).unwrap());
    }
    let ratio = diffs[1] / diffs[0];
    let secs = start.elapsed().as_secs_f64();
    report(
        8,
        ratio <= HOMOGENIZATION_RATIO && secs <= HOMOGENIZATION_SECONDS,
        &[
            format!("relative difference tau=0.3: {:.4e}, tau=0.15: {:.4e}", diffs[0], diffs[1]),
            format!("ratio {ratio:.3} (limit {HOMOGENIZATION_RATIO}), runtime {secs:.1}s (limit {HOMOGENIZATION_SECONDS}s)"),
        ],
    );
}

#[test]
fn criterion_09_unitarity_subset_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let setups = [(model::hadamard().system, 3.0, 8usize), (model::doublewell().system, 6.0, 8usize)];
    let mut worst = 0.0f64;
    for k in 0..50 {
        let (sys, t, n) = &setups[k % 2];
        let grid = build_time_grid(0.0, *t, *n).unwrap();
        let disc = Discretization::single(sys, &grid, *n, &identity(sys.dim())).unwrap();
        let forms = disc.conservation_constraints(1);
        let phi: CVec = random_complex(disc.n(), 1, &mut rng).column(0).into_owned();
        let t1 = rng.random_range(0..=*n);
        worst = worst.max(disc.unitarity_subset_check(&forms, phi.as_slice(), t1).unwrap());
    }
    report(9, worst <= SUBSET_IDENTITY_TOL, &[format!("50 random Φ: worst entrywise difference {worst:.2e} (limit {SUBSET_IDENTITY_TOL:e})")]);
}

#[test]
fn criterion_10_baseline_gap() {
    let dw = model::doublewell();
    let mut lines = Vec::new();
    // target from the best designed pulse on the native grid (T = 30, h = 0.5)
    let obj = Objective::from_spec(&dw.objective);
    let best = multistart(&dw, &obj, MULTISTART_SEEDS, 2024, &DesignOptions::default()).unwrap();
    let target = nearest_unitary(&propagator_of(&dw, &best.best().pulse).unwrap()).unwrap();
    lines.push(format!("designed P1 at T=30: {:.6}", best.best().objective_value));
    let reports = all_baselines(&dw, Some(&target)).unwrap();

    // smallest T (multiple of h = 0.5) with bound >= 0.99, by bisection
    let h = 0.5;
    let bound_at = |k: usize| {
        let t = h * k as f64;
        let sol = bound_state_transfer(&on_grid(&dw, t, k), k, &BoundOptions::default()).unwrap();
        (sol.bound, sol.status)
    };
    let (mut lo, mut hi) = (30usize, 60usize);
    let (b_lo, _) = bound_at(lo);
    let (b_hi, _) = bound_at(hi);
    lines.push(format!("bound at T=15: {b_lo:.4}, at T=30: {b_hi:.4}"));
    assert!(b_lo < TRANSFER_THRESHOLD && b_hi >= TRANSFER_THRESHOLD, "threshold not bracketed");
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        let (b, st) = bound_at(mid);
        lines.push(format!("bound at T={}: {b:.4} [{st}]", h * mid as f64));
        if b >= TRANSFER_THRESHOLD {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let t_d = h * hi as f64;
    lines.push(format!("D-matrix time for P1 >= {TRANSFER_THRESHOLD}: T_D = {t_d}"));
    let mut pass = true;
    for r in &reports {
        let ok = r.minimum_time <= BASELINE_FACTOR * t_d;
        pass &= ok;
        lines.push(format!(
            "{}: {:.4} vs {BASELINE_FACTOR}·T_D = {:.4} ({:.2}·T_D) {}",
            r.name,
            r.minimum_time,
            BASELINE_FACTOR * t_d,
            r.minimum_time / t_d,
            if ok { "ok" } else { "too large" }
        ));
    }
    report(10, pass, &lines);
}

#[test]
fn criterion_11_open_system() {
    let mut decay = CMat::zeros(2, 2);
    decay[(1, 0)] = c(1.0, 0.0);
    let spec = |gamma: f64| LindbladSpec::new(sigma_z() * c(0.5, 0.0), sigma_x(), vec![decay.clone()], vec![gamma]).unwrap();
    let grid = build_time_grid(0.0, 10.0, 200).unwrap();
    let pulse = Pulse::from_fn(&grid, |t| 0.6 * (1.3 * t).cos());
    let mut rho0 = CMat::zeros(2, 2);
    rho0[(0, 0)] = c(1.0, 0.0);

    let damped = simulate_lindblad(&spec(0.3), -1.0, &grid, &pulse, &rho0).unwrap();
    let trace = damped.max_trace_error();

    let held = propagate_lindblad_held(&spec(0.0), &grid, &pulse, &rho0).unwrap();
    let mut u = identity(2);
    let mut closed_gap = 0.0f64;
    for (i, w) in pulse.values.windows(2).enumerate() {
        let h = sigma_z() * c(0.5, 0.0) + sigma_x() * c(0.5 * (w[0] + w[1]), 0.0);
        u = expm_hermitian(&h, grid.step()).unwrap() * u;
        closed_gap = closed_gap.max(frobenius(&(held.density(i + 1) - &u * &rho0 * u.adjoint())));
    }
    let a = simulate_lindblad(&spec(0.0), -1.0, &grid, &pulse, &rho0).unwrap();
    let b = simulate_lindblad(&spec(1e-13), -1.0, &grid, &pulse, &rho0).unwrap();
    let continuity = (0..grid.len()).map(|i| (&a.states[i] - &b.states[i]).norm()).fold(0.0, f64::max);
    report(
        11,
        trace <= TRACE_TOL && closed_gap <= CLOSED_LIMIT_TOL && continuity <= CLOSED_LIMIT_TOL,
        &[
            format!("damped qubit (γ=0.3, T=10, N=200): max |Tr ρ - 1| = {trace:.2e} (limit {TRACE_TOL:e})"),
            format!("γ=0 vs closed conjugation: {closed_gap:.2e}; γ=1e-13 vs γ=0: {continuity:.2e} (limit {CLOSED_LIMIT_TOL:e})"),
        ],
    );
}
