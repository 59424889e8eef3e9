//! Local pulse optimization: adjoint gradients, projected gradient ascent with
//! Armijo backtracking, and deterministic multistart.
//!
//! Everything runs in the shifted frame used by the bound (drift
//! `h0 + eps_min hc`, amplitudes `ε - eps_min`), so designed objective values
//! are directly comparable with bound values on the same grid.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::linalg::{c, CMat, C64};
use crate::model::{reduced_coherence, ObjectiveSpec, Pulse, Scenario, TimeGrid};
use crate::propagator::{assemble_multi, control_gradient, solve_adjoint, solve_dynamics, TrajectorySolution, VolterraSystem};

/// Real objective of the final-time block `U(T)` (tracked columns).
#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// `Σ_p |U[level, p]|² / M`.
    Population { level: usize },
    /// `|ρ^S_{↑↓}|` of the first column, qubit ⊗ bath ordering.
    Coherence { bath_dim: usize },
    /// `|Tr(U_tar† U)|² / L²`.
    GateFidelitySq { target: CMat },
}

impl Objective {
    pub fn from_spec(spec: &ObjectiveSpec) -> Self {
        match spec {
            ObjectiveSpec::StateTransfer { target_level, .. } => Objective::Population { level: *target_level },
            ObjectiveSpec::Coherence { bath_dim, .. } => Objective::Coherence { bath_dim: *bath_dim },
            ObjectiveSpec::GateFidelity { target } => Objective::GateFidelitySq { target: target.clone() },
        }
    }

    pub fn value(&self, u: &CMat) -> f64 {
        match self {
            Objective::Population { level } => {
                u.row(*level).iter().map(|z| z.norm_sqr()).sum::<f64>() / u.ncols() as f64
            }
            Objective::Coherence { bath_dim } => {
                let psi: Vec<C64> = u.column(0).iter().copied().collect();
                reduced_coherence(&psi, *bath_dim).norm()
            }
            Objective::GateFidelitySq { target } => {
                let l = target.nrows() as f64;
                trace_overlap(target, u).norm_sqr() / (l * l)
            }
        }
    }

    /// Holomorphic derivative `∂f/∂U` (with `Ū` held fixed), so that
    /// `df = 2 Re Σ (∂f/∂U) ∘ dU`.
    pub fn derivative(&self, u: &CMat) -> CMat {
        let mut g = CMat::zeros(u.nrows(), u.ncols());
        match self {
            Objective::Population { level } => {
                let m = u.ncols() as f64;
                for p in 0..u.ncols() {
                    g[(*level, p)] = u[(*level, p)].conj() / m;
                }
            }
            Objective::Coherence { bath_dim } => {
                let d = *bath_dim;
                let psi: Vec<C64> = u.column(0).iter().copied().collect();
                let rho = reduced_coherence(&psi, d);
                let f = rho.norm();
                // |ρ| is not differentiable at ρ = 0; any subgradient will do there.
                if f > 1e-300 {
                    for b in 0..d {
                        g[(b, 0)] = psi[d + b].conj() * rho.conj() / (2.0 * f);
                        g[(d + b, 0)] = rho * psi[b].conj() / (2.0 * f);
                    }
                }
            }
            Objective::GateFidelitySq { target } => {
                let l = target.nrows() as f64;
                let tau = trace_overlap(target, u);
                for (gi, ti) in g.iter_mut().zip(target.iter()) {
                    *gi = ti.conj() * tau.conj() / (l * l);
                }
            }
        }
        g
    }
}

/// `Tr(A† B)`.
fn trace_overlap(a: &CMat, b: &CMat) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

fn shifted_system(scenario: &Scenario, pulse: &Pulse) -> Result<VolterraSystem> {
    pulse.check_for(&scenario.system, &scenario.grid)?;
    let sys = &scenario.system;
    let h0_eff = &sys.h0 + &sys.hc * c(sys.eps_min, 0.0);
    let shifted: Vec<f64> = pulse.values.iter().map(|v| v - sys.eps_min).collect();
    assemble_multi(&h0_eff, &[sys.hc.clone()], &[shifted], &scenario.grid, &scenario.initial_columns())
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub trajectory: TrajectorySolution,
}

/// Objective value only (one forward solve).
pub fn objective_value(scenario: &Scenario, pulse: &Pulse, objective: &Objective) -> Result<(f64, TrajectorySolution)> {
    let vs = shifted_system(scenario, pulse)?;
    let traj = solve_dynamics(&vs)?;
    Ok((objective.value(traj.final_block()), traj))
}

/// Value and `∂f/∂ε(t_j)` from one forward and one adjoint solve.
pub fn evaluate(scenario: &Scenario, pulse: &Pulse, objective: &Objective) -> Result<Evaluation> {
    let vs = shifted_system(scenario, pulse)?;
    let traj = solve_dynamics(&vs)?;
    let u = traj.final_block();
    let value = objective.value(u);
    let n = traj.blocks.len();
    let mut seed: Vec<CMat> = (0..n).map(|_| CMat::zeros(u.nrows(), u.ncols())).collect();
    seed[n - 1] = objective.derivative(u);
    let lam = solve_adjoint(&vs, &seed)?;
    let gradient = control_gradient(&vs, &traj, &lam).swap_remove(0);
    Ok(Evaluation { value, gradient, trajectory: traj })
}

pub fn gradient(scenario: &Scenario, pulse: &Pulse, objective: &Objective) -> Result<Vec<f64>> {
    Ok(evaluate(scenario, pulse, objective)?.gradient)
}

#[derive(Debug, Clone, Copy)]
pub struct DesignOptions {
    pub max_iters: usize,
    /// Backtracking factor.
    pub shrink: f64,
    /// Armijo sufficient-increase constant.
    pub armijo: f64,
    /// Stop when the projected-gradient step `|P(ε + g) - ε|_∞` falls below this.
    pub pg_tol: f64,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self { max_iters: 200, shrink: 0.5, armijo: 1e-4, pg_tol: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct DesignResult {
    pub pulse: Pulse,
    pub objective_value: f64,
    pub iterations: usize,
    pub accepted_steps: usize,
    /// Projected-gradient norm at exit.
    pub gradient_norm: f64,
    pub trajectory: TrajectorySolution,
    /// Objective after every accepted step, starting with the initial value.
    pub history: Vec<f64>,
}

fn project(values: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    values.iter().map(|v| v.clamp(lo, hi)).collect()
}

fn projected_step(x: &[f64], g: &[f64], alpha: f64, lo: f64, hi: f64) -> Vec<f64> {
    x.iter().zip(g).map(|(xi, gi)| (xi + alpha * gi).clamp(lo, hi)).collect()
}

fn non_finite(pulse: &[f64], value: f64) -> Error {
    Error::Numerical(format!("objective became {value} at iterate {pulse:?}"))
}

/// Projected gradient ascent from `initial`.
pub fn optimize_pulse(scenario: &Scenario, objective: &Objective, initial: &Pulse, opts: &DesignOptions) -> Result<DesignResult> {
    let (lo, hi) = (scenario.system.eps_min, scenario.system.eps_max);
    initial.check_for(&scenario.system, &scenario.grid)?;
    let mut x = project(&initial.values, lo, hi);
    let mut eval = evaluate(scenario, &Pulse::new(x.clone()), objective)?;
    if !eval.value.is_finite() {
        return Err(non_finite(&x, eval.value));
    }
    let mut history = vec![eval.value];
    let mut accepted = 0;
    let mut alpha = f64::NAN;
    let mut iterations = 0;
    let mut pg_norm;
    loop {
        let g = &eval.gradient;
        pg_norm = x.iter().zip(g).map(|(xi, gi)| ((xi + gi).clamp(lo, hi) - xi).abs()).fold(0.0, f64::max);
        if pg_norm <= opts.pg_tol || iterations >= opts.max_iters {
            break;
        }
        iterations += 1;
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if alpha.is_nan() {
            // first trial moves the largest component across the whole box
            alpha = (hi - lo) / gmax;
        } else {
            alpha *= 2.0;
        }
        let mut next = None;
        while alpha * gmax > 1e-14 * (hi - lo) {
            let cand = projected_step(&x, g, alpha, lo, hi);
            let pulse = Pulse::new(cand.clone());
            let (value, _) = objective_value(scenario, &pulse, objective)?;
            if !value.is_finite() {
                return Err(non_finite(&cand, value));
            }
            let predicted: f64 = cand.iter().zip(&x).zip(g).map(|((c, xi), gi)| gi * (c - xi)).sum();
            if value >= eval.value + opts.armijo * predicted && value >= eval.value {
                next = Some(cand);
                break;
            }
            alpha *= opts.shrink;
        }
        let Some(cand) = next else { break };
        x = cand;
        eval = evaluate(scenario, &Pulse::new(x.clone()), objective)?;
        accepted += 1;
        history.push(eval.value);
    }
    Ok(DesignResult {
        pulse: Pulse::new(x),
        objective_value: eval.value,
        iterations,
        accepted_steps: accepted,
        gradient_norm: pg_norm,
        trajectory: eval.trajectory,
        history,
    })
}

/// Starting pulses: constant 0 (clamped into the box), constant `eps_max`,
/// then `n_seeds` pulses with independent uniform node values.
pub fn multistart_seeds(scenario: &Scenario, n_seeds: usize, rng_seed: u64) -> Vec<Pulse> {
    let (lo, hi) = (scenario.system.eps_min, scenario.system.eps_max);
    let grid = &scenario.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut seeds = vec![Pulse::constant(grid, 0.0f64.clamp(lo, hi)), Pulse::constant(grid, hi)];
    for _ in 0..n_seeds {
        seeds.push(Pulse::new((0..grid.len()).map(|_| rng.random_range(lo..=hi)).collect()));
    }
    seeds
}

#[derive(Debug, Clone)]
pub struct MultistartResult {
    pub best: usize,
    pub results: Vec<DesignResult>,
}

impl MultistartResult {
    pub fn best(&self) -> &DesignResult {
        &self.results[self.best]
    }

    pub fn from_results(results: Vec<DesignResult>) -> Result<Self> {
        if results.is_empty() {
            return invalid("no multistart results");
        }
        // first maximum wins, so the outcome does not depend on evaluation order
        let mut best = 0;
        for (k, r) in results.iter().enumerate() {
            if r.objective_value > results[best].objective_value {
                best = k;
            }
        }
        Ok(Self { best, results })
    }
}

pub fn multistart(scenario: &Scenario, objective: &Objective, n_seeds: usize, rng_seed: u64, opts: &DesignOptions) -> Result<MultistartResult> {
    if n_seeds == 0 {
        return invalid("n_seeds must be at least 1");
    }
    let results = multistart_seeds(scenario, n_seeds, rng_seed)
        .iter()
        .map(|p| optimize_pulse(scenario, objective, p, opts))
        .collect::<Result<Vec<_>>>()?;
    MultistartResult::from_results(results)
}

/// Finite-width Carr–Purcell sequence for `H = H0 + ε σx ⊗ I`: square π
/// pulses of amplitude `amplitude` and width `π / (2 amplitude)` centred at
/// `t0 + (k + 1/2) period`, zero elsewhere. Pulses that would overrun the
/// grid end are dropped.
pub fn carr_purcell_pulse(grid: &TimeGrid, amplitude: f64, period: f64) -> Result<Pulse> {
    if !(amplitude > 0.0) || !(period > 0.0) {
        return invalid("Carr–Purcell needs positive amplitude and period");
    }
    let width = PI / (2.0 * amplitude);
    if width > period {
        return invalid(format!("π pulse width {width} exceeds the period {period}"));
    }
    let mut centres = Vec::new();
    let mut k = 0usize;
    loop {
        let centre = grid.t0 + (k as f64 + 0.5) * period;
        if centre + 0.5 * width > grid.t_final + 1e-12 {
            break;
        }
        centres.push(centre);
        k += 1;
    }
    Ok(Pulse::from_fn(grid, |t| {
        if centres.iter().any(|&m| (t - m).abs() <= 0.5 * width + 1e-12) {
            amplitude
        } else {
            0.0
        }
    }))
}
