//! Scenario-level bounds: builder, lift and solve composed.

use std::f64::consts::PI;

use super::lift::{lift, SdpProblem};
use super::solver::{solve_sdp, SdpSolution, SdpStatus, SolverOptions};
use crate::error::{invalid, Result};
use crate::linalg::C64;
use crate::model::{ObjectiveSpec, Scenario};
use crate::qcqp::{build_scenario_problem, BuildOptions, Discretization, QcqpProblem};

/// Constant forms whose value exceeds this are reported as contradictions.
pub const CONTRADICTION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
pub struct BoundOptions {
    pub solver: SolverOptions,
    pub build: BuildOptions,
    /// Phase grid size for coherence objectives.
    pub n_phases: usize,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self { solver: SolverOptions::default(), build: BuildOptions::default(), n_phases: 64 }
    }
}

/// Lifts and solves a QCQP.
pub fn bound_problem(problem: &QcqpProblem, solver: &SolverOptions) -> (SdpProblem, SdpSolution) {
    let lifted = lift(problem, CONTRADICTION_TOL);
    let sol = solve_sdp(&lifted, solver);
    (lifted, sol)
}

/// Candidate `φ` from the first column of `Y` (exact when `Y` has rank one).
pub fn extract_phi(lifted: &SdpProblem, sol: &SdpSolution) -> Vec<C64> {
    let z = sol.y_matrix.column(0).into_owned();
    lifted.phi_from_lifted(&z)
}

/// Amplitudes (original frame) consistent with `Φ_i = (ε_i - ε_min) Hc U_i`,
/// by least squares at each node using the reconstructed `U_i`.
pub fn recover_pulse(disc: &Discretization, phi: &[C64], eps_min: f64) -> Vec<f64> {
    let map = &disc.map;
    let states = map.apply(phi);
    let hc = &disc.controls[0].hc;
    (0..map.nodes())
        .map(|i| {
            let basis = hc * &states[i];
            let block = map.phi_block(phi, 0, i);
            let den = basis.norm_squared();
            let amp = if den > 0.0 { basis.zip_fold(&block, 0.0, |acc, a, b| acc + (a.conj() * b).re) / den } else { 0.0 };
            eps_min + amp
        })
        .collect()
}

fn check_final(scenario: &Scenario, final_index: usize) -> Result<()> {
    if final_index > scenario.grid.n_steps {
        return invalid(format!("final index {final_index} beyond grid of {} steps", scenario.grid.n_steps));
    }
    Ok(())
}

fn annotate(mut sol: SdpSolution, upper: f64) -> SdpSolution {
    if sol.status != SdpStatus::Infeasible && sol.bound > upper + sol.duality_gap.max(1e-9) {
        let msg = format!("bound exceeds the physical maximum {upper}; relaxation is loose here");
        sol.note = if sol.note.is_empty() { msg } else { format!("{}; {msg}", sol.note) };
    }
    sol
}

/// Upper bound on the target-level population at node `final_index`.
pub fn bound_state_transfer(scenario: &Scenario, final_index: usize, options: &BoundOptions) -> Result<SdpSolution> {
    if !matches!(scenario.objective, ObjectiveSpec::StateTransfer { .. }) {
        return invalid("scenario objective is not state transfer");
    }
    check_final(scenario, final_index)?;
    let (problem, _) = build_scenario_problem(scenario, final_index, 0.0, &options.build)?;
    Ok(annotate(bound_problem(&problem, &options.solver).1, 1.0))
}

#[derive(Debug, Clone)]
pub struct CoherenceBound {
    pub phases: Vec<f64>,
    /// Bound on `Re(e^{iφ} ρ_{↑↓})` for each phase.
    pub per_phase: Vec<SdpSolution>,
    /// Index of the phase with the largest bound.
    pub best: usize,
    /// `max_φ` of the per-phase bounds.
    pub bound: f64,
    /// Bound on `|ρ_{↑↓}|`: every complex number lies within `π/n` of a grid
    /// phase, so `|z| <= max_k Re(e^{iφ_k} z) / cos(π/n)`.
    pub magnitude_bound: f64,
    pub status: SdpStatus,
}

/// Worst status over a set of solves.
pub fn combined_status<'a>(sols: impl IntoIterator<Item = &'a SdpSolution>) -> SdpStatus {
    let mut worst = SdpStatus::Optimal;
    for s in sols {
        worst = match (worst, s.status) {
            (SdpStatus::Infeasible, _) | (_, SdpStatus::Infeasible) => SdpStatus::Infeasible,
            (SdpStatus::Unbounded, _) | (_, SdpStatus::Unbounded) => SdpStatus::Unbounded,
            (SdpStatus::Inaccurate, _) | (_, SdpStatus::Inaccurate) => SdpStatus::Inaccurate,
            _ => SdpStatus::Optimal,
        };
    }
    worst
}

pub fn phase_grid(n_phases: usize) -> Vec<f64> {
    (0..n_phases).map(|k| 2.0 * PI * k as f64 / n_phases as f64).collect()
}

/// Sweeps the phase grid and keeps the per-phase bounds.
pub fn bound_coherence(scenario: &Scenario, final_index: usize, options: &BoundOptions) -> Result<CoherenceBound> {
    if !matches!(scenario.objective, ObjectiveSpec::Coherence { .. }) {
        return invalid("scenario objective is not coherence");
    }
    if options.n_phases < 4 {
        return invalid(format!("n_phases must be at least 4 (got {})", options.n_phases));
    }
    check_final(scenario, final_index)?;
    let phases = phase_grid(options.n_phases);
    let mut per_phase = Vec::with_capacity(phases.len());
    for &phase in &phases {
        let (problem, _) = build_scenario_problem(scenario, final_index, phase, &options.build)?;
        per_phase.push(bound_problem(&problem, &options.solver).1);
    }
    Ok(collect_coherence(phases, per_phase))
}

/// Assembles a [`CoherenceBound`] from independently computed per-phase solutions.
pub fn collect_coherence(phases: Vec<f64>, per_phase: Vec<SdpSolution>) -> CoherenceBound {
    let best = (0..per_phase.len())
        .max_by(|&a, &b| per_phase[a].bound.total_cmp(&per_phase[b].bound))
        .unwrap_or(0);
    let bound = per_phase.get(best).map_or(f64::NEG_INFINITY, |s| s.bound);
    let n = phases.len().max(1) as f64;
    let status = combined_status(&per_phase);
    CoherenceBound {
        magnitude_bound: bound.max(0.0) / (PI / n).cos(),
        phases,
        per_phase,
        best,
        bound,
        status,
    }
}

#[derive(Debug, Clone)]
pub struct GateBound {
    /// Bound on `f² = |Tr(U_tar† U)|² / L²`.
    pub solution: SdpSolution,
    /// `√bound`, a bound on `f`.
    pub fidelity_bound: f64,
}

pub fn bound_gate_fidelity(scenario: &Scenario, final_index: usize, options: &BoundOptions) -> Result<GateBound> {
    if !matches!(scenario.objective, ObjectiveSpec::GateFidelity { .. }) {
        return invalid("scenario objective is not gate fidelity");
    }
    check_final(scenario, final_index)?;
    let (problem, _) = build_scenario_problem(scenario, final_index, 0.0, &options.build)?;
    let solution = annotate(bound_problem(&problem, &options.solver).1, 1.0);
    let fidelity_bound = solution.bound.max(0.0).sqrt();
    Ok(GateBound { solution, fidelity_bound })
}
