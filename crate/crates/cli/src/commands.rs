use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use qcbound::baselines::{all_baselines, nearest_unitary, propagator_of};
use qcbound::design::{multistart_seeds, optimize_pulse, DesignOptions, MultistartResult, Objective};
use qcbound::io::{
    read_pulse_csv, read_pulse_for_grid, write_baseline_csv, write_bound_csv, write_open_trajectory_csv, write_pulse_csv,
    write_trajectory_csv, BoundRow,
};
use qcbound::model::{build_time_grid, ObjectiveSpec, Pulse, Scenario, TimeGrid};
use qcbound::open_system::{simulate_lindblad, LindbladSpec};
use qcbound::propagator::{binarize_pulse, simulate, trajectory_difference};
use qcbound::qcqp::BuildOptions;
use qcbound::sdr::{bound_coherence, bound_gate_fidelity, bound_state_transfer, BoundOptions, SdpStatus, SolverOptions};
use qcbound::{Error, Result};

use crate::config::{add_leakage_cap, output_path, scenario_at};

/// Settings shared by all commands.
#[derive(Debug, Clone)]
pub struct Globals {
    pub tol: f64,
    pub rng_seed: u64,
    pub out: PathBuf,
}

/// Whether every solve reached the requested accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Optimal,
    NotOptimal,
}

impl Outcome {
    fn from_statuses(statuses: impl IntoIterator<Item = SdpStatus>) -> Self {
        if statuses.into_iter().all(|s| s == SdpStatus::Optimal) {
            Outcome::Optimal
        } else {
            Outcome::NotOptimal
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::InvalidArgument(format!("cannot create {}: {e}", path.display())))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::InvalidArgument(format!("cannot open {}: {e}", path.display())))
}

/// Reads a pulse file and the uniform grid defined by its time column.
fn load_pulse_grid(path: &Path) -> Result<(TimeGrid, Pulse)> {
    let bytes = std::fs::read(path).map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
    let with_path = |e: Error| Error::InvalidArgument(format!("{}: {e}", path.display()));
    let (times, _) = read_pulse_csv(&bytes[..]).map_err(with_path)?;
    if times.len() < 2 {
        return Err(Error::InvalidArgument(format!("{}: pulse needs at least two rows", path.display())));
    }
    let grid = build_time_grid(times[0], times[times.len() - 1], times.len() - 1).map_err(with_path)?;
    let pulse = read_pulse_for_grid(&bytes[..], &grid).map_err(with_path)?;
    Ok((grid, pulse))
}

pub struct BoundConfig {
    pub scenario: Scenario,
    pub times: Vec<f64>,
    pub n_steps: Option<usize>,
    pub leakage: Option<(usize, f64)>,
    pub subsample: usize,
    pub phases: usize,
}

/// One bound row plus its solver status.
fn bound_at(cfg: &BoundConfig, options: &BoundOptions, t: f64) -> Result<(BoundRow, SdpStatus)> {
    let (mut s, last) = scenario_at(&cfg.scenario, t, cfg.n_steps)?;
    if let Some((level, cap)) = cfg.leakage {
        add_leakage_cap(&mut s, level, cap);
    }
    log::info!("bound {} at t = {t} ({} steps)", s.name, s.grid.n_steps);
    let (row, status) = match &s.objective {
        ObjectiveSpec::StateTransfer { .. } => {
            let sol = bound_state_transfer(&s, last, options)?;
            (BoundRow::from_solution(t, sol.bound, &sol), sol.status)
        }
        ObjectiveSpec::GateFidelity { .. } => {
            let g = bound_gate_fidelity(&s, last, options)?;
            (BoundRow::from_solution(t, g.solution.bound, &g.solution), g.solution.status)
        }
        ObjectiveSpec::Coherence { .. } => {
            let c = bound_coherence(&s, last, options)?;
            let best = &c.per_phase[c.best];
            let mut row = BoundRow::from_solution(t, c.magnitude_bound, best);
            row.duality_gap = c.per_phase.iter().map(|p| p.duality_gap).fold(0.0, f64::max);
            (row, c.status)
        }
    };
    log::info!("  t = {t}: bound {} ({})", row.bound, row.status);
    Ok((row, status))
}

fn bound_options(g: &Globals, cfg: &BoundConfig) -> BoundOptions {
    BoundOptions {
        solver: SolverOptions { tol: g.tol, ..SolverOptions::default() },
        build: BuildOptions { node_stride: cfg.subsample },
        n_phases: cfg.phases,
    }
}

fn bound_rows(g: &Globals, cfg: &BoundConfig) -> Result<Vec<(BoundRow, SdpStatus)>> {
    let options = bound_options(g, cfg);
    cfg.times.par_iter().map(|&t| bound_at(cfg, &options, t)).collect()
}

pub fn cmd_bound(g: &Globals, cfg: &BoundConfig) -> Result<Outcome> {
    let results = bound_rows(g, cfg)?;
    let rows: Vec<BoundRow> = results.iter().map(|(r, _)| r.clone()).collect();
    let path = output_path(&g.out, &cfg.scenario, "bound");
    write_bound_csv(&rows, create(&path)?)?;
    for r in &rows {
        println!("t = {}: bound {} [{}]", r.time, r.bound, r.status);
    }
    println!("wrote {}", path.display());
    Ok(Outcome::from_statuses(results.iter().map(|(_, s)| *s)))
}

pub struct DesignConfig {
    pub scenario: Scenario,
    pub final_time: Option<f64>,
    pub n_steps: Option<usize>,
    pub seeds: usize,
    pub max_iters: usize,
}

fn design_scenario(scenario: &Scenario, final_time: Option<f64>, n_steps: Option<usize>) -> Result<Scenario> {
    // without an explicit final time the native grid is kept as is
    let (t, n) = match final_time {
        Some(t) => (t, n_steps),
        None => (scenario.grid.t_final, n_steps.or(Some(scenario.grid.n_steps))),
    };
    let (s, last) = scenario_at(scenario, t, n)?;
    if last == 0 {
        return Err(Error::InvalidArgument("final time must exceed the scenario start".into()));
    }
    Ok(s)
}

/// Multistart with the seeds optimized in parallel; the winner does not
/// depend on scheduling.
fn run_multistart(s: &Scenario, seeds: usize, rng_seed: u64, opts: &DesignOptions) -> Result<MultistartResult> {
    let objective = Objective::from_spec(&s.objective);
    let results = multistart_seeds(s, seeds, rng_seed)
        .par_iter()
        .map(|p| optimize_pulse(s, &objective, p, opts))
        .collect::<Result<Vec<_>>>()?;
    MultistartResult::from_results(results)
}

pub fn cmd_design(g: &Globals, cfg: &DesignConfig) -> Result<Outcome> {
    let s = design_scenario(&cfg.scenario, cfg.final_time, cfg.n_steps)?;
    let opts = DesignOptions { max_iters: cfg.max_iters, ..DesignOptions::default() };
    let ms = run_multistart(&s, cfg.seeds, g.rng_seed, &opts)?;
    let best = ms.best();
    let pulse_path = output_path(&g.out, &s, "pulse");
    let traj_path = output_path(&g.out, &s, "trajectory");
    write_pulse_csv(&s.grid, &best.pulse, create(&pulse_path)?)?;
    write_trajectory_csv(&s.grid, &best.trajectory, create(&traj_path)?)?;
    println!("best {} at T = {}: {}", s.objective.kind(), s.grid.t_final, best.objective_value);
    println!("wrote {} and {}", pulse_path.display(), traj_path.display());
    Ok(Outcome::Optimal)
}

pub struct SimulateConfig {
    pub scenario: Scenario,
    pub final_time: Option<f64>,
    pub n_steps: Option<usize>,
    pub pulse: Option<PathBuf>,
    pub binarize_tau: Option<f64>,
}

fn density_from_columns(s: &Scenario) -> Result<qcbound::linalg::CMat> {
    match &s.objective {
        ObjectiveSpec::GateFidelity { .. } => {
            Err(Error::InvalidArgument("open-system simulation needs a state (state transfer or coherence objective)".into()))
        }
        _ => {
            let v = s.initial_columns();
            Ok(&v * v.adjoint())
        }
    }
}

pub fn cmd_simulate(g: &Globals, cfg: &SimulateConfig) -> Result<Outcome> {
    // a pulse file brings its own grid unless one is requested explicitly
    let (s, pulse) = match &cfg.pulse {
        Some(p) if cfg.final_time.is_none() && cfg.n_steps.is_none() => {
            let (grid, pulse) = load_pulse_grid(p)?;
            (cfg.scenario.with_grid(grid), pulse)
        }
        Some(p) => {
            let s = design_scenario(&cfg.scenario, cfg.final_time, cfg.n_steps)?;
            let pulse = read_pulse_for_grid(open(p)?, &s.grid).map_err(|e| Error::InvalidArgument(format!("{}: {e}", p.display())))?;
            (s, pulse)
        }
        None => {
            let s = design_scenario(&cfg.scenario, cfg.final_time, cfg.n_steps)?;
            let pulse = Pulse::constant(&s.grid, 0.0f64.clamp(s.system.eps_min, s.system.eps_max));
            (s, pulse)
        }
    };
    pulse.check_for(&s.system, &s.grid)?;
    let traj_path = output_path(&g.out, &s, "trajectory");
    if s.lindblad.is_some() {
        let spec = LindbladSpec::from_scenario(&s)?;
        let rho0 = density_from_columns(&s)?;
        let traj = simulate_lindblad(&spec, s.system.eps_min, &s.grid, &pulse, &rho0)?;
        write_open_trajectory_csv(&s.grid, &traj, create(&traj_path)?)?;
        println!("max trace error {:.3e}", traj.max_trace_error());
        println!("wrote {}", traj_path.display());
        if cfg.binarize_tau.is_some() {
            return Err(Error::InvalidArgument("binarize comparison is only available for closed systems".into()));
        }
        return Ok(Outcome::Optimal);
    }
    let cols = s.initial_columns();
    let traj = simulate(&s.system, &s.grid, &pulse, &cols)?;
    write_trajectory_csv(&s.grid, &traj, create(&traj_path)?)?;
    println!("wrote {}", traj_path.display());
    if let Some(tau) = cfg.binarize_tau {
        let bang = binarize_pulse(&pulse, &s.grid, tau, s.system.eps_min, s.system.eps_max)?;
        let bang_traj = simulate(&s.system, &s.grid, &bang, &cols)?;
        let diff = trajectory_difference(&bang_traj, &traj, &s.grid)?;
        let pulse_path = output_path(&g.out, &s, "binarized_pulse");
        let bang_path = output_path(&g.out, &s, "binarized_trajectory");
        write_pulse_csv(&s.grid, &bang, create(&pulse_path)?)?;
        write_trajectory_csv(&s.grid, &bang_traj, create(&bang_path)?)?;
        println!("tau = {tau}: relative trajectory difference {diff}");
        println!("wrote {} and {}", pulse_path.display(), bang_path.display());
    }
    Ok(Outcome::Optimal)
}

pub struct BaselineConfig {
    pub scenario: Scenario,
    pub pulse: Option<PathBuf>,
}

/// Target unitary: the gate itself, or the propagator of a designed pulse
/// (explicit `--pulse`, else the cached design output).
fn baseline_target(g: &Globals, cfg: &BaselineConfig) -> Result<Option<qcbound::linalg::CMat>> {
    if matches!(cfg.scenario.objective, ObjectiveSpec::GateFidelity { .. }) && cfg.pulse.is_none() {
        return Ok(None);
    }
    let path = match &cfg.pulse {
        Some(p) => p.clone(),
        None => {
            let cached = output_path(&g.out, &cfg.scenario, "pulse");
            if !cached.exists() {
                return Err(Error::InvalidArgument(format!(
                    "scenario '{}' has no target unitary; the Arenz and Lee estimates use the propagator of the best \
                     designed pulse. Run `design` first (it caches {}) or pass --pulse",
                    cfg.scenario.name,
                    cached.display()
                )));
            }
            cached
        }
    };
    let (grid, pulse) = load_pulse_grid(&path)?;
    let s = cfg.scenario.with_grid(grid);
    Ok(Some(nearest_unitary(&propagator_of(&s, &pulse)?)?))
}

pub fn cmd_baseline(g: &Globals, cfg: &BaselineConfig) -> Result<Outcome> {
    let target = baseline_target(g, cfg)?;
    let reports = all_baselines(&cfg.scenario, target.as_ref())?;
    let path = output_path(&g.out, &cfg.scenario, "baseline");
    write_baseline_csv(&reports, create(&path)?)?;
    for r in &reports {
        println!("{}: {} [{}]", r.name, r.minimum_time, r.status);
    }
    println!("wrote {}", path.display());
    Ok(Outcome::Optimal)
}

pub struct SweepConfig {
    pub bound: BoundConfig,
    pub seeds: usize,
    pub max_iters: usize,
}

/// Bound and best designed objective at each time.
pub fn cmd_sweep(g: &Globals, cfg: &SweepConfig) -> Result<Outcome> {
    let options = bound_options(g, &cfg.bound);
    let opts = DesignOptions { max_iters: cfg.max_iters, ..DesignOptions::default() };
    let rows: Vec<(BoundRow, SdpStatus, f64)> = cfg
        .bound
        .times
        .par_iter()
        .map(|&t| {
            let (row, status) = bound_at(&cfg.bound, &options, t)?;
            let (s, last) = scenario_at(&cfg.bound.scenario, t, cfg.bound.n_steps)?;
            let designed = if last == 0 {
                let objective = Objective::from_spec(&s.objective);
                objective.value(&s.initial_columns())
            } else {
                run_multistart(&s, cfg.seeds, g.rng_seed, &opts)?.best().objective_value
            };
            Ok((row, status, designed))
        })
        .collect::<Result<_>>()?;
    let path = output_path(&g.out, &cfg.bound.scenario, "sweep");
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(create(&path)?);
    let csv_err = |e: csv::Error| Error::Parse(format!("csv: {e}"));
    w.write_record(["time", "bound", "status", "rank_ratio", "duality_gap", "designed"]).map_err(csv_err)?;
    for (r, _, d) in &rows {
        w.write_record([
            r.time.to_string(),
            r.bound.to_string(),
            r.status.clone(),
            r.rank_ratio.to_string(),
            r.duality_gap.to_string(),
            d.to_string(),
        ])
        .map_err(csv_err)?;
        println!("t = {}: bound {} [{}], designed {d}", r.time, r.bound, r.status);
    }
    w.flush()?;
    println!("wrote {}", path.display());
    Ok(Outcome::from_statuses(rows.iter().map(|(_, s, _)| *s)))
}
