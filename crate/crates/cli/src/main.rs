//! `qcbound`: batch front end for conservation-law bounds, pulse design,
//! simulation and speed-limit baselines. Writes CSV files into `--out`.
//!
//! Exit status: 0 when every solve is optimal, 2 when any bound is not
//! (inaccurate, infeasible or unbounded; output is still written), 1 on errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{BaselineConfig, BoundConfig, DesignConfig, Globals, Outcome, SimulateConfig, SweepConfig};
use config::{override_box, resolve_scenario, TimeList};
use qcbound::model::Scenario;

#[derive(Parser, Debug)]
#[command(name = "qcbound", version, about = "Global bounds for quantum optimal control")]
struct Cli {
    /// SDP solver tolerance (relative gap and residuals).
    #[arg(long, global = true, default_value_t = 1e-7, value_parser = positive_f64)]
    tol: f64,
    /// Worker threads for sweep points and multistart seeds (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Seed for the multistart designer.
    #[arg(long = "rng-seed", global = true, default_value_t = 0)]
    rng_seed: u64,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Upper bounds on the objective at one or more final times.
    Bound(BoundArgs),
    /// Multistart local pulse optimization.
    Design(DesignArgs),
    /// Propagate a pulse (zero pulse by default).
    Simulate(SimulateArgs),
    /// Quantum-speed-limit baselines (MT/ML, Arenz, Lee).
    Baseline(BaselineArgs),
    /// Bound and best designed objective over a list of times.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    /// Builtin name (doublewell, transmon, spinbath, hadamard) or TOML path.
    #[arg(long)]
    scenario: String,
    /// Override the lower control limit.
    #[arg(long = "eps-min", allow_hyphen_values = true)]
    eps_min: Option<f64>,
    /// Override the upper control limit.
    #[arg(long = "eps-max", allow_hyphen_values = true)]
    eps_max: Option<f64>,
}

impl ScenarioArgs {
    fn load(&self) -> qcbound::Result<Scenario> {
        override_box(resolve_scenario(&self.scenario)?, self.eps_min, self.eps_max)
    }
}

#[derive(Args, Debug)]
struct TimeArgs {
    /// Final times as start:stop:count (inclusive).
    #[arg(long, conflicts_with = "time")]
    times: Option<TimeList>,
    /// A single final time (repeatable).
    #[arg(long)]
    time: Vec<f64>,
    /// Steps per time point; by default the scenario's step size is kept.
    #[arg(long = "n-steps", value_parser = clap::value_parser!(u64).range(1..))]
    n_steps: Option<u64>,
}

impl TimeArgs {
    fn values(&self, s: &Scenario) -> Vec<f64> {
        match (&self.times, self.time.is_empty()) {
            (Some(l), _) => l.values(),
            (None, false) => self.time.clone(),
            (None, true) => vec![s.grid.t_final],
        }
    }
}

#[derive(Args, Debug)]
struct BoundSettings {
    /// Population cap on the leakage level at every node.
    #[arg(long = "leakage-cap", value_parser = non_negative_f64)]
    leakage_cap: Option<f64>,
    /// Level the cap applies to (default: highest level).
    #[arg(long = "leakage-level", requires = "leakage_cap")]
    leakage_level: Option<usize>,
    /// Keep conservation laws only at every k-th node.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    subsample: u64,
    /// Phase grid size for coherence bounds.
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u64).range(4..))]
    phases: u64,
}

#[derive(Args, Debug)]
struct BoundArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    times: TimeArgs,
    #[command(flatten)]
    settings: BoundSettings,
}

#[derive(Args, Debug)]
struct DesignSettings {
    /// Random starting pulses (two constant starts are always added).
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    seeds: u64,
    /// Iteration cap per start.
    #[arg(long = "max-iters", default_value_t = 200)]
    max_iters: usize,
}

#[derive(Args, Debug)]
struct DesignArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long = "final-time")]
    final_time: Option<f64>,
    #[arg(long = "n-steps", value_parser = clap::value_parser!(u64).range(1..))]
    n_steps: Option<u64>,
    #[command(flatten)]
    settings: DesignSettings,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long = "final-time")]
    final_time: Option<f64>,
    #[arg(long = "n-steps", value_parser = clap::value_parser!(u64).range(1..))]
    n_steps: Option<u64>,
    /// Pulse CSV (time,epsilon); its time column defines the grid.
    #[arg(long)]
    pulse: Option<PathBuf>,
    /// Also simulate the bang–bang pulse with the same window averages.
    #[arg(long, requires = "tau")]
    binarize: bool,
    /// Window length for --binarize (a multiple of the step).
    #[arg(long, requires = "binarize", value_parser = positive_f64)]
    tau: Option<f64>,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Pulse whose final propagator is the target (default: cached design output).
    #[arg(long)]
    pulse: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    times: TimeArgs,
    #[command(flatten)]
    settings: BoundSettings,
    #[command(flatten)]
    design: DesignSettings,
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(format!("expected a positive number, got {s:?}")),
    }
}

fn non_negative_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        _ => Err(format!("expected a non-negative number, got {s:?}")),
    }
}

fn bound_config(scenario: Scenario, times: &TimeArgs, settings: &BoundSettings) -> BoundConfig {
    let leakage = settings
        .leakage_cap
        .map(|cap| (settings.leakage_level.unwrap_or(scenario.system.dim() - 1), cap));
    BoundConfig {
        times: times.values(&scenario),
        n_steps: times.n_steps.map(|n| n as usize),
        leakage,
        subsample: settings.subsample as usize,
        phases: settings.phases as usize,
        scenario,
    }
}

fn run(cli: &Cli) -> qcbound::Result<Outcome> {
    std::fs::create_dir_all(&cli.out)?;
    let g = Globals { tol: cli.tol, rng_seed: cli.rng_seed, out: cli.out.clone() };
    match &cli.command {
        Command::Bound(a) => commands::cmd_bound(&g, &bound_config(a.scenario.load()?, &a.times, &a.settings)),
        Command::Design(a) => commands::cmd_design(
            &g,
            &DesignConfig {
                scenario: a.scenario.load()?,
                final_time: a.final_time,
                n_steps: a.n_steps.map(|n| n as usize),
                seeds: a.settings.seeds as usize,
                max_iters: a.settings.max_iters,
            },
        ),
        Command::Simulate(a) => commands::cmd_simulate(
            &g,
            &SimulateConfig {
                scenario: a.scenario.load()?,
                final_time: a.final_time,
                n_steps: a.n_steps.map(|n| n as usize),
                pulse: a.pulse.clone(),
                binarize_tau: if a.binarize { a.tau } else { None },
            },
        ),
        Command::Baseline(a) => commands::cmd_baseline(&g, &BaselineConfig { scenario: a.scenario.load()?, pulse: a.pulse.clone() }),
        Command::Sweep(a) => commands::cmd_sweep(
            &g,
            &SweepConfig {
                bound: bound_config(a.scenario.load()?, &a.times, &a.settings),
                seeds: a.design.seeds as usize,
                max_iters: a.design.max_iters,
            },
        ),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // help and version are not errors; usage errors share code 1 so that 2 means "inaccurate"
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
        eprintln!("error: cannot start worker pool: {e}");
        return ExitCode::from(1);
    }
    match run(&cli) {
        Ok(Outcome::Optimal) => ExitCode::SUCCESS,
        Ok(Outcome::NotOptimal) => {
            eprintln!("warning: at least one solve did not reach the requested accuracy");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
