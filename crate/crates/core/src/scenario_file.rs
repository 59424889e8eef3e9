//! TOML scenario files.
//!
//! ```toml
//! name = "qubit"
//! [system]
//! h0 = [["1,0", "0,0"], ["0,0", "-1,0"]]   # rows of "re,im"
//! hc = [["0,0", "1,0"], ["1,0", "0,0"]]
//! eps_min = -1.0
//! eps_max = 1.0
//! [grid]
//! t0 = 0.0
//! t_final = 5.0
//! n_steps = 40
//! [objective]
//! kind = "state_transfer"
//! params = { initial_level = 0, target_level = 1 }
//! ```
//!
//! Other objective kinds: `coherence` with `{ bath_dim, initial_state = ["re,im", ...] }`
//! and `gate_fidelity` with `{ target = [[...]] }`. Optional `[[leakage]]`
//! entries carry `level`, `cap`, `time_indices`; an optional `[lindblad]`
//! table carries `jump_ops` (list of matrices) and `rates`. Unknown keys are
//! rejected. Numbers are written in shortest round-trip form, so a
//! write/read cycle reproduces every matrix bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, C64};
use crate::model::{validate_system, LeakageCap, LindbladData, ObjectiveSpec, Scenario};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    system: RawSystem,
    grid: RawGrid,
    objective: RawObjective,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    leakage: Vec<RawLeakage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lindblad: Option<RawLindblad>,
}

type RawMatrix = Vec<Vec<String>>;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    h0: RawMatrix,
    hc: RawMatrix,
    eps_min: f64,
    eps_max: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    t0: f64,
    t_final: f64,
    n_steps: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
enum RawObjective {
    StateTransfer(RawStateTransfer),
    Coherence(RawCoherence),
    GateFidelity(RawGate),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStateTransfer {
    initial_level: usize,
    target_level: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoherence {
    bath_dim: usize,
    initial_state: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGate {
    target: RawMatrix,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLeakage {
    level: usize,
    cap: f64,
    time_indices: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLindblad {
    jump_ops: Vec<RawMatrix>,
    rates: Vec<f64>,
}

fn parse_err(msg: impl Into<String>) -> Error {
    Error::Parse(msg.into())
}

pub fn format_complex(z: C64) -> String {
    format!("{},{}", z.re, z.im)
}

pub fn parse_complex(s: &str) -> Result<C64> {
    let (re, im) = s.split_once(',').ok_or_else(|| parse_err(format!("expected \"re,im\", got {s:?}")))?;
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| parse_err(format!("bad number {t:?} in {s:?}")));
    let z = C64::new(num(re)?, num(im)?);
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(parse_err(format!("non-finite entry {s:?}")));
    }
    Ok(z)
}

fn matrix_from_raw(name: &str, rows: &RawMatrix) -> Result<CMat> {
    let n = rows.len();
    if n == 0 {
        return Err(parse_err(format!("{name} is empty")));
    }
    let cols = rows[0].len();
    if let Some(k) = rows.iter().position(|r| r.len() != cols) {
        return Err(parse_err(format!("{name}: row {k} has {} entries, row 0 has {cols}", rows[k].len())));
    }
    let mut m = CMat::zeros(n, cols);
    for (i, row) in rows.iter().enumerate() {
        for (j, s) in row.iter().enumerate() {
            m[(i, j)] = parse_complex(s).map_err(|e| parse_err(format!("{name}[{i}][{j}]: {e}")))?;
        }
    }
    Ok(m)
}

fn matrix_to_raw(m: &CMat) -> RawMatrix {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| format_complex(m[(i, j)])).collect()).collect()
}

fn from_raw(raw: RawScenario) -> Result<Scenario> {
    let system = validate_system(
        matrix_from_raw("system.h0", &raw.system.h0)?,
        matrix_from_raw("system.hc", &raw.system.hc)?,
        raw.system.eps_min,
        raw.system.eps_max,
    )?;
    let grid = crate::model::build_time_grid(raw.grid.t0, raw.grid.t_final, raw.grid.n_steps)?;
    let objective = match raw.objective {
        RawObjective::StateTransfer(p) => ObjectiveSpec::StateTransfer { initial_level: p.initial_level, target_level: p.target_level },
        RawObjective::Coherence(p) => {
            let v: Vec<C64> = p.initial_state.iter().map(|s| parse_complex(s)).collect::<Result<_>>()?;
            ObjectiveSpec::Coherence { bath_dim: p.bath_dim, initial_state: CVec::from_vec(v) }
        }
        RawObjective::GateFidelity(p) => ObjectiveSpec::GateFidelity { target: matrix_from_raw("objective.params.target", &p.target)? },
    };
    let leakage = raw
        .leakage
        .into_iter()
        .map(|l| LeakageCap { level: l.level, cap: l.cap, time_indices: l.time_indices })
        .collect();
    let lindblad = match raw.lindblad {
        Some(l) => Some(LindbladData {
            jump_ops: l
                .jump_ops
                .iter()
                .enumerate()
                .map(|(k, m)| matrix_from_raw(&format!("lindblad.jump_ops[{k}]"), m))
                .collect::<Result<_>>()?,
            rates: l.rates,
        }),
        None => None,
    };
    let scenario = Scenario { name: raw.name.unwrap_or_else(|| "custom".into()), system, grid, objective, leakage, lindblad };
    scenario.validate()?;
    Ok(scenario)
}

fn to_raw(s: &Scenario) -> RawScenario {
    RawScenario {
        name: Some(s.name.clone()),
        system: RawSystem {
            h0: matrix_to_raw(&s.system.h0),
            hc: matrix_to_raw(&s.system.hc),
            eps_min: s.system.eps_min,
            eps_max: s.system.eps_max,
        },
        grid: RawGrid { t0: s.grid.t0, t_final: s.grid.t_final, n_steps: s.grid.n_steps },
        objective: match &s.objective {
            ObjectiveSpec::StateTransfer { initial_level, target_level } => {
                RawObjective::StateTransfer(RawStateTransfer { initial_level: *initial_level, target_level: *target_level })
            }
            ObjectiveSpec::Coherence { bath_dim, initial_state } => RawObjective::Coherence(RawCoherence {
                bath_dim: *bath_dim,
                initial_state: initial_state.iter().map(|z| format_complex(*z)).collect(),
            }),
            ObjectiveSpec::GateFidelity { target } => RawObjective::GateFidelity(RawGate { target: matrix_to_raw(target) }),
        },
        leakage: s
            .leakage
            .iter()
            .map(|l| RawLeakage { level: l.level, cap: l.cap, time_indices: l.time_indices.clone() })
            .collect(),
        lindblad: s.lindblad.as_ref().map(|l| RawLindblad { jump_ops: l.jump_ops.iter().map(matrix_to_raw).collect(), rates: l.rates.clone() }),
    }
}

/// Parses and validates a scenario. Syntax and schema errors carry the
/// line and column reported by the TOML parser.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| parse_err(e.to_string()))?;
    from_raw(raw)
}

pub fn scenario_to_toml(s: &Scenario) -> Result<String> {
    toml::to_string(&to_raw(s)).map_err(|e| parse_err(format!("cannot serialize scenario: {e}")))
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn save_scenario(s: &Scenario, path: &Path) -> Result<()> {
    std::fs::write(path, scenario_to_toml(s)?)?;
    Ok(())
}

