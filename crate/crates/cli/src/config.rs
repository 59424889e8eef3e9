//! Argument-level plumbing shared by the commands: time lists, scenario
//! resolution and per-time grids.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use qcbound::model::{self, build_time_grid, LeakageCap, Scenario, BUILTIN_NAMES};
use qcbound::scenario_file::load_scenario;
use qcbound::{Error, Result};

/// `start:stop:count`, both ends included.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeList {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl TimeList {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let step = (self.stop - self.start) / (self.count - 1) as f64;
        (0..self.count)
            .map(|k| if k + 1 == self.count { self.stop } else { self.start + k as f64 * step })
            .collect()
    }
}

impl FromStr for TimeList {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("expected start:stop:count, got {s:?}"));
        }
        let num = |t: &str| t.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| format!("bad number {t:?}"));
        let start = num(parts[0])?;
        let stop = num(parts[1])?;
        let count: usize = parts[2].trim().parse().map_err(|_| format!("bad count {:?}", parts[2]))?;
        if count == 0 {
            return Err("count must be at least 1".into());
        }
        if stop < start {
            return Err(format!("stop {stop} is before start {start}"));
        }
        if count == 1 && stop != start {
            return Err("a single-point list needs start == stop".into());
        }
        Ok(TimeList { start, stop, count })
    }
}

/// Builtin name or path to a TOML scenario file.
pub fn resolve_scenario(spec: &str) -> Result<Scenario> {
    if BUILTIN_NAMES.contains(&spec) {
        return model::builtin_scenario(spec);
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(Error::InvalidArgument(format!(
            "scenario {spec:?} is neither a builtin ({}) nor an existing file",
            BUILTIN_NAMES.join(", ")
        )));
    }
    load_scenario(path)
}

/// Box overrides; the result is revalidated.
pub fn override_box(mut s: Scenario, eps_min: Option<f64>, eps_max: Option<f64>) -> Result<Scenario> {
    if let Some(lo) = eps_min {
        s.system.eps_min = lo;
    }
    if let Some(hi) = eps_max {
        s.system.eps_max = hi;
    }
    s.system = model::validate_system(s.system.h0, s.system.hc, s.system.eps_min, s.system.eps_max)?;
    Ok(s)
}

/// Scenario on `[t0, t]` plus the index of the final node. `t = t0` keeps
/// the native grid and evaluates at node 0. Without `n_steps` the native
/// step size is kept.
pub fn scenario_at(s: &Scenario, t: f64, n_steps: Option<usize>) -> Result<(Scenario, usize)> {
    let t0 = s.grid.t0;
    let scale = t0.abs().max(t.abs()).max(1.0);
    if (t - t0).abs() <= 1e-12 * scale {
        return Ok((s.clone(), 0));
    }
    if t < t0 {
        return Err(Error::InvalidArgument(format!("time {t} precedes the scenario start {t0}")));
    }
    let n = n_steps.unwrap_or_else(|| ((t - t0) / s.grid.step()).round().max(1.0) as usize);
    let grid = build_time_grid(t0, t, n)?;
    Ok((s.with_grid(grid), n))
}

/// Cap on `level` at every node of the scenario grid.
pub fn add_leakage_cap(s: &mut Scenario, level: usize, cap: f64) {
    s.leakage.push(LeakageCap { level, cap, time_indices: (0..=s.grid.n_steps).collect() });
}

pub fn output_path(out: &Path, scenario: &Scenario, suffix: &str) -> PathBuf {
    out.join(format!("{}_{suffix}.csv", scenario.name))
}
