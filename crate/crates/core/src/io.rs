//! CSV import/export for pulses, trajectories, bound curves and baseline
//! reports. Plain `.` decimals, `\n` line endings, shortest round-trip floats.

use std::io::{Read, Write};

use crate::baselines::BaselineReport;
use crate::error::{invalid, Error, Result};
use crate::model::{Pulse, TimeGrid};
use crate::open_system::OpenTrajectory;
use crate::propagator::TrajectorySolution;
use crate::sdr::SdpSolution;

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(format!("csv: {e}"))
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

fn finish<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush()?;
    Ok(())
}

pub fn write_pulse_csv<W: Write>(grid: &TimeGrid, pulse: &Pulse, out: W) -> Result<()> {
    if pulse.len() != grid.len() {
        return invalid(format!("pulse has {} values, grid has {} nodes", pulse.len(), grid.len()));
    }
    let mut w = writer(out);
    w.write_record(["time", "epsilon"]).map_err(csv_err)?;
    for (t, e) in grid.nodes().iter().zip(&pulse.values) {
        w.write_record([t.to_string(), e.to_string()]).map_err(csv_err)?;
    }
    finish(w)
}

/// Reads a `time,epsilon` CSV.
pub fn read_pulse_csv<R: Read>(input: R) -> Result<(Vec<f64>, Pulse)> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = r.headers().map_err(csv_err)?.clone();
    if headers.len() != 2 || &headers[0] != "time" || &headers[1] != "epsilon" {
        return Err(Error::Parse(format!("pulse CSV header must be time,epsilon (got {})", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let (mut times, mut values) = (Vec::new(), Vec::new());
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let num = |i: usize| -> Result<f64> {
            let s = rec.get(i).unwrap_or("");
            s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse(format!("pulse CSV line {}: bad number {s:?}", k + 2)))
        };
        times.push(num(0)?);
        values.push(num(1)?);
    }
    if values.is_empty() {
        return Err(Error::Parse("pulse CSV has no rows".into()));
    }
    Ok((times, Pulse::new(values)))
}

/// Reads a pulse and checks its time column against `grid`.
pub fn read_pulse_for_grid<R: Read>(input: R, grid: &TimeGrid) -> Result<Pulse> {
    let (times, pulse) = read_pulse_csv(input)?;
    if times.len() != grid.len() {
        return invalid(format!("pulse file has {} rows, grid has {} nodes", times.len(), grid.len()));
    }
    let tol = 1e-9 * (grid.t_final - grid.t0).abs().max(1.0);
    if let Some(i) = (0..times.len()).find(|&i| (times[i] - grid.node(i)).abs() > tol) {
        return invalid(format!("pulse time {} at row {i} does not match grid node {}", times[i], grid.node(i)));
    }
    Ok(pulse)
}

/// `time`, then `c{p}_l{l}_re,c{p}_l{l}_im` for every tracked column `p` and level `l`.
pub fn write_trajectory_csv<W: Write>(grid: &TimeGrid, traj: &TrajectorySolution, out: W) -> Result<()> {
    if traj.blocks.len() > grid.len() {
        return invalid("trajectory longer than grid");
    }
    let (l, m) = (traj.blocks[0].nrows(), traj.blocks[0].ncols());
    let mut w = writer(out);
    let mut header = vec!["time".to_string()];
    for p in 0..m {
        for lev in 0..l {
            header.push(format!("c{p}_l{lev}_re"));
            header.push(format!("c{p}_l{lev}_im"));
        }
    }
    w.write_record(&header).map_err(csv_err)?;
    for (i, b) in traj.blocks.iter().enumerate() {
        let mut row = vec![grid.node(i).to_string()];
        for p in 0..m {
            for lev in 0..l {
                row.push(b[(lev, p)].re.to_string());
                row.push(b[(lev, p)].im.to_string());
            }
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    finish(w)
}

/// `time`, then `rho_{r}{c}_re,rho_{r}{c}_im` in column-stacking order.
pub fn write_open_trajectory_csv<W: Write>(grid: &TimeGrid, traj: &OpenTrajectory, out: W) -> Result<()> {
    let d = traj.dim;
    let mut w = writer(out);
    let mut header = vec!["time".to_string()];
    for col in 0..d {
        for row in 0..d {
            header.push(format!("rho_{row}{col}_re"));
            header.push(format!("rho_{row}{col}_im"));
        }
    }
    w.write_record(&header).map_err(csv_err)?;
    for (i, s) in traj.states.iter().enumerate() {
        let mut rec = vec![grid.node(i).to_string()];
        for z in s.iter() {
            rec.push(z.re.to_string());
            rec.push(z.im.to_string());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    finish(w)
}

/// One point of a bound-versus-time curve.
#[derive(Debug, Clone)]
pub struct BoundRow {
    pub time: f64,
    pub bound: f64,
    pub status: String,
    pub rank_ratio: f64,
    pub duality_gap: f64,
}

impl BoundRow {
    pub fn from_solution(time: f64, bound: f64, sol: &SdpSolution) -> Self {
        Self { time, bound, status: sol.status.to_string(), rank_ratio: sol.rank_ratio, duality_gap: sol.duality_gap }
    }
}

pub fn write_bound_csv<W: Write>(rows: &[BoundRow], out: W) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["time", "bound", "status", "rank_ratio", "duality_gap"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.time.to_string(),
            r.bound.to_string(),
            r.status.clone(),
            r.rank_ratio.to_string(),
            r.duality_gap.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

/// `name,value,status`, then one column per ingredient key (union over
/// reports, in order of first appearance; blank where absent).
pub fn write_baseline_csv<W: Write>(reports: &[BaselineReport], out: W) -> Result<()> {
    let mut keys: Vec<&str> = Vec::new();
    for r in reports {
        for (k, _) in &r.ingredients {
            if !keys.contains(&k.as_str()) {
                keys.push(k);
            }
        }
    }
    let mut w = writer(out);
    let mut header = vec!["name", "value", "status"];
    header.extend(keys.iter().copied());
    w.write_record(&header).map_err(csv_err)?;
    for r in reports {
        let mut row = vec![r.name.clone(), r.minimum_time.to_string(), r.status.to_string()];
        row.extend(keys.iter().map(|k| r.ingredient(k).map(|v| v.to_string()).unwrap_or_default()));
        w.write_record(&row).map_err(csv_err)?;
    }
    finish(w)
}
