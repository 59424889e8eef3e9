//! Speed-limit estimates from the literature, evaluated the same loose way
//! they are usually mapped onto a bounded-control problem.

use std::f64::consts::PI;
use std::fmt;

use crate::error::{invalid, Result};
use crate::linalg::{c, frobenius, hermitian_eigen, CMat};
use crate::model::{check_hermitian, Pulse, Scenario, SystemSpec};
use crate::propagator::simulate;

/// Grid size of the `λ_max` search (endpoints are always included).
pub const LAMBDA_GRID: usize = 101;

/// Eigenvalues closer than this are treated as degenerate when reporting.
const DEGENERACY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineStatus {
    Ok,
    /// The estimate has no finite value (e.g. `[H0, Hc] = 0`).
    Inapplicable,
}

impl fmt::Display for BaselineStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineStatus::Ok => "ok",
            BaselineStatus::Inapplicable => "inapplicable",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineReport {
    pub name: String,
    pub minimum_time: f64,
    pub status: BaselineStatus,
    /// Intermediate quantities, for auditing.
    pub ingredients: Vec<(String, f64)>,
}

impl BaselineReport {
    pub fn ingredient(&self, key: &str) -> Option<f64> {
        self.ingredients.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }
}

/// Largest `|eigenvalue|` of `H0 + ε Hc` over the endpoints and an
/// `n_grid`-point uniform grid of the control range.
pub fn lambda_max(system: &SystemSpec, n_grid: usize) -> Result<f64> {
    let (lo, hi) = (system.eps_min, system.eps_max);
    let mut eps = vec![lo, hi];
    if n_grid >= 2 {
        eps.extend((0..n_grid).map(|k| lo + (hi - lo) * k as f64 / (n_grid - 1) as f64));
    }
    let mut best = 0.0f64;
    for e in eps {
        let (vals, _) = hermitian_eigen(&(&system.h0 + &system.hc * c(e, 0.0)))?;
        best = vals.iter().fold(best, |m, v| m.max(v.abs()));
    }
    Ok(best)
}

/// Mandelstam–Tamm and Margolus–Levitin, which coincide once `ΔH` and `<H>`
/// are both replaced by `λ_max`: `τ = π / (2 λ_max)`.
pub fn mt_ml_bound(system: &SystemSpec) -> Result<BaselineReport> {
    let lam = lambda_max(system, LAMBDA_GRID)?;
    let (minimum_time, status) = if lam > 0.0 { (PI / (2.0 * lam), BaselineStatus::Ok) } else { (f64::INFINITY, BaselineStatus::Inapplicable) };
    Ok(BaselineReport {
        name: "MT/ML".into(),
        minimum_time,
        status,
        ingredients: vec![("lambda_max".into(), lam)],
    })
}

fn check_unitary(u: &CMat, dim: usize) -> Result<()> {
    if u.nrows() != dim || u.ncols() != dim {
        return invalid(format!("target must be {dim}x{dim}, got {}x{}", u.nrows(), u.ncols()));
    }
    let dev = frobenius(&(u.adjoint() * u - CMat::identity(dim, dim)));
    if dev > 1e-8 {
        return invalid(format!("target is not unitary (|U†U - I|_F = {dev:.3e})"));
    }
    Ok(())
}

/// `√(2 (d - Σ_j |<φ_j|U|φ_j>|)) / 2` over an eigenbasis of `h`; also
/// reports whether that eigenbasis was unique up to phases.
pub fn c_value(u: &CMat, h: &CMat) -> Result<(f64, bool)> {
    let (vals, vecs) = hermitian_eigen(h)?;
    let d = h.nrows();
    let overlap: f64 = (0..d)
        .map(|j| {
            let v = vecs.column(j);
            (v.adjoint() * u * v)[(0, 0)].norm()
        })
        .sum();
    let degenerate = vals.windows(2).any(|w| (w[1] - w[0]).abs() <= DEGENERACY_TOL * (1.0 + w[0].abs()));
    Ok(((2.0 * (d as f64 - overlap)).max(0.0).sqrt() / 2.0, degenerate))
}

/// `T >= max{2 C(U,Hc) / |H0|_F, 2 C(U,H0) / (|f_max| |Hc|_F)}`. With a
/// degenerate spectrum the eigenbasis (and so the value) is one arbitrary
/// choice; the `*_degenerate` ingredients flag this.
pub fn arenz_bound(u_target: &CMat, h0: &CMat, hc: &CMat, f_max: f64) -> Result<BaselineReport> {
    check_hermitian("h0", h0)?;
    check_hermitian("hc", hc)?;
    check_unitary(u_target, h0.nrows())?;
    if !(f_max > 0.0) {
        return invalid(format!("f_max must be positive (got {f_max})"));
    }
    let (c_hc, deg_c) = c_value(u_target, hc)?;
    let (c_h0, deg_0) = c_value(u_target, h0)?;
    let (n0, nc) = (frobenius(h0), frobenius(hc));
    let ratio = |num: f64, den: f64| if num == 0.0 { 0.0 } else if den > 0.0 { num / den } else { f64::INFINITY };
    let t1 = ratio(2.0 * c_hc, n0);
    let t2 = ratio(2.0 * c_h0, f_max * nc);
    let minimum_time = t1.max(t2);
    let status = if minimum_time.is_finite() { BaselineStatus::Ok } else { BaselineStatus::Inapplicable };
    Ok(BaselineReport {
        name: "Arenz".into(),
        minimum_time,
        status,
        ingredients: vec![
            ("C_hc".into(), c_hc),
            ("C_h0".into(), c_h0),
            ("norm_h0".into(), n0),
            ("norm_hc".into(), nc),
            ("f_max".into(), f_max),
            ("hc_degenerate".into(), deg_c as u8 as f64),
            ("h0_degenerate".into(), deg_0 as u8 as f64),
        ],
    })
}

/// `T >= |[U, V]|_F / |[H0, V]|_F` with the stabilizer element `V = Hc`.
pub fn lee_bound(u_target: &CMat, h0: &CMat, hc: &CMat) -> Result<BaselineReport> {
    check_hermitian("h0", h0)?;
    check_hermitian("hc", hc)?;
    check_unitary(u_target, h0.nrows())?;
    let num = frobenius(&(u_target * hc - hc * u_target));
    let den = frobenius(&(h0 * hc - hc * h0));
    let scale = frobenius(h0) * frobenius(hc);
    let (minimum_time, status) = if den > 1e-14 * scale.max(f64::MIN_POSITIVE) {
        (num / den, BaselineStatus::Ok)
    } else if num == 0.0 {
        (0.0, BaselineStatus::Inapplicable)
    } else {
        (f64::INFINITY, BaselineStatus::Inapplicable)
    };
    Ok(BaselineReport {
        name: "Lee".into(),
        minimum_time,
        status,
        ingredients: vec![("commutator_target".into(), num), ("commutator_drift".into(), den)],
    })
}

/// Largest control magnitude of the box.
pub fn f_max(system: &SystemSpec) -> f64 {
    system.eps_min.abs().max(system.eps_max.abs())
}

/// Full propagator `U(T)` of a pulse on the scenario grid, used as the
/// target when the objective is not a gate.
pub fn propagator_of(scenario: &Scenario, pulse: &Pulse) -> Result<CMat> {
    pulse.check_for(&scenario.system, &scenario.grid)?;
    let l = scenario.system.dim();
    let traj = simulate(&scenario.system, &scenario.grid, pulse, &CMat::identity(l, l))?;
    Ok(traj.final_block().clone())
}

/// Nearest unitary (polar factor), to remove discretization drift from a
/// simulated propagator.
pub fn nearest_unitary(u: &CMat) -> Result<CMat> {
    let svd = u.clone().svd(true, true);
    match (svd.u, svd.v_t) {
        (Some(a), Some(b)) => Ok(a * b),
        _ => invalid("SVD failed while projecting onto unitaries"),
    }
}

/// All three estimates for a scenario. Gate scenarios use their target;
/// otherwise `target` must be supplied (typically the propagator of the best
/// designed pulse).
pub fn all_baselines(scenario: &Scenario, target: Option<&CMat>) -> Result<Vec<BaselineReport>> {
    let sys = &scenario.system;
    let u = match (&scenario.objective, target) {
        (_, Some(u)) => u.clone(),
        (crate::model::ObjectiveSpec::GateFidelity { target }, None) => target.clone(),
        _ => {
            return invalid(
                "no target unitary: the Arenz and Lee estimates need one; supply a designed pulse whose final propagator serves as the target",
            )
        }
    };
    Ok(vec![
        mt_ml_bound(sys)?,
        arenz_bound(&u, &sys.h0, &sys.hc, f_max(sys))?,
        lee_bound(&u, &sys.h0, &sys.hc)?,
    ])
}
