//! Controlled systems, time grids, pulses and the built-in scenarios.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{invalid, Error, Result};
use crate::linalg::{
    c, from_real_rows, hermitian_deviation, hermitian_eigen, identity, kron, real_diag, sigma_x,
    sigma_z, CMat, CVec, C64,
};

/// Absolute tolerance on `|h - h†|` entries.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// `H(t) = h0 + ε(t) hc` with `eps_min <= ε <= eps_max`. ħ = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub h0: CMat,
    pub hc: CMat,
    pub eps_min: f64,
    pub eps_max: f64,
}

impl SystemSpec {
    pub fn dim(&self) -> usize {
        self.h0.nrows()
    }

    /// Same dynamics with the control re-based to `[0, eps_max - eps_min]`.
    pub fn shifted(&self) -> ShiftedSystem {
        ShiftedSystem {
            h0: &self.h0 + &self.hc * c(self.eps_min, 0.0),
            hc: self.hc.clone(),
            eps_max: self.eps_max - self.eps_min,
        }
    }
}

/// A system whose control ranges over `[0, eps_max]`.
#[derive(Debug, Clone)]
pub struct ShiftedSystem {
    pub h0: CMat,
    pub hc: CMat,
    pub eps_max: f64,
}

fn check_finite(name: &str, m: &CMat) -> Result<()> {
    if let Some(pos) = m.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return invalid(format!("{name} has a non-finite entry at flat index {pos}"));
    }
    Ok(())
}

pub fn check_hermitian(name: &str, m: &CMat) -> Result<()> {
    let (dev, row, col) = hermitian_deviation(m);
    if dev > HERMITIAN_TOL {
        return Err(Error::NotHermitian {
            what: format!("{name} is not Hermitian"),
            row,
            col,
            deviation: dev,
        });
    }
    Ok(())
}

/// Checks shapes, finiteness, Hermiticity and the bound ordering. Matrices are
/// stored exactly as given; nothing is symmetrized.
pub fn validate_system(h0: CMat, hc: CMat, eps_min: f64, eps_max: f64) -> Result<SystemSpec> {
    if h0.nrows() != h0.ncols() || hc.nrows() != hc.ncols() {
        return invalid(format!(
            "matrices must be square (h0 {}x{}, hc {}x{})",
            h0.nrows(),
            h0.ncols(),
            hc.nrows(),
            hc.ncols()
        ));
    }
    if h0.nrows() != hc.nrows() {
        return invalid(format!("dimension mismatch: h0 is {}, hc is {}", h0.nrows(), hc.nrows()));
    }
    if h0.nrows() == 0 {
        return invalid("empty Hilbert space");
    }
    check_finite("h0", &h0)?;
    check_finite("hc", &hc)?;
    check_hermitian("h0", &h0)?;
    check_hermitian("hc", &hc)?;
    if !(eps_min.is_finite() && eps_max.is_finite()) || eps_min >= eps_max {
        return invalid(format!("control bounds must satisfy eps_min < eps_max (got {eps_min}, {eps_max})"));
    }
    Ok(SystemSpec { h0, hc, eps_min, eps_max })
}

/// Equally spaced trapezoid grid `t_i = t0 + i h`, `i = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub t_final: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn step(&self) -> f64 {
        (self.t_final - self.t0) / self.n_steps as f64
    }

    /// Number of nodes, `N + 1`.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.n_steps {
            self.t_final
        } else {
            self.t0 + i as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    /// Trapezoid weight of node `i` for integrals over `[t0, t_final]`.
    pub fn outer_weight(&self, i: usize) -> f64 {
        let h = self.step();
        if i == 0 || i == self.n_steps {
            0.5 * h
        } else if i < self.n_steps {
            h
        } else {
            0.0
        }
    }

    pub fn outer_weights(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.outer_weight(i)).collect()
    }

    /// Weight of node `j` in the trapezoid rule over `[t0, t_i]`.
    pub fn volterra_weight(&self, i: usize, j: usize) -> f64 {
        let h = self.step();
        if i == 0 || j > i {
            0.0
        } else if j == 0 || j == i {
            0.5 * h
        } else {
            h
        }
    }

    pub fn volterra_weights(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.len(), self.len(), |i, j| self.volterra_weight(i, j))
    }

    /// Same span truncated to the first `final_index + 1` nodes.
    pub fn truncated(&self, final_index: usize) -> Result<TimeGrid> {
        if final_index == 0 || final_index > self.n_steps {
            return invalid(format!("final index {final_index} outside 1..={}", self.n_steps));
        }
        Ok(TimeGrid {
            t0: self.t0,
            t_final: self.node(final_index),
            n_steps: final_index,
        })
    }
}

pub fn build_time_grid(t0: f64, t_final: f64, n_steps: usize) -> Result<TimeGrid> {
    if !(t0.is_finite() && t_final.is_finite()) || t_final <= t0 {
        return invalid(format!("grid needs t_final > t0 (got {t0}, {t_final})"));
    }
    if n_steps == 0 {
        return invalid("grid needs at least one step");
    }
    Ok(TimeGrid { t0, t_final, n_steps })
}

/// Control amplitudes at the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Pulse {
    pub values: Vec<f64>,
}

impl Pulse {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn constant(grid: &TimeGrid, value: f64) -> Self {
        Self { values: vec![value; grid.len()] }
    }

    pub fn from_fn(grid: &TimeGrid, f: impl Fn(f64) -> f64) -> Self {
        Self { values: grid.nodes().into_iter().map(f).collect() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_for(&self, system: &SystemSpec, grid: &TimeGrid) -> Result<()> {
        if self.values.len() != grid.len() {
            return invalid(format!("pulse has {} values, grid has {} nodes", self.values.len(), grid.len()));
        }
        self.check_bounds(system.eps_min, system.eps_max)
    }

    pub fn check_bounds(&self, lo: f64, hi: f64) -> Result<()> {
        let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        for (i, &v) in self.values.iter().enumerate() {
            if !v.is_finite() || v < lo - slack || v > hi + slack {
                return invalid(format!("pulse value {v} at node {i} outside [{lo}, {hi}]"));
            }
        }
        Ok(())
    }
}

/// What the bound and the designer maximize.
#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveSpec {
    /// Population of `target_level` at the final time, starting in `initial_level`.
    StateTransfer { initial_level: usize, target_level: usize },
    /// Off-diagonal element of the reduced system state for a qubit ⊗ bath
    /// factorization. The qubit is the leading tensor factor.
    Coherence { bath_dim: usize, initial_state: CVec },
    /// `|Tr(U_tar† U(T))|² / L²`.
    GateFidelity { target: CMat },
}

impl ObjectiveSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ObjectiveSpec::StateTransfer { .. } => "state_transfer",
            ObjectiveSpec::Coherence { .. } => "coherence",
            ObjectiveSpec::GateFidelity { .. } => "gate_fidelity",
        }
    }

    /// Columns of `U(t, t0)` that the objective needs, as an `L x M` matrix.
    pub fn initial_columns(&self, dim: usize) -> CMat {
        match self {
            ObjectiveSpec::StateTransfer { initial_level, .. } => {
                let mut m = CMat::zeros(dim, 1);
                m[(*initial_level, 0)] = c(1.0, 0.0);
                m
            }
            ObjectiveSpec::Coherence { initial_state, .. } => CMat::from_column_slice(dim, 1, initial_state.as_slice()),
            ObjectiveSpec::GateFidelity { .. } => identity(dim),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            ObjectiveSpec::StateTransfer { initial_level, target_level } => {
                if *initial_level >= dim || *target_level >= dim {
                    return invalid(format!(
                        "levels ({initial_level}, {target_level}) out of range for dimension {dim}"
                    ));
                }
            }
            ObjectiveSpec::Coherence { bath_dim, initial_state } => {
                if *bath_dim == 0 || 2 * bath_dim != dim {
                    return invalid(format!("dimension {dim} does not factor as 2 x {bath_dim}"));
                }
                if initial_state.len() != dim {
                    return invalid(format!("initial state has length {}, expected {dim}", initial_state.len()));
                }
                let norm = initial_state.norm();
                if (norm - 1.0).abs() > 1e-9 {
                    return invalid(format!("initial state norm {norm} is not 1"));
                }
            }
            ObjectiveSpec::GateFidelity { target } => {
                if target.nrows() != dim || target.ncols() != dim {
                    return invalid(format!("target unitary must be {dim}x{dim}"));
                }
                let err = crate::linalg::frobenius(&(target.adjoint() * target - identity(dim)));
                if err > 1e-9 {
                    return invalid(format!("target is not unitary (|U†U - I|_F = {err:.2e})"));
                }
            }
        }
        Ok(())
    }
}

/// `P_level(t_i) <= cap` at each listed node.
#[derive(Debug, Clone, PartialEq)]
pub struct LeakageCap {
    pub level: usize,
    pub cap: f64,
    pub time_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LindbladData {
    pub jump_ops: Vec<CMat>,
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub system: SystemSpec,
    pub grid: TimeGrid,
    pub objective: ObjectiveSpec,
    pub leakage: Vec<LeakageCap>,
    pub lindblad: Option<LindbladData>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let dim = self.system.dim();
        self.objective.validate(dim)?;
        for cap in &self.leakage {
            if cap.level >= dim {
                return invalid(format!("leakage level {} out of range", cap.level));
            }
            if !(0.0..=1.0).contains(&cap.cap) {
                return invalid(format!("leakage cap {} outside [0, 1]", cap.cap));
            }
            if let Some(&bad) = cap.time_indices.iter().find(|&&i| i > self.grid.n_steps) {
                return invalid(format!("leakage time index {bad} beyond grid"));
            }
        }
        if let Some(l) = &self.lindblad {
            if l.jump_ops.len() != l.rates.len() {
                return invalid("lindblad jump_ops and rates differ in length");
            }
            for (k, a) in l.jump_ops.iter().enumerate() {
                if a.nrows() != dim || a.ncols() != dim {
                    return invalid(format!("jump operator {k} has wrong shape"));
                }
            }
            if l.rates.iter().any(|&g| !(g >= 0.0)) {
                return invalid("lindblad rates must be non-negative");
            }
        }
        Ok(())
    }

    pub fn initial_columns(&self) -> CMat {
        self.objective.initial_columns(self.system.dim())
    }

    pub fn with_grid(&self, grid: TimeGrid) -> Scenario {
        Scenario { grid, ..self.clone() }
    }
}

pub const BUILTIN_NAMES: [&str; 4] = ["doublewell", "transmon", "spinbath", "hadamard"];

pub fn builtin_scenario(name: &str) -> Result<Scenario> {
    match name {
        "doublewell" => Ok(doublewell()),
        "transmon" => Ok(transmon()),
        "spinbath" => spinbath(2.0),
        "hadamard" => Ok(hadamard()),
        other => invalid(format!("unknown scenario '{other}'; valid names: {}", BUILTIN_NAMES.join(", "))),
    }
}

/// Asymmetric double well, `H = H0 - ε μ`, `|ε| <= 0.15`.
pub fn doublewell() -> Scenario {
    let h0 = real_diag(&[0.0, 0.1568, 0.7022]);
    let mu = from_real_rows(
        3,
        &[
            -2.5676, 0.3921, 0.6382, //
            0.3921, 2.3242, -0.7037, //
            0.6382, -0.7037, -0.5988,
        ],
    );
    Scenario {
        name: "doublewell".into(),
        system: SystemSpec { h0, hc: -mu, eps_min: -0.15, eps_max: 0.15 },
        grid: TimeGrid { t0: 0.0, t_final: 30.0, n_steps: 60 },
        objective: ObjectiveSpec::StateTransfer { initial_level: 0, target_level: 1 },
        leakage: Vec::new(),
        lindblad: None,
    }
}

/// Three-level transmon, `H = diag(0, 1.9, 3.7) + ε (|0><1| + √2 |1><2| + h.c.)`, `|ε| <= 0.3`.
pub fn transmon() -> Scenario {
    let s2 = 2f64.sqrt();
    let h0 = real_diag(&[0.0, 1.9, 3.7]);
    let hc = from_real_rows(3, &[0.0, 1.0, 0.0, 1.0, 0.0, s2, 0.0, s2, 0.0]);
    Scenario {
        name: "transmon".into(),
        system: SystemSpec { h0, hc, eps_min: -0.3, eps_max: 0.3 },
        grid: TimeGrid { t0: 0.0, t_final: 5.0, n_steps: 50 },
        objective: ObjectiveSpec::StateTransfer { initial_level: 0, target_level: 1 },
        leakage: Vec::new(),
        lindblad: None,
    }
}

pub fn hadamard_target() -> CMat {
    from_real_rows(2, &[FRAC_1_SQRT_2, FRAC_1_SQRT_2, -FRAC_1_SQRT_2, FRAC_1_SQRT_2])
}

/// Single qubit, `H = ω0 σz - μ ε σx` with `ω0 = 0.0784`, `μ = 1`, `|ε| <= 1`.
pub fn hadamard() -> Scenario {
    let omega0 = 0.0784;
    let mu = 1.0;
    Scenario {
        name: "hadamard".into(),
        system: SystemSpec {
            h0: sigma_z() * c(omega0, 0.0),
            hc: sigma_x() * c(-mu, 0.0),
            eps_min: -1.0,
            eps_max: 1.0,
        },
        grid: TimeGrid { t0: 0.0, t_final: 12.0, n_steps: 40 },
        objective: ObjectiveSpec::GateFidelity { target: hadamard_target() },
        leakage: Vec::new(),
        lindblad: None,
    }
}

/// Parameters of the qubit + Ising-bath model.
#[derive(Debug, Clone, Copy)]
pub struct SpinBathParams {
    pub omega0: f64,
    pub coupling_j: f64,
    pub field_lambda: f64,
    pub nu: f64,
    pub bath_spins: usize,
}

impl Default for SpinBathParams {
    fn default() -> Self {
        Self {
            omega0: std::f64::consts::PI,
            coupling_j: 1.0,
            field_lambda: 0.5,
            nu: 2.0,
            bath_spins: 2,
        }
    }
}

/// Operator acting as `op` on spin `site` of an `n`-spin register.
fn site_op(op: &CMat, site: usize, n: usize) -> CMat {
    let mut acc = identity(1);
    for k in 0..n {
        let factor = if k == site { op.clone() } else { identity(2) };
        acc = kron(&acc, &factor);
    }
    acc
}

/// `H_E = -J (Σ_j σx_j σx_{j+1} + λ Σ_j σz_j)` on an open chain.
pub fn bath_hamiltonian(p: &SpinBathParams) -> CMat {
    let n = p.bath_spins;
    let dim = 1 << n;
    let mut h = CMat::zeros(dim, dim);
    for j in 0..n.saturating_sub(1) {
        h += site_op(&sigma_x(), j, n) * site_op(&sigma_x(), j + 1, n);
    }
    for j in 0..n {
        h += site_op(&sigma_z(), j, n) * c(p.field_lambda, 0.0);
    }
    h * c(-p.coupling_j, 0.0)
}

/// Full `H0 = H_S + H_E + H_int` on qubit ⊗ bath, qubit basis `(|↑>, |↓>)`.
pub fn spinbath_hamiltonian(p: &SpinBathParams) -> CMat {
    let n = p.bath_spins;
    let bath_dim = 1 << n;
    let h_s = kron(&(sigma_z() * c(0.5 * p.omega0, 0.0)), &identity(bath_dim));
    let h_e = kron(&identity(2), &bath_hamiltonian(p));
    let mut z_sum = CMat::zeros(bath_dim, bath_dim);
    for j in 0..n {
        z_sum += site_op(&sigma_z(), j, n);
    }
    let down = real_diag(&[0.0, 1.0]);
    let h_int = kron(&down, &z_sum) * c(-p.nu, 0.0);
    h_s + h_e + h_int
}

fn fix_phase(v: &mut CVec) {
    if let Some(k) = (0..v.len()).max_by(|&a, &b| v[a].norm().total_cmp(&v[b].norm())) {
        let phase = v[k] / v[k].norm();
        for z in v.iter_mut() {
            *z /= phase;
        }
    }
}

pub fn spinbath_with(p: SpinBathParams, eps_max: f64) -> Result<Scenario> {
    if eps_max <= 0.0 {
        return invalid("spinbath needs eps_max > 0");
    }
    let bath_dim = 1 << p.bath_spins;
    let (_, vecs) = hermitian_eigen(&bath_hamiltonian(&p))?;
    let mut ground: CVec = vecs.column(0).into_owned();
    fix_phase(&mut ground);
    let plus = CVec::from_vec(vec![c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0)]);
    let psi0 = plus.kronecker(&ground);
    Ok(Scenario {
        name: "spinbath".into(),
        system: SystemSpec {
            h0: spinbath_hamiltonian(&p),
            hc: kron(&sigma_x(), &identity(bath_dim)),
            eps_min: -eps_max,
            eps_max,
        },
        grid: TimeGrid { t0: 0.0, t_final: 2.0, n_steps: 20 },
        objective: ObjectiveSpec::Coherence { bath_dim, initial_state: psi0 },
        leakage: Vec::new(),
        lindblad: None,
    })
}

pub fn spinbath(eps_max: f64) -> Result<Scenario> {
    spinbath_with(SpinBathParams::default(), eps_max)
}

/// Reduced-state coherence `ρ^S_{↑↓} = Σ_b ψ_{↑b} ψ*_{↓b}`.
pub fn reduced_coherence(psi: &[C64], bath_dim: usize) -> C64 {
    (0..bath_dim).map(|b| psi[b] * psi[bath_dim + b].conj()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_weights_small() {
        let g = build_time_grid(0.0, 1.0, 2).unwrap();
        assert_eq!(g.nodes(), vec![0.0, 0.5, 1.0]);
        assert_eq!(g.outer_weights(), vec![0.25, 0.5, 0.25]);
        let w = g.volterra_weights();
        assert_eq!(w.row(2).iter().copied().collect::<Vec<_>>(), vec![0.25, 0.5, 0.25]);
        assert_eq!(w.row(1).iter().copied().collect::<Vec<_>>(), vec![0.25, 0.25, 0.0]);
        assert!(w.row(0).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn grid_outer_sum_long() {
        let g = build_time_grid(0.0, 30.0, 600).unwrap();
        let s: f64 = g.outer_weights().iter().sum();
        assert!((s - 30.0).abs() < 1e-12);
    }

    #[test]
    fn grid_rejects_bad_arguments() {
        assert!(build_time_grid(1.0, 1.0, 3).is_err());
        assert!(build_time_grid(0.0, 1.0, 0).is_err());
        assert!(build_time_grid(2.0, 1.0, 3).is_err());
    }

    #[test]
    fn pauli_system_is_valid() {
        let s = validate_system(sigma_z(), sigma_x(), -1.0, 1.0).unwrap();
        assert_eq!(s.dim(), 2);
    }

    #[test]
    fn asymmetric_h0_rejected() {
        let mut h0 = sigma_z();
        h0[(0, 1)] = c(1e-6, 0.0);
        match validate_system(h0, sigma_x(), -1.0, 1.0) {
            Err(Error::NotHermitian { row, col, .. }) => assert!(row != col),
            other => panic!("expected Hermiticity error, got {other:?}"),
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let r = validate_system(sigma_z(), identity(3), -1.0, 1.0);
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn doublewell_matrices_validate() {
        let s = doublewell().system;
        let v = validate_system(s.h0.clone(), s.hc.clone(), -0.15, 0.15).unwrap();
        assert_eq!(v.dim(), 3);
        assert_eq!(v.h0[(1, 1)], c(0.1568, 0.0));
        assert_eq!(v.hc[(0, 0)], c(2.5676, 0.0));
    }

    #[test]
    fn builtin_names() {
        for name in BUILTIN_NAMES {
            let s = builtin_scenario(name).unwrap();
            s.validate().unwrap();
            validate_system(s.system.h0.clone(), s.system.hc.clone(), s.system.eps_min, s.system.eps_max).unwrap();
        }
        let err = builtin_scenario("nope").unwrap_err().to_string();
        assert!(err.contains("doublewell") && err.contains("hadamard"));
    }

    #[test]
    fn spinbath_layout() {
        let s = spinbath(2.0).unwrap();
        assert_eq!(s.system.dim(), 8);
        assert_eq!(s.system.hc, kron(&sigma_x(), &identity(4)));
        if let ObjectiveSpec::Coherence { bath_dim, initial_state } = &s.objective {
            assert_eq!(*bath_dim, 4);
            let rho = reduced_coherence(initial_state.as_slice(), 4);
            assert!((rho - c(0.5, 0.0)).norm() < 1e-12);
        } else {
            panic!("spinbath objective should be coherence");
        }
    }

    #[test]
    fn hadamard_parameters() {
        let s = hadamard();
        assert_eq!(s.system.h0[(0, 0)], c(0.0784, 0.0));
        assert_eq!(s.system.hc[(0, 1)], c(-1.0, 0.0));
        assert_eq!(s.system.eps_max, 1.0);
        let t = hadamard_target();
        assert!((t[(1, 0)].re + FRAC_1_SQRT_2).abs() < 1e-15);
    }
}
