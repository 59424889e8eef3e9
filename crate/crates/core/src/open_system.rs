//! Lindblad dynamics in vectorized form.
//!
//! Density matrices are column-stacked, `vec(X ρ Y) = (Yᵀ ⊗ X) vec(ρ)`, and
//! evolve as `ṙ = (L0 + LD + ε(t) Lc) r`. Writing `Lc = -i K` with the
//! Hermitian `K = I ⊗ Hc - Hcᵀ ⊗ I` puts the open problem in exactly the
//! closed-system shape (`K` plays `Hc`, the semigroup `exp((L0 + LD) t)` plays
//! the free propagator), so the Volterra solver and the conservation-law
//! builder are shared. The polarization variable is `i Ψ = ε K r` with
//! `Ψ = ε Lc r`.

use crate::error::{invalid, Error, Result};
use crate::linalg::{c, expm_pade, hermitian_eigen, identity, kron, CMat, CVec, C64, I};
use crate::model::{check_hermitian, Pulse, Scenario, TimeGrid};
use crate::propagator::{solve_dynamics, VolterraSystem};
use crate::qcqp::{Discretization, QuadraticForm, ShiftedControl};

#[derive(Debug, Clone, PartialEq)]
pub struct LindbladSpec {
    pub h0: CMat,
    pub hc: CMat,
    pub jump_ops: Vec<CMat>,
    pub rates: Vec<f64>,
}

impl LindbladSpec {
    pub fn new(h0: CMat, hc: CMat, jump_ops: Vec<CMat>, rates: Vec<f64>) -> Result<Self> {
        let spec = Self { h0, hc, jump_ops, rates };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        check_hermitian("h0", &self.h0)?;
        check_hermitian("hc", &self.hc)?;
        let dim = self.h0.nrows();
        if self.hc.shape() != self.h0.shape() {
            return invalid("h0 and hc differ in shape");
        }
        if self.jump_ops.len() != self.rates.len() {
            return invalid(format!("{} jump operators but {} rates", self.jump_ops.len(), self.rates.len()));
        }
        for (k, a) in self.jump_ops.iter().enumerate() {
            if a.nrows() != dim || a.ncols() != dim {
                return invalid(format!("jump operator {k} is {}x{}, expected {dim}x{dim}", a.nrows(), a.ncols()));
            }
        }
        if let Some(g) = self.rates.iter().find(|g| !(**g >= 0.0) || !g.is_finite()) {
            return invalid(format!("rates must be finite and non-negative (got {g})"));
        }
        Ok(())
    }

    /// Open version of a scenario; a scenario without dissipation gets no jumps.
    pub fn from_scenario(s: &Scenario) -> Result<Self> {
        let (jumps, rates) = match &s.lindblad {
            Some(l) => (l.jump_ops.clone(), l.rates.clone()),
            None => (Vec::new(), Vec::new()),
        };
        Self::new(s.system.h0.clone(), s.system.hc.clone(), jumps, rates)
    }

    pub fn dim(&self) -> usize {
        self.h0.nrows()
    }

    pub fn with_rates(&self, rates: Vec<f64>) -> Result<Self> {
        Self::new(self.h0.clone(), self.hc.clone(), self.jump_ops.clone(), rates)
    }
}

#[derive(Debug, Clone)]
pub struct Superoperators {
    pub l0: CMat,
    pub lc: CMat,
    pub ld: CMat,
}

impl Superoperators {
    /// `L0 + LD + eps Lc`.
    pub fn generator(&self, eps: f64) -> CMat {
        &self.l0 + &self.ld + &self.lc * c(eps, 0.0)
    }
}

/// `-i (I ⊗ H - Hᵀ ⊗ I)`, the generator of `ρ ↦ -i[H, ρ]`.
pub fn commutator_super(h: &CMat) -> CMat {
    let id = identity(h.nrows());
    (kron(&id, h) - kron(&h.transpose(), &id)) * c(0.0, -1.0)
}

/// `Σ γ (A* ⊗ A - ½ I ⊗ A†A - ½ (A†A)ᵀ ⊗ I)`.
pub fn dissipator_super(jump_ops: &[CMat], rates: &[f64], dim: usize) -> CMat {
    let id = identity(dim);
    let mut ld = CMat::zeros(dim * dim, dim * dim);
    for (a, &g) in jump_ops.iter().zip(rates) {
        if g == 0.0 {
            continue;
        }
        let ada = a.adjoint() * a;
        let term = kron(&a.conjugate(), a) - (kron(&id, &ada) + kron(&ada.transpose(), &id)) * c(0.5, 0.0);
        ld += term * c(g, 0.0);
    }
    ld
}

pub fn vectorize_lindblad(spec: &LindbladSpec) -> Superoperators {
    Superoperators {
        l0: commutator_super(&spec.h0),
        lc: commutator_super(&spec.hc),
        ld: dissipator_super(&spec.jump_ops, &spec.rates, spec.dim()),
    }
}

/// Column stacking.
pub fn vec_of(rho: &CMat) -> CVec {
    CVec::from_column_slice(rho.as_slice())
}

pub fn unvec(r: &[C64], dim: usize) -> CMat {
    CMat::from_column_slice(dim, dim, r)
}

/// `exp(generator · dt)` by scaling and squaring.
pub fn open_green_function(generator: &CMat, dt: f64) -> Result<CMat> {
    if !(dt >= 0.0) {
        return invalid(format!("dt must be non-negative (got {dt})"));
    }
    if dt == 0.0 {
        return Ok(identity(generator.nrows()));
    }
    expm_pade(&(generator * c(dt, 0.0)))
}

/// `exp(generator · k h)` for `k = 0..=n`, by repeated multiplication.
pub fn open_green_table(generator: &CMat, h: f64, n: usize) -> Result<Vec<CMat>> {
    let step = open_green_function(generator, h)?;
    let mut out = Vec::with_capacity(n + 1);
    out.push(identity(generator.nrows()));
    for k in 1..=n {
        let next = &out[k - 1] * &step;
        out.push(next);
    }
    Ok(out)
}

/// Vectorized density-matrix trajectory, one state per node.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenTrajectory {
    pub dim: usize,
    pub states: Vec<CVec>,
}

impl OpenTrajectory {
    pub fn density(&self, i: usize) -> CMat {
        unvec(self.states[i].as_slice(), self.dim)
    }

    pub fn max_trace_error(&self) -> f64 {
        (0..self.states.len()).map(|i| (self.density(i).trace() - c(1.0, 0.0)).norm()).fold(0.0, f64::max)
    }

    pub fn max_hermiticity_error(&self) -> f64 {
        (0..self.states.len())
            .map(|i| {
                let r = self.density(i);
                (&r - r.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// Smallest eigenvalue of the Hermitian part over all nodes.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let mut lo = f64::INFINITY;
        for i in 0..self.states.len() {
            let r = self.density(i);
            let herm = (&r + r.adjoint()) * c(0.5, 0.0);
            let (vals, _) = hermitian_eigen(&herm)?;
            lo = lo.min(vals.iter().copied().fold(f64::INFINITY, f64::min));
        }
        Ok(lo)
    }

    pub fn populations(&self) -> Vec<Vec<f64>> {
        (0..self.states.len()).map(|i| (0..self.dim).map(|l| self.density(i)[(l, l)].re).collect()).collect()
    }
}

fn check_rho(rho0: &CMat, dim: usize) -> Result<()> {
    if rho0.nrows() != dim || rho0.ncols() != dim {
        return invalid(format!("initial density matrix must be {dim}x{dim}"));
    }
    Ok(())
}

/// Generator of the shifted frame, `L0 + LD + eps_min Lc`, and `K`.
fn shifted_parts(spec: &LindbladSpec, eps_min: f64) -> (CMat, CMat) {
    let sup = vectorize_lindblad(spec);
    let k = &sup.lc * I;
    (sup.generator(eps_min), k)
}

/// Trapezoid–Nyström solution of the vectorized Volterra equation, in the
/// frame shifted by `eps_min` (same discretization as the constraints).
pub fn simulate_lindblad(spec: &LindbladSpec, eps_min: f64, grid: &TimeGrid, pulse: &Pulse, rho0: &CMat) -> Result<OpenTrajectory> {
    spec.validate()?;
    check_rho(rho0, spec.dim())?;
    if pulse.len() != grid.len() {
        return invalid(format!("pulse has {} values, grid has {} nodes", pulse.len(), grid.len()));
    }
    let (gen, k) = shifted_parts(spec, eps_min);
    let green = open_green_table(&gen, grid.step(), grid.n_steps)?;
    let shifted: Vec<f64> = pulse.values.iter().map(|v| v - eps_min).collect();
    let init = CMat::from_column_slice(gen.nrows(), 1, vec_of(rho0).as_slice());
    let vs = VolterraSystem::new(*grid, green, vec![&k * I], vec![shifted], &init)?;
    let traj = solve_dynamics(&vs)?;
    Ok(OpenTrajectory { dim: spec.dim(), states: traj.blocks.into_iter().map(|b| b.column(0).into_owned()).collect() })
}

/// Exact propagation for a pulse held at the interval average
/// `(ε_i + ε_{i+1}) / 2` on each step.
pub fn propagate_lindblad_held(spec: &LindbladSpec, grid: &TimeGrid, pulse: &Pulse, rho0: &CMat) -> Result<OpenTrajectory> {
    spec.validate()?;
    check_rho(rho0, spec.dim())?;
    if pulse.len() != grid.len() {
        return invalid(format!("pulse has {} values, grid has {} nodes", pulse.len(), grid.len()));
    }
    let sup = vectorize_lindblad(spec);
    let h = grid.step();
    let mut states = vec![vec_of(rho0)];
    for w in pulse.values.windows(2) {
        let step = open_green_function(&sup.generator(0.5 * (w[0] + w[1])), h)?;
        let next = step * states.last().unwrap();
        if next.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numerical("non-finite open-system state".into()));
        }
        states.push(next);
    }
    Ok(OpenTrajectory { dim: spec.dim(), states })
}

/// Conservation laws for the open problem on nodes `0..=last`, plus the
/// discretization they are written against. Variables are the blocks of
/// `i Ψ_j = (ε_j - eps_min) K r_j`.
pub fn build_open_constraints(
    spec: &LindbladSpec,
    eps_min: f64,
    eps_max: f64,
    grid: &TimeGrid,
    last: usize,
    rho0: &CMat,
) -> Result<(Vec<QuadraticForm>, Discretization)> {
    spec.validate()?;
    check_rho(rho0, spec.dim())?;
    if !(eps_max > eps_min) {
        return invalid(format!("need eps_min < eps_max (got {eps_min}, {eps_max})"));
    }
    if last > grid.n_steps {
        return invalid(format!("final index {last} beyond grid with {} steps", grid.n_steps));
    }
    let (gen, k) = shifted_parts(spec, eps_min);
    let green = open_green_table(&gen, grid.step(), last)?;
    let control = ShiftedControl::new(k, eps_max - eps_min)?;
    let init = CMat::from_column_slice(gen.nrows(), 1, vec_of(rho0).as_slice());
    let disc = Discretization::with_green(gen, vec![control], green, grid, last, &init)?;
    let mut forms = disc.conservation_constraints(1);
    forms.extend(disc.range_constraints());
    Ok((forms, disc))
}

/// Flattened `i Ψ` of a trajectory produced by [`simulate_lindblad`].
pub fn open_phi(disc: &Discretization, traj: &OpenTrajectory, pulse: &Pulse, eps_min: f64) -> Result<CVec> {
    let nodes = disc.map.nodes();
    if traj.states.len() < nodes || pulse.len() < nodes {
        return invalid("trajectory shorter than the discretization");
    }
    let blocks = crate::propagator::TrajectorySolution {
        blocks: traj.states[..nodes].iter().map(|s| CMat::from_column_slice(s.len(), 1, s.as_slice())).collect(),
    };
    let shifted: Vec<f64> = pulse.values[..nodes].iter().map(|v| v - eps_min).collect();
    Ok(disc.phi_from_trajectory(&blocks, &[shifted]))
}
