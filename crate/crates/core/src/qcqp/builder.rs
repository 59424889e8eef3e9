use std::collections::BTreeMap;
use std::sync::Arc;

use super::form::{Affine, Part, QcqpProblem, QuadraticForm, Restriction, Sense, Tag};
use crate::error::{invalid, Result};
use crate::linalg::{c, identity, CMat, CVec, HermitianRange, C64, I};
use crate::model::{ObjectiveSpec, Scenario, SystemSpec, TimeGrid};
use crate::propagator::{free_evolution_table, solve_dynamics, stack, TrajectorySolution, VolterraSystem};

/// Eigenvalues below this fraction of the largest are treated as zero when
/// forming the pseudo-inverse of a control Hamiltonian.
pub const PINV_CUTOFF: f64 = 1e-10;

/// One control channel after the shift to `[0, eps_max]`.
#[derive(Debug, Clone)]
pub struct ShiftedControl {
    pub hc: CMat,
    pub eps_max: f64,
    pub range: HermitianRange,
    pub pinv: CMat,
}

impl ShiftedControl {
    pub fn new(hc: CMat, eps_max: f64) -> Result<Self> {
        if !(eps_max > 0.0) {
            return invalid(format!("effective control range must be positive (got {eps_max})"));
        }
        let range = HermitianRange::new(&hc, PINV_CUTOFF)?;
        if range.rank() == 0 {
            return invalid("control Hamiltonian is zero");
        }
        let pinv = range.pseudo_inverse();
        Ok(Self { hc, eps_max, range, pinv })
    }

    /// Basis in which conservation laws are written: the standard basis when
    /// `hc` is invertible, otherwise an orthonormal basis of its range.
    pub fn basis(&self) -> CMat {
        if self.range.is_full_rank() {
            identity(self.hc.nrows())
        } else {
            self.range.range.clone()
        }
    }
}

/// Affine map `Φ ↦ U` obtained from the discretized integral equation:
/// `U_i = u0_i - Σ_c Σ_{j<=i} w_ij i U0(t_i - t_j) Φ_{c,j}`.
///
/// Variables are flattened as `c·L(N+1)M + p·L(N+1) + i·L + l`
/// (control, column, node, level).
#[derive(Debug, Clone)]
pub struct ReconstructionMap {
    pub grid: TimeGrid,
    /// Index of the last node included in the problem.
    pub last: usize,
    pub dim: usize,
    pub columns: usize,
    pub controls: usize,
    pub green: Vec<CMat>,
    pub u0_stack: Vec<CMat>,
    states: Vec<Arc<Affine>>,
}

impl ReconstructionMap {
    pub fn new(h0_eff: &CMat, controls: usize, grid: &TimeGrid, last: usize, initial_columns: &CMat) -> Result<Self> {
        if last > grid.n_steps {
            return invalid(format!("final index {last} beyond grid with {} steps", grid.n_steps));
        }
        let green = free_evolution_table(h0_eff, grid.step(), last)?;
        Self::with_green(green, controls, grid, last, initial_columns)
    }

    /// Same map with a caller-supplied propagator table `green[k] = G(k h)`,
    /// `k = 0..=last` (e.g. a dissipative semigroup).
    pub fn with_green(green: Vec<CMat>, controls: usize, grid: &TimeGrid, last: usize, initial_columns: &CMat) -> Result<Self> {
        if last > grid.n_steps {
            return invalid(format!("final index {last} beyond grid with {} steps", grid.n_steps));
        }
        if green.len() != last + 1 {
            return invalid(format!("need {} propagator blocks, got {}", last + 1, green.len()));
        }
        let dim = green[0].nrows();
        if initial_columns.nrows() != dim {
            return invalid(format!("initial columns have {} rows, expected {dim}", initial_columns.nrows()));
        }
        let u0_stack: Vec<CMat> = (0..=last).map(|i| &green[i] * initial_columns).collect();
        let mut map = Self {
            grid: *grid,
            last,
            dim,
            columns: initial_columns.ncols(),
            controls,
            green,
            u0_stack,
            states: Vec::new(),
        };
        let mut states = Vec::with_capacity((last + 1) * dim * map.columns);
        for i in 0..=last {
            for p in 0..map.columns {
                for l in 0..dim {
                    states.push(Arc::new(map.build_state(i, l, p)));
                }
            }
        }
        map.states = states;
        Ok(map)
    }

    pub fn nodes(&self) -> usize {
        self.last + 1
    }

    pub fn n(&self) -> usize {
        self.controls * self.dim * self.nodes() * self.columns
    }

    pub fn index(&self, control: usize, node: usize, level: usize, column: usize) -> usize {
        let per_col = self.dim * self.nodes();
        control * per_col * self.columns + column * per_col + node * self.dim + level
    }

    fn build_state(&self, i: usize, l: usize, p: usize) -> Affine {
        let mut map = BTreeMap::new();
        for j in 0..=i {
            let w = self.grid.volterra_weight(i, j);
            if w == 0.0 {
                continue;
            }
            let g = &self.green[i - j];
            for m in 0..self.dim {
                let coef = -I * w * g[(l, m)];
                if coef == c(0.0, 0.0) {
                    continue;
                }
                for ctrl in 0..self.controls {
                    *map.entry(self.index(ctrl, j, m, p)).or_insert(c(0.0, 0.0)) += coef;
                }
            }
        }
        Affine::from_map(map, self.u0_stack[i][(l, p)])
    }

    /// `U_i[l, p]` as an affine function of `φ`.
    pub fn state(&self, i: usize, l: usize, p: usize) -> Arc<Affine> {
        self.states[(i * self.columns + p) * self.dim + l].clone()
    }

    pub fn phi_var(&self, control: usize, i: usize, l: usize, p: usize) -> Arc<Affine> {
        Arc::new(Affine::variable(self.index(control, i, l, p)))
    }

    /// Applies the map to a concrete `φ`.
    pub fn apply(&self, phi: &[C64]) -> Vec<CMat> {
        (0..self.nodes())
            .map(|i| CMat::from_fn(self.dim, self.columns, |l, p| self.state(i, l, p).eval(phi)))
            .collect()
    }

    /// `Φ_{c,i} = ε_c(t_i) Hc_c U_i` from a trajectory and shifted amplitudes.
    pub fn phi_from_trajectory(&self, traj: &TrajectorySolution, hcs: &[CMat], amplitudes: &[Vec<f64>]) -> CVec {
        let mut phi = CVec::zeros(self.n());
        for (ctrl, (hc, amp)) in hcs.iter().zip(amplitudes).enumerate() {
            for i in 0..self.nodes() {
                let block = hc * &traj.blocks[i] * c(amp[i], 0.0);
                for p in 0..self.columns {
                    for l in 0..self.dim {
                        phi[self.index(ctrl, i, l, p)] = block[(l, p)];
                    }
                }
            }
        }
        phi
    }

    /// Block `Φ_{c,i}` of a flattened vector.
    pub fn phi_block(&self, phi: &[C64], control: usize, i: usize) -> CMat {
        CMat::from_fn(self.dim, self.columns, |l, p| phi[self.index(control, i, l, p)])
    }
}

/// Everything needed to write forms for one system on one grid prefix.
#[derive(Debug, Clone)]
pub struct Discretization {
    /// Shifted drift. For a dissipative system this is the shifted real-time
    /// generator instead; dynamics always go through `map.green`.
    pub h0_eff: CMat,
    pub controls: Vec<ShiftedControl>,
    pub map: ReconstructionMap,
}

/// Control channel before shifting: `eps_min <= ε <= eps_max`.
#[derive(Debug, Clone)]
pub struct ControlChannel {
    pub hc: CMat,
    pub eps_min: f64,
    pub eps_max: f64,
}

impl Discretization {
    /// Shifts every control to start at zero and folds the offsets into `h0`.
    pub fn new(h0: &CMat, channels: &[ControlChannel], grid: &TimeGrid, last: usize, initial_columns: &CMat) -> Result<Self> {
        if channels.is_empty() {
            return invalid("at least one control is required");
        }
        let mut h0_eff = h0.clone();
        let mut controls = Vec::with_capacity(channels.len());
        for ch in channels {
            if ch.hc.shape() != h0.shape() {
                return invalid(format!(
                    "control matrix is {}x{}, drift is {}x{}",
                    ch.hc.nrows(),
                    ch.hc.ncols(),
                    h0.nrows(),
                    h0.ncols()
                ));
            }
            h0_eff += &ch.hc * c(ch.eps_min, 0.0);
            controls.push(ShiftedControl::new(ch.hc.clone(), ch.eps_max - ch.eps_min)?);
        }
        let map = ReconstructionMap::new(&h0_eff, channels.len(), grid, last, initial_columns)?;
        Ok(Self { h0_eff, controls, map })
    }

    /// Assembles a discretization from already shifted controls and a
    /// precomputed propagator table of the shifted drift.
    pub fn with_green(
        h0_eff: CMat,
        controls: Vec<ShiftedControl>,
        green: Vec<CMat>,
        grid: &TimeGrid,
        last: usize,
        initial_columns: &CMat,
    ) -> Result<Self> {
        if controls.is_empty() {
            return invalid("at least one control is required");
        }
        if controls.iter().any(|k| k.hc.shape() != h0_eff.shape()) {
            return invalid("control and drift shapes differ");
        }
        let map = ReconstructionMap::with_green(green, controls.len(), grid, last, initial_columns)?;
        Ok(Self { h0_eff, controls, map })
    }

    pub fn single(system: &SystemSpec, grid: &TimeGrid, last: usize, initial_columns: &CMat) -> Result<Self> {
        Self::new(
            &system.h0,
            &[ControlChannel { hc: system.hc.clone(), eps_min: system.eps_min, eps_max: system.eps_max }],
            grid,
            last,
            initial_columns,
        )
    }

    pub fn n(&self) -> usize {
        self.map.n()
    }

    pub fn hcs(&self) -> Vec<CMat> {
        self.controls.iter().map(|k| k.hc.clone()).collect()
    }

    /// `Φ` for a trajectory simulated in the shifted frame with the given
    /// (already shifted) amplitudes.
    pub fn phi_from_trajectory(&self, traj: &TrajectorySolution, shifted: &[Vec<f64>]) -> CVec {
        self.map.phi_from_trajectory(traj, &self.hcs(), shifted)
    }

    /// Simulates the shifted system on the problem's node range. `shifted`
    /// holds one amplitude sequence per control, each of length `last + 1`.
    pub fn simulate(&self, shifted: &[Vec<f64>]) -> Result<TrajectorySolution> {
        let map = &self.map;
        if shifted.len() != self.controls.len() || shifted.iter().any(|a| a.len() != map.nodes()) {
            return invalid(format!("need {} amplitude sequences of length {}", self.controls.len(), map.nodes()));
        }
        if map.last == 0 {
            return Ok(TrajectorySolution { blocks: vec![map.u0_stack[0].clone()] });
        }
        let grid = map.grid.truncated(map.last)?;
        let init = map.u0_stack[0].clone();
        let couplings = self.hcs().iter().map(|hc| hc * I).collect();
        let vs = VolterraSystem::new(grid, self.map.green.clone(), couplings, shifted.to_vec(), &init)?;
        solve_dynamics(&vs)
    }

    /// `Hc⁺ Φ_i / ε_max - U_i(Φ)` entry `(k, q)` in the basis `basis`, i.e.
    /// `(basis† · bracket)[b, q]`.
    fn bracket(&self, control: usize, i: usize, basis: &CMat, b: usize, q: usize) -> Affine {
        let ctl = &self.controls[control];
        let scaled = basis.adjoint() * &ctl.pinv * c(1.0 / ctl.eps_max, 0.0);
        let mut parts: Vec<(C64, Affine)> = Vec::new();
        for m in 0..self.map.dim {
            if scaled[(b, m)] != c(0.0, 0.0) {
                parts.push((scaled[(b, m)], Affine::variable(self.map.index(control, i, m, q))));
            }
        }
        let states: Vec<(C64, Arc<Affine>)> = (0..self.map.dim)
            .filter(|&k| basis[(k, b)] != c(0.0, 0.0))
            .map(|k| (-basis[(k, b)].conj(), self.map.state(i, k, q)))
            .collect();
        Affine::combine(parts.iter().map(|(s, a)| (*s, a)).chain(states.iter().map(|(s, a)| (*s, a.as_ref()))))
    }

    /// `(basis† Φ_{c,i})[a, p]`.
    fn projected_phi(&self, control: usize, i: usize, basis: &CMat, a: usize, p: usize) -> Affine {
        let mut map = BTreeMap::new();
        for k in 0..self.map.dim {
            let v = basis[(k, a)].conj();
            if v != c(0.0, 0.0) {
                map.insert(self.map.index(control, i, k, p), v);
            }
        }
        Affine::from_map(map, c(0.0, 0.0))
    }

    /// Conservation laws `Σ w_i Φ_i† D [Hc⁺Φ_i/ε_max - U_i(Φ)] = 0` for every
    /// node-local elementary `D`, split into real and imaginary parts.
    /// `node_stride > 1` keeps only every k-th node (plus the last).
    pub fn conservation_constraints(&self, node_stride: usize) -> Vec<QuadraticForm> {
        let stride = node_stride.max(1);
        let m = self.map.columns;
        let mut out = Vec::new();
        for (ctrl, ctl) in self.controls.iter().enumerate() {
            let basis = ctl.basis();
            let r = basis.ncols();
            for i in (0..self.map.nodes()).filter(|&i| i % stride == 0 || i == self.map.last) {
                let w = self.map.grid.outer_weight(i);
                let lefts: Vec<Arc<Affine>> = (0..r * m).map(|k| Arc::new(self.projected_phi(ctrl, i, &basis, k % r, k / r))).collect();
                let rights: Vec<Arc<Affine>> = (0..r * m).map(|k| Arc::new(self.bracket(ctrl, i, &basis, k % r, k / r))).collect();
                for a in 0..r {
                    for b in 0..r {
                        for p in 0..m {
                            for q in 0..m {
                                for (part, coeff) in [(Part::Re, c(w, 0.0)), (Part::Im, c(0.0, -w))] {
                                    let tag = Tag::Conservation { control: ctrl, node: i, left: a, right: b, col_left: p, col_right: q, part };
                                    let mut f = QuadraticForm::new(tag, Sense::Equal);
                                    f.push(coeff, lefts[p * r + a].clone(), rights[q * r + b].clone());
                                    out.push(f);
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// `|ν_k† Φ_{c,i}[:, p]|² = 0` for null vectors `ν_k` of a singular `Hc`.
    pub fn range_constraints(&self) -> Vec<QuadraticForm> {
        let mut out = Vec::new();
        for (ctrl, ctl) in self.controls.iter().enumerate() {
            let null = &ctl.range.null;
            for i in 0..self.map.nodes() {
                for k in 0..null.ncols() {
                    for p in 0..self.map.columns {
                        let ell = Arc::new(self.projected_phi(ctrl, i, null, k, p));
                        let mut f = QuadraticForm::new(Tag::Range { control: ctrl, node: i, null_index: k, column: p }, Sense::Equal);
                        f.push(c(1.0, 0.0), ell.clone(), ell);
                        out.push(f);
                    }
                }
            }
        }
        out
    }

    /// `(Φ_1 Φ_2†)[j, k] = 0` at every node: the two controls are never on together.
    pub fn exclusivity_constraints(&self) -> Result<Vec<QuadraticForm>> {
        if self.controls.len() != 2 {
            return invalid("exclusivity constraints need exactly two controls");
        }
        let (l, m) = (self.map.dim, self.map.columns);
        let mut out = Vec::new();
        for i in 0..self.map.nodes() {
            for j in 0..l {
                for k in 0..l {
                    for (part, coeff) in [(Part::Re, c(1.0, 0.0)), (Part::Im, c(0.0, -1.0))] {
                        let mut f = QuadraticForm::new(Tag::Exclusivity { node: i, row: j, col: k, part }, Sense::Equal);
                        for p in 0..m {
                            f.push(coeff, self.map.phi_var(1, i, k, p), self.map.phi_var(0, i, j, p));
                        }
                        out.push(f);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Substitution confining every `Φ_{c,i}` column to the range of `Hc_c`.
    /// `None` when all controls are invertible.
    pub fn range_restriction(&self) -> Option<Restriction> {
        if self.controls.iter().all(|k| k.range.is_full_rank()) {
            return None;
        }
        let map = &self.map;
        let mut rows = vec![Vec::new(); map.n()];
        let mut offset = 0;
        for (ctrl, ctl) in self.controls.iter().enumerate() {
            let basis = ctl.basis();
            let r = basis.ncols();
            for p in 0..map.columns {
                for i in 0..map.nodes() {
                    for l in 0..map.dim {
                        rows[map.index(ctrl, i, l, p)] = (0..r)
                            .filter(|&k| basis[(l, k)] != c(0.0, 0.0))
                            .map(|k| (offset + (p * map.nodes() + i) * r + k, basis[(l, k)]))
                            .collect();
                    }
                }
            }
            offset += r * map.nodes() * map.columns;
        }
        Some(Restriction { reduced_dim: offset, rows })
    }

    /// Checks the unitarity identity for the prefix ending at node `t1`:
    /// twice the anti-Hermitian part of the identity-`D` combination of
    /// conservation residuals equals the discrete expression for `U†U - I`,
    /// `Σ_ij Ω_ij Φ_i† U0(t_i - t_j) Φ_j + 2 Im Σ_i w_i u0_i† Φ_i`.
    /// Returns the largest entrywise difference. Single-control only; for a
    /// singular `Hc` the identity holds for `Φ` in its range.
    pub fn unitarity_subset_check(&self, constraints: &[QuadraticForm], phi: &[C64], t1: usize) -> Result<f64> {
        if self.controls.len() != 1 {
            return invalid("unitarity check is defined for a single control");
        }
        if t1 > self.map.last {
            return invalid(format!("t1 = {t1} beyond last node {}", self.map.last));
        }
        let (m, grid) = (self.map.columns, &self.map.grid);
        // C = Σ_{i<=t1} w_{t1,i} Φ_i† P bracket_i from the emitted forms.
        let mut cmat = CMat::zeros(m, m);
        for f in constraints {
            if let Tag::Conservation { control: 0, node, left, right, col_left, col_right, part } = f.tag {
                if left != right || node > t1 {
                    continue;
                }
                let scale = grid.volterra_weight(t1, node) / grid.outer_weight(node);
                let v = f.eval(phi) * scale;
                match part {
                    Part::Re => cmat[(col_left, col_right)] += c(v, 0.0),
                    Part::Im => cmat[(col_left, col_right)] += c(0.0, v),
                }
            }
        }
        let lhs = (&cmat - cmat.adjoint()) * c(0.0, -1.0);

        let mut rhs = CMat::zeros(m, m);
        let mut linear = CMat::zeros(m, m);
        for i in 0..=t1 {
            let wi = grid.volterra_weight(t1, i);
            let phi_i = self.map.phi_block(phi, 0, i);
            linear += self.map.u0_stack[i].adjoint() * &phi_i * c(wi, 0.0);
            for j in 0..=i {
                let omega = if j == i { 2.0 * wi * grid.volterra_weight(i, i) } else { wi * grid.volterra_weight(i, j) };
                if omega == 0.0 {
                    continue;
                }
                let phi_j = self.map.phi_block(phi, 0, j);
                let term = phi_i.adjoint() * &self.map.green[i - j] * &phi_j * c(omega, 0.0);
                if j == i {
                    rhs += term;
                } else {
                    rhs += &term + term.adjoint();
                }
            }
        }
        rhs += (&linear - linear.adjoint()) * c(0.0, -1.0);
        Ok((lhs - rhs).iter().map(|z| z.norm()).fold(0.0, f64::max))
    }
}

/// `|<target| U(T) |initial>|²`, tracked column 0 at node `final_index`.
pub fn objective_state_transfer(map: &ReconstructionMap, target_level: usize, final_index: usize) -> Result<QuadraticForm> {
    if target_level >= map.dim {
        return invalid(format!("target level {target_level} out of range"));
    }
    if final_index > map.last {
        return invalid("final index beyond the problem's last node");
    }
    let ell = map.state(final_index, target_level, 0);
    let mut f = QuadraticForm::new(Tag::Objective(format!("P{target_level}")), Sense::Equal);
    f.push(c(1.0, 0.0), ell.clone(), ell);
    Ok(f)
}

/// `Σ_p |U_i[level, p]|² / M - cap <= 0` at each listed node.
pub fn constraint_leakage_cap(map: &ReconstructionMap, level: usize, cap: f64, time_indices: &[usize]) -> Result<Vec<QuadraticForm>> {
    if time_indices.is_empty() {
        return invalid("leakage cap needs at least one time index");
    }
    if !(0.0..=1.0).contains(&cap) {
        return invalid(format!("leakage cap {cap} outside [0, 1]"));
    }
    if level >= map.dim {
        return invalid(format!("leakage level {level} out of range"));
    }
    let mut out = Vec::new();
    for &i in time_indices {
        if i > map.last {
            continue;
        }
        let mut f = QuadraticForm::new(Tag::Leakage { level, node: i }, Sense::LessEqual);
        for p in 0..map.columns {
            let ell = map.state(i, level, p);
            f.push(c(1.0 / map.columns as f64, 0.0), ell.clone(), ell);
        }
        f.constant = -cap;
        out.push(f);
    }
    Ok(out)
}

/// `Re(e^{iφ} Σ_b ψ_{↑b} ψ*_{↓b})` at node `final_index`; qubit is the leading factor.
pub fn objective_coherence(map: &ReconstructionMap, phase: f64, bath_dim: usize, final_index: usize) -> Result<QuadraticForm> {
    if bath_dim == 0 || 2 * bath_dim != map.dim {
        return invalid(format!("dimension {} does not factor as 2 x {bath_dim}", map.dim));
    }
    let mut f = QuadraticForm::new(Tag::Objective(format!("coherence(phase={phase})")), Sense::Equal);
    let rot = C64::from_polar(1.0, phase);
    for b in 0..bath_dim {
        f.push(rot, map.state(final_index, bath_dim + b, 0), map.state(final_index, b, 0));
    }
    Ok(f)
}

/// `|Tr(U_tar† U(T))|² / L²`; needs every column tracked with identity initial columns.
pub fn objective_gate_fidelity(map: &ReconstructionMap, u_target: &CMat, final_index: usize) -> Result<QuadraticForm> {
    let l = map.dim;
    if map.columns < l {
        return invalid("gate objective requires full propagator (all columns tracked)");
    }
    if u_target.nrows() != l || u_target.ncols() != l {
        return invalid("target unitary has wrong shape");
    }
    let parts: Vec<(C64, Arc<Affine>)> = (0..l)
        .flat_map(|a| (0..l).map(move |p| (a, p)))
        .map(|(a, p)| (u_target[(a, p)].conj(), map.state(final_index, a, p)))
        .collect();
    let trace = Arc::new(Affine::combine(parts.iter().map(|(s, a)| (*s, a.as_ref()))));
    let mut f = QuadraticForm::new(Tag::Objective("gate_fidelity_sq".into()), Sense::Equal);
    f.push(c(1.0 / (l * l) as f64, 0.0), trace.clone(), trace);
    Ok(f)
}

#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    /// Keep conservation laws only at every k-th node (k = 1 keeps all).
    pub node_stride: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { node_stride: 1 }
    }
}

/// Full single-control problem for a scenario: conservation laws up to node
/// `final_index`, leakage caps, and the objective (with `phase` for coherence).
pub fn build_scenario_problem(
    scenario: &Scenario,
    final_index: usize,
    phase: f64,
    options: &BuildOptions,
) -> Result<(QcqpProblem, Discretization)> {
    scenario.validate()?;
    let disc = Discretization::single(&scenario.system, &scenario.grid, final_index, &scenario.initial_columns())?;
    let map = &disc.map;
    let objective = match &scenario.objective {
        ObjectiveSpec::StateTransfer { target_level, .. } => objective_state_transfer(map, *target_level, final_index)?,
        ObjectiveSpec::Coherence { bath_dim, .. } => objective_coherence(map, phase, *bath_dim, final_index)?,
        ObjectiveSpec::GateFidelity { target } => objective_gate_fidelity(map, target, final_index)?,
    };
    let mut constraints = disc.conservation_constraints(options.node_stride);
    constraints.extend(disc.range_constraints());
    for cap in &scenario.leakage {
        let idx: Vec<usize> = cap.time_indices.iter().copied().filter(|&i| i <= final_index).collect();
        if !idx.is_empty() {
            constraints.extend(constraint_leakage_cap(map, cap.level, cap.cap, &idx)?);
        }
    }
    let problem = QcqpProblem {
        n: disc.n(),
        objective,
        constraints,
        restriction: disc.range_restriction(),
        description: format!("{} up to node {final_index}", scenario.name),
    };
    Ok((problem, disc))
}

/// Two mutually exclusive controls. The objective is supplied by the caller
/// as a closure over the reconstruction map.
pub fn build_multi_control_problem(
    h0: &CMat,
    channels: &[ControlChannel; 2],
    grid: &TimeGrid,
    initial_columns: &CMat,
    objective: impl FnOnce(&ReconstructionMap) -> Result<QuadraticForm>,
) -> Result<(QcqpProblem, Discretization)> {
    for (k, ch) in channels.iter().enumerate() {
        crate::model::check_hermitian(&format!("hc{}", k + 1), &ch.hc)?;
    }
    let disc = Discretization::new(h0, channels, grid, grid.n_steps, initial_columns)?;
    let objective = objective(&disc.map)?;
    let mut constraints = disc.conservation_constraints(1);
    constraints.extend(disc.range_constraints());
    constraints.extend(disc.exclusivity_constraints()?);
    let problem = QcqpProblem {
        n: disc.n(),
        objective,
        constraints,
        restriction: disc.range_restriction(),
        description: "two exclusive controls".into(),
    };
    Ok((problem, disc))
}

/// Stacked `U` blocks of a reconstructed trajectory, for comparisons.
pub fn reconstructed_stack(map: &ReconstructionMap, phi: &[C64]) -> CMat {
    stack(&map.apply(phi))
}
