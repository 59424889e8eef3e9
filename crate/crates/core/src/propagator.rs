//! Trapezoid–Nyström discretization of the Volterra form of the Schrödinger
//! equation, `U_i = u0_i - Σ_j w_ij G(t_i - t_j) K ε_j U_j`.
//!
//! The same machinery drives the Lindblad propagator, where `G` is a
//! non-unitary semigroup and `K = -L_c`.

use crate::error::{invalid, Error, Result};
use crate::linalg::{c, frobenius, hermitian_eigen, CMat, C64, I};
use crate::model::{Pulse, SystemSpec, TimeGrid};

/// `exp(-i h0 dt)` via Hermitian eigendecomposition.
pub fn free_evolution(h0: &CMat, dt: f64) -> Result<CMat> {
    crate::linalg::expm_hermitian(h0, dt)
}

/// `exp(-i h0 k h)` for `k = 0..=n`, from one eigendecomposition.
pub fn free_evolution_table(h0: &CMat, h: f64, n: usize) -> Result<Vec<CMat>> {
    let (values, vectors) = hermitian_eigen(h0)?;
    let vh = vectors.adjoint();
    let dim = h0.nrows();
    Ok((0..=n)
        .map(|k| {
            let mut scaled = vectors.clone();
            for col in 0..dim {
                let phase = C64::from_polar(1.0, -values[col] * h * k as f64);
                for x in scaled.column_mut(col).iter_mut() {
                    *x *= phase;
                }
            }
            scaled * &vh
        })
        .collect())
}

/// Block lower-triangular system `(I + A) U = U0`, with blocks generated on
/// demand: `A[i,j] = w_ij G[i-j] K_j`, `K_j = Σ_c ε_c(t_j) coupling_c`.
#[derive(Debug, Clone)]
pub struct VolterraSystem {
    pub grid: TimeGrid,
    /// Free propagator indexed by `i - j`.
    pub green: Vec<CMat>,
    pub couplings: Vec<CMat>,
    /// One amplitude sequence per coupling, each of length `N + 1`.
    pub amplitudes: Vec<Vec<f64>>,
    /// Free evolution of the tracked columns, one block per node.
    pub u0_stack: Vec<CMat>,
    kernel: Vec<CMat>,
}

impl VolterraSystem {
    pub fn new(
        grid: TimeGrid,
        green: Vec<CMat>,
        couplings: Vec<CMat>,
        amplitudes: Vec<Vec<f64>>,
        initial_columns: &CMat,
    ) -> Result<Self> {
        let n = grid.len();
        if green.len() < n {
            return invalid(format!("need {n} Green blocks, got {}", green.len()));
        }
        let dim = green[0].nrows();
        if initial_columns.nrows() != dim {
            return invalid(format!(
                "initial columns have {} rows, system dimension is {dim}",
                initial_columns.nrows()
            ));
        }
        if couplings.len() != amplitudes.len() {
            return invalid("one amplitude sequence per coupling required");
        }
        for (k, (cp, amp)) in couplings.iter().zip(&amplitudes).enumerate() {
            if cp.nrows() != dim || cp.ncols() != dim {
                return invalid(format!("coupling {k} has shape {}x{}, expected {dim}x{dim}", cp.nrows(), cp.ncols()));
            }
            if amp.len() != n {
                return invalid(format!("control {k} has {} values, grid has {n} nodes", amp.len()));
            }
        }
        let kernel = (0..n)
            .map(|j| {
                let mut k = CMat::zeros(dim, dim);
                for (cp, amp) in couplings.iter().zip(&amplitudes) {
                    if amp[j] != 0.0 {
                        k += cp * c(amp[j], 0.0);
                    }
                }
                k
            })
            .collect();
        let u0_stack = (0..n).map(|i| &green[i] * initial_columns).collect();
        Ok(Self { grid, green, couplings, amplitudes, u0_stack, kernel })
    }

    pub fn dim(&self) -> usize {
        self.green[0].nrows()
    }

    pub fn columns(&self) -> usize {
        self.u0_stack[0].ncols()
    }

    pub fn nodes(&self) -> usize {
        self.grid.len()
    }

    /// `K_j`, the summed control generator at node `j`.
    pub fn kernel(&self, j: usize) -> &CMat {
        &self.kernel[j]
    }

    pub fn block(&self, i: usize, j: usize) -> CMat {
        let w = self.grid.volterra_weight(i, j);
        if w == 0.0 {
            return CMat::zeros(self.dim(), self.dim());
        }
        &self.green[i - j] * &self.kernel[j] * c(w, 0.0)
    }

    /// Dense `A`; only for small instances and tests.
    pub fn a_matrix(&self) -> CMat {
        let (l, n) = (self.dim(), self.nodes());
        let mut a = CMat::zeros(l * n, l * n);
        for i in 0..n {
            for j in 0..=i {
                a.view_mut((i * l, j * l), (l, l)).copy_from(&self.block(i, j));
            }
        }
        a
    }

    fn diagonal_solve(&self, i: usize, rhs: CMat, transpose: bool) -> Result<CMat> {
        let w = self.grid.volterra_weight(i, i);
        if w == 0.0 {
            return Ok(rhs);
        }
        let mut d = &self.kernel[i] * c(w, 0.0);
        if transpose {
            d.transpose_mut();
        }
        for k in 0..d.nrows() {
            d[(k, k)] += c(1.0, 0.0);
        }
        d.lu().solve(&rhs).ok_or_else(|| {
            Error::Numerical(format!(
                "singular diagonal block at node {i} (|K_i| = {:.3e}, h = {:.3e})",
                frobenius(&self.kernel[i]),
                self.grid.step()
            ))
        })
    }
}

/// `U(t_i, t0)` applied to the tracked columns, one block per node.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySolution {
    pub blocks: Vec<CMat>,
}

impl TrajectorySolution {
    pub fn final_block(&self) -> &CMat {
        self.blocks.last().expect("trajectory has at least one node")
    }

    pub fn populations(&self, column: usize) -> Vec<Vec<f64>> {
        self.blocks
            .iter()
            .map(|b| b.column(column).iter().map(|z| z.norm_sqr()).collect())
            .collect()
    }

    pub fn stacked(&self) -> CMat {
        stack(&self.blocks)
    }

    /// `max_i |U_i† U_i - I|_F` over the tracked columns.
    pub fn unitarity_residual(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                let g = b.adjoint() * b;
                frobenius(&(&g - CMat::identity(g.nrows(), g.ncols())))
            })
            .fold(0.0, f64::max)
    }
}

pub fn stack(blocks: &[CMat]) -> CMat {
    let (l, m) = (blocks[0].nrows(), blocks[0].ncols());
    let mut out = CMat::zeros(l * blocks.len(), m);
    for (i, b) in blocks.iter().enumerate() {
        out.view_mut((i * l, 0), (l, m)).copy_from(b);
    }
    out
}

pub fn unstack(m: &CMat, block_rows: usize) -> Vec<CMat> {
    (0..m.nrows() / block_rows)
        .map(|i| m.rows(i * block_rows, block_rows).into_owned())
        .collect()
}

/// Closed single-control system, `K = i Hc`, ε as given (no shift).
pub fn assemble_volterra(
    system: &SystemSpec,
    grid: &TimeGrid,
    pulse: &Pulse,
    initial_columns: &CMat,
) -> Result<VolterraSystem> {
    if pulse.len() != grid.len() {
        return invalid(format!("pulse has {} values, grid has {} nodes", pulse.len(), grid.len()));
    }
    assemble_multi(&system.h0, &[system.hc.clone()], &[pulse.values.clone()], grid, initial_columns)
}

/// Closed system with several controls, `H = h0 + Σ_c ε_c hc_c`.
pub fn assemble_multi(
    h0: &CMat,
    hcs: &[CMat],
    amplitudes: &[Vec<f64>],
    grid: &TimeGrid,
    initial_columns: &CMat,
) -> Result<VolterraSystem> {
    if h0.nrows() != h0.ncols() {
        return invalid("h0 must be square");
    }
    let green = free_evolution_table(h0, grid.step(), grid.n_steps)?;
    let couplings = hcs.iter().map(|hc| hc * I).collect();
    VolterraSystem::new(*grid, green, couplings, amplitudes.to_vec(), initial_columns)
}

/// Block forward substitution.
pub fn solve_dynamics(vs: &VolterraSystem) -> Result<TrajectorySolution> {
    let n = vs.nodes();
    let mut blocks: Vec<CMat> = Vec::with_capacity(n);
    // K_j U_j, reused by every later row.
    let mut driven: Vec<CMat> = Vec::with_capacity(n);
    for i in 0..n {
        let mut rhs = vs.u0_stack[i].clone();
        for (j, kj_uj) in driven.iter().enumerate() {
            let w = vs.grid.volterra_weight(i, j);
            if w != 0.0 {
                rhs -= (&vs.green[i - j] * kj_uj) * c(w, 0.0);
            }
        }
        let ui = vs.diagonal_solve(i, rhs, false)?;
        if ui.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numerical(format!("non-finite state at node {i}")));
        }
        driven.push(vs.kernel(i) * &ui);
        blocks.push(ui);
    }
    Ok(TrajectorySolution { blocks })
}

/// Solves `(I + A)ᵀ Λ = seed` by block backward substitution.
pub fn solve_adjoint(vs: &VolterraSystem, seed: &[CMat]) -> Result<Vec<CMat>> {
    let n = vs.nodes();
    if seed.len() != n {
        return invalid(format!("adjoint seed has {} blocks, expected {n}", seed.len()));
    }
    let mut lam: Vec<CMat> = vec![CMat::zeros(0, 0); n];
    for i in (0..n).rev() {
        // Σ_{k>i} w_ki G[k-i]ᵀ Λ_k, then the common factor K_iᵀ.
        let mut acc = CMat::zeros(vs.dim(), seed[i].ncols());
        for (k, lk) in lam.iter().enumerate().skip(i + 1) {
            let w = vs.grid.volterra_weight(k, i);
            if w != 0.0 {
                acc += (vs.green[k - i].transpose() * lk) * c(w, 0.0);
            }
        }
        let rhs = &seed[i] - vs.kernel(i).transpose() * acc;
        lam[i] = vs.diagonal_solve(i, rhs, true)?;
    }
    Ok(lam)
}

/// `∂f/∂ε_c(t_j)` for every control `c` and node `j`, given the trajectory and
/// the adjoint solution seeded with the holomorphic derivative `∂f/∂U`.
pub fn control_gradient(vs: &VolterraSystem, traj: &TrajectorySolution, lam: &[CMat]) -> Vec<Vec<f64>> {
    let n = vs.nodes();
    let mut out = vec![vec![0.0; n]; vs.couplings.len()];
    for j in 0..n {
        let mut s = CMat::zeros(vs.dim(), traj.blocks[j].ncols());
        for (i, li) in lam.iter().enumerate().skip(j) {
            let w = vs.grid.volterra_weight(i, j);
            if w != 0.0 {
                s += (vs.green[i - j].transpose() * li) * c(w, 0.0);
            }
        }
        for (cidx, cp) in vs.couplings.iter().enumerate() {
            let y = cp * &traj.blocks[j];
            let inner: C64 = s.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
            out[cidx][j] = -2.0 * inner.re;
        }
    }
    out
}

/// Convenience wrapper: assemble and solve a closed single-control system.
pub fn simulate(system: &SystemSpec, grid: &TimeGrid, pulse: &Pulse, initial_columns: &CMat) -> Result<TrajectorySolution> {
    solve_dynamics(&assemble_volterra(system, grid, pulse, initial_columns)?)
}

/// Simulates in the frame where the control starts at zero: drift
/// `h0 + eps_min hc`, amplitudes `ε - eps_min`. This is the discretization
/// used by the bound, so objective values are directly comparable.
pub fn simulate_shifted(system: &SystemSpec, grid: &TimeGrid, pulse: &Pulse, initial_columns: &CMat) -> Result<TrajectorySolution> {
    if pulse.len() != grid.len() {
        return invalid(format!("pulse has {} values, grid has {} nodes", pulse.len(), grid.len()));
    }
    let h0_eff = &system.h0 + &system.hc * c(system.eps_min, 0.0);
    let shifted: Vec<f64> = pulse.values.iter().map(|v| v - system.eps_min).collect();
    solve_dynamics(&assemble_multi(&h0_eff, &[system.hc.clone()], &[shifted], grid, initial_columns)?)
}

/// Replaces the pulse by a bang–bang pulse with the same window averages:
/// each window of length `tau` holds `eps_min` for `t' = (eps_max τ - M)/(eps_max - eps_min)`
/// and `eps_max` afterwards. Windows are left-closed; the last node belongs to the last window.
pub fn binarize_pulse(pulse: &Pulse, grid: &TimeGrid, tau: f64, eps_min: f64, eps_max: f64) -> Result<Pulse> {
    if eps_min >= eps_max {
        return invalid("binarize needs eps_min < eps_max");
    }
    if pulse.len() != grid.len() {
        return invalid("pulse length does not match the grid");
    }
    pulse.check_bounds(eps_min, eps_max)?;
    let h = grid.step();
    let ratio = tau / h;
    let q = ratio.round() as usize;
    if q == 0 || (ratio - q as f64).abs() > 1e-9 * ratio.max(1.0) {
        return invalid(format!("tau = {tau} is not an integer multiple of the grid step {h}"));
    }
    if grid.n_steps % q != 0 {
        return invalid(format!("{} steps do not split into windows of {q} steps", grid.n_steps));
    }
    let windows = grid.n_steps / q;
    let mut out = vec![0.0; grid.len()];
    for k in 0..windows {
        let start = k * q;
        let integral: f64 = (0..=q)
            .map(|m| {
                let w = if m == 0 || m == q { 0.5 * h } else { h };
                w * pulse.values[start + m]
            })
            .sum();
        let t_min = ((eps_max * tau - integral) / (eps_max - eps_min)).clamp(0.0, tau);
        let last = if k + 1 == windows { q } else { q - 1 };
        for m in 0..=last {
            // the tolerance keeps round-off in the window integral from flipping a node
            out[start + m] = if (m as f64) * h < t_min - 1e-12 * tau { eps_min } else { eps_max };
        }
    }
    Ok(Pulse::new(out))
}

/// `(Σ w_i |a_i - b_i|²)^{1/2} / (Σ w_i |b_i|²)^{1/2}` with outer trapezoid weights.
pub fn trajectory_difference(a: &TrajectorySolution, b: &TrajectorySolution, grid: &TimeGrid) -> Result<f64> {
    if a.blocks.len() != grid.len() || b.blocks.len() != grid.len() {
        return invalid("trajectories do not match the grid");
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..grid.len() {
        if a.blocks[i].shape() != b.blocks[i].shape() {
            return invalid(format!("block shapes differ at node {i}"));
        }
        let w = grid.outer_weight(i);
        num += w * frobenius(&(&a.blocks[i] - &b.blocks[i])).powi(2);
        den += w * frobenius(&b.blocks[i]).powi(2);
    }
    if den == 0.0 {
        return invalid("reference trajectory has zero norm");
    }
    Ok((num / den).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{identity, random_complex, random_hermitian, real_diag};
    use crate::model::build_time_grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_system(rng: &mut ChaCha8Rng, l: usize) -> SystemSpec {
        SystemSpec { h0: random_hermitian(l, rng), hc: random_hermitian(l, rng), eps_min: -1.0, eps_max: 1.0 }
    }

    #[test]
    fn free_evolution_zero_time_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = free_evolution(&random_hermitian(3, &mut rng), 0.0).unwrap();
        assert!(frobenius(&(u - identity(3))) < 1e-14);
    }

    #[test]
    fn free_evolution_diagonal() {
        let u = free_evolution(&real_diag(&[0.0, 1.9, 3.7]), 1.0).unwrap();
        assert!((u[(1, 1)] - C64::from_polar(1.0, -1.9)).norm() < 1e-14);
        assert!((u[(2, 2)] - C64::from_polar(1.0, -3.7)).norm() < 1e-14);
        assert!(u[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn table_matches_direct_exponentials() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h0 = random_hermitian(4, &mut rng);
        let tab = free_evolution_table(&h0, 0.3, 5).unwrap();
        for (k, u) in tab.iter().enumerate() {
            let direct = free_evolution(&h0, 0.3 * k as f64).unwrap();
            assert!(frobenius(&(u - direct)) < 1e-12);
        }
    }

    #[test]
    fn zero_pulse_gives_free_evolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sys = toy_system(&mut rng, 3);
        let grid = build_time_grid(0.0, 2.0, 10).unwrap();
        let vs = assemble_volterra(&sys, &grid, &Pulse::constant(&grid, 0.0), &identity(3)).unwrap();
        assert_eq!(frobenius(&vs.a_matrix()), 0.0);
        let traj = solve_dynamics(&vs).unwrap();
        for (i, b) in traj.blocks.iter().enumerate() {
            let exact = free_evolution(&sys.h0, grid.node(i)).unwrap();
            assert!(frobenius(&(b - exact)) < 1e-12);
        }
    }

    #[test]
    fn single_step_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sys = toy_system(&mut rng, 2);
        let grid = build_time_grid(0.0, 0.4, 1).unwrap();
        let eps = 0.7;
        let vs = assemble_volterra(&sys, &grid, &Pulse::constant(&grid, eps), &identity(2)).unwrap();
        let h = 0.4;
        let u0 = free_evolution(&sys.h0, h).unwrap();
        let b10 = &u0 * &sys.hc * c(0.0, 0.5 * h * eps);
        let b11 = &sys.hc * c(0.0, 0.5 * h * eps);
        assert!(frobenius(&(vs.block(1, 0) - b10)) < 1e-14);
        assert!(frobenius(&(vs.block(1, 1) - b11)) < 1e-14);
        assert_eq!(frobenius(&vs.block(0, 0)), 0.0);
        assert_eq!(frobenius(&vs.block(0, 1)), 0.0);
    }

    #[test]
    fn forward_and_adjoint_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sys = toy_system(&mut rng, 3);
        let grid = build_time_grid(0.0, 1.5, 7).unwrap();
        let pulse = Pulse::new((0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect());
        let init = random_complex(3, 2, &mut rng);
        let vs = assemble_volterra(&sys, &grid, &pulse, &init).unwrap();
        let a = vs.a_matrix();
        let id = identity(a.nrows());
        let traj = solve_dynamics(&vs).unwrap();
        let res = frobenius(&(((&id + &a) * traj.stacked()) - stack(&vs.u0_stack)));
        assert!(res < 1e-12 * frobenius(&stack(&vs.u0_stack)), "{res}");

        let seed: Vec<CMat> = (0..grid.len()).map(|_| random_complex(3, 2, &mut rng)).collect();
        let lam = solve_adjoint(&vs, &seed).unwrap();
        let res = frobenius(&(((&id + &a).transpose() * stack(&lam)) - stack(&seed)));
        assert!(res < 1e-12 * frobenius(&stack(&seed)), "{res}");
    }

    #[test]
    fn adjoint_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let sys = toy_system(&mut rng, 2);
        let grid = build_time_grid(0.0, 1.0, 4).unwrap();
        let vs = assemble_volterra(&sys, &grid, &Pulse::constant(&grid, 0.5), &identity(2)).unwrap();
        let zero: Vec<CMat> = vec![CMat::zeros(2, 2); grid.len()];
        let lam = solve_adjoint(&vs, &zero).unwrap();
        assert!(lam.iter().all(|l| frobenius(l) == 0.0));

        let free = assemble_volterra(&sys, &grid, &Pulse::constant(&grid, 0.0), &identity(2)).unwrap();
        let seed: Vec<CMat> = (0..grid.len()).map(|_| random_complex(2, 2, &mut rng)).collect();
        assert_eq!(solve_adjoint(&free, &seed).unwrap(), seed);
    }

    #[test]
    fn binarize_midpoint_and_max() {
        let grid = build_time_grid(0.0, 4.0, 40).unwrap();
        let mid = binarize_pulse(&Pulse::constant(&grid, 0.0), &grid, 1.0, -1.0, 1.0).unwrap();
        // window of 10 steps, lower value for the first 5 nodes
        assert_eq!(&mid.values[0..10], &[-1.0, -1.0, -1.0, -1.0, -1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let top = binarize_pulse(&Pulse::constant(&grid, 1.0), &grid, 1.0, -1.0, 1.0).unwrap();
        assert!(top.values.iter().all(|&v| v == 1.0));
        assert!(binarize_pulse(&Pulse::constant(&grid, 2.0), &grid, 1.0, -1.0, 1.0).is_err());
        assert!(binarize_pulse(&Pulse::constant(&grid, 0.0), &grid, 0.33, -1.0, 1.0).is_err());
    }

    #[test]
    fn difference_trivial_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let grid = build_time_grid(0.0, 1.0, 3).unwrap();
        let a = TrajectorySolution { blocks: (0..4).map(|_| random_complex(2, 1, &mut rng)).collect() };
        let neg = TrajectorySolution { blocks: a.blocks.iter().map(|b| -b).collect() };
        assert_eq!(trajectory_difference(&a, &a, &grid).unwrap(), 0.0);
        assert!((trajectory_difference(&a, &neg, &grid).unwrap() - 2.0).abs() < 1e-14);
        let zero = TrajectorySolution { blocks: vec![CMat::zeros(2, 1); 4] };
        assert!(trajectory_difference(&a, &zero, &grid).is_err());
    }
}
