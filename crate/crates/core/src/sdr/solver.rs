//! Infeasible primal-dual interior-point method (HKM direction, Mehrotra
//! predictor-corrector) for the lifted problems.
//!
//! Primal: `max <C, X>` s.t. `<A_k, X> = b_k` (k ∈ E), `<A_k, X> + s_k = b_k`
//! (k ∈ I), `X ⪰ 0`, `s >= 0`. Dual: `min bᵀy` s.t. `Σ y_k A_k - Z = C`,
//! `Z ⪰ 0`, `y_I >= 0`. The dual objective is reported as the bound.

use std::fmt;

use nalgebra::{Cholesky, DMatrix, DVector};

use super::lift::SdpProblem;
use crate::qcqp::Sense;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    /// Stopped before reaching the requested accuracy; the dual value is still reported.
    Inaccurate,
    Infeasible,
    Unbounded,
}

impl fmt::Display for SdpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SdpStatus::Optimal => "optimal",
            SdpStatus::Inaccurate => "inaccurate",
            SdpStatus::Infeasible => "infeasible",
            SdpStatus::Unbounded => "unbounded",
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Relative duality gap and relative residual target.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-7, max_iters: 150 }
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    /// Dual objective (plus the objective constant).
    pub bound: f64,
    pub primal_value: f64,
    /// Relative complementarity gap `(<X,Z> + sᵀy) / (1 + |pobj| + |dobj|)`
    /// at exit, the quantity compared against the tolerance.
    pub duality_gap: f64,
    /// `|primal - dual|` in objective units.
    pub objective_gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    /// `λ₂/λ₁` of the block of `Y` without the homogenizing row.
    pub rank_ratio: f64,
    pub iterations: usize,
    pub y_matrix: DMatrix<f64>,
    pub dual: DVector<f64>,
    /// Norm of the normalized infeasibility certificate, when detected.
    pub certificate_norm: Option<f64>,
    pub note: String,
}

impl SdpSolution {
    fn trivial(status: SdpStatus, bound: f64, dim: usize, note: String) -> Self {
        Self {
            status,
            bound,
            primal_value: bound,
            duality_gap: 0.0,
            objective_gap: 0.0,
            primal_infeasibility: 0.0,
            dual_infeasibility: 0.0,
            rank_ratio: 0.0,
            iterations: 0,
            y_matrix: DMatrix::zeros(dim, dim),
            dual: DVector::zeros(0),
            certificate_norm: None,
            note,
        }
    }
}

type Terms = Vec<(usize, usize, f64)>;

/// `(relative gap, pinf, dinf, pobj, dobj)` in scaled units.
type Progress = (f64, f64, f64, f64, f64);

struct Operators {
    v: DMatrix<f64>,
    cons: Vec<Terms>,
    obj: Terms,
}

impl Operators {
    /// `Vᵀ S V`.
    fn gram(&self, s: &DMatrix<f64>) -> DMatrix<f64> {
        self.v.transpose() * (s * &self.v)
    }

    fn eval(terms: &Terms, w: &DMatrix<f64>) -> f64 {
        terms.iter().map(|&(a, b, k)| k * w[(a, b)]).sum()
    }

    /// `𝒜(S)` from `W = Vᵀ S V`.
    fn apply(&self, w: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(self.cons.len(), self.cons.iter().map(|t| Self::eval(t, w)))
    }

    /// `Σ_k y_k A_k`.
    fn adjoint(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let nv = self.v.ncols();
        let mut s = DMatrix::zeros(nv, nv);
        for (k, terms) in self.cons.iter().enumerate() {
            if y[k] == 0.0 {
                continue;
            }
            for &(a, b, kap) in terms {
                let h = 0.5 * y[k] * kap;
                s[(a, b)] += h;
                s[(b, a)] += h;
            }
        }
        &self.v * s * self.v.transpose()
    }

    fn objective_matrix(&self) -> DMatrix<f64> {
        let nv = self.v.ncols();
        let mut s = DMatrix::zeros(nv, nv);
        for &(a, b, kap) in &self.obj {
            s[(a, b)] += 0.5 * kap;
            s[(b, a)] += 0.5 * kap;
        }
        &self.v * s * self.v.transpose()
    }

    /// `|Σ κ sym(v_a v_bᵀ)|_F` from the Gram matrix `G = Vᵀ V`.
    fn frobenius(terms: &Terms, g: &DMatrix<f64>) -> f64 {
        let mut s = 0.0;
        for &(a, b, k) in terms {
            for &(c, d, l) in terms {
                s += k * l * 0.5 * (g[(a, c)] * g[(b, d)] + g[(a, d)] * g[(b, c)]);
            }
        }
        s.max(0.0).sqrt()
    }
}

/// Dense Cholesky of the Schur complement (blocked, much faster than the
/// unblocked factorization for the sizes met here).
struct SchurFactor(faer::linalg::solvers::Llt<f64>);

impl SchurFactor {
    fn new(m: &DMatrix<f64>) -> Option<Self> {
        let fm = faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
        fm.llt(faer::Side::Lower).ok().map(SchurFactor)
    }

    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        use faer::linalg::solvers::Solve;
        let mut col = faer::Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        self.0.solve_in_place(col.as_mut());
        DVector::from_fn(rhs.len(), |i, _| col[(i, 0)])
    }
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Largest `α <= 1/γ` keeping `X + α ΔX` positive definite.
fn max_step_psd(chol: &Cholesky<f64, nalgebra::Dyn>, dx: &DMatrix<f64>) -> f64 {
    let l = chol.l();
    let t = l.solve_lower_triangular(dx).expect("Cholesky factor is nonsingular");
    let q = l.solve_lower_triangular(&t.transpose()).expect("Cholesky factor is nonsingular");
    let q = sym(&q);
    let lmin = q.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

fn max_step_vec(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(v, d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

/// `λ₂/λ₁` of `Y[1.., 1..]`.
pub fn rank_ratio(y: &DMatrix<f64>) -> f64 {
    let n = y.nrows();
    if n < 3 {
        return 0.0;
    }
    let block = sym(&y.view((1, 1), (n - 1, n - 1)).into_owned());
    let mut ev: Vec<f64> = block.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    if ev[0] <= 0.0 {
        0.0
    } else {
        (ev[1].max(0.0)) / ev[0]
    }
}

pub fn solve_sdp(p: &SdpProblem, opts: &SolverOptions) -> SdpSolution {
    let d = p.dim;
    if let Some(why) = &p.contradiction {
        let mut sol = SdpSolution::trivial(SdpStatus::Infeasible, f64::NEG_INFINITY, d, why.clone());
        sol.certificate_norm = Some(1.0);
        return sol;
    }
    let nv = p.vectors.len();
    let mut v = DMatrix::zeros(d, nv);
    for (k, vec) in p.vectors.iter().enumerate() {
        for &(i, x) in vec {
            v[(i, k)] += x;
        }
    }
    let gram0 = v.transpose() * &v;

    // Normalize constraints and objective.
    let m = p.constraints.len();
    let mut cons = Vec::with_capacity(m);
    let mut b = DVector::zeros(m);
    let mut ineq: Vec<usize> = Vec::new();
    for (k, c) in p.constraints.iter().enumerate() {
        // Scaling by |rhs| as well keeps forms with tiny coefficients (early-node
        // caps) from blowing up the starting point.
        let nrm = Operators::frobenius(&c.matrix.terms, &gram0).max(c.rhs.abs());
        let scale = if nrm > 0.0 { 1.0 / nrm } else { 1.0 };
        cons.push(c.matrix.terms.iter().map(|&(a, bb, kap)| (a, bb, kap * scale)).collect::<Terms>());
        b[k] = c.rhs * scale;
        if c.sense == Sense::LessEqual {
            ineq.push(k);
        }
    }
    let c_norm = Operators::frobenius(&p.objective.terms, &gram0);
    if c_norm == 0.0 {
        // Constant objective: the bound is the constant whenever the problem is feasible.
        return SdpSolution::trivial(SdpStatus::Optimal, p.objective_constant, d, "constant objective".into());
    }
    let cscale = 1.0 / c_norm;
    let ops = Operators {
        v,
        cons,
        obj: p.objective.terms.iter().map(|&(a, bb, kap)| (a, bb, kap * cscale)).collect(),
    };
    let cmat = ops.objective_matrix();
    let ni = ineq.len();
    let b_norm = b.norm();

    let bmax = b.iter().fold(0.0f64, |acc, x| acc.max(1.0 + x.abs()));
    let xi = 10f64.max((d as f64).sqrt()).max(d as f64 * bmax / 2.0);
    let eta = 10f64.max((d as f64).sqrt());
    let mut x = DMatrix::identity(d, d) * xi;
    let mut z = DMatrix::identity(d, d) * eta;
    let mut y = DVector::zeros(m);
    let mut s = DVector::from_element(ni, xi);
    for &k in &ineq {
        y[k] = eta;
    }

    let finish = |status: SdpStatus, x: &DMatrix<f64>, y: &DVector<f64>, it: usize, (relgap, pinf, dinf, pobj, dobj): Progress, note: String, cert: Option<f64>| {
        SdpSolution {
            status,
            bound: if status == SdpStatus::Infeasible { f64::NEG_INFINITY } else { dobj / cscale + p.objective_constant },
            primal_value: pobj / cscale + p.objective_constant,
            duality_gap: relgap,
            objective_gap: (pobj - dobj).abs() / cscale,
            primal_infeasibility: pinf,
            dual_infeasibility: dinf,
            rank_ratio: rank_ratio(x),
            iterations: it,
            y_matrix: x.clone(),
            dual: y.clone(),
            certificate_norm: cert,
            note,
        }
    };

    let gamma = 0.98;
    let mut last: Progress = (f64::INFINITY, f64::INFINITY, f64::INFINITY, 0.0, 0.0);
    let mut stall = 0;
    let (mut best_merit, mut best_at) = (f64::INFINITY, 0);
    for it in 0..opts.max_iters {
        let aty = ops.adjoint(&y);
        let rd = &aty - &z - &cmat;
        let wx = ops.gram(&x);
        let ax = ops.apply(&wx);
        let mut rp = &b - &ax;
        for (j, &k) in ineq.iter().enumerate() {
            rp[k] -= s[j];
        }
        let pobj = inner(&cmat, &x);
        let dobj = b.dot(&y);
        let y_i = DVector::from_iterator(ni, ineq.iter().map(|&k| y[k]));
        let mu = (inner(&x, &z) + s.dot(&y_i)) / (d + ni) as f64;
        let gap = mu * (d + ni) as f64 / (1.0 + pobj.abs() + dobj.abs());
        let pinf = rp.norm() / (1.0 + b_norm);
        let dinf = rd.norm() / (1.0 + 1.0);
        log::trace!("it {it}: mu {mu:.2e} pobj {pobj:.9e} dobj {dobj:.9e} gap {gap:.2e} pinf {pinf:.2e} dinf {dinf:.2e}");
        last = (gap, pinf, dinf, pobj, dobj);
        if gap <= opts.tol && pinf <= opts.tol && dinf <= opts.tol {
            return finish(SdpStatus::Optimal, &x, &y, it, last, String::new(), None);
        }
        // Rays: a diverging objective whose normalized residual vanishes while
        // the other side stays infeasible.
        let loose = opts.tol.sqrt();
        if dobj < -1e5 && pinf > loose {
            let cert = (&rd + &cmat).norm() / -dobj;
            if cert < 1e-5 {
                return finish(SdpStatus::Infeasible, &x, &y, it, last, "dual ray detected".into(), Some(cert));
            }
        }
        if pobj > 1e5 && dinf > loose && (&b - &rp).norm() / pobj < 1e-5 {
            let mut sol = finish(SdpStatus::Unbounded, &x, &y, it, last, "primal ray detected".into(), None);
            sol.bound = f64::INFINITY;
            return sol;
        }
        let merit = gap.max(pinf).max(dinf);
        if merit < 0.5 * best_merit {
            (best_merit, best_at) = (merit, it);
        } else if it - best_at > 30 {
            return finish(SdpStatus::Inaccurate, &x, &y, it, last, "no progress".into(), None);
        }

        let zchol = match Cholesky::new(z.clone()) {
            Some(c) => c,
            None => return finish(SdpStatus::Inaccurate, &x, &y, it, last, "lost positive definiteness of Z".into(), None),
        };
        let xchol = match Cholesky::new(x.clone()) {
            Some(c) => c,
            None => return finish(SdpStatus::Inaccurate, &x, &y, it, last, "lost positive definiteness of X".into(), None),
        };
        let zi = sym(&zchol.inverse());
        let wz = ops.gram(&zi);

        // Schur complement M_kl = Tr(A_k X A_l Z⁻¹).
        let mut schur = DMatrix::zeros(m, m);
        for k in 0..m {
            for l in k..m {
                let mut acc = 0.0;
                for &(a, bb, ka) in &ops.cons[k] {
                    for &(c, dd, kc) in &ops.cons[l] {
                        acc += ka
                            * kc
                            * (wx[(bb, c)] * wz[(dd, a)] + wx[(bb, dd)] * wz[(c, a)] + wx[(a, c)] * wz[(dd, bb)] + wx[(a, dd)] * wz[(c, bb)]);
                    }
                }
                schur[(k, l)] = 0.25 * acc;
                schur[(l, k)] = 0.25 * acc;
            }
        }
        for (j, &k) in ineq.iter().enumerate() {
            schur[(k, k)] += s[j] / y[k];
        }
        let diag_max = schur.diagonal().iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let mut ridge = 0.0;
        let mchol = loop {
            let mut mm = schur.clone();
            for k in 0..m {
                mm[(k, k)] += ridge;
            }
            if let Some(c) = SchurFactor::new(&mm) {
                break Some(c);
            }
            ridge = if ridge == 0.0 { 1e-14 * diag_max.max(1e-300) } else { ridge * 100.0 };
            if ridge > 1e-4 * diag_max {
                break None;
            }
        };
        let Some(mchol) = mchol else {
            return finish(SdpStatus::Inaccurate, &x, &y, it, last, "Schur complement is singular".into(), None);
        };

        let x_rd_zi = sym(&(&x * &rd * &zi));
        let solve = |rc: &DMatrix<f64>, rcs: &DVector<f64>| {
            let mut rhs = ops.apply(&ops.gram(&(rc - &x_rd_zi))) - &rp;
            for (j, &k) in ineq.iter().enumerate() {
                rhs[k] += rcs[j];
            }
            let dy = mchol.solve(&rhs);
            let dz = ops.adjoint(&dy) + &rd;
            let dx = rc - sym(&(&x * &dz * &zi));
            let ds = DVector::from_iterator(ni, ineq.iter().enumerate().map(|(j, &k)| rcs[j] - s[j] / y[k] * dy[k]));
            (dx, dy, dz, ds)
        };
        let steps = |dx: &DMatrix<f64>, dz: &DMatrix<f64>, dy: &DVector<f64>, ds: &DVector<f64>| {
            let dyi = DVector::from_iterator(ni, ineq.iter().map(|&k| dy[k]));
            let ap = max_step_psd(&xchol, dx).min(max_step_vec(&s, ds));
            let ad = max_step_psd(&zchol, dz).min(max_step_vec(&y_i, &dyi));
            (ap, ad)
        };

        // predictor
        let rc = -&x;
        let rcs = -&s;
        let (dxa, dya, dza, dsa) = solve(&rc, &rcs);
        let (ap, ad) = steps(&dxa, &dza, &dya, &dsa);
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let dyia = DVector::from_iterator(ni, ineq.iter().map(|&k| dya[k]));
        let mu_aff = (inner(&(&x + &dxa * ap), &(&z + &dza * ad)) + (&s + &dsa * ap).dot(&(&y_i + &dyia * ad))) / (d + ni) as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // Corrector. With many inactive inequalities the second-order term keeps
        // dragging X toward the boundary; there, fall back to the plain centering
        // direction whenever it allows the longer step. Equality-only problems keep
        // pure Mehrotra, whose aggressive steps are what exposes primal rays.
        let rc_center = &zi * (sigma * mu) - &x;
        let rcs_center = DVector::from_iterator(ni, (0..ni).map(|j| (sigma * mu - s[j] * y_i[j]) / y_i[j]));
        let rc = &rc_center - sym(&(&dxa * &dza * &zi));
        let rcs = DVector::from_iterator(ni, (0..ni).map(|j| rcs_center[j] - dsa[j] * dyia[j] / y_i[j]));
        let (mut dx, mut dy, mut dz, mut ds) = solve(&rc, &rcs);
        let (mut ap, mut ad) = steps(&dx, &dz, &dy, &ds);
        if ni > 0 && ap.min(ad) < 0.9 {
            let alt = solve(&rc_center, &rcs_center);
            let (ap2, ad2) = steps(&alt.0, &alt.2, &alt.1, &alt.3);
            if ap2.min(ad2) > ap.min(ad) {
                (dx, dy, dz, ds) = alt;
                (ap, ad) = (ap2, ad2);
            }
        }
        let ap = (gamma * ap).min(1.0);
        let ad = (gamma * ad).min(1.0);
        if ap < 1e-10 && ad < 1e-10 {
            stall += 1;
            if stall > 3 {
                return finish(SdpStatus::Inaccurate, &x, &y, it, last, "step length collapsed".into(), None);
            }
        } else {
            stall = 0;
        }
        // Round-off can leave the boundary-adjacent iterate indefinite; back off.
        let (mut ap, mut ad) = (ap, ad);
        let mut xn = sym(&(&x + &dx * ap));
        while Cholesky::new(xn.clone()).is_none() && ap > 1e-12 {
            ap *= 0.5;
            xn = sym(&(&x + &dx * ap));
        }
        let mut zn = sym(&(&z + &dz * ad));
        while Cholesky::new(zn.clone()).is_none() && ad > 1e-12 {
            ad *= 0.5;
            zn = sym(&(&z + &dz * ad));
        }
        x = xn;
        z = zn;
        s += &ds * ap;
        y += &dy * ad;
    }
    finish(SdpStatus::Inaccurate, &x, &y, opts.max_iters, last, "iteration limit".into(), None)
}
