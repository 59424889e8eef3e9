use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::linalg::C64;
use crate::qcqp::{Affine, QcqpProblem, QuadraticForm, Restriction, Sense};

/// `ψᵀ q ψ + gᵀ ψ + c` with `ψ = [Re φ; Im φ]`.
#[derive(Debug, Clone)]
pub struct RealQuadraticForm {
    pub q: DMatrix<f64>,
    pub g: DVector<f64>,
    pub c: f64,
    pub sense: Sense,
}

impl RealQuadraticForm {
    pub fn eval(&self, psi: &DVector<f64>) -> f64 {
        psi.dot(&(&self.q * psi)) + self.g.dot(psi) + self.c
    }
}

/// Dense complex-to-real embedding of a form over `C^n`.
pub fn realify(form: &QuadraticForm, n: usize) -> RealQuadraticForm {
    let d = form.to_dense(n);
    let mut q = DMatrix::zeros(2 * n, 2 * n);
    for r in 0..n {
        for col in 0..n {
            let z = d.b[(r, col)];
            q[(r, col)] = z.re;
            q[(n + r, n + col)] = z.re;
            q[(r, n + col)] = -z.im;
            q[(n + r, col)] = z.im;
        }
    }
    let q = (&q + q.transpose()) * 0.5;
    let mut g = DVector::zeros(2 * n);
    for j in 0..n {
        g[j] = d.beta[j].re;
        g[n + j] = d.beta[j].im;
    }
    RealQuadraticForm { q, g, c: d.c, sense: form.sense }
}

/// `[1; Re φ; Im φ]` for a complex vector.
pub fn realified_point(phi: &[C64]) -> DVector<f64> {
    let n = phi.len();
    let mut z = DVector::zeros(2 * n + 1);
    z[0] = 1.0;
    for (j, v) in phi.iter().enumerate() {
        z[1 + j] = v.re;
        z[1 + n + j] = v.im;
    }
    z
}

/// Sparse real vector over the lifted coordinates.
pub type SparseVec = Vec<(usize, f64)>;

/// `Σ κ sym(v_a v_bᵀ)` over dictionary vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedMatrix {
    pub terms: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct LiftedConstraint {
    pub matrix: LiftedMatrix,
    pub rhs: f64,
    pub sense: Sense,
    pub tag: String,
}

/// `max <C, Y> + c0` s.t. `<A_k, Y> (= | <=) b_k`, `Y ⪰ 0`, where the first
/// constraint is always `Y[0,0] = 1`.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    /// Side of `Y`, `2n + 1` for `n` complex unknowns.
    pub dim: usize,
    pub vectors: Vec<SparseVec>,
    pub objective: LiftedMatrix,
    pub objective_constant: f64,
    pub constraints: Vec<LiftedConstraint>,
    /// Number of complex unknowns after any restriction.
    pub n_complex: usize,
    pub restriction: Option<Restriction>,
    /// Forms that lost all variable dependence and were dropped.
    pub dropped: Vec<String>,
    /// A constant form that cannot be satisfied, if any.
    pub contradiction: Option<String>,
}

impl LiftedMatrix {
    pub fn dense(&self, vectors: &[SparseVec], dim: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(dim, dim);
        for &(a, b, k) in &self.terms {
            for &(i, va) in &vectors[a] {
                for &(j, vb) in &vectors[b] {
                    m[(i, j)] += 0.5 * k * va * vb;
                    m[(j, i)] += 0.5 * k * va * vb;
                }
            }
        }
        m
    }

    pub fn eval(&self, vectors: &[SparseVec], y: &DMatrix<f64>) -> f64 {
        self.terms
            .iter()
            .map(|&(a, b, k)| {
                let mut s = 0.0;
                for &(i, va) in &vectors[a] {
                    for &(j, vb) in &vectors[b] {
                        s += va * vb * y[(i, j)];
                    }
                }
                k * s
            })
            .sum()
    }
}

impl SdpProblem {
    pub fn dense_constraint(&self, k: usize) -> DMatrix<f64> {
        self.constraints[k].matrix.dense(&self.vectors, self.dim)
    }

    pub fn dense_objective(&self) -> DMatrix<f64> {
        self.objective.dense(&self.vectors, self.dim)
    }

    /// Maps a lifted point `[1; x; y]` back to `φ` (undoing any restriction).
    pub fn phi_from_lifted(&self, z: &DVector<f64>) -> Vec<C64> {
        let n = self.n_complex;
        let xi: Vec<C64> = (0..n).map(|j| C64::new(z[1 + j], z[1 + n + j])).collect();
        match &self.restriction {
            None => xi,
            Some(r) => r
                .rows
                .iter()
                .map(|row| row.iter().map(|&(k, p)| p * xi[k]).sum())
                .collect(),
        }
    }
}

struct Dictionary {
    n: usize,
    vectors: Vec<SparseVec>,
    by_ptr: HashMap<*const Affine, (usize, usize)>,
    keep_alive: Vec<Arc<Affine>>,
    restriction: Option<Restriction>,
}

impl Dictionary {
    /// Real and imaginary parts of `ℓ` as vectors over `[1; x; y]`.
    fn realify_affine(n: usize, ell: &Affine) -> (SparseVec, SparseVec) {
        let mut re = Vec::with_capacity(2 * ell.terms.len() + 1);
        let mut im = Vec::with_capacity(2 * ell.terms.len() + 1);
        if ell.constant.re != 0.0 {
            re.push((0, ell.constant.re));
        }
        if ell.constant.im != 0.0 {
            im.push((0, ell.constant.im));
        }
        for &(j, c) in &ell.terms {
            if c.re != 0.0 {
                re.push((1 + j, c.re));
                im.push((1 + n + j, c.re));
            }
            if c.im != 0.0 {
                re.push((1 + n + j, -c.im));
                im.push((1 + j, c.im));
            }
        }
        re.sort_by_key(|e| e.0);
        im.sort_by_key(|e| e.0);
        (re, im)
    }

    fn get(&mut self, ell: &Arc<Affine>) -> (usize, usize) {
        let key = Arc::as_ptr(ell);
        if let Some(&ids) = self.by_ptr.get(&key) {
            return ids;
        }
        let restricted;
        let target = match &self.restriction {
            Some(r) => {
                restricted = ell.substitute(&r.rows);
                &restricted
            }
            None => ell.as_ref(),
        };
        let (re, im) = Self::realify_affine(self.n, target);
        let ids = (self.vectors.len(), self.vectors.len() + 1);
        self.vectors.push(re);
        self.vectors.push(im);
        self.by_ptr.insert(key, ids);
        self.keep_alive.push(ell.clone());
        ids
    }

    /// Terms of `Σ Re(κ conj(ℓ1) ℓ2)`, dropping products of empty vectors.
    fn lift_form(&mut self, form: &QuadraticForm) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for t in &form.terms {
            let (r1, i1) = self.get(&t.left);
            let (r2, i2) = self.get(&t.right);
            let (kr, ki) = (t.coeff.re, t.coeff.im);
            // κr (R1R2 + I1I2) - κi (R1I2 - I1R2)
            for (a, b, k) in [(r1, r2, kr), (i1, i2, kr), (r1, i2, -ki), (i1, r2, ki)] {
                if k != 0.0 && !self.vectors[a].is_empty() && !self.vectors[b].is_empty() {
                    out.push((a, b, k));
                }
            }
        }
        out
    }
}

/// Splits off constant parts: the `(e0, e0)` coefficient moves into the
/// constant, leaving terms that depend on the unknowns.
fn split_constant(terms: Vec<(usize, usize, f64)>, vectors: &[SparseVec]) -> (Vec<(usize, usize, f64)>, f64) {
    let is_const = |v: &SparseVec| v.len() == 1 && v[0].0 == 0;
    let mut constant = 0.0;
    let mut kept = Vec::new();
    for (a, b, k) in terms {
        if is_const(&vectors[a]) && is_const(&vectors[b]) {
            constant += k * vectors[a][0].1 * vectors[b][0].1;
        } else {
            kept.push((a, b, k));
        }
    }
    (kept, constant)
}

/// Homogenized real lift of a QCQP. Forms that become constant (for example
/// after restricting `φ` to a subspace) are dropped, or flagged as a
/// contradiction when the constant violates the form's sense.
pub fn lift(problem: &QcqpProblem, tolerance: f64) -> SdpProblem {
    let n_complex = problem.restriction.as_ref().map_or(problem.n, |r| r.reduced_dim);
    let mut dict = Dictionary {
        n: n_complex,
        vectors: vec![vec![(0, 1.0)]],
        by_ptr: HashMap::new(),
        keep_alive: Vec::new(),
        restriction: problem.restriction.clone(),
    };
    let mut constraints = vec![LiftedConstraint {
        matrix: LiftedMatrix { terms: vec![(0, 0, 1.0)] },
        rhs: 1.0,
        sense: Sense::Equal,
        tag: "homogenization".into(),
    }];
    let mut dropped = Vec::new();
    let mut contradiction = None;
    for form in &problem.constraints {
        let terms = dict.lift_form(form);
        let (terms, c_extra) = split_constant(terms, &dict.vectors);
        let constant = form.constant + c_extra;
        if terms.is_empty() {
            let violated = match form.sense {
                Sense::Equal => constant.abs() > tolerance,
                Sense::LessEqual => constant > tolerance,
            };
            if violated && contradiction.is_none() {
                contradiction = Some(format!("{} reduces to the constant {constant:.6e}", form.tag));
            }
            dropped.push(form.tag.to_string());
            continue;
        }
        constraints.push(LiftedConstraint {
            matrix: LiftedMatrix { terms },
            rhs: -constant,
            sense: form.sense,
            tag: form.tag.to_string(),
        });
    }
    if !dropped.is_empty() {
        log::debug!("dropped {} constant forms, first: {}", dropped.len(), dropped[0]);
    }
    let terms = dict.lift_form(&problem.objective);
    let (terms, c_extra) = split_constant(terms, &dict.vectors);
    SdpProblem {
        dim: 2 * n_complex + 1,
        vectors: dict.vectors,
        objective: LiftedMatrix { terms },
        objective_constant: problem.objective.constant + c_extra,
        constraints,
        n_complex,
        restriction: problem.restriction.clone(),
        dropped,
        contradiction,
    }
}
