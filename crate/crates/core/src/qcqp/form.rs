use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::linalg::{CMat, CVec, C64};

/// `ℓ(φ) = Σ_j c_j φ_j + c0` (no conjugation).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Affine {
    /// Sorted by index, no duplicates, no exact zeros.
    pub terms: Vec<(usize, C64)>,
    pub constant: C64,
}

impl Affine {
    pub fn constant(c0: C64) -> Self {
        Self { terms: Vec::new(), constant: c0 }
    }

    pub fn variable(index: usize) -> Self {
        Self { terms: vec![(index, C64::new(1.0, 0.0))], constant: C64::new(0.0, 0.0) }
    }

    pub fn from_map(map: BTreeMap<usize, C64>, constant: C64) -> Self {
        Self {
            terms: map.into_iter().filter(|(_, v)| *v != C64::new(0.0, 0.0)).collect(),
            constant,
        }
    }

    pub fn eval(&self, phi: &[C64]) -> C64 {
        self.terms.iter().fold(self.constant, |acc, &(j, c)| acc + c * phi[j])
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty() && self.constant == C64::new(0.0, 0.0)
    }

    /// `Σ_k s_k ℓ_k`.
    pub fn combine<'a>(parts: impl IntoIterator<Item = (C64, &'a Affine)>) -> Affine {
        let mut map = BTreeMap::new();
        let mut constant = C64::new(0.0, 0.0);
        for (s, a) in parts {
            if s == C64::new(0.0, 0.0) {
                continue;
            }
            constant += s * a.constant;
            for &(j, c) in &a.terms {
                *map.entry(j).or_insert(C64::new(0.0, 0.0)) += s * c;
            }
        }
        Affine::from_map(map, constant)
    }

    /// Substitutes `φ_j = Σ_k P[j][k] ξ_k`.
    pub fn substitute(&self, restriction: &[Vec<(usize, C64)>]) -> Affine {
        let mut map = BTreeMap::new();
        for &(j, c) in &self.terms {
            for &(k, p) in &restriction[j] {
                *map.entry(k).or_insert(C64::new(0.0, 0.0)) += c * p;
            }
        }
        // cancellation below this level is treated as exact
        let scale = self
            .terms
            .iter()
            .flat_map(|&(j, c)| restriction[j].iter().map(move |(_, p)| c.norm() * p.norm()))
            .fold(0.0f64, f64::max);
        let map = map.into_iter().filter(|(_, v)| v.norm() > 1e-15 * scale).collect();
        Affine::from_map(map, self.constant)
    }
}

/// `Re(coeff · conj(left(φ)) · right(φ))`.
#[derive(Debug, Clone)]
pub struct ProductTerm {
    pub coeff: C64,
    pub left: Arc<Affine>,
    pub right: Arc<Affine>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    /// `form(φ) = 0`
    Equal,
    /// `form(φ) <= 0`
    LessEqual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Re,
    Im,
}

impl fmt::Display for Part {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Part::Re => "re",
            Part::Im => "im",
        })
    }
}

/// Provenance of a form.
#[derive(Debug, Clone, PartialEq)]
pub enum Tag {
    /// Conservation law with `D = δ(t - t_node) |left><right|` in the control's
    /// basis, entry `(col_left, col_right)` of the column-space matrix.
    Conservation { control: usize, node: usize, left: usize, right: usize, col_left: usize, col_right: usize, part: Part },
    /// Null-space component of `Φ` that must vanish.
    Range { control: usize, node: usize, null_index: usize, column: usize },
    /// Cross term `(Φ_2 Φ_1†)[row, col]` of two mutually exclusive controls.
    Exclusivity { node: usize, row: usize, col: usize, part: Part },
    Leakage { level: usize, node: usize },
    Objective(String),
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Conservation { control, node, left, right, col_left, col_right, part } => write!(
                f,
                "cons[c={control},t={node},D={left}{right},pq={col_left}{col_right},{part}]"
            ),
            Tag::Range { control, node, null_index, column } => {
                write!(f, "range[c={control},t={node},null={null_index},p={column}]")
            }
            Tag::Exclusivity { node, row, col, part } => write!(f, "excl[t={node},jk={row}{col},{part}]"),
            Tag::Leakage { level, node } => write!(f, "leak[level={level},t={node}]"),
            Tag::Objective(name) => write!(f, "objective[{name}]"),
        }
    }
}

/// Real-valued quadratic function of a complex vector, stored as a sum of
/// products of affine functionals plus a constant.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    pub terms: Vec<ProductTerm>,
    pub constant: f64,
    pub sense: Sense,
    pub tag: Tag,
}

/// `φ† b φ + Re(β† φ) + c`.
#[derive(Debug, Clone)]
pub struct DenseForm {
    pub b: CMat,
    pub beta: CVec,
    pub c: f64,
}

impl DenseForm {
    pub fn eval(&self, phi: &CVec) -> f64 {
        (phi.adjoint() * &self.b * phi)[(0, 0)].re + self.beta.dotc(phi).re + self.c
    }
}

impl QuadraticForm {
    pub fn new(tag: Tag, sense: Sense) -> Self {
        Self { terms: Vec::new(), constant: 0.0, sense, tag }
    }

    pub fn push(&mut self, coeff: C64, left: Arc<Affine>, right: Arc<Affine>) {
        self.terms.push(ProductTerm { coeff, left, right });
    }

    pub fn eval(&self, phi: &[C64]) -> f64 {
        self.terms
            .iter()
            .map(|t| (t.coeff * t.left.eval(phi).conj() * t.right.eval(phi)).re)
            .sum::<f64>()
            + self.constant
    }

    /// Amount by which the form's sense is violated at `φ`.
    pub fn violation(&self, phi: &[C64]) -> f64 {
        let v = self.eval(phi);
        match self.sense {
            Sense::Equal => v.abs(),
            Sense::LessEqual => v.max(0.0),
        }
    }

    /// True when the form has no variable dependence and a zero value.
    pub fn is_trivially_zero(&self) -> bool {
        let mut value = self.constant;
        for t in &self.terms {
            if t.coeff == C64::new(0.0, 0.0) || t.left.is_zero() || t.right.is_zero() {
                continue;
            }
            if !t.left.terms.is_empty() || !t.right.terms.is_empty() {
                return false;
            }
            value += (t.coeff * t.left.constant.conj() * t.right.constant).re;
        }
        value == 0.0
    }

    /// Expands into the dense Hermitian representation.
    pub fn to_dense(&self, n: usize) -> DenseForm {
        let mut b = CMat::zeros(n, n);
        let mut beta = CVec::zeros(n);
        let mut c = self.constant;
        let half = C64::new(0.5, 0.0);
        for t in &self.terms {
            let (a, w) = (&t.left, &t.right);
            for &(j, aj) in &a.terms {
                for &(k, wk) in &w.terms {
                    let m = t.coeff * aj.conj() * wk * half;
                    b[(j, k)] += m;
                    b[(k, j)] += m.conj();
                }
            }
            for &(k, wk) in &w.terms {
                beta[k] += t.coeff.conj() * a.constant * wk.conj();
            }
            for &(j, aj) in &a.terms {
                beta[j] += t.coeff * w.constant * aj.conj();
            }
            c += (t.coeff * a.constant.conj() * w.constant).re;
        }
        DenseForm { b, beta, c }
    }
}

/// A maximization problem over `φ ∈ C^n`.
#[derive(Debug, Clone)]
pub struct QcqpProblem {
    pub n: usize,
    pub objective: QuadraticForm,
    pub constraints: Vec<QuadraticForm>,
    /// Optional substitution `φ = P ξ` confining `φ` to a subspace; row `j`
    /// lists the nonzero entries of `P[j, :]`.
    pub restriction: Option<Restriction>,
    pub description: String,
}

#[derive(Debug, Clone)]
pub struct Restriction {
    pub reduced_dim: usize,
    pub rows: Vec<Vec<(usize, C64)>>,
}

impl QcqpProblem {
    pub fn max_violation(&self, phi: &[C64]) -> f64 {
        self.constraints.iter().map(|f| f.violation(phi)).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_complex;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_affine(n: usize, rng: &mut ChaCha8Rng) -> Affine {
        let mut map = BTreeMap::new();
        for j in 0..n {
            if rng.random_bool(0.6) {
                map.insert(j, C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            }
        }
        Affine::from_map(map, C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn dense_expansion_matches_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 6;
        for _ in 0..20 {
            let mut f = QuadraticForm::new(Tag::Objective("t".into()), Sense::Equal);
            f.constant = rng.random_range(-1.0..1.0);
            for _ in 0..3 {
                let coeff = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                f.push(coeff, Arc::new(random_affine(n, &mut rng)), Arc::new(random_affine(n, &mut rng)));
            }
            let d = f.to_dense(n);
            let herm = (&d.b - d.b.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(herm < 1e-14);
            let phi: CVec = random_complex(n, 1, &mut rng).column(0).into_owned();
            let direct = f.eval(phi.as_slice());
            assert!((direct - d.eval(&phi)).abs() < 1e-12, "{direct} vs {}", d.eval(&phi));
        }
    }

    #[test]
    fn combine_and_substitute() {
        let a = Affine::variable(0);
        let b = Affine::variable(1);
        let s = Affine::combine([(C64::new(2.0, 0.0), &a), (C64::new(0.0, 1.0), &b), (C64::new(-2.0, 0.0), &a)]);
        assert_eq!(s.terms, vec![(1, C64::new(0.0, 1.0))]);
        let rows = vec![vec![(0, C64::new(1.0, 0.0))], vec![(0, C64::new(3.0, 0.0))]];
        let sub = s.substitute(&rows);
        assert_eq!(sub.terms, vec![(0, C64::new(0.0, 3.0))]);
    }

    #[test]
    fn tag_display_is_stable() {
        let t = Tag::Conservation { control: 0, node: 3, left: 1, right: 2, col_left: 0, col_right: 1, part: Part::Im };
        assert_eq!(t.to_string(), "cons[c=0,t=3,D=12,pq=01,im]");
    }
}
