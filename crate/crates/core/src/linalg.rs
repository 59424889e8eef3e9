//! Dense complex linear algebra shared by the propagators and the constraint builder.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Largest `|m[r,c] - conj(m[c,r])|` and where it occurs.
pub fn hermitian_deviation(m: &CMat) -> (f64, usize, usize) {
    let mut worst = (0.0, 0, 0);
    for r in 0..m.nrows() {
        for col in 0..m.ncols() {
            let d = (m[(r, col)] - m[(col, r)].conj()).norm();
            if d > worst.0 {
                worst = (d, r, col);
            }
        }
    }
    worst
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted ascending.
pub fn hermitian_eigen(h: &CMat) -> Result<(Vec<f64>, CMat)> {
    if h.nrows() != h.ncols() {
        return Err(Error::InvalidArgument("eigendecomposition of non-square matrix".into()));
    }
    let n = h.nrows();
    if n == 0 {
        return Ok((Vec::new(), CMat::zeros(0, 0)));
    }
    let eig = SymmetricEigen::try_new(h.clone(), f64::EPSILON, 10_000).ok_or_else(|| {
        Error::Numerical(format!(
            "Hermitian eigendecomposition did not converge (n = {n}, |H|_F = {:.3e})",
            frobenius(h)
        ))
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// `exp(-i h dt)` for Hermitian `h`.
pub fn expm_hermitian(h: &CMat, dt: f64) -> Result<CMat> {
    let (values, vectors) = hermitian_eigen(h)?;
    let n = h.nrows();
    let mut scaled = vectors.clone();
    for k in 0..n {
        let phase = C64::from_polar(1.0, -values[k] * dt);
        for r in 0..n {
            scaled[(r, k)] *= phase;
        }
    }
    Ok(scaled * vectors.adjoint())
}

/// Range/null split of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianRange {
    /// Orthonormal basis of the range, one column per retained eigenvalue.
    pub range: CMat,
    /// Retained (nonzero) eigenvalues, matching the columns of `range`.
    pub values: Vec<f64>,
    /// Orthonormal basis of the null space.
    pub null: CMat,
}

impl HermitianRange {
    /// Eigenvalues with `|λ| <= rel_cutoff * max|λ|` are treated as zero.
    pub fn new(h: &CMat, rel_cutoff: f64) -> Result<Self> {
        let (values, vectors) = hermitian_eigen(h)?;
        let n = h.nrows();
        let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let keep: Vec<usize> = (0..n)
            .filter(|&k| scale > 0.0 && values[k].abs() > rel_cutoff * scale)
            .collect();
        let drop: Vec<usize> = (0..n).filter(|k| !keep.contains(k)).collect();
        let range = CMat::from_fn(n, keep.len(), |r, col| vectors[(r, keep[col])]);
        let null = CMat::from_fn(n, drop.len(), |r, col| vectors[(r, drop[col])]);
        Ok(Self {
            range,
            values: keep.iter().map(|&k| values[k]).collect(),
            null,
        })
    }

    pub fn rank(&self) -> usize {
        self.values.len()
    }

    pub fn is_full_rank(&self) -> bool {
        self.null.ncols() == 0
    }

    /// Moore-Penrose pseudo-inverse.
    pub fn pseudo_inverse(&self) -> CMat {
        let inv = CMat::from_diagonal(&CVec::from_iterator(
            self.values.len(),
            self.values.iter().map(|v| C64::new(1.0 / v, 0.0)),
        ));
        &self.range * inv * self.range.adjoint()
    }

    pub fn projector(&self) -> CMat {
        &self.range * self.range.adjoint()
    }
}

fn one_norm(a: &CMat) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// General matrix exponential by scaling and squaring with a degree-13 Padé
/// approximant (Higham 2005). Used for non-normal generators.
pub fn expm_pade(a: &CMat) -> Result<CMat> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::InvalidArgument("expm of non-square matrix".into()));
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical("expm argument has non-finite entries".into()));
    }
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA_13: f64 = 5.371920351148152;
    let norm = one_norm(a);
    let squarings = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    if squarings > 1000 {
        return Err(Error::Numerical(format!("expm argument too large (|A|_1 = {norm:.3e})")));
    }
    let scaled = a * C64::new(0.5f64.powi(squarings), 0.0);
    let id = CMat::identity(n, n);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let r = |x: f64| C64::new(x, 0.0);
    let u_inner = &a6 * (&a6 * r(B[13]) + &a4 * r(B[11]) + &a2 * r(B[9]))
        + &a6 * r(B[7])
        + &a4 * r(B[5])
        + &a2 * r(B[3])
        + &id * r(B[1]);
    let u = &scaled * u_inner;
    let v = &a6 * (&a6 * r(B[12]) + &a4 * r(B[10]) + &a2 * r(B[8]))
        + &a6 * r(B[6])
        + &a4 * r(B[4])
        + &a2 * r(B[2])
        + &id * r(B[0]);
    let numer = &v + &u;
    let denom = &v - &u;
    let mut result = denom
        .lu()
        .solve(&numer)
        .ok_or_else(|| Error::Numerical("Padé denominator singular in expm".into()))?;
    for _ in 0..squarings {
        result = &result * &result;
    }
    if result.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical(format!("expm overflow (|A|_1 = {norm:.3e})")));
    }
    Ok(result)
}

pub fn random_hermitian<R: Rng>(n: usize, rng: &mut R) -> CMat {
    let a = CMat::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    (&a + a.adjoint()) * C64::new(0.5, 0.0)
}

pub fn random_complex<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    CMat::from_fn(rows, cols, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

/// Pauli matrices.
pub fn sigma_x() -> CMat {
    CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
}

pub fn sigma_y() -> CMat {
    CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)])
}

pub fn sigma_z() -> CMat {
    CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)])
}

pub fn real_diag(values: &[f64]) -> CMat {
    CMat::from_diagonal(&CVec::from_iterator(values.len(), values.iter().map(|&v| c(v, 0.0))))
}

pub fn from_real_rows(n: usize, entries: &[f64]) -> CMat {
    CMat::from_row_slice(n, n, &entries.iter().map(|&v| c(v, 0.0)).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hermitian_exponential_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random_hermitian(5, &mut rng);
        let u = expm_hermitian(&h, 0.8).unwrap();
        let err = frobenius(&(u.adjoint() * &u - identity(5)));
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn pade_agrees_with_eigen_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = random_hermitian(4, &mut rng) * c(3.0, 0.0);
        let a = &h * c(0.0, -1.3);
        let diff = frobenius(&(expm_pade(&a).unwrap() - expm_hermitian(&h, 1.3).unwrap()));
        assert!(diff < 1e-11, "{diff}");
    }

    #[test]
    fn range_split_of_singular_matrix() {
        let s2 = 2f64.sqrt();
        let hc = from_real_rows(3, &[0.0, 1.0, 0.0, 1.0, 0.0, s2, 0.0, s2, 0.0]);
        let r = HermitianRange::new(&hc, 1e-10).unwrap();
        assert_eq!(r.rank(), 2);
        let pinv = r.pseudo_inverse();
        let back = &hc * &pinv * &hc;
        assert!(frobenius(&(back - &hc)) < 1e-12);
    }

    #[test]
    fn deviation_reports_worst_entry() {
        let mut m = sigma_z();
        m[(0, 1)] = c(1e-6, 0.0);
        let (d, r, col) = hermitian_deviation(&m);
        assert!((d - 1e-6).abs() < 1e-18);
        assert!((r, col) == (0, 1) || (r, col) == (1, 0));
    }
}
