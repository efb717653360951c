//! Dense complex linear algebra and decomposition of unitaries into
//! simple-form factors (two-level real rotations and single-coordinate
//! phases), including approximation of every angle by integer multiples
//! of a fixed base angle.

use num_complex::Complex64;
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("entry count {got} does not match {rows}x{cols}")]
    BadShape { rows: usize, cols: usize, got: usize },
    #[error("non-finite matrix entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is not unitary within tolerance (residual {residual:.3e})")]
    NotUnitary { residual: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("angle search exhausted n_max = {n_max} without reaching tolerance {eps:.3e}")]
    AngleSearchExhausted { n_max: u64, eps: f64 },
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
}

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<Complex64>) -> Result<Self, LinalgError> {
        if entries.len() != rows * cols {
            return Err(LinalgError::BadShape { rows, cols, got: entries.len() });
        }
        for (k, e) in entries.iter().enumerate() {
            if !e.re.is_finite() || !e.im.is_finite() {
                return Err(LinalgError::NonFinite { row: k / cols, col: k % cols });
            }
        }
        Ok(Self { rows, cols, entries })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, entries: vec![Complex64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    /// Builds a matrix from rows of (re, im) pairs.
    pub fn from_real_pairs(data: &[Vec<[f64; 2]>]) -> Result<Self, LinalgError> {
        let rows = data.len();
        let cols = data.first().map_or(0, |r| r.len());
        let mut entries = Vec::with_capacity(rows * cols);
        for row in data {
            if row.len() != cols {
                return Err(LinalgError::BadShape { rows, cols, got: row.len() });
            }
            for &[re, im] in row {
                entries.push(Complex64::new(re, im));
            }
        }
        Self::new(rows, cols, entries)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "inner dimensions must agree");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a - b)
            .collect();
        Self { rows: self.rows, cols: self.cols, entries }
    }

    pub fn matvec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols, v.len());
        let mut out = vec![Complex64::new(0.0, 0.0); self.rows];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[i] += self[(i, j)] * v[j];
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|e| e.norm()).fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.entries[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.entries[i * self.cols + j]
    }
}

/// Operator 2-norm: largest singular value, computed by power iteration
/// on M*M. Relative accuracy about 1e-10 for well-separated spectra; the
/// degenerate case (isometries) converges immediately.
pub fn operator_norm(m: &ComplexMatrix) -> f64 {
    let gram = m.adjoint().mul(m);
    let n = gram.cols();
    if n == 0 {
        return 0.0;
    }
    // Deterministic pseudo-random start vector.
    let mut v: Vec<Complex64> = (0..n)
        .map(|i| {
            let x = ((i as f64 + 1.0) * 0.754_877_666_246_692_9).fract() + 0.25;
            let y = ((i as f64 + 1.0) * 0.569_840_290_998_053_3).fract();
            Complex64::new(x, y)
        })
        .collect();
    normalize(&mut v);
    let mut lambda = 0.0f64;
    for _ in 0..20_000 {
        let w = gram.matvec(&v);
        let new_lambda: f64 = v
            .iter()
            .zip(&w)
            .map(|(a, b)| (a.conj() * b).re)
            .sum();
        let wn: f64 = w.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if wn == 0.0 {
            return 0.0;
        }
        v = w;
        for c in &mut v {
            *c /= wn;
        }
        if (new_lambda - lambda).abs() <= 1e-13 * new_lambda.abs().max(1e-300) {
            lambda = new_lambda;
            break;
        }
        lambda = new_lambda;
    }
    lambda.max(0.0).sqrt()
}

fn normalize(v: &mut [Complex64]) {
    let n: f64 = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if n > 0.0 {
        for c in v.iter_mut() {
            *c /= n;
        }
    }
}

/// Returns (is_unitary, residual) where residual = ||M*M - I|| in the
/// operator 2-norm.
pub fn check_unitary(m: &ComplexMatrix, tol: f64) -> Result<(bool, f64), LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare { rows: m.rows(), cols: m.cols() });
    }
    let defect = m.adjoint().mul(m).sub(&ComplexMatrix::identity(m.rows()));
    let residual = operator_norm(&defect);
    Ok((residual <= tol, residual))
}

/// One simple-form factor: a two-coordinate real rotation or a
/// single-coordinate phase, identity elsewhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FactorKind {
    /// [[cos t, -sin t], [sin t, cos t]] acting on coordinates (i, j).
    Rotation { i: usize, j: usize, angle: f64 },
    /// Multiplies coordinate i by e^{i t}.
    Phase { i: usize, angle: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimpleFormFactor {
    pub dim: usize,
    pub kind: FactorKind,
}

impl SimpleFormFactor {
    pub fn rotation(dim: usize, i: usize, j: usize, angle: f64) -> Self {
        assert!(i < dim && j < dim && i != j);
        Self { dim, kind: FactorKind::Rotation { i, j, angle } }
    }

    pub fn phase(dim: usize, i: usize, angle: f64) -> Self {
        assert!(i < dim);
        Self { dim, kind: FactorKind::Phase { i, angle } }
    }

    pub fn angle(&self) -> f64 {
        match self.kind {
            FactorKind::Rotation { angle, .. } | FactorKind::Phase { angle, .. } => angle,
        }
    }

    pub fn with_angle(&self, angle: f64) -> Self {
        let kind = match self.kind {
            FactorKind::Rotation { i, j, .. } => FactorKind::Rotation { i, j, angle },
            FactorKind::Phase { i, .. } => FactorKind::Phase { i, angle },
        };
        Self { dim: self.dim, kind }
    }

    pub fn inverse(&self) -> Self {
        self.with_angle(-self.angle())
    }

    /// Realizes the factor as a dense dim x dim matrix.
    pub fn realize(&self) -> ComplexMatrix {
        let mut m = ComplexMatrix::identity(self.dim);
        match self.kind {
            FactorKind::Rotation { i, j, angle } => {
                let (s, c) = angle.sin_cos();
                m[(i, i)] = Complex64::new(c, 0.0);
                m[(i, j)] = Complex64::new(-s, 0.0);
                m[(j, i)] = Complex64::new(s, 0.0);
                m[(j, j)] = Complex64::new(c, 0.0);
            }
            FactorKind::Phase { i, angle } => {
                m[(i, i)] = Complex64::from_polar(1.0, angle);
            }
        }
        m
    }

    /// In-place left multiplication: m <- factor * m. Touches at most two rows.
    fn apply_left(&self, m: &mut ComplexMatrix) {
        let cols = m.cols();
        match self.kind {
            FactorKind::Rotation { i, j, angle } => {
                let (s, c) = angle.sin_cos();
                for k in 0..cols {
                    let a = m[(i, k)];
                    let b = m[(j, k)];
                    m[(i, k)] = c * a - s * b;
                    m[(j, k)] = s * a + c * b;
                }
            }
            FactorKind::Phase { i, angle } => {
                let ph = Complex64::from_polar(1.0, angle);
                for k in 0..cols {
                    m[(i, k)] *= ph;
                }
            }
        }
    }
}

/// Ordered factorization U ~= factors[0] * factors[1] * ... * factors[n-1].
#[derive(Debug, Clone)]
pub struct DecompositionResult {
    pub factors: Vec<SimpleFormFactor>,
    /// ||U - product(factors)|| in the operator 2-norm.
    pub residual: f64,
    /// In rational-angle mode, the multiple n with angle = n * theta0,
    /// aligned with `factors`.
    pub angle_multiples: Option<Vec<u64>>,
}

impl DecompositionResult {
    pub fn factor_count(&self) -> usize {
        self.factors.len()
    }

    pub fn product(&self, dim: usize) -> ComplexMatrix {
        let mut p = ComplexMatrix::identity(dim);
        for f in self.factors.iter().rev() {
            f.apply_left(&mut p);
        }
        p
    }
}

const UNITARY_TOL: f64 = 1e-10;
const NEGLIGIBLE: f64 = 1e-14;

/// Decomposes a unitary into two-level rotations followed by trailing
/// diagonal phases, by column-major elimination of sub-diagonal entries.
/// Eliminating entry (i, j) uses the coordinate pair (j, i): first a
/// phase on coordinate i aligns the entry with the pivot, then a real
/// rotation annihilates it. Entries already below 1e-14 are skipped.
pub fn decompose_simple_form(u: &ComplexMatrix) -> Result<DecompositionResult, LinalgError> {
    let (ok, residual) = check_unitary(u, UNITARY_TOL)?;
    if !ok {
        return Err(LinalgError::NotUnitary { residual });
    }
    let d = u.rows();
    let mut work = u.clone();
    // Left-multiplied eliminators: elim[n-1] * ... * elim[0] * U = diag.
    let mut elim: Vec<SimpleFormFactor> = Vec::new();
    for col in 0..d {
        for row in col + 1..d {
            let q = work[(row, col)];
            if q.norm() < NEGLIGIBLE {
                continue;
            }
            let p = work[(col, col)];
            // Align arg(q) with arg(p); if the pivot is negligible just
            // make the entry real positive.
            let phi = if p.norm() < NEGLIGIBLE { -q.arg() } else { p.arg() - q.arg() };
            if phi.abs() > NEGLIGIBLE {
                let f = SimpleFormFactor::phase(d, row, phi);
                f.apply_left(&mut work);
                elim.push(f);
            }
            let pm = work[(col, col)].norm();
            let qm = work[(row, col)].norm();
            let theta = (-qm).atan2(pm);
            let f = SimpleFormFactor::rotation(d, col, row, theta);
            f.apply_left(&mut work);
            elim.push(f);
            work[(row, col)] = Complex64::new(0.0, 0.0);
        }
    }
    // work is now diagonal with unit-modulus entries; U = inverse
    // eliminators (in recording order) followed by the diagonal phases.
    let mut factors: Vec<SimpleFormFactor> = elim.iter().map(|f| f.inverse()).collect();
    for i in 0..d {
        let angle = work[(i, i)].arg();
        if angle.abs() > NEGLIGIBLE {
            factors.push(SimpleFormFactor::phase(d, i, angle));
        }
    }
    let result = DecompositionResult { factors, residual: 0.0, angle_multiples: None };
    let residual = operator_norm(&u.sub(&result.product(d)));
    Ok(DecompositionResult { residual, ..result })
}

pub const DEFAULT_ANGLE_SEARCH_MAX: u64 = 10_000_000;

fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Smallest n >= 0 with circular distance(n * theta0, phi) < eps,
/// found by forward scan (hence minimal by construction).
pub fn approx_angle(phi: f64, theta0: f64, eps: f64, n_max: u64) -> Result<u64, LinalgError> {
    if eps <= 0.0 {
        return Err(LinalgError::BadTolerance(eps));
    }
    let target = phi.rem_euclid(TAU);
    for n in 0..=n_max {
        let x = (n as f64 * theta0).rem_euclid(TAU);
        if circular_distance(x, target) < eps {
            return Ok(n);
        }
    }
    Err(LinalgError::AngleSearchExhausted { n_max, eps })
}

/// Decomposition of U with every factor angle an integer multiple of
/// theta0. Each factor gets an angular budget of eps / factor_count, so
/// the total operator-norm error stays below eps.
pub fn approx_unitary(
    u: &ComplexMatrix,
    eps: f64,
    theta0: f64,
    n_max: u64,
) -> Result<DecompositionResult, LinalgError> {
    if eps <= 0.0 {
        return Err(LinalgError::BadTolerance(eps));
    }
    let exact = decompose_simple_form(u)?;
    if exact.factors.is_empty() {
        return Ok(exact);
    }
    let budget = eps / exact.factor_count() as f64;
    let mut factors = Vec::with_capacity(exact.factor_count());
    let mut multiples = Vec::with_capacity(exact.factor_count());
    for f in &exact.factors {
        let n = approx_angle(f.angle(), theta0, budget, n_max)?;
        factors.push(f.with_angle(n as f64 * theta0));
        multiples.push(n);
    }
    let result =
        DecompositionResult { factors, residual: 0.0, angle_multiples: Some(multiples) };
    let residual = operator_norm(&u.sub(&result.product(u.rows())));
    Ok(DecompositionResult { residual, ..result })
}

/// Haar-ish random unitary from seeded complex Gaussians orthonormalized
/// by modified Gram-Schmidt. Used by tests and the CLI's seeded demos.
pub fn random_unitary(d: usize, seed: u64) -> ComplexMatrix {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = || {
        // Box-Muller.
        let u1: f64 = rng.gen_range(1e-12..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
    };
    let mut cols: Vec<Vec<Complex64>> = (0..d)
        .map(|_| (0..d).map(|_| Complex64::new(gauss(), gauss())).collect())
        .collect();
    for j in 0..d {
        for k in 0..j {
            let proj: Complex64 = cols[k]
                .iter()
                .zip(&cols[j])
                .map(|(a, b)| a.conj() * b)
                .sum();
            for i in 0..d {
                let t = proj * cols[k][i];
                cols[j][i] -= t;
            }
        }
        normalize(&mut cols[j]);
    }
    let mut m = ComplexMatrix::zeros(d, d);
    for j in 0..d {
        for i in 0..d {
            m[(i, j)] = cols[j][i];
        }
    }
    m
}
