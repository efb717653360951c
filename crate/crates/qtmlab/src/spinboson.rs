//! Spin-boson model in the stochastic-limit approximation: spectral
//! densities, the two-level eigen-system, principal-value level-shift
//! integrals, damping/shift coefficients at zero and finite temperature,
//! the closed-form coherence operator P(t), a dissipative master-equation
//! integrator used as an independent oracle, and a parameter tuner that
//! realizes the decoherence-free condition J(nu*Delta) = 0.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;
use thiserror::Error;

use crate::linalg::ComplexMatrix;

#[derive(Debug, Error)]
pub enum SpinBosonError {
    #[error("delta must be nonzero (the eigen-system degenerates)")]
    DeltaZero,
    #[error("inverse temperature must be positive, got {0}")]
    BadBeta(f64),
    #[error("invalid spectral density: {0}")]
    BadSpectral(String),
    #[error("integral did not converge to tolerance (estimated error {0:.3e})")]
    IntegralAccuracy(f64),
    #[error("divergent quantity: {0}")]
    Divergent(String),
    #[error("density matrix must be Hermitian with unit trace")]
    BadDensityMatrix,
    #[error("integration step too coarse: trace drift {0:.3e} exceeds 1e-8")]
    TraceDrift(f64),
    #[error("bit strings of length {a} and {b} do not match {n} qubit models")]
    LengthMismatch { a: usize, b: usize, n: usize },
    #[error("empty or non-increasing time grid")]
    BadTimeGrid,
}

// -- spectral densities ----------------------------------------------------

/// Environment coupling density J(omega), supported on omega >= 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SpectralDensity {
    /// J = alpha * omega^s * exp(-omega / omega_c).
    Ohmic { alpha: f64, s: f64, omega_c: f64 },
    /// Ohmic profile times (omega - omega0)^2 / ((omega - omega0)^2 + w^2):
    /// smooth, nonnegative, with an exact zero at omega0.
    NotchedOhmic { alpha: f64, s: f64, omega_c: f64, omega0: f64, width: f64 },
    /// Piecewise-linear interpolation of (omega, J) samples; zero outside.
    Tabulated { points: Vec<(f64, f64)> },
}

impl SpectralDensity {
    pub fn validate(&self) -> Result<(), SpinBosonError> {
        let bad = |msg: &str| Err(SpinBosonError::BadSpectral(msg.to_string()));
        match self {
            SpectralDensity::Ohmic { alpha, s, omega_c } => {
                if !(*alpha > 0.0 && *s > 0.0 && *omega_c > 0.0) {
                    return bad("ohmic parameters must be positive");
                }
            }
            SpectralDensity::NotchedOhmic { alpha, s, omega_c, omega0, width } => {
                if !(*alpha > 0.0 && *s > 0.0 && *omega_c > 0.0 && *omega0 > 0.0 && *width > 0.0)
                {
                    return bad("notched-ohmic parameters must be positive");
                }
            }
            SpectralDensity::Tabulated { points } => {
                if points.len() < 2 {
                    return bad("tabulated density needs at least two points");
                }
                for w in points.windows(2) {
                    if w[1].0 <= w[0].0 {
                        return bad("tabulated grid must be strictly increasing");
                    }
                }
                if points.iter().any(|&(x, j)| x < 0.0 || j < 0.0 || !j.is_finite()) {
                    return bad("tabulated samples must be finite and nonnegative");
                }
            }
        }
        Ok(())
    }

    /// J(omega); zero for omega < 0.
    pub fn j(&self, omega: f64) -> f64 {
        if omega < 0.0 {
            return 0.0;
        }
        match self {
            SpectralDensity::Ohmic { alpha, s, omega_c } => {
                alpha * omega.powf(*s) * (-omega / omega_c).exp()
            }
            SpectralDensity::NotchedOhmic { alpha, s, omega_c, omega0, width } => {
                let d2 = (omega - omega0) * (omega - omega0);
                alpha * omega.powf(*s) * (-omega / omega_c).exp() * d2 / (d2 + width * width)
            }
            SpectralDensity::Tabulated { points } => {
                let n = points.len();
                if omega < points[0].0 || omega > points[n - 1].0 {
                    return 0.0;
                }
                let k = points.partition_point(|&(x, _)| x <= omega).min(n - 1);
                if k == 0 {
                    return points[0].1;
                }
                let (x0, y0) = points[k - 1];
                let (x1, y1) = points[k];
                y0 + (y1 - y0) * (omega - x0) / (x1 - x0)
            }
        }
    }

    /// Characteristic frequency scale, used to size quadrature windows.
    fn scale(&self) -> f64 {
        match self {
            SpectralDensity::Ohmic { omega_c, .. }
            | SpectralDensity::NotchedOhmic { omega_c, .. } => *omega_c,
            SpectralDensity::Tabulated { points } => {
                (points.last().unwrap().0 - points[0].0).max(1e-6)
            }
        }
    }

    /// Upper integration bound beyond which the tail is negligible
    /// (or exactly zero for tabulated densities).
    fn upper(&self, omega: f64) -> f64 {
        match self {
            SpectralDensity::Ohmic { s, omega_c, .. }
            | SpectralDensity::NotchedOhmic { s, omega_c, .. } => {
                let decay = omega_c * (60.0 + 10.0 * s.max(1.0));
                decay.max(2.0 * omega.abs() + 10.0 * omega_c)
            }
            SpectralDensity::Tabulated { points } => points.last().unwrap().0,
        }
    }

    pub fn max_on(&self, lo: f64, hi: f64, samples: usize) -> f64 {
        let n = samples.max(2);
        (0..=n)
            .map(|k| self.j(lo + (hi - lo) * k as f64 / n as f64))
            .fold(0.0, f64::max)
    }
}

// -- adaptive Gauss-Legendre quadrature ------------------------------------

fn legendre_rule(n: usize) -> Vec<(f64, f64)> {
    let mut rule = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            // Evaluate P_n and P_n' by the three-term recurrence.
            let (mut p0, mut p1) = (1.0f64, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (mut p0, mut p1) = (1.0f64, x);
        for k in 2..=n {
            let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        rule.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    rule
}

fn gl7() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| legendre_rule(7))
}

fn gl15() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| legendre_rule(15))
}

fn fixed_rule(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rule: &[(f64, f64)]) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    // Fixed summation order for determinism.
    rule.iter().map(|&(x, w)| w * f(c + h * x)).sum::<f64>() * h
}

/// Adaptive bisection with a GL7/GL15 error estimate. The rules are open
/// (no endpoint evaluations), so integrable endpoint behaviour is fine.
fn adaptive_quad(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64, SpinBosonError> {
    if a >= b {
        return Ok(0.0);
    }
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        tol: f64,
        depth: u32,
        worst: &mut f64,
    ) -> f64 {
        let coarse = fixed_rule(f, a, b, gl7());
        let fine = fixed_rule(f, a, b, gl15());
        let err = (fine - coarse).abs();
        if err <= tol || depth >= 48 || (b - a) < 1e-15 * (a.abs() + b.abs() + 1.0) {
            if err > tol {
                *worst += err;
            }
            return fine;
        }
        let m = 0.5 * (a + b);
        recurse(f, a, m, 0.5 * tol, depth + 1, worst)
            + recurse(f, m, b, 0.5 * tol, depth + 1, worst)
    }
    let mut worst = 0.0;
    let v = recurse(f, a, b, tol, 0, &mut worst);
    if worst > 100.0 * tol || !v.is_finite() {
        return Err(SpinBosonError::IntegralAccuracy(worst));
    }
    Ok(v)
}

const PV_TOL: f64 = 1e-9;

/// Principal-value level-shift integral I(omega) = P.P. int_0^inf
/// J(x)/(x - omega) dx, evaluated with singularity subtraction over a
/// symmetric window (whose analytic log term vanishes) plus plain
/// adaptive tails. Accuracy target 1e-8 absolute.
pub fn principal_value_of(
    j: &dyn Fn(f64) -> f64,
    omega: f64,
    scale: f64,
    upper: f64,
) -> Result<f64, SpinBosonError> {
    let upper = upper.max(2.0 * omega.abs() + scale);
    if omega <= 0.0 {
        // No pole on the contour.
        return adaptive_quad(&|x| j(x) / (x - omega), 0.0, upper, PV_TOL);
    }
    let h = omega.min(scale);
    let jw = j(omega);
    let d = 1e-6 * scale.max(omega);
    let guard = 1e-9 * scale.max(1.0);
    let windowed = |x: f64| {
        if (x - omega).abs() < guard {
            (j(omega + d) - j(omega - d)) / (2.0 * d)
        } else {
            (j(x) - jw) / (x - omega)
        }
    };
    let mut total = adaptive_quad(&windowed, omega - h, omega + h, PV_TOL)?;
    if omega - h > 0.0 {
        total += adaptive_quad(&|x| j(x) / (x - omega), 0.0, omega - h, PV_TOL)?;
    }
    total += adaptive_quad(&|x| j(x) / (x - omega), omega + h, upper, PV_TOL)?;
    Ok(total)
}

pub fn principal_value_i(sd: &SpectralDensity, omega: f64) -> Result<f64, SpinBosonError> {
    principal_value_of(&|x| sd.j(x), omega, sd.scale(), sd.upper(omega))
}

/// Alternative scheme for the dual-oracle test: substitute u = x - omega
/// so the pole cancels in the odd part (J(omega+u) - J(omega-u))/u.
pub fn principal_value_i_alt(sd: &SpectralDensity, omega: f64) -> Result<f64, SpinBosonError> {
    let scale = sd.scale();
    let upper = sd.upper(omega).max(2.0 * omega.abs() + scale);
    if omega <= 0.0 {
        // Same analytic situation, different window: split at scale/3.
        let split = (0.33 * scale).min(upper);
        let f = |x: f64| sd.j(x) / (x - omega);
        return Ok(adaptive_quad(&f, 0.0, split, PV_TOL)?
            + adaptive_quad(&f, split, upper, PV_TOL)?);
    }
    let h = 0.5 * omega.min(scale);
    let d = 3e-6 * scale.max(omega);
    let guard = 1e-9 * scale.max(1.0);
    let odd = |u: f64| {
        if u.abs() < guard {
            (sd.j(omega + d) - sd.j(omega - d)) / d
        } else {
            (sd.j(omega + u) - sd.j(omega - u)) / u
        }
    };
    let mut total = adaptive_quad(&odd, 0.0, h, PV_TOL)?;
    if omega - h > 0.0 {
        total += adaptive_quad(&|x| sd.j(x) / (x - omega), 0.0, omega - h, PV_TOL)?;
    }
    total += adaptive_quad(&|x| sd.j(x) / (x - omega), omega + h, upper, PV_TOL)?;
    Ok(total)
}

// -- model and eigen-system ------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Temperature {
    ZeroT,
    /// Inverse temperature beta > 0.
    Finite(f64),
}

#[derive(Debug, Clone)]
pub struct SpinBosonModel {
    pub delta: f64,
    pub epsilon: f64,
    pub beta: Temperature,
    pub sd: SpectralDensity,
}

impl SpinBosonModel {
    pub fn new(
        delta: f64,
        epsilon: f64,
        beta: Temperature,
        sd: SpectralDensity,
    ) -> Result<Self, SpinBosonError> {
        if delta == 0.0 || !delta.is_finite() {
            return Err(SpinBosonError::DeltaZero);
        }
        if let Temperature::Finite(b) = beta {
            if !(b > 0.0) || !b.is_finite() {
                return Err(SpinBosonError::BadBeta(b));
            }
        }
        sd.validate()?;
        Ok(Self { delta, epsilon, beta, sd })
    }

    pub fn eigensystem(&self) -> EigenSystem {
        EigenSystem::new(self.delta, self.epsilon).expect("delta validated nonzero")
    }
}

/// Diagonalization data for H_S = (epsilon/2) sigma_z - (delta/2) sigma_x.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub delta: f64,
    pub epsilon: f64,
    pub nu: f64,
    pub mu_plus: f64,
    pub mu_minus: f64,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    /// Normalized eigenvectors in the sigma_z basis (real entries).
    pub e_plus: [f64; 2],
    pub e_minus: [f64; 2],
}

impl EigenSystem {
    pub fn new(delta: f64, epsilon: f64) -> Result<Self, SpinBosonError> {
        if delta == 0.0 || !delta.is_finite() {
            return Err(SpinBosonError::DeltaZero);
        }
        let x = epsilon / delta;
        let nu = (1.0 + x * x).sqrt();
        let mu_plus = x + nu;
        let mu_minus = x - nu;
        let norm = |mu: f64| (1.0 + mu * mu).sqrt();
        Ok(Self {
            delta,
            epsilon,
            nu,
            mu_plus,
            mu_minus,
            lambda_plus: 0.5 * delta * nu,
            lambda_minus: -0.5 * delta * nu,
            e_plus: [1.0 / norm(mu_minus), mu_minus / norm(mu_minus)],
            e_minus: [1.0 / norm(mu_plus), mu_plus / norm(mu_plus)],
        })
    }

    /// <e+|sigma_z|e+> = (1 - mu_-^2)/(1 + mu_-^2) = epsilon/(nu delta).
    pub fn sz_plus(&self) -> f64 {
        (1.0 - self.mu_minus * self.mu_minus) / (1.0 + self.mu_minus * self.mu_minus)
    }

    /// <e-|sigma_z|e-> = (1 - mu_+^2)/(1 + mu_+^2) = -epsilon/(nu delta).
    pub fn sz_minus(&self) -> f64 {
        (1.0 - self.mu_plus * self.mu_plus) / (1.0 + self.mu_plus * self.mu_plus)
    }

    /// Transition frequency nu * delta.
    pub fn nu_delta(&self) -> f64 {
        self.nu * self.delta
    }

    /// Basis-change matrix with columns e+, e- (orthogonal, real).
    pub fn basis_matrix(&self) -> ComplexMatrix {
        let r = |v: f64| Complex64::new(v, 0.0);
        ComplexMatrix::new(
            2,
            2,
            vec![r(self.e_plus[0]), r(self.e_minus[0]), r(self.e_plus[1]), r(self.e_minus[1])],
        )
        .unwrap()
    }

    /// D = |e+><e-| in the sigma_z basis.
    pub fn d_matrix(&self) -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(2, 2);
        for a in 0..2 {
            for b in 0..2 {
                m[(a, b)] = Complex64::new(self.e_plus[a] * self.e_minus[b], 0.0);
            }
        }
        m
    }
}

// -- coefficients ----------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StochasticCoefficients {
    pub gamma: f64,
    pub sigma: f64,
    /// Global phase drift; defined at zero temperature only.
    pub phi: Option<f64>,
    pub beta: Temperature,
}

/// The common coefficient of the I(0) terms in sigma and phi. It equals
/// (epsilon/(nu delta))^2 for both eigenvectors, so their difference in
/// sigma vanishes identically; when the difference is negligible the
/// (possibly divergent at finite temperature) I(0) evaluations are skipped.
fn diagonal_coefficients(es: &EigenSystem) -> (f64, f64) {
    let cp = es.sz_plus();
    let cm = es.sz_minus();
    (cp * cp, cm * cm)
}

pub fn coefficients_zero_t(model: &SpinBosonModel) -> Result<StochasticCoefficients, SpinBosonError> {
    let es = model.eigensystem();
    let nu2 = es.nu * es.nu;
    let wd = es.nu_delta().abs();
    let gamma = std::f64::consts::PI * model.sd.j(wd) / nu2;
    let i_minus = principal_value_i(&model.sd, -wd)?;
    let i_plus = principal_value_i(&model.sd, wd)?;
    let (c_plus_sq, c_minus_sq) = diagonal_coefficients(&es);
    let diag_coef = c_plus_sq - c_minus_sq;
    let mut sigma = (i_minus - i_plus) / nu2;
    let mut phi = i_minus / nu2;
    if diag_coef.abs() > 1e-14 || c_plus_sq > 1e-14 {
        let i0 = principal_value_i(&model.sd, 0.0)?;
        sigma += diag_coef * i0;
        phi += c_plus_sq * i0;
    }
    Ok(StochasticCoefficients { gamma, sigma, phi: Some(phi), beta: Temperature::ZeroT })
}

/// Absorption and emission densities J+(omega) = J/(1 - e^{-beta omega})
/// and J-(omega) = J e^{-beta omega}/(1 - e^{-beta omega}), in
/// overflow-safe form. Defined for omega > 0.
pub fn j_thermal(sd: &SpectralDensity, beta: f64, omega: f64) -> (f64, f64) {
    if omega <= 0.0 {
        return (0.0, 0.0);
    }
    let j = sd.j(omega);
    let em = -(-beta * omega).exp_m1(); // 1 - e^{-beta omega}
    let ep = (beta * omega).exp_m1(); // e^{beta omega} - 1
    (j / em, j / ep)
}

pub fn coefficients_finite_t(
    model: &SpinBosonModel,
) -> Result<StochasticCoefficients, SpinBosonError> {
    let beta = match model.beta {
        Temperature::Finite(b) => b,
        Temperature::ZeroT => {
            return Err(SpinBosonError::BadBeta(f64::INFINITY));
        }
    };
    let es = model.eigensystem();
    let nu2 = es.nu * es.nu;
    let wd = es.nu_delta().abs();
    let gamma =
        std::f64::consts::PI * model.sd.j(wd) / nu2 * (0.5 * beta * wd).tanh().recip();
    let scale = model.sd.scale();
    let upper = model.sd.upper(wd);
    let jp = |x: f64| j_thermal(&model.sd, beta, x).0;
    let jm = |x: f64| j_thermal(&model.sd, beta, x).1;
    let mut sigma = (principal_value_of(&jp, -wd, scale, upper)?
        - principal_value_of(&jp, wd, scale, upper)?
        + principal_value_of(&jm, -wd, scale, upper)?
        - principal_value_of(&jm, wd, scale, upper)?)
        / nu2;
    let (c_plus_sq, c_minus_sq) = diagonal_coefficients(&es);
    let diag_coef = c_plus_sq - c_minus_sq;
    if diag_coef.abs() > 1e-14 {
        // Reachable only for densities breaking the algebraic identity;
        // I+(0) diverges logarithmically whenever J(0+) behaves like
        // omega^s with s <= 1 at finite temperature.
        let s_ok = match &model.sd {
            SpectralDensity::Ohmic { s, .. } | SpectralDensity::NotchedOhmic { s, .. } => *s > 1.0,
            SpectralDensity::Tabulated { points } => points[0].0 > 0.0 || points[0].1 == 0.0,
        };
        if !s_ok {
            return Err(SpinBosonError::Divergent(
                "I+-(0) at finite temperature for this density".into(),
            ));
        }
        let i0 = principal_value_of(&jp, 0.0, scale, upper)?
            + principal_value_of(&jm, 0.0, scale, upper)?;
        sigma += diag_coef * i0;
    }
    Ok(StochasticCoefficients { gamma, sigma, phi: None, beta: model.beta })
}

pub fn coefficients(model: &SpinBosonModel) -> Result<StochasticCoefficients, SpinBosonError> {
    match model.beta {
        Temperature::ZeroT => coefficients_zero_t(model),
        Temperature::Finite(_) => coefficients_finite_t(model),
    }
}

// -- closed-form P(t) ------------------------------------------------------

/// The coherence operator P(t) in the sigma_z basis. Assembled in the
/// eigenbasis (ordered e+, e-) and rotated; P(0) = sigma_z exactly.
pub fn p_of_t(es: &EigenSystem, coeffs: &StochasticCoefficients, t: f64) -> ComplexMatrix {
    let cm = es.sz_plus(); // (1 - mu_-^2)/(1 + mu_-^2)
    let cp = es.sz_minus(); // (1 - mu_+^2)/(1 + mu_+^2)
    let decay = (-coeffs.gamma * t).exp();
    let decay2 = (-2.0 * coeffs.gamma * t).exp();
    let phase = Complex64::from_polar(decay / es.nu, -(coeffs.sigma - es.nu_delta()) * t);
    // Eigenbasis entries: diag terms from D^+D (coefficient cp - cm,
    // decaying) plus the constant cm * identity; off-diagonal from D, D^+.
    let mut p_eig = ComplexMatrix::zeros(2, 2);
    p_eig[(0, 0)] = Complex64::new(cm, 0.0);
    p_eig[(1, 1)] = Complex64::new(cm + (cp - cm) * decay2, 0.0);
    p_eig[(0, 1)] = phase;
    p_eig[(1, 0)] = phase.conj();
    let v = es.basis_matrix();
    v.mul(&p_eig).mul(&v.adjoint())
}

/// <psi0 | P(t) | psi0> for a (not necessarily normalized) spin state
/// given in the sigma_z basis.
pub fn p_expectation(
    es: &EigenSystem,
    coeffs: &StochasticCoefficients,
    psi0: [Complex64; 2],
    t: f64,
) -> Complex64 {
    let p = p_of_t(es, coeffs, t);
    let v = p.matvec(&psi0.to_vec());
    psi0[0].conj() * v[0] + psi0[1].conj() * v[1]
}

/// sigma_z(t) = e^{i t H_S} sigma_z e^{-i t H_S} in the eigenbasis.
fn sigma_z_heisenberg_eig(es: &EigenSystem, t: f64) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(2, 2);
    m[(0, 0)] = Complex64::new(es.sz_plus(), 0.0);
    m[(1, 1)] = Complex64::new(es.sz_minus(), 0.0);
    let off = Complex64::from_polar(1.0 / es.nu, es.nu_delta() * t);
    // D carries e^{+i t nu delta}, D^+ the conjugate.
    m[(0, 1)] = off;
    m[(1, 0)] = off.conj();
    m
}

// -- master-equation oracle ------------------------------------------------

#[derive(Debug, Clone)]
pub struct CoherenceTrace {
    pub times: Vec<f64>,
    /// Tr[rho(t) sigma_z(t)] from the master-equation evolution.
    pub sigma_z_mean: Vec<f64>,
    /// |<e+| rho(t) |e->|.
    pub offdiag_abs: Vec<f64>,
    /// Eigenbasis populations (p_plus, p_minus) along the grid.
    pub populations: Vec<(f64, f64)>,
    /// Tr[rho(t)^2], for purity monitoring.
    pub purity: Vec<f64>,
}

/// Dissipative evolution induced by the stochastic-limit equation:
/// effective Hamiltonian sigma * D^+ D and jump operator sqrt(2 gamma) D
/// with D = |e+><e-|, so the e- population decays at rate 2 gamma and the
/// coherence at gamma. The convention (relaxation toward e+) is fixed by
/// requiring Tr[rho(t) sigma_z(t)] to reproduce the closed-form P(t);
/// the agreement test below enforces it. phi contributes only a global
/// phase and does not enter rho.
pub fn master_equation_evolve(
    es: &EigenSystem,
    coeffs: &StochasticCoefficients,
    rho0: &ComplexMatrix,
    times: &[f64],
) -> Result<CoherenceTrace, SpinBosonError> {
    if times.is_empty() || times.windows(2).any(|w| w[1] <= w[0]) || times[0] < 0.0 {
        return Err(SpinBosonError::BadTimeGrid);
    }
    if !rho0.is_square() || rho0.rows() != 2 {
        return Err(SpinBosonError::BadDensityMatrix);
    }
    let trace = rho0[(0, 0)] + rho0[(1, 1)];
    let herm = (rho0[(0, 1)] - rho0[(1, 0)].conj()).norm();
    if (trace - Complex64::new(1.0, 0.0)).norm() > 1e-10 || herm > 1e-10 {
        return Err(SpinBosonError::BadDensityMatrix);
    }
    // Work in the eigenbasis: rho_e = V^+ rho V.
    let v = es.basis_matrix();
    let rho_e = v.adjoint().mul(rho0).mul(&v);
    let gamma = coeffs.gamma;
    let sigma = coeffs.sigma;
    let nu_delta = es.nu_delta().abs();
    let gamma_hat = gamma.max(nu_delta * 1e-6);
    let step_scale = (1.0 / gamma_hat)
        .min(1.0 / (sigma - es.nu_delta()).abs().max(1e-300))
        .min(1.0 / nu_delta.max(1e-300));
    let dt_max = step_scale / 400.0;

    // State: (p_minus, Re r, Im r) with r = <e+|rho|e-); p_plus = tr - p_minus.
    let deriv = |y: [f64; 3]| -> [f64; 3] {
        let (pm, rr, ri) = (y[0], y[1], y[2]);
        // d p_- = -2 gamma p_-; d r = (i sigma - gamma) r.
        [-2.0 * gamma * pm, -gamma * rr - sigma * ri, sigma * rr - gamma * ri]
    };
    let mut y = [rho_e[(1, 1)].re, rho_e[(0, 1)].re, rho_e[(0, 1)].im];
    let mut p_plus = rho_e[(0, 0)].re;
    let mut t = 0.0;
    let mut trace_ref = p_plus + y[0];

    let mut out = CoherenceTrace {
        times: times.to_vec(),
        sigma_z_mean: Vec::with_capacity(times.len()),
        offdiag_abs: Vec::with_capacity(times.len()),
        populations: Vec::with_capacity(times.len()),
        purity: Vec::with_capacity(times.len()),
    };
    let mut record = |t: f64, p_plus: f64, y: &[f64; 3]| {
        let r = Complex64::new(y[1], y[2]);
        let sz = sigma_z_heisenberg_eig(es, t);
        // Tr[rho sigma_z(t)] with rho = [[p+, r], [conj r, p-]].
        let mean = sz[(0, 0)].re * p_plus
            + sz[(1, 1)].re * y[0]
            + 2.0 * (sz[(1, 0)] * r).re;
        out.sigma_z_mean.push(mean);
        out.offdiag_abs.push(r.norm());
        out.populations.push((p_plus, y[0]));
        out.purity.push(p_plus * p_plus + y[0] * y[0] + 2.0 * r.norm_sqr());
    };

    for &target in times {
        while t < target - 1e-15 * target.max(1.0) {
            let dt = dt_max.min(target - t);
            let k1 = deriv(y);
            let mid1 = [y[0] + 0.5 * dt * k1[0], y[1] + 0.5 * dt * k1[1], y[2] + 0.5 * dt * k1[2]];
            let k2 = deriv(mid1);
            let mid2 = [y[0] + 0.5 * dt * k2[0], y[1] + 0.5 * dt * k2[1], y[2] + 0.5 * dt * k2[2]];
            let k3 = deriv(mid2);
            let end = [y[0] + dt * k3[0], y[1] + dt * k3[1], y[2] + dt * k3[2]];
            let k4 = deriv(end);
            let mut dp = 0.0;
            for i in 0..3 {
                let dy = dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                if i == 0 {
                    dp = dy;
                }
                y[i] += dy;
            }
            // The jump feeds p_- loss into p_+, preserving the trace.
            p_plus -= dp;
            t += dt;
        }
        let drift = (p_plus + y[0] - trace_ref).abs();
        if drift > 1e-8 {
            return Err(SpinBosonError::TraceDrift(drift));
        }
        trace_ref = p_plus + y[0];
        record(target, p_plus, &y);
    }
    Ok(out)
}

/// Default trace grid: n points spanning [0, t_max]; the conventional
/// horizon is 50/(nu delta) with 2000 points.
pub fn default_time_grid(es: &EigenSystem, n: usize, t_max: Option<f64>) -> Vec<f64> {
    let horizon = t_max.unwrap_or(50.0 / es.nu_delta().abs());
    let n = n.max(2);
    (0..n).map(|k| horizon * k as f64 / (n - 1) as f64).collect()
}

// -- decoherence-free condition and tuner ----------------------------------

/// Evaluates the residual J(nu delta); true when it is negligible
/// relative to the density's magnitude near the transition frequency.
pub fn decoherence_free_check(model: &SpinBosonModel) -> (f64, bool) {
    let es = model.eigensystem();
    let wd = es.nu_delta().abs();
    let residual = model.sd.j(wd);
    let reference = model.sd.max_on(0.0, 4.0 * wd, 4000).max(1.0);
    (residual, residual.abs() < 1e-12 * reference)
}

#[derive(Debug, Clone, Serialize)]
pub struct TuneResult {
    pub delta: f64,
    pub epsilon: f64,
    pub nu: f64,
    pub gamma: f64,
    pub decoherence_free: bool,
}

/// Searches epsilon in [0, eps_max] (delta held fixed) for the
/// decoherence-free condition J(nu delta) = 0. For a notched density the
/// notch center gives a bisection target nu delta = omega0; otherwise the
/// damping rate is minimized by golden-section search.
pub fn tune_parameters(sd: &SpectralDensity, delta: f64, eps_max: f64) -> Result<TuneResult, SpinBosonError> {
    if delta == 0.0 {
        return Err(SpinBosonError::DeltaZero);
    }
    sd.validate()?;
    let eps_max = if eps_max > 0.0 { eps_max } else { 10.0 * delta.abs() };
    let gamma_of = |eps: f64| -> f64 {
        let es = EigenSystem::new(delta, eps).unwrap();
        std::f64::consts::PI * sd.j(es.nu_delta().abs()) / (es.nu * es.nu)
    };
    let nu_delta_of = |eps: f64| (delta * delta + eps * eps).sqrt();

    let epsilon = match sd {
        SpectralDensity::NotchedOhmic { omega0, .. } => {
            // nu delta = sqrt(delta^2 + eps^2) is increasing in |eps|;
            // the notch is reachable iff delta <= omega0 <= nu_delta(eps_max).
            if *omega0 < delta.abs() || *omega0 > nu_delta_of(eps_max) {
                return best_effort(sd, delta, eps_max, &gamma_of);
            }
            let (mut lo, mut hi) = (0.0f64, eps_max);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if nu_delta_of(mid) < *omega0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        }
        _ => {
            let r = golden_min(&gamma_of, 0.0, eps_max);
            r
        }
    };
    finish_tune(sd, delta, epsilon, &gamma_of)
}

fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = 0.5 * (5.0f64.sqrt() - 1.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..300 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

fn best_effort(
    sd: &SpectralDensity,
    delta: f64,
    eps_max: f64,
    gamma_of: &dyn Fn(f64) -> f64,
) -> Result<TuneResult, SpinBosonError> {
    let epsilon = golden_min(gamma_of, 0.0, eps_max);
    finish_tune(sd, delta, epsilon, gamma_of)
}

fn finish_tune(
    sd: &SpectralDensity,
    delta: f64,
    epsilon: f64,
    gamma_of: &dyn Fn(f64) -> f64,
) -> Result<TuneResult, SpinBosonError> {
    let es = EigenSystem::new(delta, epsilon)?;
    let gamma = gamma_of(epsilon);
    // Reference damping rate of the standard Ohmic bath at the same
    // operating point, used as the decoherence-free yardstick.
    let reference = SpectralDensity::Ohmic { alpha: 1.0, s: 1.0, omega_c: 1.0 };
    let gamma_ref =
        std::f64::consts::PI * reference.j(es.nu_delta().abs()) / (es.nu * es.nu);
    let model = SpinBosonModel::new(delta, epsilon, Temperature::ZeroT, sd.clone())?;
    let (_, check) = decoherence_free_check(&model);
    Ok(TuneResult {
        delta,
        epsilon,
        nu: es.nu,
        gamma,
        decoherence_free: check || gamma < 1e-10 * gamma_ref.max(1e-300),
    })
}

/// Multi-qubit off-diagonal envelope |rho_ab(t)| under independent,
/// identical-form reservoirs: the product over bit positions where a and
/// b differ of each qubit's single-qubit factor e^{-gamma_i t}. This is a
/// modeling assumption layered on the single-qubit theory, not a derived
/// multi-qubit result.
pub fn register_coherence_report(
    gammas: &[f64],
    a: &[u8],
    b: &[u8],
    times: &[f64],
) -> Result<Vec<f64>, SpinBosonError> {
    if a.len() != gammas.len() || b.len() != gammas.len() {
        return Err(SpinBosonError::LengthMismatch { a: a.len(), b: b.len(), n: gammas.len() });
    }
    let total_rate: f64 = gammas
        .iter()
        .zip(a.iter().zip(b))
        .filter(|(_, (x, y))| x != y)
        .map(|(g, _)| g)
        .sum();
    Ok(times.iter().map(|&t| (-total_rate * t).exp()).collect())
}

// -- model description file ------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub delta: f64,
    pub epsilon: f64,
    pub beta: BetaField,
    pub spectral: SpectralDensity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaField {
    Value(f64),
    Marker(String),
}

impl ModelFile {
    pub fn build(&self) -> Result<SpinBosonModel, SpinBosonError> {
        let beta = match &self.beta {
            BetaField::Value(b) => Temperature::Finite(*b),
            BetaField::Marker(s) if s == "zero_T" => Temperature::ZeroT,
            BetaField::Marker(s) => {
                return Err(SpinBosonError::BadSpectral(format!(
                    "beta must be a number or \"zero_T\", got {s:?}"
                )))
            }
        };
        SpinBosonModel::new(self.delta, self.epsilon, beta, self.spectral.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn ohmic111() -> SpectralDensity {
        SpectralDensity::Ohmic { alpha: 1.0, s: 1.0, omega_c: 1.0 }
    }

    fn sigma_z() -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(2, 2);
        m[(0, 0)] = Complex64::new(1.0, 0.0);
        m[(1, 1)] = Complex64::new(-1.0, 0.0);
        m
    }

    #[test]
    fn eigensystem_symmetric() {
        let es = EigenSystem::new(1.0, 0.0).unwrap();
        assert!((es.nu - 1.0).abs() < 1e-15);
        assert!((es.mu_plus - 1.0).abs() < 1e-15);
        assert!((es.mu_minus + 1.0).abs() < 1e-15);
        assert!((es.lambda_plus - 0.5).abs() < 1e-15);
        assert!(es.sz_plus().abs() < 1e-15);
        assert!(es.sz_minus().abs() < 1e-15);
    }

    #[test]
    fn eigensystem_biased() {
        let es = EigenSystem::new(1.0, 3.0f64.sqrt()).unwrap();
        assert!((es.nu - 2.0).abs() < 1e-12);
        assert!((es.sz_plus() - 3.0f64.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn eigensystem_identities() {
        for &(d, e) in &[(1.0, 0.0), (0.7, -1.3), (2.0, 5.0), (-1.0, 0.4), (0.5, 2.0)] {
            let es = EigenSystem::new(d, e).unwrap();
            assert!((es.mu_plus * es.mu_minus + 1.0).abs() < 1e-12);
            let r = es.epsilon / (es.nu * es.delta);
            assert!((r * r + 1.0 / (es.nu * es.nu) - 1.0).abs() < 1e-12);
            assert!((es.sz_plus() + es.sz_minus()).abs() < 1e-12);
            // H_S e_pm = lambda_pm e_pm with H_S = (e/2) sz - (d/2) sx.
            let h = [[0.5 * e, -0.5 * d], [-0.5 * d, -0.5 * e]];
            for (vec, lam) in [(es.e_plus, es.lambda_plus), (es.e_minus, es.lambda_minus)] {
                for row in 0..2 {
                    let hv = h[row][0] * vec[0] + h[row][1] * vec[1];
                    assert!((hv - lam * vec[row]).abs() < 1e-12);
                }
            }
            // Orthonormality.
            let dot = es.e_plus[0] * es.e_minus[0] + es.e_plus[1] * es.e_minus[1];
            assert!(dot.abs() < 1e-12);
        }
    }

    #[test]
    fn eigensystem_rejects_zero_delta() {
        assert!(matches!(EigenSystem::new(0.0, 1.0), Err(SpinBosonError::DeltaZero)));
    }

    #[test]
    fn spectral_values() {
        let sd = ohmic111();
        assert!((sd.j(1.0) - (-1.0f64).exp()).abs() < 1e-12);
        assert_eq!(sd.j(0.0), 0.0);
        assert_eq!(sd.j(-0.5), 0.0);
        let notch = SpectralDensity::NotchedOhmic {
            alpha: 1.0,
            s: 1.0,
            omega_c: 1.0,
            omega0: 2.0,
            width: 0.3,
        };
        assert_eq!(notch.j(2.0), 0.0);
        assert!(notch.j(1.9) > 0.0);
    }

    #[test]
    fn tabulated_interpolation() {
        let sd = SpectralDensity::Tabulated {
            points: vec![(0.0, 0.0), (1.0, 2.0), (3.0, 0.0)],
        };
        sd.validate().unwrap();
        assert!((sd.j(0.5) - 1.0).abs() < 1e-15);
        assert!((sd.j(2.0) - 1.0).abs() < 1e-15);
        assert_eq!(sd.j(4.0), 0.0);
    }

    #[test]
    fn gauss_rules_integrate_polynomials() {
        // GL7 is exact to degree 13.
        let f = |x: f64| x.powi(12) + 3.0 * x.powi(5) - x;
        let exact = 2.0 / 13.0;
        assert!((fixed_rule(&f, -1.0, 1.0, gl7()) - exact).abs() < 1e-13);
        assert!((fixed_rule(&f, -1.0, 1.0, gl15()) - exact).abs() < 1e-13);
        let g = |x: f64| x.exp();
        let exact_g = 1.0f64.exp() - (-1.0f64).exp();
        assert!((fixed_rule(&g, -1.0, 1.0, gl15()) - exact_g).abs() < 1e-14);
    }

    #[test]
    fn adaptive_quad_exponential() {
        let v = adaptive_quad(&|x: f64| (-x).exp(), 0.0, 60.0, 1e-12).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
    }

    #[test]
    fn pv_at_zero_is_alpha_omega_c() {
        // I(0) = int J(x)/x dx = alpha * omega_c for s = 1.
        let v = principal_value_i(&ohmic111(), 0.0).unwrap();
        assert!((v - 1.0).abs() < 1e-8, "I(0) = {v}");
        let sd2 = SpectralDensity::Ohmic { alpha: 0.4, s: 1.0, omega_c: 2.5 };
        let v2 = principal_value_i(&sd2, 0.0).unwrap();
        assert!((v2 - 1.0).abs() < 1e-8, "I(0) = {v2}");
    }

    #[test]
    fn pv_negative_frequency_positive() {
        let v = principal_value_i(&ohmic111(), -1.0).unwrap();
        assert!(v > 0.0);
        let alt = principal_value_i_alt(&ohmic111(), -1.0).unwrap();
        assert!((v - alt).abs() < 1e-6);
    }

    #[test]
    fn pv_dual_scheme_agreement() {
        for sd in [
            ohmic111(),
            SpectralDensity::Ohmic { alpha: 0.7, s: 2.0, omega_c: 1.5 },
            SpectralDensity::NotchedOhmic {
                alpha: 1.0,
                s: 1.0,
                omega_c: 1.0,
                omega0: 2.0,
                width: 0.5,
            },
        ] {
            for k in 0..10 {
                let omega = 0.2 + 0.45 * k as f64;
                let a = principal_value_i(&sd, omega).unwrap();
                let b = principal_value_i_alt(&sd, omega).unwrap();
                assert!((a - b).abs() < 1e-6, "omega={omega}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn pv_above_compact_support_is_negative() {
        let sd = SpectralDensity::Tabulated {
            points: vec![(0.0, 0.0), (0.5, 1.0), (1.0, 0.0)],
        };
        let v = principal_value_i(&sd, 3.0).unwrap();
        assert!(v < 0.0, "I(3) = {v}");
        // And equals -int J/(omega - x) dx computed directly.
        let direct = -adaptive_quad(&|x| sd.j(x) / (3.0 - x), 0.0, 1.0, 1e-10).unwrap();
        assert!((v - direct).abs() < 1e-8);
    }

    #[test]
    fn gamma_symmetric_ohmic() {
        let model =
            SpinBosonModel::new(1.0, 0.0, Temperature::ZeroT, ohmic111()).unwrap();
        let c = coefficients_zero_t(&model).unwrap();
        assert!((c.gamma - PI * (-1.0f64).exp()).abs() < 1e-10, "gamma = {}", c.gamma);
        assert!(c.phi.is_some());
    }

    #[test]
    fn gamma_zero_at_notch() {
        let sd = SpectralDensity::NotchedOhmic {
            alpha: 1.0,
            s: 1.0,
            omega_c: 1.0,
            omega0: 2.0,
            width: 0.4,
        };
        let model =
            SpinBosonModel::new(1.0, 3.0f64.sqrt(), Temperature::ZeroT, sd).unwrap();
        let c = coefficients_zero_t(&model).unwrap();
        // nu*delta lands on the notch up to roundoff in sqrt(3)^2.
        assert!(c.gamma.abs() < 1e-25, "gamma = {}", c.gamma);
    }

    #[test]
    fn sigma_symmetric_case() {
        // epsilon = 0 kills the I(0) terms: sigma = I(-delta) - I(delta).
        let model =
            SpinBosonModel::new(1.0, 0.0, Temperature::ZeroT, ohmic111()).unwrap();
        let c = coefficients_zero_t(&model).unwrap();
        let expect = principal_value_i(&ohmic111(), -1.0).unwrap()
            - principal_value_i(&ohmic111(), 1.0).unwrap();
        assert!((c.sigma - expect).abs() < 1e-9);
    }

    #[test]
    fn thermal_gamma_factor() {
        let model =
            SpinBosonModel::new(1.0, 0.0, Temperature::Finite(2.0), ohmic111()).unwrap();
        let c = coefficients_finite_t(&model).unwrap();
        let expect = PI * (-1.0f64).exp() * (1.0f64.tanh().recip());
        assert!((c.gamma - expect).abs() < 1e-10, "gamma = {}", c.gamma);
        assert!(c.phi.is_none());
    }

    #[test]
    fn thermal_gamma_approaches_zero_t() {
        let zero = coefficients_zero_t(
            &SpinBosonModel::new(1.0, 0.0, Temperature::ZeroT, ohmic111()).unwrap(),
        )
        .unwrap();
        let cold = coefficients_finite_t(
            &SpinBosonModel::new(1.0, 0.0, Temperature::Finite(100.0), ohmic111()).unwrap(),
        )
        .unwrap();
        assert!((cold.gamma / zero.gamma - 1.0).abs() < 1e-8);
        assert!(cold.gamma >= zero.gamma);
    }

    #[test]
    fn detailed_balance() {
        let beta = 1.7;
        for k in 1..=20 {
            let omega = 0.15 * k as f64;
            let (jp, jm) = j_thermal(&ohmic111(), beta, omega);
            let j = ohmic111().j(omega);
            assert!((jp - jm - j).abs() < 1e-12 * j.max(1.0));
            assert!((jp / jm - (beta * omega).exp()).abs() < 1e-12 * (beta * omega).exp());
        }
    }

    #[test]
    fn p_at_zero_is_sigma_z() {
        for &(d, e) in &[(1.0, 0.0), (0.7, -1.3), (2.0, 5.0), (0.5, 0.3)] {
            let es = EigenSystem::new(d, e).unwrap();
            let coeffs = StochasticCoefficients {
                gamma: 0.3,
                sigma: 0.2,
                phi: Some(0.0),
                beta: Temperature::ZeroT,
            };
            let p0 = p_of_t(&es, &coeffs, 0.0);
            let sz = sigma_z();
            for i in 0..2 {
                for j in 0..2 {
                    assert!((p0[(i, j)] - sz[(i, j)]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn p_long_time_equilibrium() {
        let es = EigenSystem::new(1.0, 1.0).unwrap();
        let coeffs = StochasticCoefficients {
            gamma: 0.5,
            sigma: 0.1,
            phi: Some(0.0),
            beta: Temperature::ZeroT,
        };
        let p = p_of_t(&es, &coeffs, 200.0);
        let c = es.epsilon / (es.nu * es.delta);
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { c } else { 0.0 };
                assert!((p[(i, j)] - Complex64::new(expect, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn p_undamped_oscillation() {
        // epsilon = 0, gamma = 0, spin-up: <P(t)> = cos((sigma - delta) t).
        let es = EigenSystem::new(1.0, 0.0).unwrap();
        let coeffs = StochasticCoefficients {
            gamma: 0.0,
            sigma: 0.35,
            phi: Some(0.0),
            beta: Temperature::ZeroT,
        };
        let up = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        for k in 0..40 {
            let t = 0.37 * k as f64;
            let v = p_expectation(&es, &coeffs, up, t);
            assert!((v.re - ((coeffs.sigma - 1.0) * t).cos()).abs() < 1e-10);
            assert!(v.im.abs() < 1e-10);
        }
    }

    fn density(psi: [Complex64; 2]) -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(2, 2);
        for a in 0..2 {
            for b in 0..2 {
                m[(a, b)] = psi[a] * psi[b].conj();
            }
        }
        m
    }

    #[test]
    fn oracle_matches_closed_form() {
        let es = EigenSystem::new(1.3, -0.8).unwrap();
        let sd = ohmic111();
        let model = SpinBosonModel::new(1.3, -0.8, Temperature::ZeroT, sd).unwrap();
        let coeffs = coefficients_zero_t(&model).unwrap();
        let up = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        let times = default_time_grid(&es, 400, None);
        let trace = master_equation_evolve(&es, &coeffs, &density(up), &times).unwrap();
        for (k, &t) in times.iter().enumerate() {
            let closed = p_expectation(&es, &coeffs, up, t);
            assert!(
                (trace.sigma_z_mean[k] - closed.re).abs() < 1e-7,
                "t = {t}: {} vs {}",
                trace.sigma_z_mean[k],
                closed.re
            );
        }
    }

    #[test]
    fn oracle_unitary_when_gamma_zero() {
        let es = EigenSystem::new(1.0, 0.5).unwrap();
        let coeffs = StochasticCoefficients {
            gamma: 0.0,
            sigma: 0.4,
            phi: None,
            beta: Temperature::ZeroT,
        };
        let psi = [
            Complex64::new(0.6, 0.0),
            Complex64::new(0.0, 0.8),
        ];
        let times = default_time_grid(&es, 100, Some(20.0));
        let trace = master_equation_evolve(&es, &coeffs, &density(psi), &times).unwrap();
        for &p in &trace.purity {
            assert!((p - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn oracle_dark_state_stationary() {
        // The jump operator D = |e+><e-| annihilates e+; starting there
        // the populations never move.
        let es = EigenSystem::new(1.0, 0.7).unwrap();
        let coeffs = StochasticCoefficients {
            gamma: 0.8,
            sigma: 0.2,
            phi: None,
            beta: Temperature::ZeroT,
        };
        let psi = [
            Complex64::new(es.e_plus[0], 0.0),
            Complex64::new(es.e_plus[1], 0.0),
        ];
        let times = default_time_grid(&es, 50, Some(10.0));
        let trace = master_equation_evolve(&es, &coeffs, &density(psi), &times).unwrap();
        for &(pp, pm) in &trace.populations {
            assert!((pp - 1.0).abs() < 1e-10);
            assert!(pm.abs() < 1e-10);
        }
    }

    #[test]
    fn oracle_rejects_bad_density() {
        let es = EigenSystem::new(1.0, 0.0).unwrap();
        let coeffs = StochasticCoefficients {
            gamma: 0.1,
            sigma: 0.0,
            phi: None,
            beta: Temperature::ZeroT,
        };
        let m = ComplexMatrix::identity(2); // trace 2
        assert!(matches!(
            master_equation_evolve(&es, &coeffs, &m, &[0.0, 1.0]),
            Err(SpinBosonError::BadDensityMatrix)
        ));
    }

    #[test]
    fn decoherence_free_notch() {
        let sd = SpectralDensity::NotchedOhmic {
            alpha: 1.0,
            s: 1.0,
            omega_c: 1.0,
            omega0: 2.0,
            width: 0.3,
        };
        let model =
            SpinBosonModel::new(1.0, 3.0f64.sqrt(), Temperature::ZeroT, sd).unwrap();
        let (residual, free) = decoherence_free_check(&model);
        assert!(residual.abs() < 1e-25, "residual = {residual}");
        assert!(free);
        let ohmic_model =
            SpinBosonModel::new(1.0, 3.0f64.sqrt(), Temperature::ZeroT, ohmic111()).unwrap();
        assert!(!decoherence_free_check(&ohmic_model).1);
    }

    #[test]
    fn decoherence_free_tabulated_gap() {
        let sd = SpectralDensity::Tabulated {
            points: vec![(0.0, 0.0), (1.0, 1.0), (1.9, 0.0), (2.1, 0.0), (3.0, 1.0), (5.0, 0.0)],
        };
        let model =
            SpinBosonModel::new(1.0, 3.0f64.sqrt(), Temperature::ZeroT, sd).unwrap();
        assert!(decoherence_free_check(&model).1);
    }

    #[test]
    fn decoherence_free_is_temperature_independent() {
        let sd = SpectralDensity::NotchedOhmic {
            alpha: 1.0,
            s: 1.0,
            omega_c: 1.0,
            omega0: 2.0,
            width: 0.3,
        };
        let flags: Vec<bool> = [Temperature::ZeroT, Temperature::Finite(0.5), Temperature::Finite(10.0)]
            .into_iter()
            .map(|beta| {
                let m = SpinBosonModel::new(1.0, 3.0f64.sqrt(), beta, sd.clone()).unwrap();
                decoherence_free_check(&m).1
            })
            .collect();
        assert!(flags.iter().all(|&f| f == flags[0]));
    }

    #[test]
    fn tune_finds_sqrt3() {
        let sd = SpectralDensity::NotchedOhmic {
            alpha: 1.0,
            s: 1.0,
            omega_c: 1.0,
            omega0: 2.0,
            width: 0.3,
        };
        let r = tune_parameters(&sd, 1.0, 10.0).unwrap();
        assert!((r.epsilon - 3.0f64.sqrt()).abs() < 1e-8, "eps = {}", r.epsilon);
        assert!(r.decoherence_free);
        assert!((r.nu - 2.0).abs() < 1e-8);
    }

    #[test]
    fn tune_unreachable_notch() {
        let sd = SpectralDensity::NotchedOhmic {
            alpha: 1.0,
            s: 1.0,
            omega_c: 1.0,
            omega0: 0.5,
            width: 0.1,
        };
        let r = tune_parameters(&sd, 1.0, 10.0).unwrap();
        assert!(!r.decoherence_free);
    }

    #[test]
    fn tune_ohmic_not_free() {
        let r = tune_parameters(&ohmic111(), 1.0, 10.0).unwrap();
        assert!(!r.decoherence_free);
        assert!(r.gamma > 0.0);
    }

    #[test]
    fn register_envelope() {
        let times: Vec<f64> = (0..10).map(|k| 0.3 * k as f64).collect();
        let gammas = [0.5, 0.5, 0.5];
        let same = register_coherence_report(&gammas, &[1, 0, 1], &[1, 0, 1], &times).unwrap();
        assert!(same.iter().all(|&v| v == 1.0));
        let one = register_coherence_report(&gammas, &[0, 0, 0], &[1, 0, 0], &times).unwrap();
        for (k, &t) in times.iter().enumerate() {
            assert!((one[k] - (-0.5 * t).exp()).abs() < 1e-14);
        }
        let three = register_coherence_report(&gammas, &[0, 0, 0], &[1, 1, 1], &times).unwrap();
        for (k, &t) in times.iter().enumerate() {
            assert!((three[k] - (-1.5 * t).exp()).abs() < 1e-14);
            let product = one[k].powi(3);
            assert!((three[k] - product).abs() < 1e-12);
        }
        assert!(matches!(
            register_coherence_report(&gammas, &[0, 0], &[1, 1, 1], &times),
            Err(SpinBosonError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn model_file_round_trip() {
        let json = r#"{
            "delta": 1.0,
            "epsilon": 0.0,
            "beta": "zero_T",
            "spectral": {"family": "ohmic", "alpha": 1.0, "s": 1.0, "omega_c": 1.0}
        }"#;
        let file: ModelFile = serde_json::from_str(json).unwrap();
        let model = file.build().unwrap();
        assert_eq!(model.beta, Temperature::ZeroT);
        let c = coefficients(&model).unwrap();
        assert!((c.gamma - PI * (-1.0f64).exp()).abs() < 1e-10);

        let json2 = r#"{
            "delta": 1.0, "epsilon": 0.5, "beta": 2.0,
            "spectral": {"family": "notched_ohmic", "alpha": 1.0, "s": 1.0,
                         "omega_c": 1.0, "omega0": 2.0, "width": 0.3}
        }"#;
        let file2: ModelFile = serde_json::from_str(json2).unwrap();
        let model2 = file2.build().unwrap();
        assert_eq!(model2.beta, Temperature::Finite(2.0));
    }
}
