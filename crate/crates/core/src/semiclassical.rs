//! Semiclassical regime `ρ² = 1 + 1/ε²`: Sommerfeld integral solves, the
//! Lyapunov-Schmidt loop for `ω(ε)`, golden-rule quadrature, closed-form
//! Fourier integrals and the asymptotic growth-rate formulas.

use std::f64::consts::{PI, SQRT_2};

use faer::linalg::solvers::Solve;
use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eigensolver::{quartet_representative, spectrum_slice, EigenError, ExteriorPolicy, SpectrumConfig};
use crate::operators::{assemble_schrodinger, build_grid, Grid, OperatorError, Scheme};
use crate::specfun::{ln_abs_gamma, log_gamma, sech_pow, ComplexValue, SpecialFunctionError};

type C = Complex64;

/// Largest `k·h` accepted by the quadratures.
pub const OSCILLATION_BOUND: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SemiclassicalError {
    #[error("epsilon = {0} outside the admissible range (0, {1}]")]
    Domain(f64, f64),
    #[error("undersampled oscillation: k·h = {kh:.3} exceeds {bound}")]
    Resolution { kh: f64, bound: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("fixed-point iteration stopped contracting after {iterations} iterations (last update {last_update:.3e})")]
    NonContraction { iterations: usize, last_update: f64 },
    #[error("no convergence after {iterations} iterations (last update {last_update:.3e})")]
    NoConvergence { iterations: usize, last_update: f64 },
    #[error(transparent)]
    Special(#[from] SpecialFunctionError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeIndex {
    Mode0,
    Mode1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }
}

/// Bound state of `L0 = -∂² - 4sech²` with eigenvalue `-E`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSelector {
    pub index: ModeIndex,
    /// `E` with `L0 φ = -E φ`.
    pub energy: f64,
    /// `2 + √E`.
    pub exponent: f64,
    pub parity: Parity,
}

/// `((√17 - 1)/2)²`
pub fn e0() -> f64 {
    ((17f64.sqrt() - 1.0) / 2.0).powi(2)
}

/// `((√17 - 3)/2)²`
pub fn e1() -> f64 {
    ((17f64.sqrt() - 3.0) / 2.0).powi(2)
}

impl ModeSelector {
    pub fn mode0() -> Self {
        let e = e0();
        ModeSelector { index: ModeIndex::Mode0, energy: e, exponent: 2.0 + e.sqrt(), parity: Parity::Even }
    }

    pub fn mode1() -> Self {
        let e = e1();
        ModeSelector { index: ModeIndex::Mode1, energy: e, exponent: 2.0 + e.sqrt(), parity: Parity::Odd }
    }

    pub fn both() -> [ModeSelector; 2] {
        [Self::mode0(), Self::mode1()]
    }

    pub fn name(&self) -> &'static str {
        match self.index {
            ModeIndex::Mode0 => "mode0",
            ModeIndex::Mode1 => "mode1",
        }
    }

    /// Unnormalized eigenfunction: `sech^{√E0}` or `tanh·sech^{√E1}`.
    pub fn profile(&self, x: f64) -> f64 {
        let s = sech_pow(x, self.energy.sqrt());
        match self.parity {
            Parity::Even => s,
            Parity::Odd => x.tanh() * s,
        }
    }
}

impl std::str::FromStr for ModeSelector {
    type Err = SemiclassicalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "mode0" | "0" => Ok(Self::mode0()),
            "mode1" | "1" => Ok(Self::mode1()),
            other => Err(SemiclassicalError::InvalidArgument(format!("unknown mode `{other}`"))),
        }
    }
}

/// `√(1 + 1/ε²)`
pub fn epsilon_to_rho(epsilon: f64) -> Result<f64, SemiclassicalError> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(SemiclassicalError::Domain(epsilon, f64::INFINITY));
    }
    Ok((1.0 + 1.0 / (epsilon * epsilon)).sqrt())
}

/// Inverse of [`epsilon_to_rho`] for `ρ > 1`.
pub fn rho_to_epsilon(rho: f64) -> Result<f64, SemiclassicalError> {
    if !(rho.is_finite() && rho > 1.0) {
        return Err(SemiclassicalError::InvalidArgument(format!("rho must exceed 1, got {rho}")));
    }
    Ok(1.0 / (rho * rho - 1.0).sqrt())
}

fn sech_sq(x: f64) -> f64 {
    sech_pow(x, 2.0)
}

fn check_resolution(k: f64, grid: &Grid) -> Result<(), SemiclassicalError> {
    let kh = k * grid.spacing;
    if kh > OSCILLATION_BOUND {
        return Err(SemiclassicalError::Resolution { kh, bound: OSCILLATION_BOUND });
    }
    Ok(())
}

/// Outgoing solution of `ψ'' + k²ψ = f`,
/// `ψ(x) = (1/2ik) ∫ e^{ik|x-y|} f(y) dy`, and its tail amplitude
/// `a = (1/2ik) ∫ e^{-iky} f(y) dy` (so `ψ ~ a e^{ikx}` as `x → +∞`).
///
/// Both half-line sums are accumulated by O(N) recursions; the kink of the
/// kernel at `y = x` is corrected by the first two Euler-Maclaurin terms.
pub fn sommerfeld_solve(
    grid: &Grid,
    f: &[C],
    k: C,
    parity: Parity,
) -> Result<(Vec<C>, C), SemiclassicalError> {
    let n = grid.n_points;
    if f.len() != n {
        return Err(SemiclassicalError::InvalidArgument(format!("f has {} values, grid has {n}", f.len())));
    }
    if !(k.re > 0.0 && k.im >= 0.0) {
        return Err(SemiclassicalError::InvalidArgument(format!("need Re k > 0 and Im k >= 0, got {k}")));
    }
    check_resolution(k.norm(), grid)?;
    check_parity(grid, f, parity)?;
    Ok(sommerfeld_unchecked(grid, f, k))
}

fn check_parity(grid: &Grid, f: &[C], parity: Parity) -> Result<(), SemiclassicalError> {
    let n = grid.n_points;
    let scale = f.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for j in 1..n {
        if (f[j] - f[grid.mirror(j)] * parity.sign()).norm() > 1e-9 * scale.max(f64::MIN_POSITIVE) {
            return Err(SemiclassicalError::InvalidArgument(format!(
                "f does not have {parity:?} parity at node {j}"
            )));
        }
    }
    Ok(())
}

/// Kernel of [`sommerfeld_solve`] without precondition checks. Intermediate
/// iterates of the Lyapunov-Schmidt loop may carry a slightly negative Im k.
fn sommerfeld_unchecked(grid: &Grid, f: &[C], k: C) -> (Vec<C>, C) {
    let n = grid.n_points;
    let h = grid.spacing;
    let i = C::i();
    let phase = (i * k * h).exp();
    let mut left = vec![C::new(0.0, 0.0); n];
    let mut acc = C::new(0.0, 0.0);
    for j in 0..n {
        acc = acc * phase + f[j];
        left[j] = acc;
    }
    let mut right = vec![C::new(0.0, 0.0); n];
    acc = C::new(0.0, 0.0);
    for j in (0..n).rev() {
        acc = acc * phase + f[j];
        right[j] = acc;
    }
    let inv = (2.0 * i * k).inv();
    let k2 = k * k;
    let psi = (0..n)
        .map(|j| {
            let fpp = if j == 0 || j + 1 == n { C::new(0.0, 0.0) } else { (f[j + 1] - 2.0 * f[j] + f[j - 1]) / (h * h) };
            (left[j] + right[j] - f[j]) * h * inv + f[j] * (h * h / 12.0) + (k2 * f[j] - 3.0 * fpp) * (h.powi(4) / 720.0)
        })
        .collect();
    let mut sum = CompensatedSum::default();
    for (&x, &fx) in grid.nodes.iter().zip(f) {
        sum.add(fx * C::from_polar((k.im * x).exp(), -k.re * x));
    }
    (psi, sum.value() * h * inv)
}

/// Neumaier summation; the tail amplitude is exponentially small against
/// O(1) summands.
#[derive(Default)]
struct CompensatedSum {
    sum: C,
    carry: C,
}

impl CompensatedSum {
    fn add(&mut self, v: C) {
        fn step(sum: &mut f64, carry: &mut f64, v: f64) {
            let t = *sum + v;
            *carry += if sum.abs() >= v.abs() { (*sum - t) + v } else { (v - t) + *sum };
            *sum = t;
        }
        step(&mut self.sum.re, &mut self.carry.re, v.re);
        step(&mut self.sum.im, &mut self.carry.im, v.im);
    }

    fn value(&self) -> C {
        self.sum + self.carry
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LsConfig {
    /// Relative change of ℰ at which the outer loop stops.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Consecutive non-decreasing updates tolerated before reporting non-contraction.
    pub stall_limit: usize,
    pub epsilon_max: f64,
}

impl Default for LsConfig {
    fn default() -> Self {
        LsConfig { tolerance: 1e-12, max_iterations: 1000, stall_limit: 50, epsilon_max: 0.6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiclassicalSolution {
    pub epsilon: f64,
    pub mode: ModeSelector,
    #[serde(rename = "curlyE")]
    pub curly_e: ComplexValue,
    pub omega: ComplexValue,
    pub k: ComplexValue,
    pub phi: Vec<ComplexValue>,
    pub psi: Vec<ComplexValue>,
    pub tail_amplitude: ComplexValue,
    pub iterations: usize,
    pub residual: f64,
    /// `‖ψ‖∞ / ε`
    pub psi_bound_constant: f64,
    /// `|ω - 1 - ε²E| / ε³`
    pub omega_bound_constant: f64,
    /// `|<φ0, φ>|` in the grid inner product.
    pub orthogonality: f64,
}

impl SemiclassicalSolution {
    /// `λ = iω/ε²`
    pub fn lambda(&self) -> ComplexValue {
        C::i() * self.omega / (self.epsilon * self.epsilon)
    }

    /// `|Re λ| = |Im ω|/ε²`
    pub fn growth_rate(&self) -> f64 {
        self.omega.im.abs() / (self.epsilon * self.epsilon)
    }
}

/// Grid on `[-L, L)` fine enough for the Sommerfeld quadrature at this ε:
/// `h = min(0.05, 0.5/k)`.
pub fn semiclassical_grid(epsilon: f64, mode: &ModeSelector, half_length: f64, scheme: Scheme) -> Result<Grid, SemiclassicalError> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(SemiclassicalError::Domain(epsilon, f64::INFINITY));
    }
    let k = (2.0 / (epsilon * epsilon) + mode.energy).sqrt();
    let h = 0.05_f64.min(OSCILLATION_BOUND / k);
    let mut n = (2.0 * half_length / h).ceil() as usize;
    n += n % 2;
    Ok(build_grid(half_length, n, scheme)?)
}

fn parity_image(mode: &ModeSelector, grid: &Grid, j: usize) -> f64 {
    mode.parity.sign() * mode.profile(grid.nodes[grid.mirror(j)])
}

fn check_epsilon(epsilon: f64, max: f64) -> Result<(), SemiclassicalError> {
    if !(epsilon.is_finite() && epsilon > 0.0 && epsilon <= max) {
        return Err(SemiclassicalError::Domain(epsilon, max));
    }
    Ok(())
}

/// Principal root with `Re k > 0`, `Im k >= 0` whenever `Im(k²) >= 0`.
fn wavenumber(epsilon: f64, energy: f64, curly_e: C) -> C {
    (C::new(2.0 / (epsilon * epsilon) + energy, 0.0) + curly_e).sqrt()
}

/// Successive substitution on (ℰ, φ, ψ) from zero.
///
/// The φ-equation `(L0 + E + ℰ)φ + μφ0 = r`, `<φ0, φ> = 0` is solved with
/// one real LU of the bordered matrix at ℰ = 0 and an inner iteration
/// `φ ← B0⁻¹(r - ℰφ)`, which contracts because `|ℰ|` is below the gap of
/// `L0 + E` on the complement of φ0.
pub fn lyapunov_schmidt_solve(
    epsilon: f64,
    mode: &ModeSelector,
    grid: &Grid,
    config: &LsConfig,
) -> Result<SemiclassicalSolution, SemiclassicalError> {
    check_epsilon(epsilon, config.epsilon_max)?;
    let n = grid.n_points;
    let h = grid.spacing;
    let energy = mode.energy;
    check_resolution(wavenumber(epsilon, energy, C::new(0.0, 0.0)).re, grid)?;
    if grid.nodes.iter().zip(0..).any(|(&x, j)| j > 0 && (mode.profile(x) - parity_image(mode, grid, j)).abs() > 1e-12) {
        return Err(SemiclassicalError::InvalidArgument("grid is not symmetric about 0".into()));
    }

    let mut phi0: Vec<f64> = grid.nodes.iter().map(|&x| mode.profile(x)).collect();
    let norm = (phi0.iter().map(|v| v * v).sum::<f64>() * h).sqrt();
    phi0.iter_mut().for_each(|v| *v /= norm);
    let well: Vec<f64> = grid.nodes.iter().map(|&x| sech_sq(x)).collect();

    let l0 = assemble_schrodinger(grid, 4.0, 0.0);
    let l0 = l0.real().expect("real operator");
    let bordered = Mat::from_fn(n + 1, n + 1, |i, j| match (i < n, j < n) {
        (true, true) => l0[(i, j)] + if i == j { energy } else { 0.0 },
        (true, false) => phi0[i],
        (false, true) => phi0[j] * h,
        (false, false) => 0.0,
    });
    let lu = bordered.partial_piv_lu();

    let solve_phi = |rhs: &[C], curly_e: C, start: &[C]| -> Vec<C> {
        let mut phi = start.to_vec();
        for _ in 0..500 {
            let mut b = Mat::<f64>::zeros(n + 1, 2);
            for j in 0..n {
                let r = rhs[j] - curly_e * phi[j];
                b[(j, 0)] = r.re;
                b[(j, 1)] = r.im;
            }
            lu.solve_in_place(b.as_mut());
            let next: Vec<C> = (0..n).map(|j| C::new(b[(j, 0)], b[(j, 1)])).collect();
            let change = next.iter().zip(&phi).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            let size = next.iter().map(|a| a.norm()).fold(0.0, f64::max);
            phi = next;
            if change <= 1e-15 * size.max(1e-300) {
                break;
            }
        }
        phi
    };

    let zero = C::new(0.0, 0.0);
    let mut curly_e = zero;
    let mut phi = vec![zero; n];
    let mut psi = vec![zero; n];
    let mut amplitude;
    let mut last_update = f64::INFINITY;
    let mut best_update = f64::INFINITY;
    let mut stalled = 0;
    for iteration in 1..=config.max_iterations {
        let k = wavenumber(epsilon, energy, curly_e);
        let f: Vec<C> = (0..n).map(|j| -2.0 * well[j] * (phi0[j] + phi[j] + 2.0 * psi[j])).collect();
        if k.re <= 0.0 || !k.is_finite() {
            return Err(SemiclassicalError::NonContraction { iterations: iteration, last_update });
        }
        let (new_psi, a) = sommerfeld_unchecked(grid, &f, k);
        psi = new_psi;
        amplitude = a;
        let next_e = (0..n).map(|j| 2.0 * well[j] * phi0[j] * psi[j]).sum::<C>() * h;
        let rhs: Vec<C> = (0..n).map(|j| 2.0 * well[j] * psi[j] - next_e * phi0[j]).collect();
        phi = solve_phi(&rhs, next_e, &phi);
        let update = (next_e - curly_e).norm() / next_e.norm().max(f64::MIN_POSITIVE);
        curly_e = next_e;
        if update < config.tolerance {
            last_update = update;
            let k = wavenumber(epsilon, energy, curly_e);
            let e2 = epsilon * epsilon;
            let omega = C::new(1.0 + e2 * energy, 0.0) + e2 * curly_e;
            let psi_sup = psi.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let orthogonality = (phi.iter().zip(&phi0).map(|(p, q)| p * q).sum::<C>() * h).norm();
            return Ok(SemiclassicalSolution {
                epsilon,
                mode: *mode,
                curly_e,
                omega,
                k,
                phi,
                psi,
                tail_amplitude: amplitude,
                iterations: iteration,
                residual: last_update,
                psi_bound_constant: psi_sup / epsilon,
                omega_bound_constant: (omega - 1.0 - e2 * energy).norm() / (e2 * epsilon),
                orthogonality,
            });
        }
        if update < best_update {
            best_update = update;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= config.stall_limit {
                return Err(SemiclassicalError::NonContraction { iterations: iteration, last_update: update });
            }
        }
        last_update = update;
    }
    Err(SemiclassicalError::NoConvergence { iterations: config.max_iterations, last_update })
}

/// `∫ sech²(x) φ(x) e^{-ikx} dx` for the unnormalized profile, via the
/// Gamma-function closed forms. Real for mode0, imaginary for mode1.
pub fn fourier_integral_closed_form(k: f64, mode: &ModeSelector) -> Result<ComplexValue, SemiclassicalError> {
    if !(k.is_finite() && k >= 0.0) {
        return Err(SemiclassicalError::InvalidArgument(format!("k must be finite and >= 0, got {k}")));
    }
    let p = mode.exponent;
    let ln_g = log_gamma(C::new(p, 0.0))?.re;
    let ln_mod = (p - 1.0) * std::f64::consts::LN_2 - ln_g + 2.0 * ln_abs_gamma(p / 2.0, k / 2.0)?;
    Ok(match mode.parity {
        Parity::Even => C::new(ln_mod.exp(), 0.0),
        Parity::Odd => C::new(0.0, -k / p * ln_mod.exp()),
    })
}

/// Same integral by trapezoid quadrature on the shifted line
/// `x = t - iσ`, `σ = π/2 - δ`, `δ = min(p/k, π/4)`.
///
/// On the real axis the integrand is O(1) while the integral is of order
/// `e^{-πk/2}`; the shift removes that cancellation. Requires `h ≤ δ/8`
/// and `k·h ≤ 0.5`.
pub fn fourier_integral_quadrature(k: f64, mode: &ModeSelector, grid: &Grid) -> Result<ComplexValue, SemiclassicalError> {
    if !(k.is_finite() && k >= 0.0) {
        return Err(SemiclassicalError::InvalidArgument(format!("k must be finite and >= 0, got {k}")));
    }
    check_resolution(k, grid)?;
    let p = mode.exponent;
    let delta = if k > 0.0 { (p / k).min(PI / 4.0) } else { PI / 4.0 };
    if grid.spacing > delta / 8.0 {
        return Err(SemiclassicalError::Resolution { kh: grid.spacing / delta, bound: 0.125 });
    }
    let sigma = PI / 2.0 - delta;
    let shift = C::new(0.0, -sigma);
    let sum: C = grid
        .nodes
        .iter()
        .map(|&t| {
            let z = t + shift;
            // ln sech z = -ln cosh z; Re cosh z > 0 on the contour keeps the principal log continuous
            let ln_sech = -z.cosh().ln();
            let base = (p * ln_sech).exp();
            let value = match mode.parity {
                Parity::Even => base,
                Parity::Odd => base * z.tanh(),
            };
            value * (C::new(0.0, -k) * z).exp()
        })
        .sum();
    Ok(sum * grid.spacing)
}

/// Quadrature grid for [`fourier_integral_quadrature`] at wavenumber `k`.
pub fn quadrature_grid(k: f64, mode: &ModeSelector, half_length: f64) -> Result<Grid, SemiclassicalError> {
    let delta = if k > 0.0 { (mode.exponent / k).min(PI / 4.0) } else { PI / 4.0 };
    let h = (delta / 10.0).min(0.4 / k.max(1e-12)).min(0.05);
    let mut n = (2.0 * half_length / h).ceil() as usize;
    n += n % 2;
    Ok(build_grid(half_length, n, Scheme::FourierCollocation)?)
}

/// Leading-order `Im ℰ = (2/k)|∫ sech² φ e^{-ikx} dx|²` at
/// `k = √(2 + ε²E)/ε`, with the unnormalized profile.
pub fn golden_rule_im(epsilon: f64, mode: &ModeSelector, grid: &Grid) -> Result<f64, SemiclassicalError> {
    check_epsilon(epsilon, f64::INFINITY)?;
    let k = (2.0 + epsilon * epsilon * mode.energy).sqrt() / epsilon;
    let integral = fourier_integral_quadrature(k, mode, grid)?;
    Ok(2.0 / k * integral.norm_sqr())
}

/// [`golden_rule_im`] on its default quadrature grid (`L = 40`).
pub fn golden_rule_im_default(epsilon: f64, mode: &ModeSelector) -> Result<f64, SemiclassicalError> {
    check_epsilon(epsilon, f64::INFINITY)?;
    let k = (2.0 + epsilon * epsilon * mode.energy).sqrt() / epsilon;
    golden_rule_im(epsilon, mode, &quadrature_grid(k, mode, 40.0)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticEstimate {
    pub epsilon: f64,
    pub mode: ModeSelector,
    /// Closed-form rate as printed.
    pub growth_rate_formula: f64,
    /// mode1 only: prefactor with `2^{q+5/2}` in place of `2^{p+5/2}`; equal
    /// to `growth_rate_formula` for mode0.
    pub growth_rate_formula_rederived: f64,
    pub growth_rate_quadrature: f64,
    /// `ε² · growth_rate_formula`
    pub im_omega: f64,
}

/// Closed-form rates
/// mode0: `2^{p+3/2}π²/Γ(p)² · ε^{3-2p} e^{-√2π/ε}`,
/// mode1: `2^{p+5/2}π²/(q²Γ(q)²) · ε^{1-2q} e^{-√2π/ε}`.
pub fn asymptotic_rates(epsilon: f64, mode: &ModeSelector) -> Result<(f64, f64), SemiclassicalError> {
    check_epsilon(epsilon, f64::INFINITY)?;
    let p = ModeSelector::mode0().exponent;
    let decay = -SQRT_2 * PI / epsilon;
    let pi2 = 2.0 * PI.ln();
    match mode.index {
        ModeIndex::Mode0 => {
            let ln_g = log_gamma(C::new(p, 0.0))?.re;
            let ln_rate = (p + 1.5) * std::f64::consts::LN_2 + pi2 - 2.0 * ln_g + (3.0 - 2.0 * p) * epsilon.ln() + decay;
            let r = ln_rate.exp();
            Ok((r, r))
        }
        ModeIndex::Mode1 => {
            let q = mode.exponent;
            let ln_g = log_gamma(C::new(q, 0.0))?.re;
            let common = pi2 - 2.0 * q.ln() - 2.0 * ln_g + (1.0 - 2.0 * q) * epsilon.ln() + decay;
            let printed = ((p + 2.5) * std::f64::consts::LN_2 + common).exp();
            let rederived = ((q + 2.5) * std::f64::consts::LN_2 + common).exp();
            Ok((printed, rederived))
        }
    }
}

pub fn asymptotic_growth_rate(epsilon: f64, mode: &ModeSelector, epsilon_max: f64) -> Result<AsymptoticEstimate, SemiclassicalError> {
    check_epsilon(epsilon, epsilon_max)?;
    let (printed, rederived) = asymptotic_rates(epsilon, mode)?;
    Ok(AsymptoticEstimate {
        epsilon,
        mode: *mode,
        growth_rate_formula: printed,
        growth_rate_formula_rederived: rederived,
        growth_rate_quadrature: golden_rule_im_default(epsilon, mode)?,
        im_omega: epsilon * epsilon * printed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Dense,
    LyapunovSchmidt,
    GoldenRule,
    Asymptotic,
}

impl Route {
    pub const ALL: [Route; 4] = [Route::Dense, Route::LyapunovSchmidt, Route::GoldenRule, Route::Asymptotic];

    pub fn as_str(self) -> &'static str {
        match self {
            Route::Dense => "dense",
            Route::LyapunovSchmidt => "lyapunov_schmidt",
            Route::GoldenRule => "golden_rule",
            Route::Asymptotic => "asymptotic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub epsilon: f64,
    pub rho: f64,
    pub mode: ModeIndex,
    pub route: Route,
    /// NaN when the route produced no value.
    pub growth_rate: f64,
    pub im_omega: f64,
    /// `ok`, `unresolvable`, or `error: <message>`.
    pub status: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub ls: LsConfig,
    /// Dense growth rates at or below this are eigensolver noise and are
    /// reported as `unresolvable`.
    pub dense_noise_floor: f64,
    pub spectrum: SpectrumConfig,
    /// Half-length of the Lyapunov-Schmidt grid.
    pub ls_half_length: f64,
    pub ls_scheme: Scheme,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            ls: LsConfig::default(),
            dense_noise_floor: 1e-8,
            spectrum: SpectrumConfig { exterior: ExteriorPolicy::Absorbing, ..SpectrumConfig::default() },
            ls_half_length: 20.0,
            ls_scheme: Scheme::FourierCollocation,
        }
    }
}

/// Quartet representative whose `Re ω = ε²|Im λ|` is nearest `1 + ε²E`,
/// provided it is closer than half the distance to the other mode.
pub fn match_mode(unstable: &[ComplexValue], epsilon: f64, mode: &ModeSelector) -> Option<ComplexValue> {
    let e2 = epsilon * epsilon;
    let target = 1.0 + e2 * mode.energy;
    let window = 0.5 * e2 * (e0() - e1());
    unstable
        .iter()
        .map(|z| quartet_representative(*z))
        .filter(|z| z.re > 0.0 && (e2 * z.im - target).abs() < window)
        .min_by(|a, b| (e2 * a.im - target).abs().total_cmp(&(e2 * b.im - target).abs()))
}

fn row(epsilon: f64, rho: f64, mode: &ModeSelector, route: Route, value: Result<f64, String>) -> CompareRow {
    let (growth_rate, status) = match value {
        Ok(v) => (v, "ok".to_string()),
        Err(s) if s == "unresolvable" => (f64::NAN, s),
        Err(s) => (f64::NAN, format!("error: {s}")),
    };
    CompareRow {
        epsilon,
        rho,
        mode: mode.index,
        route,
        growth_rate,
        im_omega: epsilon * epsilon * growth_rate,
        status,
    }
}

/// Growth rates `|Re λ|` per (ε, mode, route), ordered by input ε, then
/// mode, then route. Failures are reported per row.
pub fn compare_routes(epsilons: &[f64], grid: &Grid, config: &CompareConfig) -> Vec<CompareRow> {
    epsilons
        .par_iter()
        .map(|&epsilon| {
            let rho = epsilon_to_rho(epsilon).unwrap_or(f64::NAN);
            let in_range = check_epsilon(epsilon, config.ls.epsilon_max).map_err(|e| e.to_string());
            let dense: Result<Vec<ComplexValue>, String> = match &in_range {
                Err(e) => Err(e.clone()),
                Ok(()) => spectrum_slice(grid, rho, &config.spectrum)
                    .map(|s| s.unstable(config.dense_noise_floor))
                    .map_err(|e| e.to_string()),
            };
            let mut rows = Vec::with_capacity(8);
            for mode in ModeSelector::both() {
                let dense_rate = dense
                    .clone()
                    .and_then(|u| match_mode(&u, epsilon, &mode).map(|z| z.re).ok_or_else(|| "unresolvable".to_string()));
                let ls = in_range.clone().and_then(|_| {
                    let g = semiclassical_grid(epsilon, &mode, config.ls_half_length, config.ls_scheme).map_err(|e| e.to_string())?;
                    lyapunov_schmidt_solve(epsilon, &mode, &g, &config.ls).map(|s| s.growth_rate()).map_err(|e| e.to_string())
                });
                let gr = in_range.clone().and_then(|_| golden_rule_im_default(epsilon, &mode).map_err(|e| e.to_string()));
                let asym = in_range.clone().and_then(|_| asymptotic_rates(epsilon, &mode).map(|r| r.0).map_err(|e| e.to_string()));
                rows.push(row(epsilon, rho, &mode, Route::Dense, dense_rate));
                rows.push(row(epsilon, rho, &mode, Route::LyapunovSchmidt, ls));
                rows.push(row(epsilon, rho, &mode, Route::GoldenRule, gr));
                rows.push(row(epsilon, rho, &mode, Route::Asymptotic, asym));
            }
            rows
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}
