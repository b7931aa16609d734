//! Special-function kernels: complex log-Gamma, `|Γ(x+iy)|²` and powers of
//! the hyperbolic secant evaluated in the log domain.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use thiserror::Error;

/// Complex scalar used for eigenvalues, Gamma arguments and tail amplitudes.
pub type ComplexValue = Complex64;

/// Distance from a nonpositive integer below which `log_gamma` reports a pole.
pub const POLE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecialFunctionError {
    #[error("log_gamma: argument {0} is a pole of Gamma (nonpositive integer)")]
    Pole(ComplexValue),
    #[error("{name}: argument {value} outside the domain ({requirement})")]
    Domain {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },
    #[error("{name}: non-finite argument")]
    NonFinite { name: &'static str },
}

/// Below this real part the Stirling series is not used directly; the
/// argument is shifted upward with the recurrence `Γ(z+1) = zΓ(z)`.
const STIRLING_MIN_RE: f64 = 12.0;

/// `B_{2m} / (2m (2m-1))` for m = 1..=10.
const STIRLING_COEFFS: [f64; 10] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
    -3617.0 / 122400.0,
    43867.0 / 244188.0,
    -174611.0 / 125400.0,
];

const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_8;

fn stirling(z: Complex64) -> Complex64 {
    let inv = z.inv();
    let inv2 = inv * inv;
    let mut term = inv;
    let mut series = Complex64::new(0.0, 0.0);
    for c in STIRLING_COEFFS {
        series += term * c;
        term *= inv2;
    }
    (z - 0.5) * z.ln() - z + HALF_LN_TWO_PI + series
}

fn log_gamma_right_half(z: Complex64) -> Complex64 {
    // Sum of principal logarithms keeps the result on the branch that is
    // continuous with the real axis.
    let mut shifted = z;
    let mut log_product = Complex64::new(0.0, 0.0);
    while shifted.re < STIRLING_MIN_RE {
        log_product += shifted.ln();
        shifted += 1.0;
    }
    stirling(shifted) - log_product
}

/// `ln sin(πz)` without overflow for large `|Im z|`.
fn ln_sin_pi(z: Complex64) -> Complex64 {
    let i = Complex64::i();
    if z.im.abs() < 20.0 {
        return (z * PI).sin().ln();
    }
    // sin(πz) = (e^{iπz} - e^{-iπz}) / 2i; keep the dominant exponential symbolic.
    if z.im > 0.0 {
        let e = (2.0 * PI * i * z).exp();
        -i * PI * z + (Complex64::new(1.0, 0.0) - e).ln() - (2.0 * i).ln()
    } else {
        let e = (-2.0 * PI * i * z).exp();
        i * PI * z + (e - 1.0).ln() - (2.0 * i).ln()
    }
}

/// Logarithm of the Gamma function for complex arguments.
///
/// Uses the Stirling series after upward recurrence for `Re z >= 0.5` and the
/// reflection formula otherwise. The imaginary part is the continuation of
/// the real-axis branch for `Re z >= 0.5`; for reflected arguments it is only
/// defined modulo `2π`, which does not affect `exp(result)`.
pub fn log_gamma(z: ComplexValue) -> Result<ComplexValue, SpecialFunctionError> {
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(SpecialFunctionError::NonFinite { name: "log_gamma" });
    }
    if z.re <= POLE_TOLERANCE && z.im.abs() < POLE_TOLERANCE {
        let nearest = z.re.round();
        if (z.re - nearest).abs() < POLE_TOLERANCE {
            return Err(SpecialFunctionError::Pole(z));
        }
    }
    if z.re >= 0.5 {
        Ok(log_gamma_right_half(z))
    } else {
        let one_minus = Complex64::new(1.0, 0.0) - z;
        Ok(Complex64::new(PI.ln(), 0.0) - ln_sin_pi(z) - log_gamma_right_half(one_minus))
    }
}

/// `Γ(x)` for real `x > 0`.
pub fn gamma(x: f64) -> Result<f64, SpecialFunctionError> {
    if !(x > 0.0) {
        return Err(SpecialFunctionError::Domain {
            name: "gamma",
            value: x,
            requirement: "x > 0",
        });
    }
    Ok(log_gamma(Complex64::new(x, 0.0))?.re.exp())
}

/// `|Γ(x+iy)|²` for `x > 0`. Even in `y` by construction.
pub fn abs_gamma_sq(x: f64, y: f64) -> Result<f64, SpecialFunctionError> {
    Ok((2.0 * ln_abs_gamma(x, y)?).exp())
}

/// `ln |Γ(x+iy)|` for `x > 0`; useful when `|Γ|²` would underflow.
pub fn ln_abs_gamma(x: f64, y: f64) -> Result<f64, SpecialFunctionError> {
    if !x.is_finite() || !y.is_finite() {
        return Err(SpecialFunctionError::NonFinite { name: "abs_gamma_sq" });
    }
    if !(x > 0.0) {
        return Err(SpecialFunctionError::Domain {
            name: "abs_gamma_sq",
            value: x,
            requirement: "x > 0",
        });
    }
    Ok(log_gamma(Complex64::new(x, y.abs()))?.re)
}

/// `ln sech(x)`, accurate for all finite `x`.
pub fn ln_sech(x: f64) -> f64 {
    let a = x.abs();
    -a + LN_2 - (-2.0 * a).exp().ln_1p()
}

/// `sech(x)^s` evaluated as `exp(s · ln sech x)`.
pub fn sech_pow(x: f64, s: f64) -> f64 {
    (s * ln_sech(x)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn identity_and_factorial() {
        assert!(log_gamma(c(1.0, 0.0)).unwrap().norm() < 1e-14);
        assert!(log_gamma(c(2.0, 0.0)).unwrap().norm() < 1e-14);
        let lg4 = log_gamma(c(4.0, 0.0)).unwrap();
        assert!((lg4.re - 6f64.ln()).abs() < 1e-14);
        assert!(lg4.im.abs() < 1e-14);
    }

    #[test]
    fn factorials_up_to_one_hundred() {
        let mut fact = 1.0_f64;
        for n in 1..=100u32 {
            // Γ(n+1) = n!
            fact *= n as f64;
            let g = log_gamma(c(n as f64 + 1.0, 0.0)).unwrap().exp();
            let rel = (g / fact - 1.0).norm();
            assert!(rel < 1e-13, "n = {n}: {g} vs {fact}");
        }
    }

    #[test]
    fn half_integer_line_against_cosh_identity() {
        // |Γ(1/2 + iy)|² = π / cosh(πy)
        for &y in &[0.0, 0.3, 1.0, 4.5, 10.0, 37.0, 99.0] {
            let lhs = 2.0 * log_gamma(c(0.5, y)).unwrap().re;
            let rhs = PI.ln() - (PI * y).cosh().ln();
            assert!((lhs - rhs).abs() < 1e-13 * (1.0 + rhs.abs()), "y = {y}");
        }
        let modulus = log_gamma(c(0.5, 10.0)).unwrap().re.exp();
        let limit = (2.0 * PI).sqrt() * (-5.0 * PI).exp();
        assert!((modulus / limit - 1.0).abs() < 5e-3);
    }

    #[test]
    fn poles_are_rejected() {
        for n in 0..5 {
            let z = c(-(n as f64), 0.0);
            assert!(matches!(log_gamma(z), Err(SpecialFunctionError::Pole(_))));
        }
        assert!(matches!(
            log_gamma(c(-3.0 + 1e-13, 0.0)),
            Err(SpecialFunctionError::Pole(_))
        ));
        assert!(log_gamma(c(-3.0 + 1e-6, 0.0)).is_ok());
        assert!(log_gamma(c(-3.0, 1e-6)).is_ok());
    }

    #[test]
    fn reflection_region_matches_recurrence() {
        // Γ(z) = Γ(z+1)/z in the left half-plane.
        for &(x, y) in &[(-0.5, 0.0), (-2.7, 0.4), (0.2, -3.0), (-7.3, 12.0), (-40.2, -30.0)] {
            let z = c(x, y);
            let lhs = log_gamma(z).unwrap().exp();
            let rhs = log_gamma(z + 1.0).unwrap().exp() / z;
            assert!((lhs / rhs - 1.0).norm() < 1e-12, "z = {z}");
        }
    }

    #[test]
    fn abs_gamma_sq_values() {
        assert!((abs_gamma_sq(1.0, 0.0).unwrap() - 1.0).abs() < 1e-14);
        assert!((abs_gamma_sq(0.5, 0.0).unwrap() / PI - 1.0).abs() < 1e-14);
        assert!(abs_gamma_sq(0.0, 1.0).is_err());
        assert!(abs_gamma_sq(-1.0, 1.0).is_err());
    }

    /// Euler integral `∫₀^∞ t^{z-1} e^{-t} dt` after `t = e^u`; the integrand
    /// decays double-exponentially as u → +∞ and like `e^{xu}` as u → -∞,
    /// so the plain trapezoid rule converges geometrically.
    fn euler_integral(x: f64, y: f64) -> Complex64 {
        let h = 2e-3;
        let lower = -40.0 / x;
        let upper = 6.0;
        let n = ((upper - lower) / h).ceil() as usize;
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..=n {
            let u = lower + j as f64 * h;
            let w = if j == 0 || j == n { 0.5 } else { 1.0 };
            let magnitude = (x * u - u.exp()).exp();
            acc += Complex64::from_polar(magnitude, y * u) * w;
        }
        acc * h
    }

    #[test]
    fn abs_gamma_sq_matches_euler_integral() {
        let (x, y) = (1.780776, 1.615428);
        let oracle = euler_integral(x, y).norm_sqr();
        let value = abs_gamma_sq(x, y).unwrap();
        assert!((value / oracle - 1.0).abs() < 1e-10, "{value} vs {oracle}");
        let g = log_gamma(c(x, y)).unwrap().exp();
        assert!((g / euler_integral(x, y) - 1.0).norm() < 1e-10);
    }

    #[test]
    fn sech_pow_values() {
        assert_eq!(sech_pow(0.0, 3.5), 1.0);
        assert!((sech_pow(1.0, 1.0) * 1f64.cosh() - 1.0).abs() < 1e-15);
        let s = 1.5615528;
        let expected = (-s * (50.0 - LN_2)).exp();
        assert!((sech_pow(50.0, s) / expected - 1.0).abs() < 1e-10);
        assert!(sech_pow(1000.0, 2.0) >= 0.0);
        assert!(sech_pow(1000.0, 0.1) > 0.0);
    }

    #[test]
    fn gamma_limit_is_approached_monotonically() {
        // |Γ(x+iy)| e^{π|y|/2} |y|^{1/2-x} → √(2π). The O(1/y²) correction
        // grows like x⁴, so the 1% band starts at y = 20 only up to x ≈ 3.4
        // and at y = 30 for x = 4.
        let target = (2.0 * PI).sqrt();
        for &x in &[0.5, 1.0, 2.0, 3.0, 3.4, 4.0] {
            let mut prev_gap = f64::INFINITY;
            for &y in &[20.0, 30.0, 45.0, 70.0, 100.0] {
                let scaled = (ln_abs_gamma(x, y).unwrap() + PI * y / 2.0 + (0.5 - x) * y.ln()).exp();
                let gap = (scaled / target - 1.0).abs();
                let band = if x > 3.4 && y < 30.0 { 0.02 } else { 0.01 };
                assert!(gap < band, "x = {x}, y = {y}: {gap}");
                assert!(gap <= prev_gap + 1e-13, "x = {x}, y = {y}");
                prev_gap = gap;
            }
        }
    }

    proptest! {
        #[test]
        fn abs_gamma_sq_is_even(x in 0.05f64..20.0, y in -80.0f64..80.0) {
            prop_assert_eq!(abs_gamma_sq(x, y).unwrap(), abs_gamma_sq(x, -y).unwrap());
        }

        #[test]
        fn abs_gamma_sq_recurrence(x in 0.5f64..10.0, y in -50.0f64..50.0) {
            let lhs = ln_abs_gamma(x + 1.0, y).unwrap();
            let rhs = ln_abs_gamma(x, y).unwrap() + 0.5 * (x * x + y * y).ln();
            prop_assert!((2.0 * (lhs - rhs)).abs() < 1e-12);
        }

        #[test]
        fn sech_pow_even_and_decreasing(x in 0.0f64..900.0, dx in 0.01f64..5.0, s in 0.1f64..6.0) {
            prop_assert_eq!(sech_pow(x, s), sech_pow(-x, s));
            let (a, b) = (sech_pow(x, s), sech_pow(x + dx, s));
            prop_assert!(b < a || (a == 0.0 && b == 0.0));
        }
    }
}
