//! Local Fourier analysis of the constant-coefficient, periodic model
//! problem: symbols of the Helmholtz stencil and of damped Jacobi.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LfaSymbols {
    /// `h² a^h(θ) = 4 - 2(cos θ1 + cos θ2) - (kh)²`.
    pub a_symbol: Complex64,
    /// `s^h(θ) = 1 - ω + 2ω/(4 - (kh)²) (cos θ1 + cos θ2)`.
    pub s_symbol: Complex64,
}

pub fn lfa_symbols(k_times_h: f64, omega: f64, theta: [f64; 2]) -> Result<LfaSymbols> {
    let kh2 = k_times_h * k_times_h;
    let denom = 4.0 - kh2;
    if denom == 0.0 {
        return Err(Error::invalid("Jacobi symbol undefined at (kh)^2 = 4"));
    }
    let cos_sum = theta[0].cos() + theta[1].cos();
    Ok(LfaSymbols {
        a_symbol: Complex64::new(4.0 - 2.0 * cos_sum - kh2, 0.0),
        s_symbol: Complex64::new(1.0 - omega + 2.0 * omega / denom * cos_sum, 0.0),
    })
}

/// Closed form of `max_θ |s^h(θ)|` for `0 <= (kh)² < 4`, attained at `θ = 0`.
pub fn max_smoothing_symbol(k_times_h: f64, omega: f64) -> Result<f64> {
    let kh2 = k_times_h * k_times_h;
    if !(0.0..4.0).contains(&kh2) {
        return Err(Error::invalid("closed form requires 0 <= (kh)^2 < 4"));
    }
    Ok(1.0 - omega + 4.0 * omega / (4.0 - kh2))
}

/// Two-grid coarse-correction factor `1 - a^h(θ) / a^2h(2θ)` for a smooth mode.
pub fn coarse_correction_factor(k_times_h: f64, theta: [f64; 2]) -> Result<f64> {
    let fine = 4.0 - 2.0 * (theta[0].cos() + theta[1].cos()) - k_times_h * k_times_h;
    let kh2c = 4.0 * k_times_h * k_times_h;
    let coarse = (4.0 - 2.0 * ((2.0 * theta[0]).cos() + (2.0 * theta[1]).cos()) - kh2c) / 4.0;
    if coarse == 0.0 {
        return Err(Error::invalid("coarse symbol vanishes"));
    }
    Ok(1.0 - fine / coarse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn zero_frequency_untouched_without_wavenumber() {
        let s = lfa_symbols(0.0, 0.8, [0.0, 0.0]).unwrap();
        assert_eq!(s.s_symbol.re, 1.0);
        assert_eq!(s.a_symbol.re, 0.0);
    }

    #[test]
    fn highest_frequency() {
        let s = lfa_symbols(0.0, 0.8, [PI, PI]).unwrap();
        assert!((s.s_symbol.re + 0.6).abs() < 1e-15);
        assert!((s.a_symbol.re - 8.0).abs() < 1e-15);
    }

    #[test]
    fn divergence_for_nonzero_wavenumber() {
        let closed = max_smoothing_symbol(1.0, 0.8).unwrap();
        assert!((closed - (0.2 + 3.2 / 3.0)).abs() < 1e-15);
        assert!((closed - 1.2667).abs() < 1e-4);
        let mut sampled: f64 = 0.0;
        let steps = 64;
        for i in 0..steps {
            for j in 0..steps {
                let th = [
                    -PI + 2.0 * PI * i as f64 / steps as f64,
                    -PI + 2.0 * PI * j as f64 / steps as f64,
                ];
                sampled = sampled.max(lfa_symbols(1.0, 0.8, th).unwrap().s_symbol.norm());
            }
        }
        assert!((sampled - closed).abs() < 1e-12);
        for &kh in &[0.05, 0.3, 1.0, 1.5] {
            assert!(max_smoothing_symbol(kh, 0.8).unwrap() > 1.0);
        }
    }

    #[test]
    fn singular_symbol() {
        assert!(lfa_symbols(2.0, 0.8, [0.1, 0.2]).is_err());
        assert!(max_smoothing_symbol(2.5, 0.8).is_err());
    }

    #[test]
    fn coarse_correction_is_exact_for_laplace_limit() {
        let f = coarse_correction_factor(0.0, [1e-3, 2e-3]).unwrap();
        assert!(f.abs() < 1e-5);
        // wavenumber-dominated smooth mode: ratio turns negative, correction amplifies
        let f = coarse_correction_factor(0.6, [0.625, 0.0]).unwrap();
        assert!(f > 1.0);
    }
}
