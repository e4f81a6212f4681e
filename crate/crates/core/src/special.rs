//! Integer-order Bessel and Hankel functions of real positive argument.
//!
//! `J_n` comes from Miller's downward recurrence normalised with
//! `J_0 + 2 Σ J_2k = 1`; `Y_0`, `Y_1` come from the Neumann series in the
//! same `J_k` values (or the Hankel asymptotic expansion for large
//! arguments), and higher `Y_n` from the upward recurrence.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use num_complex::Complex64;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Arguments at or above this use the asymptotic expansion for `Y_0`, `Y_1`.
const ASYMPTOTIC_THRESHOLD: f64 = 25.0;

const RESCALE_LIMIT: f64 = 1e250;

fn miller_start(nmax: usize, x: f64) -> usize {
    let top = (nmax as f64).max(x);
    let start = top.ceil() as usize + 25 + (4.0 * top.sqrt()).ceil() as usize;
    start + start % 2
}

/// `J_0(x) ..= J_len-1(x)` computed at an order large enough for the
/// normalisation sum to converge. The returned vector has at least
/// `nmax + 1` entries.
fn miller_j(nmax: usize, x: f64) -> Vec<f64> {
    let start = miller_start(nmax, x);
    let mut j = vec![0.0; start + 2];
    if x == 0.0 {
        j[0] = 1.0;
        return j;
    }
    j[start] = 1e-30;
    let two_over_x = 2.0 / x;
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let prev = k as f64 * two_over_x * j[k] - j[k + 1];
        j[k - 1] = prev;
        if (k - 1) % 2 == 0 && k - 1 > 0 {
            norm += 2.0 * prev;
        }
        if prev.abs() > RESCALE_LIMIT {
            let scale = 1.0 / prev.abs();
            for v in &mut j[k - 1..] {
                *v *= scale;
            }
            norm *= scale;
        }
    }
    norm += j[0];
    let inv = 1.0 / norm;
    for v in &mut j {
        *v *= inv;
    }
    j
}

fn neumann_y01(x: f64, j: &[f64]) -> (f64, f64) {
    let log_term = (0.5 * x).ln() + EULER_GAMMA;
    let mut s0 = 0.0;
    let mut k = 1;
    while 2 * k < j.len() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        s0 += sign * j[2 * k] / k as f64;
        k += 1;
    }
    let y0 = (2.0 / PI) * (log_term * j[0] - 2.0 * s0);

    let mut s1 = 0.0;
    let mut k = 1;
    while 2 * k + 1 < j.len() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let kf = k as f64;
        s1 += sign * (2.0 * kf + 1.0) * j[2 * k + 1] / (kf * (kf + 1.0));
        k += 1;
    }
    let y1 = (2.0 / PI) * (-j[0] / x + (log_term - 1.0) * j[1] - s1);
    (y0, y1)
}

/// Hankel expansion `(P, Q)` for order `n`, valid for large `x`.
fn asymptotic_pq(n: u32, x: f64) -> (f64, f64) {
    let mu = 4.0 * (n as f64).powi(2);
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut prev_abs = f64::INFINITY;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        term *= (mu - odd * odd) / (k as f64 * 8.0 * x);
        let a = term.abs();
        if a > prev_abs || a < 1e-17 {
            break;
        }
        prev_abs = a;
        // P collects even k with sign (-1)^(k/2), Q odd k with sign (-1)^((k-1)/2).
        match k % 4 {
            0 => p += term,
            1 => q += term,
            2 => p -= term,
            _ => q -= term,
        }
    }
    (p, q)
}

fn asymptotic_jy(n: u32, x: f64) -> (f64, f64) {
    let (p, q) = asymptotic_pq(n, x);
    let chi = x - (n as f64) * FRAC_PI_2 - FRAC_PI_4;
    let amp = (2.0 / (PI * x)).sqrt();
    let (s, c) = chi.sin_cos();
    (amp * (p * c - q * s), amp * (p * s + q * c))
}

/// `(J_n(x), Y_n(x))` for `n = 0..=nmax`, `x > 0`.
pub fn bessel_jy(nmax: usize, x: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(x > 0.0 && x.is_finite(), "Bessel argument must be positive and finite");
    let jall = miller_j(nmax.max(1), x);
    let (y0, y1) = if x >= ASYMPTOTIC_THRESHOLD {
        (asymptotic_jy(0, x).1, asymptotic_jy(1, x).1)
    } else {
        neumann_y01(x, &jall)
    };
    let mut y = Vec::with_capacity(nmax + 1);
    y.push(y0);
    if nmax >= 1 {
        y.push(y1);
    }
    for k in 1..nmax {
        let next = 2.0 * k as f64 / x * y[k] - y[k - 1];
        y.push(next);
    }
    (jall[..=nmax].to_vec(), y)
}

/// `J_n(x)` for `n = 0..=nmax`, `x >= 0`.
pub fn bessel_j(nmax: usize, x: f64) -> Vec<f64> {
    assert!(x >= 0.0 && x.is_finite(), "Bessel argument must be non-negative and finite");
    let mut j = miller_j(nmax, x);
    j.truncate(nmax + 1);
    j
}

/// `H_0^(1)(x) = J_0(x) + j Y_0(x)`, `x > 0`.
pub fn hankel1_0(x: f64) -> Complex64 {
    assert!(x > 0.0 && x.is_finite(), "Hankel argument must be positive and finite");
    if x >= ASYMPTOTIC_THRESHOLD {
        let (j0, y0) = asymptotic_jy(0, x);
        return Complex64::new(j0, y0);
    }
    let j = miller_j(1, x);
    let (y0, _) = neumann_y01(x, &j);
    Complex64::new(j[0], y0)
}

/// `H_1^(1)(x)`, `x > 0`.
pub fn hankel1_1(x: f64) -> Complex64 {
    assert!(x > 0.0 && x.is_finite(), "Hankel argument must be positive and finite");
    if x >= ASYMPTOTIC_THRESHOLD {
        let (j1, y1) = asymptotic_jy(1, x);
        return Complex64::new(j1, y1);
    }
    let j = miller_j(1, x);
    let (_, y1) = neumann_y01(x, &j);
    Complex64::new(j[1], y1)
}

/// Free-space 2-D Green's function `(j/4) H_0^(1)(k r)` of `-(∇² + k²)`.
pub fn green_2d(k: f64, r: f64) -> Complex64 {
    Complex64::new(0.0, 0.25) * hankel1_0(k * r)
}
