//! Right-preconditioned Bi-CGSTAB.
//!
//! The update sequence is the textbook one with the preconditioner applied
//! to `p` and `s` from a zero initial guess. Convergence is measured on the
//! recursive residual relative to `‖b‖`.

use num_complex::Complex64;

use crate::error::{Error, Result};

const BREAKDOWN_TOL: f64 = 1e-40;

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// `‖r_k‖` for `k = 0..=iterations`.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    pub work_units: f64,
    /// `‖b‖`, the scale of the relative residual.
    pub rhs_norm: f64,
}

impl SolveReport {
    pub fn final_relative_residual(&self) -> f64 {
        let last = self.residual_history.last().copied().unwrap_or(0.0);
        if self.rhs_norm > 0.0 {
            last / self.rhs_norm
        } else {
            last
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KrylovConfig {
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iter: 500,
        }
    }
}

impl KrylovConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::invalid(format!(
                "solver tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        Ok(())
    }
}

/// `Σ conj(a_i) b_i`.
pub fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn nearly_zero(value: Complex64, scale: f64) -> bool {
    !(value.norm() > BREAKDOWN_TOL * scale)
}

/// Solves `A x = b`.
///
/// `apply_a(u, out)` writes `A u`; `apply_m(r, out)` writes the
/// preconditioned vector and must be linear with `M 0 = 0`. A run that hits
/// `max_iter` returns the last iterate with `converged = false`; breakdowns
/// are errors.
pub fn bicgstab<A, M>(
    mut apply_a: A,
    mut apply_m: M,
    b: &[Complex64],
    x0: Option<&[Complex64]>,
    config: &KrylovConfig,
) -> Result<(Vec<Complex64>, SolveReport)>
where
    A: FnMut(&[Complex64], &mut [Complex64]),
    M: FnMut(&[Complex64], &mut [Complex64]),
{
    config.validate()?;
    let n = b.len();
    let zero = Complex64::new(0.0, 0.0);
    let b_norm = norm(b);
    let mut report = SolveReport {
        iterations: 0,
        residual_history: Vec::new(),
        converged: false,
        work_units: 0.0,
        rhs_norm: b_norm,
    };

    let mut x = match x0 {
        Some(x0) => {
            if x0.len() != n {
                return Err(Error::SizeMismatch {
                    expected: n,
                    actual: x0.len(),
                });
            }
            x0.to_vec()
        }
        None => vec![zero; n],
    };
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = zero);
        report.residual_history.push(0.0);
        report.converged = true;
        return Ok((x, report));
    }
    let threshold = config.tolerance * b_norm;

    let mut r = vec![zero; n];
    if x0.is_some() {
        apply_a(&x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
    } else {
        r.copy_from_slice(b);
    }
    let r_hat = r.clone();
    let r_hat_norm = norm(&r_hat);
    let mut r_norm = norm(&r);
    report.residual_history.push(r_norm);
    if r_norm <= threshold {
        report.converged = true;
        return Ok((x, report));
    }

    let mut rho_prev = Complex64::new(1.0, 0.0);
    let mut alpha = Complex64::new(1.0, 0.0);
    let mut sigma = Complex64::new(1.0, 0.0);
    let mut v = vec![zero; n];
    let mut p = vec![zero; n];
    let mut y = vec![zero; n];
    let mut s = vec![zero; n];
    let mut z = vec![zero; n];
    let mut t = vec![zero; n];

    for iter in 1..=config.max_iter {
        report.iterations = iter;
        let rho = dot(&r_hat, &r);
        if nearly_zero(rho, r_hat_norm * r_norm) {
            return Err(Error::Breakdown {
                quantity: "rho",
                report,
            });
        }
        let beta = (rho / rho_prev) * (alpha / sigma);
        for ((pi, ri), vi) in p.iter_mut().zip(&r).zip(&v) {
            *pi = ri + beta * (*pi - sigma * vi);
        }
        apply_m(&p, &mut y);
        apply_a(&y, &mut v);
        let rv = dot(&r_hat, &v);
        if nearly_zero(rv, r_hat_norm * norm(&v)) {
            return Err(Error::Breakdown {
                quantity: "<r_hat, v>",
                report,
            });
        }
        alpha = rho / rv;
        for ((si, ri), vi) in s.iter_mut().zip(&r).zip(&v) {
            *si = ri - alpha * vi;
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi += alpha * yi;
        }
        let s_norm = norm(&s);
        if s_norm <= threshold {
            r.copy_from_slice(&s);
            report.residual_history.push(s_norm);
            report.converged = true;
            return Ok((x, report));
        }
        apply_m(&s, &mut z);
        apply_a(&z, &mut t);
        let tt = dot(&t, &t);
        if nearly_zero(tt, s_norm * s_norm) {
            return Err(Error::Breakdown {
                quantity: "<t, t>",
                report,
            });
        }
        sigma = dot(&t, &s) / tt;
        for (xi, zi) in x.iter_mut().zip(&z) {
            *xi += sigma * zi;
        }
        for ((ri, si), ti) in r.iter_mut().zip(&s).zip(&t) {
            *ri = si - sigma * ti;
        }
        r_norm = norm(&r);
        report.residual_history.push(r_norm);
        if !r_norm.is_finite() {
            return Err(Error::Breakdown {
                quantity: "residual norm",
                report,
            });
        }
        if r_norm <= threshold {
            report.converged = true;
            return Ok((x, report));
        }
        rho_prev = rho;
    }
    Ok((x, report))
}

/// Identity preconditioner.
pub fn identity(r: &[Complex64], out: &mut [Complex64]) {
    out.copy_from_slice(r);
}
