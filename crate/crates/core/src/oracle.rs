//! Reference solutions: the cylindrical-harmonic series for a penetrable
//! disk under plane-wave illumination, dense direct solves for small
//! operators, and the squared relative error.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{ComplexField2D, Grid2D};
use crate::special::{bessel_j, bessel_jy};

/// Tail terms below this fraction of the incident amplitude count as converged.
const SERIES_TOL: f64 = 1e-12;
const MAX_EXTRA_ORDERS: usize = 200;
/// Largest operator the dense reference accepts.
pub const DENSE_LIMIT: usize = 41 * 41;

/// Homogeneous disk in a homogeneous background.
#[derive(Clone, Debug, PartialEq)]
pub struct DiskScene {
    pub radius: f64,
    pub eta_disk: f64,
    pub eta_b: f64,
    pub wavelength: f64,
    pub center: [f64; 2],
    pub u0: Complex64,
    truncation_order: usize,
}

/// Exterior and interior expansion coefficients for `n = 0..=order`.
#[derive(Clone, Debug)]
pub struct MieCoefficients {
    pub scattered: Vec<Complex64>,
    pub interior: Vec<Complex64>,
}

impl DiskScene {
    /// Scene with the smallest admissible truncation order whose tail is
    /// negligible.
    pub fn new(radius: f64, eta_disk: f64, eta_b: f64, wavelength: f64, center: [f64; 2]) -> Result<Self> {
        for (name, v) in [
            ("radius", radius),
            ("disk index", eta_disk),
            ("background index", eta_b),
            ("wavelength", wavelength),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        let mut scene = Self {
            radius,
            eta_disk,
            eta_b,
            wavelength,
            center,
            u0: Complex64::new(1.0, 0.0),
            truncation_order: 0,
        };
        let min = scene.min_order();
        for order in min..min + MAX_EXTRA_ORDERS {
            scene.truncation_order = order;
            if scene.tail_magnitude()? <= SERIES_TOL * scene.u0.norm() {
                return Ok(scene);
            }
        }
        Err(Error::SeriesNotConverged {
            last_term: scene.tail_magnitude()?,
        })
    }

    pub fn with_truncation_order(mut self, order: usize) -> Result<Self> {
        if order < self.min_order() {
            return Err(Error::invalid(format!(
                "truncation order {order} below the minimum {}",
                self.min_order()
            )));
        }
        self.truncation_order = order;
        Ok(self)
    }

    pub fn with_amplitude(mut self, u0: Complex64) -> Self {
        self.u0 = u0;
        self
    }

    pub fn truncation_order(&self) -> usize {
        self.truncation_order
    }

    pub fn k0(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.wavelength
    }

    fn min_order(&self) -> usize {
        (self.k0() * self.eta_disk * self.radius).ceil() as usize + 15
    }

    pub fn coefficients(&self) -> Result<MieCoefficients> {
        let order = self.truncation_order;
        let k_out = self.k0() * self.eta_b;
        let k_in = self.k0() * self.eta_disk;
        let a = self.radius;
        let (jo, yo) = bessel_jy(order + 1, k_out * a);
        let ji = bessel_j(order + 1, k_in * a);
        let deriv = |v: &[f64], n: usize| -> f64 {
            if n == 0 {
                -v[1]
            } else {
                0.5 * (v[n - 1] - v[n + 1])
            }
        };
        let mut scattered = Vec::with_capacity(order + 1);
        let mut interior = Vec::with_capacity(order + 1);
        let mut jn = Complex64::new(1.0, 0.0);
        for n in 0..=order {
            let h = Complex64::new(jo[n], yo[n]);
            let hp = Complex64::new(deriv(&jo, n), deriv(&yo, n));
            let (jon, jopn) = (jo[n], deriv(&jo, n));
            let (jin, jipn) = (ji[n], deriv(&ji, n));
            let d = k_out * jin * hp - k_in * jipn * h;
            if d.norm() == 0.0 || !d.is_finite() {
                return Err(Error::SeriesNotConverged { last_term: f64::NAN });
            }
            let num = k_in * jipn * jon - k_out * jin * jopn;
            scattered.push(jn * num / d);
            interior.push(jn * Complex64::new(0.0, 1.0) * (2.0 / (std::f64::consts::PI * a)) / d);
            jn *= Complex64::new(0.0, 1.0);
        }
        Ok(MieCoefficients { scattered, interior })
    }

    /// Size of the last retained exterior and interior terms at `r = a`,
    /// where both tails peak.
    pub fn tail_magnitude(&self) -> Result<f64> {
        let n = self.truncation_order;
        let c = self.coefficients()?;
        let k_out = self.k0() * self.eta_b;
        let k_in = self.k0() * self.eta_disk;
        let (jo, yo) = bessel_jy(n, k_out * self.radius);
        let ji = bessel_j(n, k_in * self.radius);
        let ext = (c.scattered[n] * Complex64::new(jo[n], yo[n])).norm();
        let int = (c.interior[n] * ji[n]).norm();
        Ok(2.0 * ext.max(int) * self.u0.norm())
    }

    /// Total field at a point for a plane wave travelling along `direction`.
    fn total_at(&self, coef: &MieCoefficients, direction: [f64; 2], x: [f64; 2]) -> Complex64 {
        let k_out = self.k0() * self.eta_b;
        let k_in = self.k0() * self.eta_disk;
        let rel = [x[0] - self.center[0], x[1] - self.center[1]];
        let r = rel[0].hypot(rel[1]);
        let phase_c = Complex64::from_polar(1.0, k_out * (direction[0] * self.center[0] + direction[1] * self.center[1]));
        let psi = if r > 0.0 {
            (rel[1] * direction[0] - rel[0] * direction[1]).atan2(rel[0] * direction[0] + rel[1] * direction[1])
        } else {
            0.0
        };
        let order = self.truncation_order;
        let field = if r < self.radius {
            let j = bessel_j(order, k_in * r);
            let mut acc = coef.interior[0] * j[0];
            for n in 1..=order {
                acc += coef.interior[n] * (2.0 * j[n] * (n as f64 * psi).cos());
            }
            acc * phase_c
        } else {
            let (j, y) = bessel_jy(order, k_out * r);
            let mut acc = coef.scattered[0] * Complex64::new(j[0], y[0]);
            for n in 1..=order {
                acc += coef.scattered[n] * Complex64::new(j[n], y[n]) * (2.0 * (n as f64 * psi).cos());
            }
            let incident = Complex64::from_polar(1.0, k_out * (direction[0] * x[0] + direction[1] * x[1]));
            incident + acc * phase_c
        };
        field * self.u0
    }
}

fn unit(direction: [f64; 2]) -> Result<[f64; 2]> {
    let n = direction[0].hypot(direction[1]);
    if !((n - 1.0).abs() < 1e-12) {
        return Err(Error::invalid(format!("direction must have unit length, got norm {n}")));
    }
    Ok(direction)
}

/// Total field of the disk scene sampled on `grid`.
pub fn analytic_disk_field(scene: &DiskScene, grid: &Grid2D, direction: [f64; 2]) -> Result<ComplexField2D> {
    let d = unit(direction)?;
    let coef = scene.coefficients()?;
    let tail = scene.tail_magnitude()?;
    if tail > SERIES_TOL * scene.u0.norm() {
        return Err(Error::SeriesNotConverged { last_term: tail });
    }
    let s = grid.points_per_side();
    let mut values = Vec::with_capacity(grid.len());
    for n in 0..s {
        for m in 0..s {
            values.push(scene.total_at(&coef, d, grid.coord(m, n)));
        }
    }
    ComplexField2D::from_vec(*grid, values)
}

/// Total field at arbitrary points.
pub fn analytic_disk_field_at(scene: &DiskScene, points: &[[f64; 2]], direction: [f64; 2]) -> Result<Vec<Complex64>> {
    let d = unit(direction)?;
    let coef = scene.coefficients()?;
    Ok(points.iter().map(|&x| scene.total_at(&coef, d, x)).collect())
}

/// Dense matrix whose column `j` is `apply(e_j)`, row-major.
pub fn dense_from_apply(n: usize, mut apply: impl FnMut(&[Complex64], &mut [Complex64])) -> nalgebra::DMatrix<Complex64> {
    let zero = Complex64::new(0.0, 0.0);
    let mut e = vec![zero; n];
    let mut col = vec![zero; n];
    let mut m = nalgebra::DMatrix::from_element(n, n, zero);
    for j in 0..n {
        e[j] = Complex64::new(1.0, 0.0);
        apply(&e, &mut col);
        e[j] = zero;
        for (i, v) in col.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    m
}

/// Solves `A x = b` by LU factorisation of the densely assembled operator.
pub fn dense_solve(
    n: usize,
    apply: impl FnMut(&[Complex64], &mut [Complex64]),
    b: &[Complex64],
) -> Result<Vec<Complex64>> {
    if n > DENSE_LIMIT {
        return Err(Error::invalid(format!(
            "dense reference limited to {DENSE_LIMIT} unknowns, got {n}"
        )));
    }
    if b.len() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            actual: b.len(),
        });
    }
    let m = dense_from_apply(n, apply);
    let lu = m.lu();
    let rhs = nalgebra::DVector::from_column_slice(b);
    let x = lu.solve(&rhs).ok_or(Error::Singular(0))?;
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::Singular(i));
    }
    Ok(x.iter().copied().collect())
}

/// Brute-force solve of a Helmholtz system.
pub fn dense_reference_solve(op: &crate::helmholtz::HelmholtzOperator, b: &ComplexField2D) -> Result<ComplexField2D> {
    crate::grid::ensure_grid(b.grid(), op.grid())?;
    let x = dense_solve(op.len(), |u, out| op.apply_into(u, out), b.values())?;
    ComplexField2D::from_vec(*op.grid(), x)
}

/// `‖u − u_ref‖² / ‖u_ref‖²`.
pub fn relative_error(u: &[Complex64], u_ref: &[Complex64]) -> Result<f64> {
    if u.len() != u_ref.len() {
        return Err(Error::SizeMismatch {
            expected: u_ref.len(),
            actual: u.len(),
        });
    }
    let den: f64 = u_ref.iter().map(|v| v.norm_sqr()).sum();
    if den == 0.0 {
        return Err(Error::invalid("reference field has zero norm"));
    }
    let num: f64 = u.iter().zip(u_ref).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok(num / den)
}
