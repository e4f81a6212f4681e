//! Matrix-free five-point Helmholtz operator `-∇² - α k0² η²` on the
//! extended domain, closed by first-order Sommerfeld ghost values.
//!
//! Ghost samples outside the grid are eliminated with
//! `u_ghost = (1 + j h k0 η) u_boundary`, which folds into the diagonal.
//! Corner rows receive both substitutions independently. All off-diagonal
//! couplings equal `-1/h²`, so the assembled matrix is complex symmetric and
//! its adjoint is the same stencil with conjugated diagonal.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{check_len, ensure_grid, ComplexField2D, ExtendedGrid2D, Grid2D, RealField2D};
use crate::multigrid::transfer::restrict_full_weighting;

/// Quadratic damping profile of the absorbing layer,
/// `α(x) = 1 - jβ (d(x)/L)²` with `d` the distance from `x` to Ω.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AblProfile {
    lo: [f64; 2],
    hi: [f64; 2],
    thickness: f64,
    beta: f64,
}

impl AblProfile {
    pub fn new(eg: &ExtendedGrid2D) -> Result<Self> {
        let thickness = eg.abl_thickness();
        let beta = eg.beta();
        if beta > 0.0 && thickness <= 0.0 {
            return Err(Error::invalid(
                "absorbing layer strength is positive but the layer has zero thickness",
            ));
        }
        let (lo, hi) = eg.inner().bounds();
        Ok(Self {
            lo,
            hi,
            thickness,
            beta,
        })
    }

    /// Euclidean distance from `x` to the region of interest.
    pub fn distance(&self, x: [f64; 2]) -> f64 {
        let dx = (self.lo[0] - x[0]).max(x[0] - self.hi[0]).max(0.0);
        let dy = (self.lo[1] - x[1]).max(x[1] - self.hi[1]).max(0.0);
        dx.hypot(dy)
    }

    pub fn alpha(&self, x: [f64; 2]) -> Complex64 {
        if self.beta == 0.0 {
            return Complex64::new(1.0, 0.0);
        }
        let d = self.distance(x);
        if d == 0.0 {
            return Complex64::new(1.0, 0.0);
        }
        let ratio = d / self.thickness;
        Complex64::new(1.0, -self.beta * ratio * ratio)
    }

    pub fn thickness(&self) -> f64 {
        self.thickness
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Discretised `-∇² - α k0² η²` on one grid level.
#[derive(Clone, Debug)]
pub struct HelmholtzOperator {
    grid: Grid2D,
    k0: f64,
    eta_b: f64,
    eta_sq: Vec<f64>,
    alpha: Vec<Complex64>,
    diag: Vec<Complex64>,
    profile: AblProfile,
    conjugated: bool,
}

impl HelmholtzOperator {
    /// Builds the operator on `eg`'s extended grid. `eta_sq` holds `η²` on
    /// Ω_e (background value in the absorbing layer).
    pub fn assemble(eg: &ExtendedGrid2D, eta_sq: &RealField2D, k0: f64, eta_b: f64) -> Result<Self> {
        ensure_grid(eta_sq.grid(), eg.grid())?;
        let profile = AblProfile::new(eg)?;
        Self::from_parts(*eg.grid(), k0, eta_b, eta_sq.values().to_vec(), profile, false)
    }

    pub(crate) fn from_parts(
        grid: Grid2D,
        k0: f64,
        eta_b: f64,
        eta_sq: Vec<f64>,
        profile: AblProfile,
        conjugated: bool,
    ) -> Result<Self> {
        check_len(eta_sq.len(), grid.len())?;
        if !(k0.is_finite() && k0 >= 0.0) {
            return Err(Error::invalid(format!("wavenumber must be >= 0, got {k0}")));
        }
        if !(eta_b.is_finite() && eta_b > 0.0) {
            return Err(Error::invalid(format!(
                "background index must be positive, got {eta_b}"
            )));
        }
        if let Some(i) = eta_sq.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid(format!(
                "squared refractive index must be positive, got {} at sample {i}",
                eta_sq[i]
            )));
        }
        let s = grid.points_per_side();
        let h = grid.mesh_size();
        let inv_h2 = 1.0 / (h * h);
        let k0_sq = k0 * k0;
        let mut alpha = Vec::with_capacity(grid.len());
        let mut diag = Vec::with_capacity(grid.len());
        for n in 0..s {
            for m in 0..s {
                let i = grid.index(m, n);
                let a = profile.alpha(grid.coord(m, n));
                let mut d = Complex64::new(4.0 * inv_h2, 0.0) - a * (k0_sq * eta_sq[i]);
                let missing = (m == 0) as u32 + (m + 1 == s) as u32 + (n == 0) as u32 + (n + 1 == s) as u32;
                if missing > 0 {
                    let ghost = Complex64::new(1.0, h * k0 * eta_sq[i].sqrt());
                    d -= ghost * (missing as f64 * inv_h2);
                }
                alpha.push(a);
                diag.push(d);
            }
        }
        let mut op = Self {
            grid,
            k0,
            eta_b,
            eta_sq,
            alpha,
            diag,
            profile,
            conjugated: false,
        };
        if conjugated {
            op.conjugate_in_place();
        }
        Ok(op)
    }

    fn conjugate_in_place(&mut self) {
        for a in &mut self.alpha {
            *a = a.conj();
        }
        for d in &mut self.diag {
            *d = d.conj();
        }
        self.conjugated = !self.conjugated;
    }

    /// The operator with conjugated coefficients, i.e. the adjoint `A^H`.
    pub fn conjugate(&self) -> Self {
        let mut op = self.clone();
        op.conjugate_in_place();
        op
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn k0(&self) -> f64 {
        self.k0
    }

    pub fn eta_background(&self) -> f64 {
        self.eta_b
    }

    pub fn eta_sq(&self) -> &[f64] {
        &self.eta_sq
    }

    pub fn alpha(&self) -> &[Complex64] {
        &self.alpha
    }

    pub fn profile(&self) -> &AblProfile {
        &self.profile
    }

    pub fn is_conjugated(&self) -> bool {
        self.conjugated
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Main diagonal including the folded Sommerfeld ghost terms.
    pub fn diagonal_values(&self) -> &[Complex64] {
        &self.diag
    }

    pub fn diagonal(&self) -> ComplexField2D {
        ComplexField2D::from_vec(self.grid, self.diag.clone()).expect("diagonal is finite")
    }

    /// `out = A u` on raw sample slices.
    pub fn apply_into(&self, u: &[Complex64], out: &mut [Complex64]) {
        stencil_apply(&self.diag, self.grid.points_per_side(), self.inv_h2(), u, out, false);
    }

    /// `out = A^H v` on raw sample slices.
    pub fn apply_adjoint_into(&self, v: &[Complex64], out: &mut [Complex64]) {
        stencil_apply(&self.diag, self.grid.points_per_side(), self.inv_h2(), v, out, true);
    }

    pub fn apply(&self, u: &ComplexField2D) -> Result<ComplexField2D> {
        ensure_grid(u.grid(), &self.grid)?;
        let mut out = vec![Complex64::new(0.0, 0.0); self.len()];
        self.apply_into(u.values(), &mut out);
        ComplexField2D::from_vec(self.grid, out)
    }

    pub fn apply_adjoint(&self, v: &ComplexField2D) -> Result<ComplexField2D> {
        ensure_grid(v.grid(), &self.grid)?;
        let mut out = vec![Complex64::new(0.0, 0.0); self.len()];
        self.apply_adjoint_into(v.values(), &mut out);
        ComplexField2D::from_vec(self.grid, out)
    }

    pub fn inv_h2(&self) -> f64 {
        let h = self.grid.mesh_size();
        1.0 / (h * h)
    }

    /// Rediscretisation at `2h`: `η²` is restricted by full weighting, the
    /// outer ring is reset to the background, and `α` is re-evaluated at the
    /// coarse points.
    pub fn coarsen(&self) -> Result<Self> {
        let coarse_grid = self.grid.coarsened()?;
        let s = self.grid.points_per_side();
        let mut eta_sq = restrict_full_weighting(&self.eta_sq, s)?;
        let sc = coarse_grid.points_per_side();
        let bg = self.eta_b * self.eta_b;
        for n in 0..sc {
            for m in 0..sc {
                if m == 0 || n == 0 || m + 1 == sc || n + 1 == sc {
                    eta_sq[n * sc + m] = bg;
                }
            }
        }
        Self::from_parts(
            coarse_grid,
            self.k0,
            self.eta_b,
            eta_sq,
            self.profile,
            self.conjugated,
        )
    }
}

pub(crate) fn stencil_apply(
    diag: &[Complex64],
    s: usize,
    inv_h2: f64,
    u: &[Complex64],
    out: &mut [Complex64],
    conjugate_diag: bool,
) {
    let len = s * s;
    assert_eq!(u.len(), len, "field does not match operator grid");
    assert_eq!(out.len(), len, "output does not match operator grid");
    if conjugate_diag {
        for ((o, d), x) in out.iter_mut().zip(diag).zip(u) {
            *o = d.conj() * x;
        }
    } else {
        for ((o, d), x) in out.iter_mut().zip(diag).zip(u) {
            *o = d * x;
        }
    }
    for (orow, urow) in out.chunks_exact_mut(s).zip(u.chunks_exact(s)) {
        for (o, x) in orow[1..].iter_mut().zip(&urow[..s - 1]) {
            *o -= x * inv_h2;
        }
        for (o, x) in orow[..s - 1].iter_mut().zip(&urow[1..]) {
            *o -= x * inv_h2;
        }
    }
    for (o, x) in out[s..].iter_mut().zip(&u[..len - s]) {
        *o -= x * inv_h2;
    }
    for (o, x) in out[..len - s].iter_mut().zip(&u[s..]) {
        *o -= x * inv_h2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_extended_grid;
    use rand::{Rng, SeedableRng};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_field(n: usize, rng: &mut impl Rng) -> Vec<Complex64> {
        (0..n)
            .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    fn inner_product(a: &[Complex64], b: &[Complex64]) -> Complex64 {
        a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
    }

    fn operator(s: usize, abl: usize, beta: f64, k0: f64, h: f64, varying: bool) -> HelmholtzOperator {
        let inner = Grid2D::with_spacing(s, h, [0.0, 0.0]).unwrap();
        let eg = build_extended_grid(inner, abl, beta, 1).unwrap();
        let g = *eg.grid();
        let eta_sq = RealField2D::from_fn(g, |x| {
            if varying {
                1.0 + 0.5 * (0.7 * x[0]).sin().powi(2) + 0.3 * (x[1] * 0.4).cos().powi(2)
            } else {
                1.0
            }
        })
        .unwrap();
        HelmholtzOperator::assemble(&eg, &eta_sq, k0, 1.0).unwrap()
    }

    /// Row-by-row assembly written directly from the five-point formula and
    /// the Sommerfeld ghost relations.
    fn dense_rows(op: &HelmholtzOperator) -> Vec<Vec<Complex64>> {
        let g = op.grid();
        let s = g.points_per_side();
        let h = g.mesh_size();
        let k0 = op.k0();
        let mut rows = vec![vec![c(0.0, 0.0); g.len()]; g.len()];
        for n in 0..s as isize {
            for m in 0..s as isize {
                let i = g.index(m as usize, n as usize);
                let keta = k0 * op.eta_sq()[i].sqrt();
                rows[i][i] += c(4.0 / (h * h), 0.0) - op.alpha()[i] * k0 * k0 * op.eta_sq()[i];
                for (dm, dn) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
                    let (mm, nn) = (m + dm, n + dn);
                    if mm < 0 || nn < 0 || mm >= s as isize || nn >= s as isize {
                        // ghost u = (1 + j h k0 η) u_boundary
                        rows[i][i] -= c(1.0, h * keta) / (h * h);
                    } else {
                        rows[i][g.index(mm as usize, nn as usize)] -= c(1.0 / (h * h), 0.0);
                    }
                }
            }
        }
        rows
    }

    #[test]
    fn alpha_profile() {
        let inner = Grid2D::with_spacing(5, 1.0, [0.0, 0.0]).unwrap();
        let eg = build_extended_grid(inner, 4, 0.15, 1).unwrap();
        let p = AblProfile::new(&eg).unwrap();
        assert_eq!(p.alpha([4.0, 4.0]), c(1.0, 0.0));
        assert_eq!(p.alpha([2.0, 0.0]), c(1.0, 0.0));
        let a = p.alpha([-4.0, 2.0]);
        assert_eq!(a.re, 1.0);
        assert!((a.im + 0.15).abs() < 1e-15);
        let mut last = 0.0;
        for k in 0..=4 {
            let im = p.alpha([4.0 + k as f64, 2.0]).im;
            assert!(im <= last);
            last = im;
        }

        let eg0 = build_extended_grid(inner, 4, 0.0, 1).unwrap();
        let op = operator(5, 4, 0.0, 1.0, 1.0, false);
        assert!(op.alpha().iter().all(|a| *a == c(1.0, 0.0)));
        let _ = eg0;

        let flat = build_extended_grid(inner, 0, 0.2, 1).unwrap();
        assert!(AblProfile::new(&flat).is_err());
    }

    #[test]
    fn rejects_nonpositive_index() {
        let inner = Grid2D::with_spacing(5, 1.0, [0.0, 0.0]).unwrap();
        let eg = build_extended_grid(inner, 0, 0.0, 1).unwrap();
        let mut v = vec![1.0; 25];
        v[3] = 0.0;
        let eta_sq = RealField2D::from_vec(*eg.grid(), v).unwrap();
        assert!(HelmholtzOperator::assemble(&eg, &eta_sq, 1.0, 1.0).is_err());
    }

    #[test]
    fn constant_field_interior() {
        let op = operator(9, 0, 0.0, 0.8, 0.5, false);
        let u = vec![c(2.0, -1.0); op.len()];
        let mut out = vec![c(0.0, 0.0); op.len()];
        op.apply_into(&u, &mut out);
        let expect = -c(2.0, -1.0) * 0.64;
        let i = op.grid().index(4, 4);
        assert!((out[i] - expect).norm() < 1e-14);
    }

    #[test]
    fn delta_stencil_readoff() {
        let h = 0.5;
        let op = operator(9, 0, 0.0, 0.8, h, false);
        let g = *op.grid();
        let mut u = vec![c(0.0, 0.0); g.len()];
        u[g.index(4, 3)] = c(1.0, 0.0);
        let mut out = vec![c(0.0, 0.0); g.len()];
        op.apply_into(&u, &mut out);
        for n in 0..9 {
            for m in 0..9 {
                let v = out[g.index(m, n)];
                let expect = if (m, n) == (4, 3) {
                    c(4.0 / (h * h) - 0.64, 0.0)
                } else if (m as isize - 4).abs() + (n as isize - 3).abs() == 1 {
                    c(-1.0 / (h * h), 0.0)
                } else {
                    c(0.0, 0.0)
                };
                assert!((v - expect).norm() < 1e-13, "({m},{n})");
            }
        }
    }

    #[test]
    fn matches_dense_rows_with_absorbing_layer() {
        let op = operator(9, 4, 0.15, 1.3, 0.25, true);
        assert_eq!(op.grid().points_per_side(), 17);
        let rows = dense_rows(&op);
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let u = random_field(op.len(), &mut rng);
        let mut out = vec![c(0.0, 0.0); op.len()];
        op.apply_into(&u, &mut out);
        let dense: Vec<Complex64> = rows
            .iter()
            .map(|row| row.iter().zip(&u).map(|(a, x)| a * x).sum())
            .collect();
        let num: f64 = out.iter().zip(&dense).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        let den: f64 = dense.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        assert!(num / den <= 1e-13, "relative error {}", num / den);
        for (i, row) in rows.iter().enumerate() {
            assert!((row[i] - op.diagonal_values()[i]).norm() <= 1e-13 * row[i].norm());
        }
    }

    #[test]
    fn corner_and_interior_diagonal() {
        let op = operator(9, 0, 0.0, 0.0, 1.0, false);
        assert_eq!(op.diagonal_values()[op.grid().index(4, 4)], c(4.0, 0.0));

        let h = 0.5;
        let k0 = 1.1;
        let op = operator(9, 0, 0.0, k0, h, false);
        let d = op.diagonal_values()[0];
        let keta = k0;
        let expect = c(4.0 / (h * h) - keta * keta, 0.0) - c(1.0, h * keta) / (h * h) * 2.0;
        assert!((d - expect).norm() < 1e-13);
    }

    #[test]
    fn adjoint_identity() {
        let op = operator(5, 2, 0.3, 1.7, 0.4, true);
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        for _ in 0..5 {
            let u = random_field(op.len(), &mut rng);
            let v = random_field(op.len(), &mut rng);
            let mut au = vec![c(0.0, 0.0); op.len()];
            let mut ahv = vec![c(0.0, 0.0); op.len()];
            op.apply_into(&u, &mut au);
            op.apply_adjoint_into(&v, &mut ahv);
            let lhs = inner_product(&au, &v);
            let rhs = inner_product(&u, &ahv);
            assert!((lhs - rhs).norm() <= 1e-12 * lhs.norm());
        }
        let zero = vec![c(0.0, 0.0); op.len()];
        let mut out = vec![c(1.0, 1.0); op.len()];
        op.apply_adjoint_into(&zero, &mut out);
        assert!(out.iter().all(|v| *v == c(0.0, 0.0)));
        let conj = op.conjugate();
        let u = random_field(op.len(), &mut rng);
        let (mut a, mut b) = (vec![c(0.0, 0.0); op.len()], vec![c(0.0, 0.0); op.len()]);
        conj.apply_into(&u, &mut a);
        op.apply_adjoint_into(&u, &mut b);
        assert_eq!(a, b);
    }

    #[test]
    fn linearity() {
        let op = operator(7, 3, 0.15, 2.0, 0.3, true);
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        let u = random_field(op.len(), &mut rng);
        let v = random_field(op.len(), &mut rng);
        let (a, b) = (c(0.3, -1.2), c(-2.0, 0.5));
        let comb: Vec<Complex64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
        let mut au = vec![c(0.0, 0.0); op.len()];
        let mut av = au.clone();
        let mut ac = au.clone();
        op.apply_into(&u, &mut au);
        op.apply_into(&v, &mut av);
        op.apply_into(&comb, &mut ac);
        for i in 0..op.len() {
            let expect = a * au[i] + b * av[i];
            assert!((ac[i] - expect).norm() <= 1e-12 * (1.0 + expect.norm()));
        }
    }

    #[test]
    fn fourier_mode_symbol_on_interior() {
        let h = 0.2;
        let k0 = 2.0;
        let op = operator(15, 0, 0.0, k0, h, false);
        let g = *op.grid();
        let (t1, t2) = (0.7, -1.9);
        let u: Vec<Complex64> = (0..g.len())
            .map(|i| {
                let (m, n) = ((i % 15) as f64, (i / 15) as f64);
                Complex64::from_polar(1.0, t1 * m + t2 * n)
            })
            .collect();
        let mut out = vec![c(0.0, 0.0); g.len()];
        op.apply_into(&u, &mut out);
        let kh = k0 * h;
        let symbol = (4.0 - 2.0 * (t1.cos() + t2.cos()) - kh * kh) / (h * h);
        for n in 1..14 {
            for m in 1..14 {
                let i = g.index(m, n);
                assert!((out[i] - u[i] * symbol).norm() < 1e-11);
            }
        }
    }

    #[test]
    fn coarsening_doubles_spacing_and_resets_ring() {
        let op = operator(9, 4, 0.15, 1.0, 0.25, false);
        let coarse = op.coarsen().unwrap();
        assert_eq!(coarse.grid().points_per_side(), 9);
        assert_eq!(coarse.grid().mesh_size(), 0.5);
        let sc = 9;
        for n in 0..sc {
            for m in 0..sc {
                let v = coarse.eta_sq()[n * sc + m];
                assert!((v - 1.0).abs() < 1e-15);
            }
        }
        let tiny = operator(3, 0, 0.0, 1.0, 1.0, false);
        assert!(tiny.coarsen().is_err());
    }
}
