//! Lippmann-Schwinger baseline: the Green's-function convolution on a grid
//! twice the size of the region of interest, and the solve of
//! `(I - G diag(f)) u = u_in` by unpreconditioned Bi-CGSTAB.

use std::f64::consts::FRAC_PI_4;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{ensure_grid, ComplexField2D, Grid2D, RealField2D};
use crate::krylov::{bicgstab, identity, KrylovConfig, SolveReport};
use crate::special::{green_2d, hankel1_1};

/// Integral of `(j/4) H0(k r)` over the `h × h` cell centred on the origin.
///
/// In polar coordinates each of the eight symmetric triangles contributes
/// `∫_0^{π/4} [R H1(kR)/k + 2j/(πk²)] dφ` with `R = h / (2 cos φ)`.
pub fn singular_cell_integral(k: f64, h: f64) -> Complex64 {
    let radial = |phi: f64| -> Complex64 {
        let r = 0.5 * h / phi.cos();
        r * hankel1_1(k * r) / k + Complex64::new(0.0, 2.0 / (std::f64::consts::PI * k * k))
    };
    let integral = adaptive_simpson(&radial, 0.0, FRAC_PI_4, 1e-15, 40);
    Complex64::new(0.0, 0.25) * 8.0 * integral
}

fn adaptive_simpson<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> Complex64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> Complex64>(
    f: &F,
    a: f64,
    b: f64,
    fa: Complex64,
    fm: Complex64,
    fb: Complex64,
    whole: Complex64,
    tol: f64,
    depth: u32,
) -> Complex64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.norm() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Two-dimensional FFT pipeline on a `p × p` buffer whose input occupies
/// the leading `s × s` block.
#[derive(Clone)]
struct FftPair {
    p: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FftPair {
    fn new(p: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            p,
            forward: planner.plan_fft_forward(p),
            inverse: planner.plan_fft_inverse(p),
        }
    }

    fn transpose(&self, src: &[Complex64], dst: &mut [Complex64]) {
        let p = self.p;
        const B: usize = 32;
        for ib in (0..p).step_by(B) {
            for jb in (0..p).step_by(B) {
                for i in ib..(ib + B).min(p) {
                    for j in jb..(jb + B).min(p) {
                        dst[j * p + i] = src[i * p + j];
                    }
                }
            }
        }
    }

    /// Forward transform; only the first `live_rows` rows may be nonzero.
    /// The result is left in transposed (frequency-x major) layout.
    fn forward(&self, buf: &mut Vec<Complex64>, tmp: &mut Vec<Complex64>, live_rows: usize) {
        let p = self.p;
        self.forward.process(&mut buf[..live_rows * p]);
        self.transpose(buf, tmp);
        self.forward.process(tmp);
        std::mem::swap(buf, tmp);
    }

    /// Inverse of [`forward`](Self::forward) for the first `keep_rows` rows,
    /// unnormalised.
    fn inverse(&self, buf: &mut Vec<Complex64>, tmp: &mut Vec<Complex64>, keep_rows: usize) {
        let p = self.p;
        self.inverse.process(buf);
        self.transpose(buf, tmp);
        self.inverse.process(&mut tmp[..keep_rows * p]);
        std::mem::swap(buf, tmp);
    }
}

/// Sampled Green's function of the background medium and its spectrum on
/// the doubled grid.
#[derive(Clone)]
pub struct GreenKernel {
    grid: Grid2D,
    k0: f64,
    eta_b: f64,
    singular: Complex64,
    /// `h² g(h·sqrt(i² + j²))` for `0 <= i, j < s`, with the cell integral at the origin.
    samples: Vec<Complex64>,
    spectrum: Vec<Complex64>,
    fft: FftPair,
}

impl std::fmt::Debug for GreenKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GreenKernel")
            .field("grid", &self.grid)
            .field("k0", &self.k0)
            .field("eta_b", &self.eta_b)
            .field("singular", &self.singular)
            .finish()
    }
}

impl GreenKernel {
    pub fn new(grid: Grid2D, k0: f64, eta_b: f64) -> Result<Self> {
        let k = k0 * eta_b;
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::invalid(format!(
                "background wavenumber must be positive, got {k}"
            )));
        }
        let s = grid.points_per_side();
        let h = grid.mesh_size();
        let singular = singular_cell_integral(k, h);
        let mut samples = vec![Complex64::new(0.0, 0.0); s * s];
        for j in 0..s {
            for i in 0..=j {
                let v = if i == 0 && j == 0 {
                    singular
                } else {
                    let r = h * ((i * i + j * j) as f64).sqrt();
                    h * h * green_2d(k, r)
                };
                samples[j * s + i] = v;
                samples[i * s + j] = v;
            }
        }

        let p = 2 * s;
        let fft = FftPair::new(p);
        let mut buf = vec![Complex64::new(0.0, 0.0); p * p];
        for dn in -(s as isize - 1)..s as isize {
            for dm in -(s as isize - 1)..s as isize {
                let v = samples[dn.unsigned_abs() * s + dm.unsigned_abs()];
                let row = dn.rem_euclid(p as isize) as usize;
                let col = dm.rem_euclid(p as isize) as usize;
                buf[row * p + col] = v;
            }
        }
        let mut tmp = vec![Complex64::new(0.0, 0.0); p * p];
        fft.forward(&mut buf, &mut tmp, p);
        let scale = 1.0 / (p * p) as f64;
        for v in &mut buf {
            *v *= scale;
        }
        Ok(Self {
            grid,
            k0,
            eta_b,
            singular,
            samples,
            spectrum: buf,
            fft,
        })
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

    /// Weighted cell integral at zero offset.
    pub fn singular_value(&self) -> Complex64 {
        self.singular
    }

    /// Kernel weight for an index offset; `None` outside the sampled range.
    pub fn sample(&self, dm: isize, dn: isize) -> Option<Complex64> {
        let s = self.grid.points_per_side();
        let (i, j) = (dm.unsigned_abs(), dn.unsigned_abs());
        (i < s && j < s).then(|| self.samples[j * s + i])
    }

    /// Aperiodic convolution `(G w)(x) = Σ_x' h² g(x − x') w(x')` on the grid.
    pub fn convolve_into(&self, w: &[Complex64], out: &mut [Complex64]) {
        let s = self.grid.points_per_side();
        assert_eq!(w.len(), s * s, "input does not match kernel grid");
        assert_eq!(out.len(), s * s, "output does not match kernel grid");
        let p = 2 * s;
        let mut buf = vec![Complex64::new(0.0, 0.0); p * p];
        for (row, src) in buf.chunks_exact_mut(p).zip(w.chunks_exact(s)) {
            row[..s].copy_from_slice(src);
        }
        let mut tmp = vec![Complex64::new(0.0, 0.0); p * p];
        self.fft.forward(&mut buf, &mut tmp, s);
        for (b, k) in buf.iter_mut().zip(&self.spectrum) {
            *b *= k;
        }
        self.fft.inverse(&mut buf, &mut tmp, s);
        for (dst, row) in out.chunks_exact_mut(s).zip(buf.chunks_exact(p)) {
            dst.copy_from_slice(&row[..s]);
        }
    }

    pub fn convolve(&self, w: &ComplexField2D) -> Result<ComplexField2D> {
        ensure_grid(w.grid(), &self.grid)?;
        let mut out = vec![Complex64::new(0.0, 0.0); self.grid.len()];
        self.convolve_into(w.values(), &mut out);
        ComplexField2D::from_vec(self.grid, out)
    }
}

/// `sample_green_kernel` entry point.
pub fn sample_green_kernel(grid: Grid2D, k0: f64, eta_b: f64) -> Result<GreenKernel> {
    GreenKernel::new(grid, k0, eta_b)
}

/// Applies `u ↦ u − G(f ⊙ u)`.
pub fn lis_apply(kernel: &GreenKernel, f: &[f64], u: &[Complex64], out: &mut [Complex64]) {
    let fu: Vec<Complex64> = u.iter().zip(f).map(|(v, fi)| v * fi).collect();
    kernel.convolve_into(&fu, out);
    for (o, v) in out.iter_mut().zip(u) {
        *o = v - *o;
    }
}

/// Total field from `(I − G diag(f)) u = u_in`. A run that exhausts
/// `max_iter` returns its last iterate with `converged = false`.
pub fn solve_lis(
    kernel: &GreenKernel,
    f: &RealField2D,
    u_in: &ComplexField2D,
    config: &KrylovConfig,
) -> Result<(ComplexField2D, SolveReport)> {
    ensure_grid(f.grid(), &kernel.grid)?;
    ensure_grid(u_in.grid(), &kernel.grid)?;
    let fv = f.values();
    let (u, report) = bicgstab(
        |u, out| lis_apply(kernel, fv, u, out),
        identity,
        u_in.values(),
        None,
        config,
    )?;
    Ok((ComplexField2D::from_vec(kernel.grid, u)?, report))
}
