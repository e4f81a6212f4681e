//! Uniform square grids, sampled fields, and the embedding of the region of
//! interest into the absorbing-layer extended domain.
//!
//! Samples are stored row-major with the first index `m` running along `x`:
//! the sample at `(m, n)` lives at position `n * side + m`.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Uniform square grid with `side` points per axis and spacing `h` (cm).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid2D {
    side: usize,
    h: f64,
    origin: [f64; 2],
}

impl Grid2D {
    /// Grid spanning `side_length` cm, so that `h = side_length / (points - 1)`.
    pub fn new(points_per_side: usize, side_length: f64, origin: [f64; 2]) -> Result<Self> {
        if points_per_side < 3 {
            return Err(Error::invalid(format!(
                "grid needs at least 3 points per side, got {points_per_side}"
            )));
        }
        Self::with_spacing(
            points_per_side,
            side_length / (points_per_side - 1) as f64,
            origin,
        )
    }

    pub fn with_spacing(points_per_side: usize, h: f64, origin: [f64; 2]) -> Result<Self> {
        if points_per_side < 3 {
            return Err(Error::invalid(format!(
                "grid needs at least 3 points per side, got {points_per_side}"
            )));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::invalid(format!("mesh size must be positive, got {h}")));
        }
        if !(origin[0].is_finite() && origin[1].is_finite()) {
            return Err(Error::invalid("grid origin must be finite"));
        }
        Ok(Self {
            side: points_per_side,
            h,
            origin,
        })
    }

    /// Grid of the given physical extent centred on the coordinate origin.
    pub fn centered(points_per_side: usize, side_length: f64) -> Result<Self> {
        let half = 0.5 * side_length;
        Self::new(points_per_side, side_length, [-half, -half])
    }

    pub fn points_per_side(&self) -> usize {
        self.side
    }

    pub fn mesh_size(&self) -> f64 {
        self.h
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn side_length(&self) -> f64 {
        self.h * (self.side - 1) as f64
    }

    /// Total number of samples, `side²`.
    pub fn len(&self) -> usize {
        self.side * self.side
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, m: usize, n: usize) -> usize {
        n * self.side + m
    }

    #[inline]
    pub fn coord(&self, m: usize, n: usize) -> [f64; 2] {
        [
            self.origin[0] + m as f64 * self.h,
            self.origin[1] + n as f64 * self.h,
        ]
    }

    /// Grid with doubled spacing sharing the same origin and extent.
    pub fn coarsened(&self) -> Result<Self> {
        if self.side % 2 == 0 {
            return Err(Error::invalid(format!(
                "cannot coarsen a grid with an even side count ({})",
                self.side
            )));
        }
        Self::with_spacing((self.side + 1) / 2, 2.0 * self.h, self.origin)
    }

    /// Axis-aligned bounding box `[lo, hi]` of the grid points.
    pub fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        let l = self.side_length();
        (self.origin, [self.origin[0] + l, self.origin[1] + l])
    }
}

/// Region of interest padded with an absorbing boundary layer.
///
/// The `pad` cells needed to make the side count vertex-coarsenable are
/// appended on the high-index side of each axis and act as additional
/// absorbing cells.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtendedGrid2D {
    inner: Grid2D,
    grid: Grid2D,
    abl_points: usize,
    pad: usize,
    beta: f64,
}

/// Extends `inner` by `abl_points` on every side plus the minimal pad that
/// makes the side count `≡ 1 (mod 2^(levels-1))`.
pub fn build_extended_grid(
    inner: Grid2D,
    abl_points: usize,
    beta: f64,
    levels: usize,
) -> Result<ExtendedGrid2D> {
    if levels == 0 {
        return Err(Error::invalid("at least one multigrid level is required"));
    }
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::invalid(format!("ABL strength must be >= 0, got {beta}")));
    }
    let stride = 1usize
        .checked_shl((levels - 1) as u32)
        .filter(|s| *s < usize::MAX / 4)
        .ok_or(Error::DegenerateHierarchy {
            levels,
            coarsest: 1,
        })?;
    let base = inner.points_per_side() + 2 * abl_points;
    let pad = (stride - (base - 1) % stride) % stride;
    let side = base + pad;
    let coarsest = (side - 1) / stride + 1;
    if coarsest < 3 {
        return Err(Error::DegenerateHierarchy { levels, coarsest });
    }
    let h = inner.mesh_size();
    let o = inner.origin();
    let shift = abl_points as f64 * h;
    let grid = Grid2D::with_spacing(side, h, [o[0] - shift, o[1] - shift])?;
    Ok(ExtendedGrid2D {
        inner,
        grid,
        abl_points,
        pad,
        beta,
    })
}

impl ExtendedGrid2D {
    /// The region of interest Ω.
    pub fn inner(&self) -> &Grid2D {
        &self.inner
    }

    /// The full extended grid Ω_e.
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn abl_points(&self) -> usize {
        self.abl_points
    }

    pub fn pad(&self) -> usize {
        self.pad
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Absorbing layer thickness `L = (abl_points + pad) h`.
    pub fn abl_thickness(&self) -> f64 {
        (self.abl_points + self.pad) as f64 * self.inner.mesh_size()
    }

    /// Extended-grid linear index of the inner sample `(m, n)`.
    #[inline]
    pub fn extended_index(&self, m: usize, n: usize) -> usize {
        self.grid.index(m + self.abl_points, n + self.abl_points)
    }

    /// Copies inner samples into a zero-initialised extended array.
    pub fn embed<T: Copy + Default>(&self, inner: &[T]) -> Result<Vec<T>> {
        check_len(inner.len(), self.inner.len())?;
        let s = self.inner.points_per_side();
        let mut out = vec![T::default(); self.grid.len()];
        for n in 0..s {
            let dst = self.extended_index(0, n);
            out[dst..dst + s].copy_from_slice(&inner[n * s..(n + 1) * s]);
        }
        Ok(out)
    }

    /// Selects the inner samples from an extended array.
    pub fn restrict<T: Copy>(&self, extended: &[T]) -> Result<Vec<T>> {
        check_len(extended.len(), self.grid.len())?;
        let s = self.inner.points_per_side();
        let mut out = Vec::with_capacity(self.inner.len());
        for n in 0..s {
            let src = self.extended_index(0, n);
            out.extend_from_slice(&extended[src..src + s]);
        }
        Ok(out)
    }
}

pub(crate) fn check_len(actual: usize, expected: usize) -> Result<()> {
    if actual != expected {
        return Err(Error::SizeMismatch { expected, actual });
    }
    Ok(())
}

/// Real samples on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RealField2D {
    grid: Grid2D,
    values: Vec<f64>,
}

/// Complex samples on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField2D {
    grid: Grid2D,
    values: Vec<Complex64>,
}

impl RealField2D {
    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: Grid2D, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn from_vec(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        check_len(values.len(), grid.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid2D, mut f: impl FnMut([f64; 2]) -> f64) -> Result<Self> {
        let s = grid.points_per_side();
        let mut values = Vec::with_capacity(grid.len());
        for n in 0..s {
            for m in 0..s {
                values.push(f(grid.coord(m, n)));
            }
        }
        Self::from_vec(grid, values)
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl ComplexField2D {
    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_vec(grid: Grid2D, values: Vec<Complex64>) -> Result<Self> {
        check_len(values.len(), grid.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }
}

fn check_grid(actual: &Grid2D, expected: &Grid2D) -> Result<()> {
    if actual != expected {
        return Err(Error::SizeMismatch {
            expected: expected.len(),
            actual: actual.len(),
        });
    }
    Ok(())
}

pub(crate) fn ensure_grid(actual: &Grid2D, expected: &Grid2D) -> Result<()> {
    check_grid(actual, expected)
}

/// Places a potential defined on Ω into Ω_e, zero in the absorbing layer.
pub fn embed_potential(f: &RealField2D, eg: &ExtendedGrid2D) -> Result<RealField2D> {
    check_grid(f.grid(), eg.inner())?;
    Ok(RealField2D {
        grid: *eg.grid(),
        values: eg.embed(f.values())?,
    })
}

/// Truncates a field on Ω_e to the region of interest.
pub fn restrict_to_roi(u: &ComplexField2D, eg: &ExtendedGrid2D) -> Result<ComplexField2D> {
    check_grid(u.grid(), eg.grid())?;
    Ok(ComplexField2D {
        grid: *eg.inner(),
        values: eg.restrict(u.values())?,
    })
}
