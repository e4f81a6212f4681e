//! Acquisition geometry, incident plane waves, the sensor propagation
//! operator and the two forward models: the multigrid-preconditioned
//! Helmholtz model and the Lippmann-Schwinger model.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{build_extended_grid, ensure_grid, ComplexField2D, ExtendedGrid2D, Grid2D, RealField2D};
use crate::helmholtz::HelmholtzOperator;
use crate::krylov::{bicgstab, KrylovConfig, SolveReport};
use crate::lis::{solve_lis, GreenKernel};
use crate::multigrid::{MgConfig, MgHierarchy, WorkUnitMeter};
use crate::special::green_2d;

/// Region of interest and homogeneous background.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scene {
    pub grid: Grid2D,
    /// Vacuum wavelength (cm).
    pub wavelength: f64,
    pub eta_b: f64,
    pub u0: Complex64,
}

impl Scene {
    pub fn new(grid: Grid2D, wavelength: f64, eta_b: f64) -> Result<Self> {
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(Error::invalid(format!("wavelength must be positive, got {wavelength}")));
        }
        if !(eta_b > 0.0 && eta_b.is_finite()) {
            return Err(Error::invalid(format!("background index must be positive, got {eta_b}")));
        }
        Ok(Self {
            grid,
            wavelength,
            eta_b,
            u0: Complex64::new(1.0, 0.0),
        })
    }

    /// Vacuum wavenumber `2π/λ` (rad/cm).
    pub fn k0(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    /// Scattering potential `k0² (η² − η_b²)` of an index map.
    pub fn potential_from_index(&self, eta: &RealField2D) -> Result<RealField2D> {
        ensure_grid(eta.grid(), &self.grid)?;
        let k2 = self.k0().powi(2);
        let eb2 = self.eta_b * self.eta_b;
        RealField2D::from_vec(self.grid, eta.values().iter().map(|e| k2 * (e * e - eb2)).collect())
    }

    /// Index map `sqrt(η_b² + f/k0²)`.
    pub fn index_from_potential(&self, f: &RealField2D) -> Result<RealField2D> {
        ensure_grid(f.grid(), &self.grid)?;
        let sq = self.eta_sq(f)?;
        RealField2D::from_vec(self.grid, sq.into_iter().map(f64::sqrt).collect())
    }

    /// `η²` on Ω, rejecting potentials that would make it nonpositive.
    pub fn eta_sq(&self, f: &RealField2D) -> Result<Vec<f64>> {
        let k2 = self.k0().powi(2);
        let eb2 = self.eta_b * self.eta_b;
        f.values()
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let e = eb2 + v / k2;
                if e > 0.0 {
                    Ok(e)
                } else {
                    Err(Error::invalid(format!(
                        "potential {v} at sample {i} gives nonpositive squared index"
                    )))
                }
            })
            .collect()
    }
}

/// Illumination directions, sensor positions and per-view active sensors.
#[derive(Clone, Debug, PartialEq)]
pub struct AcquisitionGeometry {
    directions: Vec<[f64; 2]>,
    sensors: Vec<[f64; 2]>,
    active: Vec<Vec<usize>>,
}

impl AcquisitionGeometry {
    pub fn new(directions: Vec<[f64; 2]>, sensors: Vec<[f64; 2]>, active: Vec<Vec<usize>>) -> Result<Self> {
        if directions.is_empty() {
            return Err(Error::invalid("geometry needs at least one view"));
        }
        for d in &directions {
            let n = d[0].hypot(d[1]);
            if !((n - 1.0).abs() < 1e-12) {
                return Err(Error::invalid(format!("direction {d:?} is not a unit vector")));
            }
        }
        if active.len() != directions.len() {
            return Err(Error::SizeMismatch {
                expected: directions.len(),
                actual: active.len(),
            });
        }
        for list in &active {
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid("active sensor lists must be strictly increasing"));
            }
            if list.iter().any(|&i| i >= sensors.len()) {
                return Err(Error::invalid("active sensor index out of range"));
            }
        }
        Ok(Self {
            directions,
            sensors,
            active,
        })
    }

    /// `views` plane waves evenly spread over the circle, `sensors` detectors
    /// on a ring of `radius` around `center`, each view recording the
    /// `active_per_view` detectors farthest from its source at
    /// `center − radius·d`.
    pub fn circular(views: usize, sensors: usize, radius: f64, active_per_view: usize, center: [f64; 2]) -> Result<Self> {
        if views == 0 || sensors == 0 {
            return Err(Error::invalid("need at least one view and one sensor"));
        }
        if active_per_view == 0 || active_per_view > sensors {
            return Err(Error::invalid(format!(
                "active sensors per view must lie in 1..={sensors}, got {active_per_view}"
            )));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid(format!("sensor radius must be positive, got {radius}")));
        }
        let ring: Vec<[f64; 2]> = (0..sensors)
            .map(|m| {
                let t = 2.0 * PI * m as f64 / sensors as f64;
                [center[0] + radius * t.cos(), center[1] + radius * t.sin()]
            })
            .collect();
        let mut directions = Vec::with_capacity(views);
        let mut active = Vec::with_capacity(views);
        for q in 0..views {
            let t = 2.0 * PI * q as f64 / views as f64;
            let d = [t.cos(), t.sin()];
            let src = [center[0] - radius * d[0], center[1] - radius * d[1]];
            let mut order: Vec<usize> = (0..sensors).collect();
            let dist = |i: usize| (ring[i][0] - src[0]).hypot(ring[i][1] - src[1]);
            order.sort_by(|&a, &b| dist(b).total_cmp(&dist(a)).then(a.cmp(&b)));
            let mut keep = order[..active_per_view].to_vec();
            keep.sort_unstable();
            directions.push(d);
            active.push(keep);
        }
        Self::new(directions, ring, active)
    }

    pub fn num_views(&self) -> usize {
        self.directions.len()
    }

    pub fn directions(&self) -> &[[f64; 2]] {
        &self.directions
    }

    pub fn direction(&self, view: usize) -> [f64; 2] {
        self.directions[view]
    }

    pub fn sensors(&self) -> &[[f64; 2]] {
        &self.sensors
    }

    pub fn active(&self, view: usize) -> &[usize] {
        &self.active[view]
    }

    fn check_view(&self, view: usize) -> Result<()> {
        if view >= self.directions.len() {
            return Err(Error::invalid(format!(
                "view {view} out of range ({} views)",
                self.directions.len()
            )));
        }
        Ok(())
    }
}

/// Measured or predicted scattered fields, one vector per view over that
/// view's active sensors.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSet {
    pub views: Vec<Vec<Complex64>>,
}

impl MeasurementSet {
    pub fn check(&self, geometry: &AcquisitionGeometry) -> Result<()> {
        if self.views.len() != geometry.num_views() {
            return Err(Error::SizeMismatch {
                expected: geometry.num_views(),
                actual: self.views.len(),
            });
        }
        for (q, y) in self.views.iter().enumerate() {
            if y.len() != geometry.active(q).len() {
                return Err(Error::SizeMismatch {
                    expected: geometry.active(q).len(),
                    actual: y.len(),
                });
            }
            if let Some(i) = y.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(i));
            }
        }
        Ok(())
    }
}

/// `u0 exp(j k0 η_b ⟨d, x⟩)` at the grid samples.
pub fn plane_wave(grid: &Grid2D, direction: [f64; 2], k0: f64, eta_b: f64, u0: Complex64) -> ComplexField2D {
    let k = k0 * eta_b;
    let s = grid.points_per_side();
    let mut values = Vec::with_capacity(grid.len());
    for n in 0..s {
        for m in 0..s {
            let x = grid.coord(m, n);
            values.push(u0 * Complex64::from_polar(1.0, k * (direction[0] * x[0] + direction[1] * x[1])));
        }
    }
    ComplexField2D::from_vec(*grid, values).expect("plane wave samples are finite")
}

/// Dense map from sources on Ω to fields at the sensors, entries
/// `h² g(‖x_s − x_n‖)`. Only the columns in `support` are stored; the rest
/// are treated as zero sources.
#[derive(Clone, Debug)]
pub struct SensorOperator {
    grid: Grid2D,
    num_sensors: usize,
    columns: Vec<usize>,
    /// Row-major `num_sensors × columns.len()`.
    data: Vec<Complex64>,
}

impl SensorOperator {
    pub fn new(grid: &Grid2D, sensors: &[[f64; 2]], k0: f64, eta_b: f64) -> Result<Self> {
        Self::with_support(grid, sensors, k0, eta_b, None)
    }

    /// Operator restricted to pixels where `support` is true.
    pub fn with_support(
        grid: &Grid2D,
        sensors: &[[f64; 2]],
        k0: f64,
        eta_b: f64,
        support: Option<&[bool]>,
    ) -> Result<Self> {
        let (lo, hi) = grid.bounds();
        for (i, p) in sensors.iter().enumerate() {
            if p[0] >= lo[0] && p[0] <= hi[0] && p[1] >= lo[1] && p[1] <= hi[1] {
                return Err(Error::invalid(format!(
                    "sensor {i} at {p:?} lies inside the region of interest"
                )));
            }
        }
        let columns: Vec<usize> = match support {
            Some(mask) => {
                crate::grid::check_len(mask.len(), grid.len())?;
                (0..grid.len()).filter(|&i| mask[i]).collect()
            }
            None => (0..grid.len()).collect(),
        };
        let s = grid.points_per_side();
        let h2 = grid.mesh_size().powi(2);
        let k = k0 * eta_b;
        let data: Vec<Complex64> = sensors
            .par_iter()
            .flat_map_iter(|p| {
                columns.iter().map(move |&c| {
                    let x = grid.coord(c % s, c / s);
                    h2 * green_2d(k, (p[0] - x[0]).hypot(p[1] - x[1]))
                })
            })
            .collect();
        Ok(Self {
            grid: *grid,
            num_sensors: sensors.len(),
            columns,
            data,
        })
    }

    pub fn num_sensors(&self) -> usize {
        self.num_sensors
    }

    pub fn entry(&self, sensor: usize, pixel: usize) -> Complex64 {
        match self.columns.binary_search(&pixel) {
            Ok(c) => self.data[sensor * self.columns.len() + c],
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    /// `(G̃ w)_s` for the listed sensors.
    pub fn apply_rows(&self, rows: &[usize], w: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(w.len(), self.grid.len(), "source does not match sensor operator grid");
        let nc = self.columns.len();
        rows.iter()
            .map(|&r| {
                self.data[r * nc..(r + 1) * nc]
                    .iter()
                    .zip(&self.columns)
                    .map(|(g, &c)| g * w[c])
                    .sum()
            })
            .collect()
    }

    /// `G̃ᴴ r` for residuals `r` on the listed sensors; a field on Ω.
    pub fn apply_adjoint_rows(&self, rows: &[usize], r: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(rows.len(), r.len(), "residual does not match sensor list");
        let nc = self.columns.len();
        let mut out = vec![Complex64::new(0.0, 0.0); self.grid.len()];
        for (&row, ri) in rows.iter().zip(r) {
            for (g, &c) in self.data[row * nc..(row + 1) * nc].iter().zip(&self.columns) {
                out[c] += g.conj() * ri;
            }
        }
        out
    }
}

/// `sensor_green_operator` entry point.
pub fn sensor_green_operator(grid: &Grid2D, sensors: &[[f64; 2]], k0: f64, eta_b: f64) -> Result<SensorOperator> {
    SensorOperator::new(grid, sensors, k0, eta_b)
}

/// Settings of the Helmholtz solver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub abl_points: usize,
    pub beta: f64,
    pub mg: MgConfig,
    pub krylov: KrylovConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            abl_points: 0,
            beta: 0.15,
            mg: MgConfig::default(),
            krylov: KrylovConfig::default(),
        }
    }
}

/// The Helmholtz system for one potential: extended grid, multigrid
/// hierarchy and the adjoint hierarchy, shared by all views.
#[derive(Clone, Debug)]
pub struct HelmholtzModel {
    scene: Scene,
    eg: ExtendedGrid2D,
    f: RealField2D,
    hierarchy: MgHierarchy,
    krylov: KrylovConfig,
}

impl HelmholtzModel {
    pub fn new(scene: &Scene, f: &RealField2D, config: &SolverConfig) -> Result<Self> {
        ensure_grid(f.grid(), &scene.grid)?;
        config.krylov.validate()?;
        let eg = build_extended_grid(scene.grid, config.abl_points, config.beta, config.mg.levels)?;
        let eta_sq_inner = scene.eta_sq(f)?;
        let eb2 = scene.eta_b * scene.eta_b;
        let mut eta_sq_ext = vec![eb2; eg.grid().len()];
        let s = scene.grid.points_per_side();
        for n in 0..s {
            for m in 0..s {
                eta_sq_ext[eg.extended_index(m, n)] = eta_sq_inner[n * s + m];
            }
        }
        let eta_sq = RealField2D::from_vec(*eg.grid(), eta_sq_ext)?;
        let op = HelmholtzOperator::assemble(&eg, &eta_sq, scene.k0(), scene.eta_b)?;
        let hierarchy = MgHierarchy::build(op, config.mg)?;
        Ok(Self {
            scene: *scene,
            eg,
            f: f.clone(),
            hierarchy,
            krylov: config.krylov,
        })
    }

    pub fn extended_grid(&self) -> &ExtendedGrid2D {
        &self.eg
    }

    pub fn hierarchy(&self) -> &MgHierarchy {
        &self.hierarchy
    }

    pub fn potential(&self) -> &RealField2D {
        &self.f
    }

    fn solve_with(&self, hier: &MgHierarchy, b: &[Complex64]) -> Result<(Vec<Complex64>, SolveReport)> {
        let op = hier.fine();
        let mut meter = WorkUnitMeter::new();
        let result = bicgstab(
            |u, out| op.apply_into(u, out),
            |r, out| out.copy_from_slice(&hier.precondition(r, &mut meter)),
            b,
            None,
            &self.krylov,
        );
        match result {
            Ok((x, mut report)) => {
                report.work_units = meter.work_units();
                if report.converged {
                    Ok((x, report))
                } else {
                    Err(Error::NotConverged { report })
                }
            }
            Err(Error::Breakdown { quantity, mut report }) => {
                report.work_units = meter.work_units();
                Err(Error::Breakdown { quantity, report })
            }
            Err(e) => Err(e),
        }
    }

    /// Solves `A u = b` on Ω_e.
    pub fn solve(&self, b: &[Complex64]) -> Result<(Vec<Complex64>, SolveReport)> {
        self.solve_with(&self.hierarchy, b)
    }

    /// Solves `Aᴴ z = b` on Ω_e with the conjugated hierarchy.
    pub fn solve_adjoint(&self, b: &[Complex64], adjoint: &MgHierarchy) -> Result<(Vec<Complex64>, SolveReport)> {
        self.solve_with(adjoint, b)
    }

    /// Incident field of a view on Ω.
    pub fn incident(&self, direction: [f64; 2]) -> ComplexField2D {
        plane_wave(&self.scene.grid, direction, self.scene.k0(), self.scene.eta_b, self.scene.u0)
    }

    /// Scattered field on Ω for a plane wave along `direction`.
    pub fn scattered_field(&self, direction: [f64; 2]) -> Result<(ComplexField2D, SolveReport)> {
        let u_in = self.incident(direction);
        let src: Vec<Complex64> = u_in.values().iter().zip(self.f.values()).map(|(u, f)| u * f).collect();
        let b = self.eg.embed(&src)?;
        let (u_ext, report) = self.solve(&b)?;
        let u = ComplexField2D::from_vec(self.scene.grid, self.eg.restrict(&u_ext)?)?;
        Ok((u, report))
    }

    /// Total field on Ω.
    pub fn total_field(&self, direction: [f64; 2]) -> Result<(ComplexField2D, SolveReport)> {
        let (sc, report) = self.scattered_field(direction)?;
        let u_in = self.incident(direction);
        let total: Vec<Complex64> = sc.values().iter().zip(u_in.values()).map(|(a, b)| a + b).collect();
        Ok((ComplexField2D::from_vec(self.scene.grid, total)?, report))
    }
}

/// `y = G̃ (f ⊙ u)` on the view's active sensors.
pub fn measure(sensors: &SensorOperator, active: &[usize], f: &RealField2D, u_total: &[Complex64]) -> Vec<Complex64> {
    let w: Vec<Complex64> = u_total.iter().zip(f.values()).map(|(u, fi)| u * fi).collect();
    sensors.apply_rows(active, &w)
}

/// Helmholtz forward model for one view.
pub fn forward_mgh(
    scene: &Scene,
    geometry: &AcquisitionGeometry,
    sensors: &SensorOperator,
    f: &RealField2D,
    view: usize,
    config: &SolverConfig,
) -> Result<(Vec<Complex64>, SolveReport)> {
    geometry.check_view(view)?;
    let model = HelmholtzModel::new(scene, f, config)?;
    let (u, report) = model.total_field(geometry.direction(view))?;
    Ok((measure(sensors, geometry.active(view), f, u.values()), report))
}

/// Lippmann-Schwinger forward model for one view.
pub fn forward_lis(
    scene: &Scene,
    geometry: &AcquisitionGeometry,
    sensors: &SensorOperator,
    kernel: &GreenKernel,
    f: &RealField2D,
    view: usize,
    krylov: &KrylovConfig,
) -> Result<(Vec<Complex64>, SolveReport)> {
    geometry.check_view(view)?;
    let u_in = plane_wave(&scene.grid, geometry.direction(view), scene.k0(), scene.eta_b, scene.u0);
    let (u, report) = solve_lis(kernel, f, &u_in, krylov)?;
    if !report.converged {
        return Err(Error::NotConverged { report });
    }
    Ok((measure(sensors, geometry.active(view), f, u.values()), report))
}

/// Which forward model to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Mgh,
    Lis,
}

/// Predictions for every view, computed concurrently and returned in view
/// order.
pub fn simulate_all(
    scene: &Scene,
    geometry: &AcquisitionGeometry,
    sensors: &SensorOperator,
    f: &RealField2D,
    kind: ModelKind,
    config: &SolverConfig,
) -> Result<(MeasurementSet, Vec<SolveReport>)> {
    let views: Vec<usize> = (0..geometry.num_views()).collect();
    let results: Vec<Result<(Vec<Complex64>, SolveReport)>> = match kind {
        ModelKind::Mgh => {
            let model = HelmholtzModel::new(scene, f, config)?;
            views
                .par_iter()
                .map(|&q| {
                    let (u, rep) = model.total_field(geometry.direction(q))?;
                    Ok((measure(sensors, geometry.active(q), f, u.values()), rep))
                })
                .collect()
        }
        ModelKind::Lis => {
            let kernel = GreenKernel::new(scene.grid, scene.k0(), scene.eta_b)?;
            views
                .par_iter()
                .map(|&q| forward_lis(scene, geometry, sensors, &kernel, f, q, &config.krylov))
                .collect()
        }
    };
    let mut ys = Vec::with_capacity(results.len());
    let mut reports = Vec::with_capacity(results.len());
    for r in results {
        let (y, rep) = r?;
        ys.push(y);
        reports.push(rep);
    }
    Ok((MeasurementSet { views: ys }, reports))
}
