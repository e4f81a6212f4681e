//! Regularised reconstruction of the scattering potential.
//!
//! The data term is `½‖H_q(f) − y_q‖²` summed over the selected views.
//! Its gradient is `Re(diag(u_q)ᴴ (I + A⁻ᴴ F) G̃ᴴ r_q)` with `F = diag(f)`,
//! evaluated with one forward and one adjoint Helmholtz solve per view.
//! The regulariser is isotropic total variation under a nonnegativity
//! constraint; its proximal map is computed by fast gradient projection on
//! the dual.

use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::error::{Error, Result};
use crate::forward::{measure, AcquisitionGeometry, HelmholtzModel, MeasurementSet, Scene, SensorOperator, SolverConfig};
use crate::grid::RealField2D;
use crate::multigrid::MgHierarchy;

/// SplitMix64 generator.
///
/// `state += 0x9E3779B97F4A7C15`, then the output is mixed with the shifts
/// 30, 27, 31 and multipliers `0xBF58476D1CE4E5B9`, `0x94D049BB133111EB`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        mix64(self.state)
    }

    /// Uniform integer in `0..bound` by rejection, `bound > 0`.
    pub fn below(&mut self, bound: u64) -> u64 {
        let zone = u64::MAX - u64::MAX % bound;
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % bound;
            }
        }
    }
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Views used at outer iteration `iteration` (1-based), sorted ascending.
///
/// The generator is seeded with `mix64(seed ^ mix64(iteration))` and the
/// first `size` slots of a Fisher–Yates shuffle of `0..views` are kept.
pub fn select_subset(seed: u64, views: usize, size: usize, iteration: usize) -> Result<Vec<usize>> {
    if size == 0 || size > views {
        return Err(Error::invalid(format!(
            "subset size must lie in 1..={views}, got {size}"
        )));
    }
    let mut idx: Vec<usize> = (0..views).collect();
    if size < views {
        let mut rng = SplitMix64::new(mix64(seed ^ mix64(iteration as u64)));
        for i in 0..size {
            let j = i + rng.below((views - i) as u64) as usize;
            idx.swap(i, j);
        }
        idx.truncate(size);
        idx.sort_unstable();
    }
    Ok(idx)
}

/// Measurements, acquisition setup and solver settings of one problem.
#[derive(Clone, Debug)]
pub struct DataFidelity {
    scene: Scene,
    geometry: AcquisitionGeometry,
    sensors: SensorOperator,
    measurements: MeasurementSet,
    solver: SolverConfig,
}

/// Value and gradient of the data term over a set of views.
#[derive(Clone, Debug, PartialEq)]
pub struct FidelityEvaluation {
    pub value: f64,
    pub gradient: RealField2D,
    pub work_units: f64,
}

struct ViewTerm {
    value: f64,
    gradient: Vec<f64>,
    work_units: f64,
}

impl DataFidelity {
    pub fn new(
        scene: Scene,
        geometry: AcquisitionGeometry,
        sensors: SensorOperator,
        measurements: MeasurementSet,
        solver: SolverConfig,
    ) -> Result<Self> {
        measurements.check(&geometry)?;
        if sensors.num_sensors() != geometry.sensors().len() {
            return Err(Error::SizeMismatch {
                expected: geometry.sensors().len(),
                actual: sensors.num_sensors(),
            });
        }
        solver.krylov.validate()?;
        Ok(Self {
            scene,
            geometry,
            sensors,
            measurements,
            solver,
        })
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn geometry(&self) -> &AcquisitionGeometry {
        &self.geometry
    }

    pub fn measurements(&self) -> &MeasurementSet {
        &self.measurements
    }

    pub fn solver(&self) -> &SolverConfig {
        &self.solver
    }

    pub fn num_views(&self) -> usize {
        self.geometry.num_views()
    }

    fn check_views(&self, views: &[usize]) -> Result<()> {
        match views.iter().find(|&&q| q >= self.num_views()) {
            Some(q) => Err(Error::invalid(format!(
                "view {q} out of range (have {})",
                self.num_views()
            ))),
            None => Ok(()),
        }
    }

    /// Predicted measurements of one view.
    pub fn predict(&self, f: &RealField2D, view: usize) -> Result<Vec<Complex64>> {
        self.check_views(&[view])?;
        let model = HelmholtzModel::new(&self.scene, f, &self.solver)?;
        let (u, _) = model.total_field(self.geometry.direction(view))?;
        Ok(measure(&self.sensors, self.geometry.active(view), f, u.values()))
    }

    /// `½‖H_q(f) − y_q‖²`.
    pub fn value(&self, f: &RealField2D, view: usize) -> Result<f64> {
        let y = self.predict(f, view)?;
        Ok(half_squared_misfit(&y, &self.measurements.views[view]))
    }

    /// Sum of the data terms over `views` and its gradient.
    pub fn evaluate(&self, f: &RealField2D, views: &[usize]) -> Result<FidelityEvaluation> {
        self.check_views(views)?;
        let model = HelmholtzModel::new(&self.scene, f, &self.solver)?;
        let adjoint = model.hierarchy().conjugate();
        let terms: Vec<Result<ViewTerm>> = views
            .par_iter()
            .map(|&q| self.view_term(&model, &adjoint, f, q))
            .collect();
        let mut value = 0.0;
        let mut work_units = 0.0;
        let mut gradient = vec![0.0; f.values().len()];
        for term in terms {
            let term = term?;
            value += term.value;
            work_units += term.work_units;
            for (g, t) in gradient.iter_mut().zip(&term.gradient) {
                *g += t;
            }
        }
        Ok(FidelityEvaluation {
            value,
            gradient: RealField2D::from_vec(*f.grid(), gradient)?,
            work_units,
        })
    }

    fn view_term(&self, model: &HelmholtzModel, adjoint: &MgHierarchy, f: &RealField2D, q: usize) -> Result<ViewTerm> {
        let active = self.geometry.active(q);
        let (u, forward) = model.total_field(self.geometry.direction(q))?;
        let y = measure(&self.sensors, active, f, u.values());
        let r: Vec<Complex64> = y.iter().zip(&self.measurements.views[q]).map(|(a, b)| a - b).collect();
        let value = 0.5 * r.iter().map(|v| v.norm_sqr()).sum::<f64>();
        let w = self.sensors.apply_adjoint_rows(active, &r);
        let fw: Vec<Complex64> = w.iter().zip(f.values()).map(|(wi, fi)| wi * fi).collect();
        let eg = model.extended_grid();
        let (z, backward) = model.solve_adjoint(&eg.embed(&fw)?, adjoint)?;
        let z = eg.restrict(&z)?;
        let gradient = u
            .values()
            .iter()
            .zip(w.iter().zip(&z))
            .map(|(ui, (wi, zi))| (ui.conj() * (wi + zi)).re)
            .collect();
        Ok(ViewTerm {
            value,
            gradient,
            work_units: forward.work_units + backward.work_units,
        })
    }

    /// `J_q v`, the derivative of the predicted measurements along `v`.
    pub fn jacobian_vector(&self, f: &RealField2D, view: usize, v: &RealField2D) -> Result<Vec<Complex64>> {
        self.check_views(&[view])?;
        let model = HelmholtzModel::new(&self.scene, f, &self.solver)?;
        let (u, _) = model.total_field(self.geometry.direction(view))?;
        let vu: Vec<Complex64> = u.values().iter().zip(v.values()).map(|(ui, vi)| ui * vi).collect();
        let eg = model.extended_grid();
        let (du, _) = model.solve(&eg.embed(&vu)?)?;
        let du = eg.restrict(&du)?;
        let src: Vec<Complex64> = vu
            .iter()
            .zip(du.iter().zip(f.values()))
            .map(|(a, (d, fi))| a + d * fi)
            .collect();
        Ok(self.sensors.apply_rows(self.geometry.active(view), &src))
    }
}

fn half_squared_misfit(y: &[Complex64], data: &[Complex64]) -> f64 {
    0.5 * y.iter().zip(data).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>()
}

/// `½‖H_q(f) − y_q‖²` for one view.
pub fn data_fidelity(problem: &DataFidelity, f: &RealField2D, view: usize) -> Result<f64> {
    problem.value(f, view)
}

/// Gradient of the data term summed over `views` in ascending order.
pub fn gradient_data_fidelity(problem: &DataFidelity, f: &RealField2D, views: &[usize]) -> Result<RealField2D> {
    Ok(problem.evaluate(f, views)?.gradient)
}

fn forward_differences(w: &[f64], s: usize, m: usize, n: usize) -> (f64, f64) {
    let i = n * s + m;
    let dx = if m + 1 < s { w[i + 1] - w[i] } else { 0.0 };
    let dy = if n + 1 < s { w[i + s] - w[i] } else { 0.0 };
    (dx, dy)
}

/// Isotropic total variation with forward differences.
pub fn tv_value(w: &RealField2D) -> f64 {
    let s = w.grid().points_per_side();
    let v = w.values();
    let mut total = 0.0;
    for n in 0..s {
        for m in 0..s {
            let (dx, dy) = forward_differences(v, s, m, n);
            total += dx.hypot(dy);
        }
    }
    total
}

/// `½‖x − w‖² + weight·TV(x)`.
pub fn prox_objective(x: &RealField2D, w: &RealField2D, weight: f64) -> f64 {
    let fit: f64 = x.values().iter().zip(w.values()).map(|(a, b)| (a - b).powi(2)).sum();
    0.5 * fit + weight * tv_value(x)
}

/// `-div(p, q)` with the dual fields vanishing on the far boundary.
fn neg_divergence(p: &[f64], q: &[f64], s: usize, out: &mut [f64]) {
    for n in 0..s {
        for m in 0..s {
            let i = n * s + m;
            let mut v = p[i] + q[i];
            if m > 0 {
                v -= p[i - 1];
            }
            if n > 0 {
                v -= q[i - s];
            }
            out[i] = v;
        }
    }
}

/// Minimiser of `½‖x − w‖² + weight·TV(x)` over `x ≥ 0`.
pub fn tv_prox(w: &RealField2D, weight: f64, inner_iterations: usize) -> Result<RealField2D> {
    if !(weight >= 0.0 && weight.is_finite()) {
        return Err(Error::invalid(format!("prox weight must be >= 0, got {weight}")));
    }
    let grid = *w.grid();
    let b = w.values();
    if weight == 0.0 {
        return RealField2D::from_vec(grid, b.iter().map(|v| v.max(0.0)).collect());
    }
    let s = grid.points_per_side();
    let len = b.len();
    let step = 1.0 / (8.0 * weight);
    let (mut p, mut q) = (vec![0.0; len], vec![0.0; len]);
    let (mut p_old, mut q_old) = (vec![0.0; len], vec![0.0; len]);
    let (mut r, mut t_q) = (vec![0.0; len], vec![0.0; len]);
    let mut x = vec![0.0; len];
    let mut t = 1.0_f64;
    let primal = |p: &[f64], q: &[f64], x: &mut [f64]| {
        neg_divergence(p, q, s, x);
        for (xi, bi) in x.iter_mut().zip(b) {
            *xi = (bi - weight * *xi).max(0.0);
        }
    };
    for _ in 0..inner_iterations {
        primal(&r, &t_q, &mut x);
        for n in 0..s {
            for m in 0..s {
                let i = n * s + m;
                let (dx, dy) = forward_differences(&x, s, m, n);
                let a = r[i] - step * dx;
                let c = t_q[i] - step * dy;
                let scale = a.hypot(c).max(1.0);
                p[i] = a / scale;
                q[i] = c / scale;
            }
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let mom = (t - 1.0) / t_next;
        for i in 0..len {
            r[i] = p[i] + mom * (p[i] - p_old[i]);
            t_q[i] = q[i] + mom * (q[i] - q_old[i]);
        }
        p_old.copy_from_slice(&p);
        q_old.copy_from_slice(&q);
        t = t_next;
    }
    primal(&p_old, &q_old, &mut x);
    RealField2D::from_vec(grid, x)
}

/// `20·log10(‖η_true‖ / ‖η_true − η*‖)`; `+∞` when the two coincide.
pub fn snr(eta_star: &[f64], eta_true: &[f64]) -> Result<f64> {
    if eta_star.len() != eta_true.len() {
        return Err(Error::SizeMismatch {
            expected: eta_true.len(),
            actual: eta_star.len(),
        });
    }
    let signal = eta_true.iter().map(|v| v * v).sum::<f64>().sqrt();
    if signal == 0.0 {
        return Err(Error::invalid("reference index map has zero norm"));
    }
    let err = eta_true
        .iter()
        .zip(eta_star)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (signal / err).log10())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReconstructionConfig {
    pub gamma: f64,
    pub tau: f64,
    pub iterations: usize,
    pub subset_size: usize,
    pub seed: u64,
    pub inner_prox_iterations: usize,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        Self {
            gamma: 9e-4,
            tau: 4.5e-3,
            iterations: 250,
            subset_size: 6,
            seed: 0,
            inner_prox_iterations: 50,
        }
    }
}

impl ReconstructionConfig {
    pub fn validate(&self, views: usize) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid(format!("stepsize must be positive, got {}", self.gamma)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid(format!(
                "regularisation weight must be positive, got {}",
                self.tau
            )));
        }
        if self.subset_size == 0 || self.subset_size > views {
            return Err(Error::invalid(format!(
                "subset size must lie in 1..={views}, got {}",
                self.subset_size
            )));
        }
        Ok(())
    }
}

/// One outer iteration of the reconstruction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryEntry {
    pub iteration: usize,
    /// Data term over the iteration's subset plus `τ·TV`, both at the
    /// extrapolated point.
    pub objective: f64,
    pub snr: Option<f64>,
    /// Cumulative multigrid work units of all solves so far.
    pub work_units: f64,
    /// Cumulative wall time (s).
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReconstructionHistory {
    pub entries: Vec<HistoryEntry>,
}

impl ReconstructionHistory {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub potential: RealField2D,
    pub history: ReconstructionHistory,
}

/// A reconstruction aborted by a solver failure, with the last iterate.
#[derive(Clone, Debug, Error)]
#[error("reconstruction aborted at iteration {iteration}: {source}")]
pub struct ReconstructionFailure {
    pub iteration: usize,
    pub source: Error,
    pub last: Reconstruction,
}

/// Accelerated forward-backward splitting from `f0` (zero by default).
pub fn reconstruct_fbs(
    problem: &DataFidelity,
    config: &ReconstructionConfig,
    f0: Option<&RealField2D>,
    eta_true: Option<&RealField2D>,
) -> std::result::Result<Reconstruction, ReconstructionFailure> {
    let grid = problem.scene().grid;
    let fail0 = |source: Error| ReconstructionFailure {
        iteration: 0,
        source,
        last: Reconstruction {
            potential: RealField2D::zeros(grid),
            history: ReconstructionHistory::default(),
        },
    };
    config.validate(problem.num_views()).map_err(fail0)?;
    let start = match f0 {
        Some(f) => {
            crate::grid::ensure_grid(f.grid(), &grid).map_err(fail0)?;
            tv_prox(f, 0.0, 0).map_err(fail0)?
        }
        None => RealField2D::zeros(grid),
    };
    if let Some(eta) = eta_true {
        crate::grid::ensure_grid(eta.grid(), &grid).map_err(fail0)?;
    }

    let clock = Instant::now();
    let mut history = ReconstructionHistory::default();
    let mut f = start.clone();
    let mut f_bar = start;
    let mut alpha = 1.0_f64;
    let mut work_units = 0.0;
    for nu in 1..=config.iterations {
        let step = (|| -> Result<(RealField2D, f64, f64)> {
            let subset = select_subset(config.seed, problem.num_views(), config.subset_size, nu)?;
            let eval = problem.evaluate(&f_bar, &subset)?;
            let objective = eval.value + config.tau * tv_value(&f_bar);
            let w: Vec<f64> = f_bar
                .values()
                .iter()
                .zip(eval.gradient.values())
                .map(|(a, g)| a - config.gamma * g)
                .collect();
            let w = RealField2D::from_vec(grid, w)?;
            let next = tv_prox(&w, config.gamma * config.tau, config.inner_prox_iterations)?;
            Ok((next, objective, eval.work_units))
        })();
        let (next, objective, wu) = match step {
            Ok(v) => v,
            Err(source) => {
                return Err(ReconstructionFailure {
                    iteration: nu,
                    source,
                    last: Reconstruction { potential: f, history },
                })
            }
        };
        work_units += wu;
        let alpha_next = 0.5 * (1.0 + (1.0 + 4.0 * alpha * alpha).sqrt());
        let mom = (alpha - 1.0) / alpha_next;
        let extrapolated: Vec<f64> = next
            .values()
            .iter()
            .zip(f.values())
            .map(|(a, b)| a + mom * (a - b))
            .collect();
        f_bar = RealField2D::from_vec(grid, extrapolated).map_err(|source| ReconstructionFailure {
            iteration: nu,
            source,
            last: Reconstruction {
                potential: next.clone(),
                history: history.clone(),
            },
        })?;
        f = next;
        alpha = alpha_next;

        let snr_value = match eta_true {
            Some(eta) => {
                let eta_star = problem.scene().index_from_potential(&f);
                eta_star.and_then(|e| snr(e.values(), eta.values())).ok()
            }
            None => None,
        };
        history.entries.push(HistoryEntry {
            iteration: nu,
            objective,
            snr: snr_value,
            work_units,
            seconds: clock.elapsed().as_secs_f64(),
        });
    }
    Ok(Reconstruction { potential: f, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::simulate_all;
    use crate::forward::ModelKind;
    use crate::grid::Grid2D;
    use crate::krylov::KrylovConfig;
    use crate::multigrid::MgConfig;
    use rand::{Rng, SeedableRng};

    fn disk(scene: &Scene, radius: f64, eta: f64, center: [f64; 2]) -> RealField2D {
        let k2 = scene.k0().powi(2);
        RealField2D::from_fn(scene.grid, |x| {
            if (x[0] - center[0]).hypot(x[1] - center[1]) < radius {
                k2 * (eta * eta - scene.eta_b.powi(2))
            } else {
                0.0
            }
        })
        .unwrap()
    }

    fn small_problem(tol: f64) -> (DataFidelity, RealField2D) {
        let grid = Grid2D::centered(17, 4.0).unwrap();
        let scene = Scene::new(grid, 2.0, 1.0).unwrap();
        let geo = AcquisitionGeometry::circular(3, 12, 6.0, 8, [0.0, 0.0]).unwrap();
        let sensors = SensorOperator::new(&grid, geo.sensors(), scene.k0(), scene.eta_b).unwrap();
        let solver = SolverConfig {
            abl_points: 8,
            mg: MgConfig {
                levels: 2,
                ..MgConfig::default()
            },
            krylov: KrylovConfig {
                tolerance: tol,
                max_iter: 500,
            },
            ..SolverConfig::default()
        };
        let truth = disk(&scene, 1.0, 1.15, [0.3, -0.2]);
        let (y, _) = simulate_all(&scene, &geo, &sensors, &truth, ModelKind::Mgh, &solver).unwrap();
        let problem = DataFidelity::new(scene, geo, sensors, y, solver).unwrap();
        (problem, truth)
    }

    fn smooth_field(grid: Grid2D, seed: u64, amp: f64) -> RealField2D {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let (a, b, c): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
        RealField2D::from_fn(grid, |x| amp * (1.0 + (a * x[0] + b).sin() * (c * x[1]).cos())).unwrap()
    }

    #[test]
    fn splitmix_reference_outputs() {
        let mut g = SplitMix64::new(0);
        assert_eq!(g.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(g.next_u64(), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(g.next_u64(), 0x06C4_5D18_8009_454F);
    }

    #[test]
    fn subsets_are_sorted_distinct_and_reproducible() {
        for it in 1..50 {
            let a = select_subset(7, 35, 6, it).unwrap();
            assert_eq!(a, select_subset(7, 35, 6, it).unwrap());
            assert_eq!(a.len(), 6);
            assert!(a.windows(2).all(|w| w[0] < w[1]));
            assert!(a.iter().all(|&v| v < 35));
        }
        assert_ne!(select_subset(7, 35, 6, 1).unwrap(), select_subset(7, 35, 6, 2).unwrap());
        assert_eq!(select_subset(3, 5, 5, 9).unwrap(), vec![0, 1, 2, 3, 4]);
        assert!(select_subset(3, 5, 6, 1).is_err());
        assert!(select_subset(3, 5, 0, 1).is_err());
    }

    #[test]
    fn snr_examples() {
        let t = [1.0, 2.0, -3.0, 0.5];
        assert!(snr(&[0.0; 4], &t).unwrap().abs() < 1e-12);
        let s: Vec<f64> = t.iter().map(|v| 0.9 * v).collect();
        assert!((snr(&s, &t).unwrap() - 20.0).abs() < 1e-9);
        let n = t.iter().map(|v| v * v).sum::<f64>().sqrt();
        let e: Vec<f64> = t.iter().enumerate().map(|(i, v)| if i == 0 { v + n / 100.0 } else { *v }).collect();
        assert!((snr(&e, &t).unwrap() - 40.0).abs() < 1e-9);
        assert_eq!(snr(&t, &t).unwrap(), f64::INFINITY);
        assert!(snr(&t, &[0.0; 4]).is_err());
        assert!(snr(&t[..3], &t).is_err());
    }

    #[test]
    fn tv_of_simple_images() {
        let grid = Grid2D::with_spacing(7, 1.0, [0.0, 0.0]).unwrap();
        assert_eq!(tv_value(&RealField2D::constant(grid, 3.2)), 0.0);
        let ramp = RealField2D::from_fn(grid, |x| x[0]).unwrap();
        assert!((tv_value(&ramp) - (6 * 7) as f64).abs() < 1e-12);
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        let w = RealField2D::from_vec(grid, (0..49).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let tv = tv_value(&w);
        assert!(tv >= 0.0);
        let scaled = RealField2D::from_vec(grid, w.values().iter().map(|v| -2.5 * v).collect()).unwrap();
        assert!((tv_value(&scaled) - 2.5 * tv).abs() < 1e-12 * tv);
    }

    const PROX_ORACLE_ITERATIONS: usize = 10_000;

    /// Accelerated primal-dual iteration on the primal problem, run to a
    /// fixed point.
    fn prox_reference(w: &RealField2D, weight: f64) -> RealField2D {
        let s = w.grid().points_per_side();
        let b = w.values();
        let len = b.len();
        let mut x = vec![0.0; len];
        let mut x_bar = x.clone();
        let (mut yx, mut yy) = (vec![0.0; len], vec![0.0; len]);
        let mut div = vec![0.0; len];
        let l = 8.0_f64.sqrt();
        let (mut tau, mut sigma) = (1.0 / l, 1.0 / l);
        for it in 0..200_000 {
            for n in 0..s {
                for m in 0..s {
                    let i = n * s + m;
                    let (dx, dy) = forward_differences(&x_bar, s, m, n);
                    let a = yx[i] + sigma * dx;
                    let c = yy[i] + sigma * dy;
                    let scale = (a.hypot(c) / weight).max(1.0);
                    yx[i] = a / scale;
                    yy[i] = c / scale;
                }
            }
            neg_divergence(&yx, &yy, s, &mut div);
            let mut change = 0.0_f64;
            let theta_x_old = x.clone();
            for i in 0..len {
                let v = ((x[i] + tau * div[i]) + tau * b[i]) / (1.0 + tau);
                let v = v.max(0.0);
                change = change.max((v - x[i]).abs());
                x[i] = v;
            }
            let theta = 1.0 / (1.0 + 2.0 * tau).sqrt();
            tau *= theta;
            sigma /= theta;
            for i in 0..len {
                x_bar[i] = x[i] + theta * (x[i] - theta_x_old[i]);
            }
            if it > 100 && change < 1e-13 {
                break;
            }
        }
        RealField2D::from_vec(*w.grid(), x).unwrap()
    }

    #[test]
    fn prox_matches_reference_on_line_image() {
        let grid = Grid2D::with_spacing(16, 1.0, [0.0, 0.0]).unwrap();
        let w = RealField2D::from_fn(grid, |x| if x[0] == 8.0 { 1.0 } else { 0.0 }).unwrap();
        let got = tv_prox(&w, 0.25, PROX_ORACLE_ITERATIONS).unwrap();
        let want = prox_reference(&w, 0.25);
        let (a, b) = (prox_objective(&got, &w, 0.25), prox_objective(&want, &w, 0.25));
        assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        assert!(got.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn prox_matches_reference_on_random_images() {
        let grid = Grid2D::with_spacing(16, 1.0, [0.0, 0.0]).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        for _ in 0..3 {
            let w = RealField2D::from_vec(grid, (0..256).map(|_| rng.gen_range(-0.5..1.5)).collect()).unwrap();
            let weight = rng.gen_range(0.05..0.5);
            let got = tv_prox(&w, weight, PROX_ORACLE_ITERATIONS).unwrap();
            let want = prox_reference(&w, weight);
            let (a, b) = (prox_objective(&got, &w, weight), prox_objective(&want, &w, weight));
            assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
            assert!(got.values().iter().all(|&v| v >= 0.0));
            let start = tv_prox(&w, 0.0, 0).unwrap();
            assert!(a <= prox_objective(&start, &w, weight) + 1e-12);
        }
    }

    #[test]
    fn prox_trivial_cases() {
        let grid = Grid2D::with_spacing(8, 1.0, [0.0, 0.0]).unwrap();
        let w = RealField2D::from_fn(grid, |x| x[0] - x[1]).unwrap();
        let p = tv_prox(&w, 0.0, 10).unwrap();
        for (a, b) in p.values().iter().zip(w.values()) {
            assert_eq!(*a, b.max(0.0));
        }
        let c = RealField2D::constant(grid, 0.7);
        let p = tv_prox(&c, 0.3, 50).unwrap();
        assert!(p.values().iter().all(|v| (v - 0.7).abs() < 1e-14));
        assert!(tv_prox(&c, -1.0, 5).is_err());
    }

    #[test]
    fn prox_is_nonexpansive() {
        let grid = Grid2D::with_spacing(12, 1.0, [0.0, 0.0]).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(2);
        for _ in 0..10 {
            let a = RealField2D::from_vec(grid, (0..144).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let b = RealField2D::from_vec(grid, (0..144).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let (pa, pb) = (tv_prox(&a, 0.2, 300).unwrap(), tv_prox(&b, 0.2, 300).unwrap());
            let d = |x: &RealField2D, y: &RealField2D| {
                x.values().iter().zip(y.values()).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt()
            };
            assert!(d(&pa, &pb) <= d(&a, &b) * (1.0 + 1e-9));
        }
    }

    #[test]
    fn fidelity_vanishes_at_truth_and_zero() {
        let (problem, truth) = small_problem(1e-10);
        for q in 0..problem.num_views() {
            assert!(data_fidelity(&problem, &truth, q).unwrap() < 1e-20);
        }
        let g = gradient_data_fidelity(&problem, &truth, &[0, 1, 2]).unwrap();
        let scale = problem.evaluate(&RealField2D::zeros(problem.scene().grid), &[0, 1, 2]).unwrap().gradient.norm();
        assert!(g.norm() <= 1e-7 * scale, "{} vs {}", g.norm(), scale);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (problem, truth) = small_problem(1e-10);
        let grid = problem.scene().grid;
        let scale = truth.values().iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let f = RealField2D::from_vec(grid, truth.values().iter().map(|v| 0.6 * v + 0.1 * scale).collect()).unwrap();
        let views = [0, 1, 2];
        let eval = problem.evaluate(&f, &views).unwrap();
        for seed in 0..2 {
            let v = smooth_field(grid, seed, 1.0);
            let eps = 1e-6 * scale;
            let shifted = |sign: f64| {
                let g = RealField2D::from_vec(
                    grid,
                    f.values().iter().zip(v.values()).map(|(a, b)| a + sign * eps * b).collect(),
                )
                .unwrap();
                views.iter().map(|&q| problem.value(&g, q).unwrap()).sum::<f64>()
            };
            let fd = (shifted(1.0) - shifted(-1.0)) / (2.0 * eps);
            let an: f64 = eval.gradient.values().iter().zip(v.values()).map(|(a, b)| a * b).sum();
            let rel = (fd - an).abs() / an.abs();
            assert!(rel <= 1e-5, "fd {fd} analytic {an} rel {rel}");
        }
    }

    #[test]
    fn jacobian_vector_matches_forward_difference() {
        let (problem, truth) = small_problem(1e-10);
        let grid = problem.scene().grid;
        let scale = truth.values().iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let v = smooth_field(grid, 9, 1.0);
        let eps = 1e-6 * scale;
        let shifted = RealField2D::from_vec(
            grid,
            truth.values().iter().zip(v.values()).map(|(a, b)| a + eps * b).collect(),
        )
        .unwrap();
        let jv = problem.jacobian_vector(&truth, 1, &v).unwrap();
        let (y0, y1) = (problem.predict(&truth, 1).unwrap(), problem.predict(&shifted, 1).unwrap());
        let num: f64 = jv
            .iter()
            .zip(y0.iter().zip(&y1))
            .map(|(j, (a, b))| ((b - a) / eps - j).norm_sqr())
            .sum();
        let den: f64 = jv.iter().map(|j| j.norm_sqr()).sum();
        assert!((num / den).sqrt() <= 1e-4, "{}", (num / den).sqrt());
    }

    #[test]
    fn reconstruction_stays_nonnegative_and_is_reproducible() {
        let (problem, truth) = small_problem(1e-8);
        let eta = problem.scene().index_from_potential(&truth).unwrap();
        let cfg = ReconstructionConfig {
            gamma: 0.2,
            tau: 1e-3,
            iterations: 8,
            subset_size: 2,
            seed: 4,
            inner_prox_iterations: 30,
        };
        let a = reconstruct_fbs(&problem, &cfg, None, Some(&eta)).unwrap();
        let b = reconstruct_fbs(&problem, &cfg, None, Some(&eta)).unwrap();
        assert_eq!(a.history.len(), 8);
        assert!(a.potential.values().iter().all(|&v| v >= 0.0));
        assert_eq!(a.potential, b.potential);
        for (x, y) in a.history.entries.iter().zip(&b.history.entries) {
            assert_eq!((x.objective, x.snr, x.work_units), (y.objective, y.snr, y.work_units));
        }
    }

    #[test]
    fn heavy_regularisation_flattens_iterates() {
        let (problem, truth) = small_problem(1e-8);
        let cfg = ReconstructionConfig {
            gamma: 0.2,
            tau: 1e6,
            iterations: 3,
            subset_size: 3,
            seed: 0,
            inner_prox_iterations: 50,
        };
        let rec = reconstruct_fbs(&problem, &cfg, None, None).unwrap();
        let peak = rec.potential.values().iter().fold(0.0_f64, |a, v| a.max(*v));
        let truth_peak = truth.values().iter().fold(0.0_f64, |a, v| a.max(*v));
        assert!(tv_value(&rec.potential) <= 1e-4 * tv_value(&truth));
        assert!(peak < 0.1 * truth_peak, "{peak} vs {truth_peak}");
    }

    #[test]
    fn zero_iterations_return_start() {
        let (problem, _) = small_problem(1e-8);
        let cfg = ReconstructionConfig {
            iterations: 0,
            subset_size: 1,
            ..ReconstructionConfig::default()
        };
        let rec = reconstruct_fbs(&problem, &cfg, None, None).unwrap();
        assert!(rec.history.is_empty());
        assert!(rec.potential.values().iter().all(|&v| v == 0.0));
        let bad = ReconstructionConfig { gamma: 0.0, ..cfg };
        assert!(reconstruct_fbs(&problem, &bad, None, None).is_err());
    }
}
