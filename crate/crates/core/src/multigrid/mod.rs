//! Geometric multigrid cycle used as the Bi-CGSTAB preconditioner.
//!
//! Levels are rediscretisations of the Helmholtz operator at doubled mesh
//! sizes. Relaxation is damped Jacobi on every row (boundary rows included),
//! transfers are full weighting and bilinear interpolation, and the coarsest
//! level is solved exactly with a cached banded LU factorisation.

pub mod banded;
pub mod lfa;
pub mod transfer;

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::helmholtz::HelmholtzOperator;

pub use banded::BandedLu;
pub use lfa::{lfa_symbols, max_smoothing_symbol, LfaSymbols};
pub use transfer::{prolong_bilinear, restrict_full_weighting};

/// Operator that damped Jacobi can relax: an apply and its main diagonal.
pub trait RelaxOperator {
    fn len(&self) -> usize;
    fn apply_into(&self, u: &[Complex64], out: &mut [Complex64]);
    fn diagonal_values(&self) -> &[Complex64];
}

impl RelaxOperator for HelmholtzOperator {
    fn len(&self) -> usize {
        HelmholtzOperator::len(self)
    }

    fn apply_into(&self, u: &[Complex64], out: &mut [Complex64]) {
        HelmholtzOperator::apply_into(self, u, out)
    }

    fn diagonal_values(&self) -> &[Complex64] {
        HelmholtzOperator::diagonal_values(self)
    }
}

fn check_omega(omega: f64) -> Result<()> {
    if !(omega > 0.0 && omega <= 1.0) {
        return Err(Error::invalid(format!(
            "Jacobi damping must lie in (0, 1], got {omega}"
        )));
    }
    Ok(())
}

fn inverse_diagonal(diag: &[Complex64]) -> Result<Vec<Complex64>> {
    diag.iter()
        .enumerate()
        .map(|(i, d)| {
            if d.norm_sqr() == 0.0 {
                Err(Error::ZeroDiagonal(i))
            } else {
                Ok(d.inv())
            }
        })
        .collect()
}

fn relax<O: RelaxOperator + ?Sized>(
    op: &O,
    inv_diag: &[Complex64],
    b: &[Complex64],
    v: &mut [Complex64],
    omega: f64,
    sweeps: usize,
    scratch: &mut [Complex64],
) {
    for _ in 0..sweeps {
        op.apply_into(v, scratch);
        for (((vi, ai), bi), di) in v.iter_mut().zip(scratch.iter()).zip(b).zip(inv_diag) {
            *vi -= di * (ai - bi) * omega;
        }
    }
}

/// `v ← v - ω D⁻¹ (A v - b)`, repeated `sweeps` times.
pub fn damped_jacobi<O: RelaxOperator + ?Sized>(
    op: &O,
    b: &[Complex64],
    v: &mut [Complex64],
    omega: f64,
    sweeps: usize,
) -> Result<()> {
    check_omega(omega)?;
    crate::grid::check_len(b.len(), op.len())?;
    crate::grid::check_len(v.len(), op.len())?;
    if sweeps == 0 {
        return Ok(());
    }
    let inv = inverse_diagonal(op.diagonal_values())?;
    let mut scratch = vec![Complex64::new(0.0, 0.0); op.len()];
    relax(op, &inv, b, v, omega, sweeps, &mut scratch);
    Ok(())
}

/// Cycle shape and smoothing parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MgConfig {
    pub levels: usize,
    pub nu1: usize,
    pub nu2: usize,
    pub omega: f64,
    /// 1 for a V-cycle, 2 for a W-cycle.
    pub cycle_type: usize,
}

impl Default for MgConfig {
    fn default() -> Self {
        Self {
            levels: 3,
            nu1: 1,
            nu2: 1,
            omega: 0.8,
            cycle_type: 1,
        }
    }
}

impl MgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::invalid("multigrid needs at least one level"));
        }
        if !(1..=2).contains(&self.cycle_type) {
            return Err(Error::invalid(format!(
                "cycle type must be 1 (V) or 2 (W), got {}",
                self.cycle_type
            )));
        }
        check_omega(self.omega)
    }
}

/// Smoother sweeps per level, weighted `4^-level` into work units.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WorkUnitMeter {
    sweeps: Vec<u64>,
    cycles: u64,
}

impl WorkUnitMeter {
    pub fn new() -> Self {
        Self::default()
    }

    fn record(&mut self, level: usize, sweeps: usize) {
        if self.sweeps.len() <= level {
            self.sweeps.resize(level + 1, 0);
        }
        self.sweeps[level] += sweeps as u64;
    }

    pub fn sweeps_per_level(&self) -> &[u64] {
        &self.sweeps
    }

    pub fn cycles(&self) -> u64 {
        self.cycles
    }

    pub fn work_units(&self) -> f64 {
        self.sweeps
            .iter()
            .enumerate()
            .map(|(level, &n)| n as f64 * 0.25f64.powi(level as i32))
            .sum()
    }

    pub fn merge(&mut self, other: &WorkUnitMeter) {
        for (level, &n) in other.sweeps.iter().enumerate() {
            self.record(level, n as usize);
        }
        self.cycles += other.cycles;
    }
}

#[derive(Clone, Debug)]
struct Level {
    op: HelmholtzOperator,
    inv_diag: Vec<Complex64>,
}

/// Operators for every level plus the coarsest factorisation.
#[derive(Clone, Debug)]
pub struct MgHierarchy {
    config: MgConfig,
    levels: Vec<Level>,
    coarsest: BandedLu,
}

impl MgHierarchy {
    pub fn build(fine: HelmholtzOperator, config: MgConfig) -> Result<Self> {
        config.validate()?;
        let mut ops = vec![fine];
        for _ in 1..config.levels {
            let next = ops.last().expect("non-empty").coarsen()?;
            if next.grid().points_per_side() < 3 {
                return Err(Error::DegenerateHierarchy {
                    levels: config.levels,
                    coarsest: next.grid().points_per_side(),
                });
            }
            ops.push(next);
        }
        let coarsest = BandedLu::factor_operator(ops.last().expect("non-empty"))?;
        let levels = ops
            .into_iter()
            .map(|op| {
                let inv_diag = inverse_diagonal(op.diagonal_values())?;
                Ok(Level { op, inv_diag })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            levels,
            coarsest,
        })
    }

    /// Hierarchy for the adjoint operator. Transfers are real, so conjugating
    /// every level's coefficients and the factorisation is exact.
    pub fn conjugate(&self) -> Self {
        Self {
            config: self.config,
            levels: self
                .levels
                .iter()
                .map(|l| Level {
                    op: l.op.conjugate(),
                    inv_diag: l.inv_diag.iter().map(|d| d.conj()).collect(),
                })
                .collect(),
            coarsest: self.coarsest.conjugate(),
        }
    }

    pub fn config(&self) -> &MgConfig {
        &self.config
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn operator(&self, level: usize) -> &HelmholtzOperator {
        &self.levels[level].op
    }

    pub fn fine(&self) -> &HelmholtzOperator {
        &self.levels[0].op
    }

    pub fn coarsest_factorization(&self) -> &BandedLu {
        &self.coarsest
    }

    /// Points per shortest wavelength on the coarsest grid.
    pub fn coarsest_points_per_wavelength(&self) -> f64 {
        let op = &self.levels[self.levels.len() - 1].op;
        let max_eta = op.eta_sq().iter().cloned().fold(0.0, f64::max).sqrt();
        if op.k0() == 0.0 {
            return f64::INFINITY;
        }
        let lambda = 2.0 * PI / (op.k0() * max_eta);
        lambda / op.grid().mesh_size()
    }

    /// Advisory message when the coarsest grid under-resolves the wave.
    pub fn resolution_warning(&self) -> Option<String> {
        let ppw = self.coarsest_points_per_wavelength();
        (ppw < 10.0).then(|| {
            format!(
                "coarsest multigrid level has {ppw:.1} points per wavelength (rule of thumb: at least 10)"
            )
        })
    }

    /// One multigrid cycle at `level` for `A v = b` starting from `v0`.
    pub fn cycle(
        &self,
        level: usize,
        b: &[Complex64],
        v0: Vec<Complex64>,
        meter: &mut WorkUnitMeter,
    ) -> Vec<Complex64> {
        let lvl = &self.levels[level];
        let n = lvl.op.len();
        assert_eq!(b.len(), n, "right-hand side does not match level {level}");
        assert_eq!(v0.len(), n, "initial guess does not match level {level}");
        if level + 1 == self.levels.len() {
            return self.coarsest.solve(b);
        }
        let cfg = &self.config;
        let mut v = v0;
        let mut scratch = vec![Complex64::new(0.0, 0.0); n];
        relax(&lvl.op, &lvl.inv_diag, b, &mut v, cfg.omega, cfg.nu1, &mut scratch);
        meter.record(level, cfg.nu1);

        lvl.op.apply_into(&v, &mut scratch);
        for (r, bi) in scratch.iter_mut().zip(b) {
            *r = bi - *r;
        }
        let s = lvl.op.grid().points_per_side();
        let coarse_rhs = restrict_full_weighting(&scratch, s).expect("odd level side");
        let sc = (s + 1) / 2;
        let mut e = vec![Complex64::new(0.0, 0.0); sc * sc];
        for _ in 0..cfg.cycle_type {
            e = self.cycle(level + 1, &coarse_rhs, e, meter);
        }
        let correction = prolong_bilinear(&e, sc).expect("consistent level sides");
        for (vi, ci) in v.iter_mut().zip(&correction) {
            *vi += ci;
        }
        relax(&lvl.op, &lvl.inv_diag, b, &mut v, cfg.omega, cfg.nu2, &mut scratch);
        meter.record(level, cfg.nu2);
        v
    }

    /// Applies the preconditioner `K_MG⁻¹ r`: one cycle from a zero guess.
    pub fn precondition(&self, r: &[Complex64], meter: &mut WorkUnitMeter) -> Vec<Complex64> {
        meter.cycles += 1;
        let zero = vec![Complex64::new(0.0, 0.0); r.len()];
        self.cycle(0, r, zero, meter)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_extended_grid, Grid2D, RealField2D};
    use rand::{Rng, SeedableRng};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    struct Diagonal(Vec<Complex64>);

    impl RelaxOperator for Diagonal {
        fn len(&self) -> usize {
            self.0.len()
        }
        fn apply_into(&self, u: &[Complex64], out: &mut [Complex64]) {
            for ((o, d), x) in out.iter_mut().zip(&self.0).zip(u) {
                *o = d * x;
            }
        }
        fn diagonal_values(&self) -> &[Complex64] {
            &self.0
        }
    }

    fn helmholtz(s: usize, abl: usize, levels: usize, k0: f64, h: f64) -> HelmholtzOperator {
        let inner = Grid2D::with_spacing(s, h, [0.0, 0.0]).unwrap();
        let beta = if abl == 0 { 0.0 } else { 0.15 };
        let eg = build_extended_grid(inner, abl, beta, levels).unwrap();
        let centre = 0.5 * inner.side_length();
        let eta_sq = RealField2D::from_fn(*eg.grid(), |x| {
            let r = ((x[0] - centre).powi(2) + (x[1] - centre).powi(2)).sqrt();
            if r < 0.25 * inner.side_length() {
                2.0
            } else {
                1.0
            }
        })
        .unwrap();
        HelmholtzOperator::assemble(&eg, &eta_sq, k0, 1.0).unwrap()
    }

    fn random(n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        (0..n)
            .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    fn norm(v: &[Complex64]) -> f64 {
        v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    #[test]
    fn jacobi_on_diagonal_systems() {
        let id = Diagonal(vec![c(1.0, 0.0); 4]);
        let mut v = vec![c(3.0, 1.0); 4];
        damped_jacobi(&id, &vec![c(0.0, 0.0); 4], &mut v, 1.0, 1).unwrap();
        assert!(v.iter().all(|x| *x == c(0.0, 0.0)));

        let two = Diagonal(vec![c(2.0, 0.0); 4]);
        let mut v = vec![c(0.0, 0.0); 4];
        damped_jacobi(&two, &vec![c(2.0, 0.0); 4], &mut v, 1.0, 1).unwrap();
        assert!(v.iter().all(|x| *x == c(1.0, 0.0)));

        let mut v = vec![c(1.0, 0.0); 4];
        damped_jacobi(&two, &vec![c(0.0, 0.0); 4], &mut v, 0.8, 1).unwrap();
        assert!(v.iter().all(|x| (x - c(0.2, 0.0)).norm() < 1e-15));

        let mut v = vec![c(1.0, 2.0); 4];
        damped_jacobi(&two, &vec![c(5.0, 0.0); 4], &mut v, 0.8, 0).unwrap();
        assert!(v.iter().all(|x| *x == c(1.0, 2.0)));
    }

    #[test]
    fn jacobi_rejects_bad_input() {
        let z = Diagonal(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let mut v = vec![c(0.0, 0.0); 2];
        let b = vec![c(1.0, 0.0); 2];
        assert!(matches!(damped_jacobi(&z, &b, &mut v, 0.8, 1), Err(Error::ZeroDiagonal(1))));
        let ok = Diagonal(vec![c(1.0, 0.0); 2]);
        assert!(damped_jacobi(&ok, &b, &mut v, 0.0, 1).is_err());
        assert!(damped_jacobi(&ok, &b, &mut v, 1.5, 1).is_err());
    }

    #[test]
    fn coarsest_factorization_reproduces_operator() {
        let op = helmholtz(13, 2, 3, 1.2, 0.3);
        let hier = MgHierarchy::build(op, MgConfig::default()).unwrap();
        let coarse = hier.operator(hier.num_levels() - 1);
        let b = random(coarse.len(), 1);
        let x = hier.coarsest_factorization().solve(&b);
        let mut ax = vec![c(0.0, 0.0); coarse.len()];
        coarse.apply_into(&x, &mut ax);
        let res: Vec<Complex64> = ax.iter().zip(&b).map(|(a, b)| a - b).collect();
        assert!(norm(&res) / norm(&b) <= 1e-12);
    }

    #[test]
    fn zero_in_zero_out() {
        let op = helmholtz(13, 2, 3, 1.2, 0.3);
        let hier = MgHierarchy::build(op, MgConfig::default()).unwrap();
        let n = hier.fine().len();
        let mut meter = WorkUnitMeter::new();
        let v = hier.cycle(0, &vec![c(0.0, 0.0); n], vec![c(0.0, 0.0); n], &mut meter);
        assert!(v.iter().all(|x| *x == c(0.0, 0.0)));
    }

    /// Two-grid cycle written out step by step.
    fn two_grid(op: &HelmholtzOperator, coarse: &HelmholtzOperator, b: &[Complex64], v0: &[Complex64], cfg: &MgConfig) -> Vec<Complex64> {
        let mut v = v0.to_vec();
        damped_jacobi(op, b, &mut v, cfg.omega, cfg.nu1).unwrap();
        let mut av = vec![c(0.0, 0.0); op.len()];
        op.apply_into(&v, &mut av);
        let r: Vec<Complex64> = b.iter().zip(&av).map(|(b, a)| b - a).collect();
        let s = op.grid().points_per_side();
        let r2 = restrict_full_weighting(&r, s).unwrap();
        let lu = BandedLu::factor_operator(coarse).unwrap();
        let e2 = lu.solve(&r2);
        let pe = prolong_bilinear(&e2, (s + 1) / 2).unwrap();
        for (vi, p) in v.iter_mut().zip(&pe) {
            *vi += p;
        }
        damped_jacobi(op, b, &mut v, cfg.omega, cfg.nu2).unwrap();
        v
    }

    #[test]
    fn two_level_cycle_matches_two_grid_algorithm() {
        let op = helmholtz(5, 2, 2, 1.0, 0.4);
        assert_eq!(op.grid().points_per_side(), 9);
        let cfg = MgConfig {
            levels: 2,
            nu1: 2,
            nu2: 1,
            omega: 0.7,
            cycle_type: 1,
        };
        let coarse = op.coarsen().unwrap();
        let hier = MgHierarchy::build(op.clone(), cfg).unwrap();
        let b = random(op.len(), 2);
        let v0 = random(op.len(), 3);
        let mut meter = WorkUnitMeter::new();
        let got = hier.cycle(0, &b, v0.clone(), &mut meter);
        let want = two_grid(&op, &coarse, &b, &v0, &cfg);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).norm() <= 1e-13 * (1.0 + w.norm()));
        }
    }

    #[test]
    fn v_cycle_reduces_laplace_like_residual() {
        // vanishing wavenumber; the Sommerfeld factor keeps the system regular
        let h = 1.0 / 64.0;
        let op = helmholtz(65, 0, 4, 0.01 / h, h);
        let hier = MgHierarchy::build(op, MgConfig { levels: 4, ..MgConfig::default() }).unwrap();
        let fine = hier.fine();
        let b = random(fine.len(), 4);
        let mut meter = WorkUnitMeter::new();
        let v = hier.precondition(&b, &mut meter);
        let mut av = vec![c(0.0, 0.0); fine.len()];
        fine.apply_into(&v, &mut av);
        let r: Vec<Complex64> = b.iter().zip(&av).map(|(b, a)| b - a).collect();
        let ratio = norm(&b) / norm(&r);
        assert!(ratio >= 5.0, "reduction factor {ratio}");
    }

    #[test]
    fn cycle_is_linear_and_deterministic() {
        let op = helmholtz(13, 2, 3, 1.2, 0.3);
        let cfg = MgConfig {
            cycle_type: 2,
            ..MgConfig::default()
        };
        let hier = MgHierarchy::build(op, cfg).unwrap();
        let n = hier.fine().len();
        let b1 = random(n, 5);
        let b2 = random(n, 6);
        let sum: Vec<Complex64> = b1.iter().zip(&b2).map(|(a, b)| a + b).collect();
        let mut m = WorkUnitMeter::new();
        let x1 = hier.precondition(&b1, &mut m);
        let x2 = hier.precondition(&b2, &mut m);
        let xs = hier.precondition(&sum, &mut m);
        for i in 0..n {
            assert!((xs[i] - x1[i] - x2[i]).norm() <= 1e-12 * (1.0 + xs[i].norm()));
        }
        assert_eq!(hier.precondition(&b1, &mut m), x1);
    }

    #[test]
    fn work_units_stay_below_bound() {
        for levels in 1..=5 {
            let op = helmholtz(33, 0, levels, 1.0, 0.1);
            let cfg = MgConfig {
                levels,
                ..MgConfig::default()
            };
            let hier = MgHierarchy::build(op, cfg).unwrap();
            let mut meter = WorkUnitMeter::new();
            let b = random(hier.fine().len(), 7);
            hier.precondition(&b, &mut meter);
            let bound = (cfg.nu1 + cfg.nu2) as f64 / (1.0 - 0.25);
            assert!(meter.work_units() < bound, "levels {levels}: {}", meter.work_units());
        }
    }

    #[test]
    fn coarse_operator_symbol() {
        let h = 0.1;
        let k0 = 3.0;
        let op = helmholtz(33, 0, 2, k0, h);
        // constant medium
        let g = *op.grid();
        let eg_like = op.profile();
        let flat = HelmholtzOperator::from_parts(g, k0, 1.0, vec![1.0; g.len()], *eg_like, false).unwrap();
        let coarse = flat.coarsen().unwrap();
        let cg = *coarse.grid();
        assert_eq!(cg.mesh_size(), 2.0 * h);
        let theta = [0.4, -0.9];
        let sc = cg.points_per_side();
        let u: Vec<Complex64> = (0..cg.len())
            .map(|i| Complex64::from_polar(1.0, 2.0 * theta[0] * (i % sc) as f64 + 2.0 * theta[1] * (i / sc) as f64))
            .collect();
        let mut out = vec![c(0.0, 0.0); cg.len()];
        coarse.apply_into(&u, &mut out);
        let h2 = 2.0 * h;
        let symbol = (4.0 - 2.0 * ((2.0 * theta[0]).cos() + (2.0 * theta[1]).cos()) - (k0 * h2).powi(2)) / (h2 * h2);
        for n in 1..sc - 1 {
            for m in 1..sc - 1 {
                let i = n * sc + m;
                assert!((out[i] - u[i] * symbol).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn conjugated_hierarchy_matches_conjugated_cycle() {
        let op = helmholtz(13, 2, 3, 1.2, 0.3);
        let hier = MgHierarchy::build(op, MgConfig::default()).unwrap();
        let conj = hier.conjugate();
        let b = random(hier.fine().len(), 8);
        let bc: Vec<Complex64> = b.iter().map(|v| v.conj()).collect();
        let mut m = WorkUnitMeter::new();
        let x = hier.precondition(&b, &mut m);
        let y = conj.precondition(&bc, &mut m);
        for (a, b) in x.iter().zip(&y) {
            assert!((a.conj() - b).norm() <= 1e-13 * (1.0 + a.norm()));
        }
    }

    #[test]
    fn rejects_invalid_config() {
        let op = helmholtz(13, 2, 3, 1.2, 0.3);
        let bad = MgConfig {
            cycle_type: 3,
            ..MgConfig::default()
        };
        assert!(MgHierarchy::build(op.clone(), bad).is_err());
        let deep = MgConfig {
            levels: 6,
            ..MgConfig::default()
        };
        assert!(MgHierarchy::build(op, deep).is_err());
    }

    #[test]
    fn resolution_warning_fires_when_coarse() {
        let op = helmholtz(13, 2, 3, 6.0, 0.3);
        let hier = MgHierarchy::build(op, MgConfig::default()).unwrap();
        assert!(hier.resolution_warning().is_some());
        let op = helmholtz(13, 2, 3, 0.2, 0.3);
        let hier = MgHierarchy::build(op, MgConfig::default()).unwrap();
        assert!(hier.resolution_warning().is_none());
    }
}
