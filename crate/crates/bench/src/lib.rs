//! Benchmark fixtures shared by the criterion targets.

use helmscat_core::{build_extended_grid, ExtendedGrid2D, Grid2D, HelmholtzOperator, RealField2D};

/// Unit-contrast disk on an `points`-square region with a 32-cell absorbing layer.
pub fn disk_operator(points: usize) -> (ExtendedGrid2D, HelmholtzOperator) {
    let side = 31.875 * (points - 1) as f64 / 255.0;
    let inner = Grid2D::centered(points, side).unwrap();
    let eg = build_extended_grid(inner, 32, 0.15, 3).unwrap();
    let eta_sq = RealField2D::from_fn(*eg.grid(), |x| if x[0].hypot(x[1]) < 0.4 * side { 2.0 } else { 1.0 }).unwrap();
    let k0 = 2.0 * std::f64::consts::PI / 10.0;
    let op = HelmholtzOperator::assemble(&eg, &eta_sq, k0, 1.0).unwrap();
    (eg, op)
}
