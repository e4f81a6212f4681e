//! Inter-grid transfers between vertex-centred grids with sides `s` and
//! `(s + 1) / 2`.
//!
//! With these weights the prolongation equals four times the transpose of
//! the restriction: `<P x, y> = 4 <x, R y>`.

use std::ops::{Add, Mul};

use crate::error::{Error, Result};
use crate::grid::check_len;

fn coarse_side(fine_side: usize) -> Result<usize> {
    if fine_side % 2 == 0 || fine_side < 3 {
        return Err(Error::invalid(format!(
            "fine grid side must be odd and >= 3, got {fine_side}"
        )));
    }
    Ok((fine_side + 1) / 2)
}

/// Full-weighting restriction; fine samples outside the grid read as zero.
pub fn restrict_full_weighting<T>(fine: &[T], fine_side: usize) -> Result<Vec<T>>
where
    T: Copy + Default + Add<Output = T> + Mul<f64, Output = T>,
{
    check_len(fine.len(), fine_side * fine_side)?;
    let sc = coarse_side(fine_side)?;
    let s = fine_side as isize;
    let at = |m: isize, n: isize| -> T {
        if m < 0 || n < 0 || m >= s || n >= s {
            T::default()
        } else {
            fine[(n * s + m) as usize]
        }
    };
    let mut coarse = Vec::with_capacity(sc * sc);
    for n in 0..sc as isize {
        for m in 0..sc as isize {
            let (fm, fn_) = (2 * m, 2 * n);
            let centre = at(fm, fn_) * 4.0;
            let edges = at(fm - 1, fn_) + at(fm + 1, fn_) + at(fm, fn_ - 1) + at(fm, fn_ + 1);
            let corners = at(fm - 1, fn_ - 1)
                + at(fm - 1, fn_ + 1)
                + at(fm + 1, fn_ - 1)
                + at(fm + 1, fn_ + 1);
            coarse.push((centre + edges * 2.0 + corners) * (1.0 / 16.0));
        }
    }
    Ok(coarse)
}

/// Bilinear prolongation onto the grid with `2 * coarse_side - 1` points.
pub fn prolong_bilinear<T>(coarse: &[T], coarse_side: usize) -> Result<Vec<T>>
where
    T: Copy + Default + Add<Output = T> + Mul<f64, Output = T>,
{
    check_len(coarse.len(), coarse_side * coarse_side)?;
    if coarse_side < 2 {
        return Err(Error::invalid("coarse grid needs at least 2 points per side"));
    }
    let sc = coarse_side;
    let s = 2 * sc - 1;
    let c = |m: usize, n: usize| coarse[n * sc + m];
    let mut fine = vec![T::default(); s * s];
    for n in 0..s {
        for m in 0..s {
            let v = match (m % 2, n % 2) {
                (0, 0) => c(m / 2, n / 2),
                (1, 0) => (c((m - 1) / 2, n / 2) + c((m + 1) / 2, n / 2)) * 0.5,
                (0, 1) => (c(m / 2, (n - 1) / 2) + c(m / 2, (n + 1) / 2)) * 0.5,
                _ => {
                    (c((m - 1) / 2, (n - 1) / 2)
                        + c((m - 1) / 2, (n + 1) / 2)
                        + c((m + 1) / 2, (n - 1) / 2)
                        + c((m + 1) / 2, (n + 1) / 2))
                        * 0.25
                }
            };
            fine[n * s + m] = v;
        }
    }
    Ok(fine)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};

    #[test]
    fn constants_are_preserved() {
        let fine = vec![3.0; 81];
        let coarse = restrict_full_weighting(&fine, 9).unwrap();
        for n in 1..4 {
            for m in 1..4 {
                assert_eq!(coarse[n * 5 + m], 3.0);
            }
        }
        // edge points lose the weight of the missing neighbours
        assert_eq!(coarse[0], 3.0 * 9.0 / 16.0);
        let back = prolong_bilinear(&vec![2.5; 25], 5).unwrap();
        assert!(back.iter().all(|v| *v == 2.5));
        let rp = restrict_full_weighting(&back, 9).unwrap();
        assert_eq!(rp[2 * 5 + 2], 2.5);
    }

    #[test]
    fn even_delta_stays_local() {
        let mut fine = vec![0.0; 81];
        fine[4 * 9 + 4] = 16.0;
        let coarse = restrict_full_weighting(&fine, 9).unwrap();
        for (i, v) in coarse.iter().enumerate() {
            assert_eq!(*v, if i == 2 * 5 + 2 { 4.0 } else { 0.0 });
        }
    }

    #[test]
    fn odd_delta_spreads_to_four() {
        let mut fine = vec![0.0; 81];
        fine[5 * 9 + 3] = 16.0;
        let coarse = restrict_full_weighting(&fine, 9).unwrap();
        let hits = [(1, 2), (2, 2), (1, 3), (2, 3)];
        for n in 0..5 {
            for m in 0..5 {
                let expect = if hits.contains(&(m, n)) { 1.0 } else { 0.0 };
                assert_eq!(coarse[n * 5 + m], expect);
            }
        }
    }

    #[test]
    fn coarse_delta_prolongs_to_hat() {
        let mut coarse = vec![0.0; 25];
        coarse[2 * 5 + 2] = 1.0;
        let fine = prolong_bilinear(&coarse, 5).unwrap();
        for n in 0..9usize {
            for m in 0..9usize {
                let (dm, dn) = ((m as isize - 4).abs(), (n as isize - 4).abs());
                let expect = match (dm, dn) {
                    (0, 0) => 1.0,
                    (1, 0) | (0, 1) => 0.5,
                    (1, 1) => 0.25,
                    _ => 0.0,
                };
                assert_eq!(fine[n * 9 + m], expect, "({m},{n})");
            }
        }
    }

    #[test]
    fn prolongation_is_four_times_restriction_transpose() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        for &sc in &[3usize, 5, 9, 17] {
            let s = 2 * sc - 1;
            let x: Vec<Complex64> = (0..sc * sc)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let y: Vec<Complex64> = (0..s * s)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let px = prolong_bilinear(&x, sc).unwrap();
            let ry = restrict_full_weighting(&y, s).unwrap();
            let lhs: Complex64 = px.iter().zip(&y).map(|(a, b)| a.conj() * b).sum();
            let rhs: Complex64 = x.iter().zip(&ry).map(|(a, b)| a.conj() * b).sum::<Complex64>() * 4.0;
            assert!((lhs - rhs).norm() <= 1e-13 * lhs.norm());
        }
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(restrict_full_weighting(&vec![0.0; 64], 8).is_err());
        assert!(restrict_full_weighting(&vec![0.0; 80], 9).is_err());
        assert!(prolong_bilinear(&vec![0.0; 24], 5).is_err());
    }
}
