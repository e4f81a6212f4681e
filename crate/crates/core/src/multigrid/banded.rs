//! Banded LU factorisation with partial pivoting for the coarsest level.
//!
//! Row `i` keeps columns `i - kl ..= i + kl + ku`, which leaves room for the
//! fill created by row interchanges. Multipliers stay where elimination
//! wrote them, so solves replay interchanges and eliminations step by step.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::helmholtz::HelmholtzOperator;

#[derive(Clone, Debug)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<Complex64>,
    pivots: Vec<usize>,
}

impl BandedLu {
    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    /// Factors the assembled five-point operator.
    pub fn factor_operator(op: &HelmholtzOperator) -> Result<Self> {
        let s = op.grid().points_per_side();
        let n = op.len();
        let inv_h2 = op.inv_h2();
        let mut lu = Self::zeros(n, s, s);
        let diag = op.diagonal_values();
        for row in 0..n {
            let (m, k) = (row % s, row / s);
            let at = lu.slot(row, row);
            lu.data[at] = diag[row];
            let off = Complex64::new(-inv_h2, 0.0);
            if m > 0 {
                let at = lu.slot(row, row - 1);
                lu.data[at] = off;
            }
            if m + 1 < s {
                let at = lu.slot(row, row + 1);
                lu.data[at] = off;
            }
            if k > 0 {
                let at = lu.slot(row, row - s);
                lu.data[at] = off;
            }
            if k + 1 < s {
                let at = lu.slot(row, row + s);
                lu.data[at] = off;
            }
        }
        lu.factor()?;
        Ok(lu)
    }

    /// Factors a general banded matrix given entry by entry.
    pub fn factor_with(
        n: usize,
        kl: usize,
        ku: usize,
        mut entry: impl FnMut(usize, usize) -> Complex64,
    ) -> Result<Self> {
        let mut lu = Self::zeros(n, kl, ku);
        for i in 0..n {
            let lo = i.saturating_sub(kl);
            let hi = (i + ku).min(n - 1);
            for j in lo..=hi {
                let at = lu.slot(i, j);
                lu.data[at] = entry(i, j);
            }
        }
        lu.factor()?;
        Ok(lu)
    }

    fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![Complex64::new(0.0, 0.0); n * width],
            pivots: vec![0; n],
        }
    }

    fn factor(&mut self) -> Result<()> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + kl + ku).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.slot(k, k)].norm_sqr();
            for i in k + 1..=last_row {
                let v = self.data[self.slot(i, k)].norm_sqr();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Singular(k));
            }
            self.pivots[k] = p;
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (self.slot(k, j), self.slot(p, j));
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.slot(k, k)];
            let inv = pivot.inv();
            let row_k = self.slot(k, k);
            let span = last_col - k;
            for i in k + 1..=last_row {
                let at = self.slot(i, k);
                let l = self.data[at] * inv;
                self.data[at] = l;
                if l == Complex64::new(0.0, 0.0) {
                    continue;
                }
                // row i starts past the end of row k's stored span
                let row_i = self.slot(i, k + 1);
                let (head, tail) = self.data.split_at_mut(row_i);
                let src = &head[row_k + 1..row_k + 1 + span];
                for (d, s) in tail[..span].iter_mut().zip(src) {
                    *d -= l * s;
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [Complex64]) {
        assert_eq!(b.len(), self.n, "right-hand side does not match factorisation");
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk == Complex64::new(0.0, 0.0) {
                continue;
            }
            for i in k + 1..=(k + kl).min(n - 1) {
                b[i] -= self.data[self.slot(i, k)] * bk;
            }
        }
        for k in (0..n).rev() {
            let last = (k + kl + ku).min(n - 1);
            let row = self.slot(k, k);
            let mut acc = b[k];
            for (off, x) in b[k + 1..=last].iter().enumerate() {
                acc -= self.data[row + 1 + off] * x;
            }
            b[k] = acc / self.data[row];
        }
    }

    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Factorisation of the entrywise-conjugated matrix.
    pub fn conjugate(&self) -> Self {
        let mut out = self.clone();
        for v in &mut out.data {
            *v = v.conj();
        }
        out
    }
}
