//! Banded LU factorisation with partial pivoting (the `gbtrf`/`gbtrs` scheme).
//!
//! Storage is column-major in a `(2kl + ku + 1) x n` band: entry `(i, j)` lives
//! at row `kl + ku + i - j` of column `j`. The extra `kl` rows hold the fill-in
//! produced by row interchanges.

use crate::error::{Error, Result};
use crate::linalg::sparse::CsrMatrix;
use crate::C64;

#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    ld: usize,
    band: Vec<C64>,
    pivots: Vec<usize>,
}

impl BandedLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.dim();
        let (kl, ku) = a.bandwidth();
        let ld = 2 * kl + ku + 1;
        let mut lu = BandedLu { n, kl, ku, ld, band: vec![C64::new(0.0, 0.0); ld * n], pivots: vec![0; n] };
        for (i, j, v) in a.iter() {
            *lu.at_mut(i, j) = v;
        }
        lu.eliminate()?;
        Ok(lu)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i + self.kl + self.ku >= j && i <= j + self.kl);
        j * self.ld + self.kl + self.ku + i - j
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> C64 {
        self.band[self.idx(i, j)]
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut C64 {
        let k = self.idx(i, j);
        &mut self.band[k]
    }

    fn eliminate(&mut self) -> Result<()> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        // last column touched by the U factor so far
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut p = 0;
            let mut best = self.at(j, j).norm();
            for i in 1..=km {
                let v = self.at(j + i, j).norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            self.pivots[j] = j + p;
            if best == 0.0 {
                return Err(Error::SingularSystem(j));
            }
            ju = ju.max((j + ku + p).min(n - 1));
            if p != 0 {
                for c in j..=ju {
                    let (a, b) = (self.idx(j, c), self.idx(j + p, c));
                    self.band.swap(a, b);
                }
            }
            let inv = self.at(j, j).inv();
            for i in 1..=km {
                *self.at_mut(j + i, j) *= inv;
            }
            for c in j + 1..=ju {
                let u = self.at(j, c);
                if u == C64::new(0.0, 0.0) {
                    continue;
                }
                for i in 1..=km {
                    let l = self.at(j + i, j);
                    *self.at_mut(j + i, c) -= l * u;
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [C64]) {
        let (n, kl) = (self.n, self.kl);
        assert_eq!(b.len(), n);
        for j in 0..n {
            let p = self.pivots[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            if bj != C64::new(0.0, 0.0) {
                for i in 1..=kl.min(n - 1 - j) {
                    b[j + i] -= self.at(j + i, j) * bj;
                }
            }
        }
        let ubw = self.kl + self.ku;
        for j in (0..n).rev() {
            b[j] /= self.at(j, j);
            let bj = b[j];
            if bj != C64::new(0.0, 0.0) {
                for i in j.saturating_sub(ubw)..j {
                    b[i] -= self.at(i, j) * bj;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sparse::Triplets;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_banded(n: usize, kl: usize, ku: usize, seed: u64, weak_diag: bool) -> CsrMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Triplets::new(n);
        for i in 0..n {
            for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                let scale = if i == j && weak_diag { 1e-3 } else { 1.0 };
                t.add(i, j, C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale);
            }
        }
        t.build()
    }

    #[test]
    fn matches_dense_solve() {
        for (n, kl, ku, seed) in [(1, 0, 0, 1), (5, 1, 1, 2), (17, 3, 2, 3), (40, 6, 6, 4), (30, 0, 4, 5)] {
            for weak in [false, true] {
                let a = random_banded(n, kl, ku, seed, weak);
                let lu = BandedLu::factor(&a).unwrap();
                let b: Vec<C64> = (0..n).map(|k| C64::new(k as f64 + 1.0, -(k as f64) * 0.5)).collect();
                let mut x = b.clone();
                lu.solve_in_place(&mut x);
                let dense = a.to_dense();
                let x = DVector::from_vec(x);
                let b = DVector::from_vec(b);
                // backward error: a weak diagonal without subdiagonal leaves nothing to pivot on
                let r = &dense * &x - &b;
                let scale = dense.norm() * x.norm() + b.norm();
                assert!(r.norm() < 1e-13 * scale, "n={n} kl={kl} ku={ku} weak={weak}: {}", r.norm() / scale);
            }
        }
    }

    #[test]
    fn singular_is_reported() {
        let mut t = Triplets::new(3);
        t.add(0, 0, C64::new(1.0, 0.0));
        t.add(0, 1, C64::new(1.0, 0.0));
        t.add(1, 0, C64::new(1.0, 0.0));
        t.add(1, 1, C64::new(1.0, 0.0));
        t.add(2, 2, C64::new(1.0, 0.0));
        assert!(matches!(BandedLu::factor(&t.build()), Err(Error::SingularSystem(1))));
    }
}
