use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::C64;

/// Coordinate-format accumulator; duplicate entries are summed.
#[derive(Debug, Clone, Default)]
pub struct Triplets {
    n: usize,
    entries: BTreeMap<(usize, usize), C64>,
}

impl Triplets {
    pub fn new(n: usize) -> Self {
        Triplets { n, entries: BTreeMap::new() }
    }

    pub fn add(&mut self, row: usize, col: usize, value: C64) {
        assert!(row < self.n && col < self.n, "entry ({row}, {col}) outside {0}x{0}", self.n);
        *self.entries.entry((row, col)).or_default() += value;
    }

    pub fn build(self) -> CsrMatrix {
        let mut row_ptr = vec![0usize; self.n + 1];
        let mut cols = Vec::with_capacity(self.entries.len());
        let mut vals = Vec::with_capacity(self.entries.len());
        for ((r, c), v) in self.entries {
            if v == C64::new(0.0, 0.0) {
                continue;
            }
            row_ptr[r + 1] += 1;
            cols.push(c);
            vals.push(v);
        }
        for r in 0..self.n {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix { n: self.n, row_ptr, cols, vals }
    }
}

/// Square compressed-sparse-row complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl CsrMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.n).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[span.clone()].binary_search(&c) {
            Ok(k) => self.vals[span.start + k],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    pub fn mul_vec_into(&self, x: &[C64], y: &mut [C64]) {
        for (r, out) in y.iter_mut().enumerate() {
            *out = self.row(r).map(|(c, v)| v * x[c]).sum();
        }
    }

    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// Entrywise map over stored values, keeping the pattern.
    pub fn map(&self, f: impl Fn(usize, usize, C64) -> C64) -> CsrMatrix {
        let mut t = Triplets::new(self.n);
        for (r, c, v) in self.iter() {
            t.add(r, c, f(r, c, v));
        }
        t.build()
    }

    pub fn conj_transpose(&self) -> CsrMatrix {
        let mut t = Triplets::new(self.n);
        for (r, c, v) in self.iter() {
            t.add(c, r, v.conj());
        }
        t.build()
    }

    /// `a·I + b·self`.
    pub fn shifted(&self, a: C64, b: C64) -> CsrMatrix {
        let mut t = Triplets::new(self.n);
        for r in 0..self.n {
            t.add(r, r, a);
        }
        for (r, c, v) in self.iter() {
            t.add(r, c, b * v);
        }
        t.build()
    }

    /// `(lower, upper)` bandwidth.
    pub fn bandwidth(&self) -> (usize, usize) {
        self.iter().fold((0, 0), |(kl, ku), (r, c, _)| {
            if r > c {
                (kl.max(r - c), ku)
            } else {
                (kl, ku.max(c - r))
            }
        })
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (r, c, v) in self.iter() {
            m[(r, c)] = v;
        }
        m
    }

    pub fn max_abs_diff(&self, other: &CsrMatrix) -> f64 {
        let mut t = Triplets::new(self.n);
        for (r, c, v) in self.iter() {
            t.add(r, c, v);
        }
        for (r, c, v) in other.iter() {
            t.add(r, c, -v);
        }
        t.build().vals.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn assemble_and_multiply() {
        let mut t = Triplets::new(3);
        t.add(0, 0, c(1.0, 0.0));
        t.add(0, 2, c(0.0, 2.0));
        t.add(0, 2, c(1.0, 0.0));
        t.add(2, 1, c(-1.0, 0.0));
        let m = t.build();
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(0, 2), c(1.0, 2.0));
        assert_eq!(m.get(1, 1), c(0.0, 0.0));
        let y = m.mul_vec(&[c(1.0, 0.0), c(2.0, 0.0), c(0.0, 1.0)]);
        assert_eq!(y, vec![c(-1.0, 1.0), c(0.0, 0.0), c(-2.0, 0.0)]);
        assert_eq!(m.bandwidth(), (1, 2));
        let h = m.conj_transpose();
        assert_eq!(h.get(2, 0), c(1.0, -2.0));
        assert_eq!(h.conj_transpose(), m);
        let s = m.shifted(c(1.0, 0.0), c(0.0, 1.0));
        assert_eq!(s.get(1, 1), c(1.0, 0.0));
        assert_eq!(s.get(0, 0), c(1.0, 1.0));
    }
}
