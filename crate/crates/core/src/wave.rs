use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::C64;

/// Amplitudes on a grid, `spin_dim` components per node (node-major).
///
/// When the initial state was normalised, `norm_sqr()` is the probability that
/// no detection has happened yet.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    grid: Arc<Grid>,
    spin_dim: usize,
    data: Vec<C64>,
}

impl WaveFunction {
    pub fn new(grid: Arc<Grid>, spin_dim: usize, data: Vec<C64>) -> Result<Self> {
        if spin_dim == 0 || data.len() != grid.len() * spin_dim {
            return Err(Error::DimensionMismatch(format!(
                "{} amplitudes for {} nodes x {} components",
                data.len(),
                grid.len(),
                spin_dim
            )));
        }
        if let Some(k) = data.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Invariant(format!("non-finite amplitude at index {k}")));
        }
        Ok(WaveFunction { grid, spin_dim, data })
    }

    pub fn zeros(grid: Arc<Grid>, spin_dim: usize) -> Self {
        let n = grid.len() * spin_dim;
        WaveFunction { grid, spin_dim, data: vec![C64::new(0.0, 0.0); n] }
    }

    /// Samples a scalar function of the node coordinates.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&[f64]) -> C64) -> Self {
        let data = (0..grid.len()).map(|n| f(&grid.coords(n))).collect();
        WaveFunction { grid, spin_dim: 1, data }
    }

    /// Gaussian packet `Π_i (2πσ²)^{-d/4} exp(-|x_i - c_i|²/(4σ²) + i k_i·x_i)`,
    /// one factor per particle; `σ` is the position standard deviation of `|ψ|²`.
    pub fn gaussian(grid: Arc<Grid>, centers: &[Vec<f64>], width: f64, wavenumbers: &[Vec<f64>]) -> Result<Self> {
        let d = grid.dim();
        let np = grid.particle_count();
        if centers.len() != np || wavenumbers.len() != np || centers.iter().chain(wavenumbers).any(|v| v.len() != d) {
            return Err(Error::DimensionMismatch(format!("gaussian needs {np} centers and wavenumbers of length {d}")));
        }
        if !(width > 0.0) {
            return Err(Error::Config("gaussian width must be positive".into()));
        }
        let norm = (2.0 * std::f64::consts::PI * width * width).powf(-0.25);
        Ok(Self::from_fn(grid, |x| {
            let mut amp = C64::new(1.0, 0.0);
            for p in 0..np {
                let xs = &x[p * d..(p + 1) * d];
                let r2: f64 = xs.iter().zip(&centers[p]).map(|(a, b)| (a - b) * (a - b)).sum();
                let phase: f64 = xs.iter().zip(&wavenumbers[p]).map(|(a, k)| a * k).sum();
                amp *= C64::from_polar(norm.powi(d as i32) * (-r2 / (4.0 * width * width)).exp(), phase);
            }
            amp
        }))
    }

    /// Repeats a scalar field over `spinor` components: `ψ(x) ⊗ spinor`.
    pub fn with_spinor(&self, spinor: &[C64]) -> Result<Self> {
        if self.spin_dim != 1 {
            return Err(Error::DimensionMismatch("with_spinor expects a scalar field".into()));
        }
        let data = self.data.iter().flat_map(|&a| spinor.iter().map(move |&s| a * s)).collect();
        Ok(WaveFunction { grid: self.grid.clone(), spin_dim: spinor.len(), data })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn spin_dim(&self) -> usize {
        self.spin_dim
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    /// Components at one node.
    pub fn at(&self, node: usize) -> &[C64] {
        &self.data[node * self.spin_dim..(node + 1) * self.spin_dim]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.grid.norm_sqr(&self.data)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn inner(&self, other: &WaveFunction) -> C64 {
        self.grid.inner(&self.data, &other.data)
    }

    pub fn scale(&mut self, s: C64) {
        self.data.iter_mut().for_each(|z| *z *= s);
    }

    pub fn normalized(mut self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::Invariant("cannot normalise the zero state".into()));
        }
        self.scale(C64::new(1.0 / n, 0.0));
        Ok(self)
    }

    /// Exchanges particles `a` and `b`.
    pub fn permuted(&self, a: usize, b: usize) -> WaveFunction {
        let g = &self.grid;
        let d = g.dim();
        let mut out = vec![C64::new(0.0, 0.0); self.data.len()];
        for node in 0..g.len() {
            let mut idx = g.multi_index(node);
            for k in 0..d {
                idx.swap(a * d + k, b * d + k);
            }
            let dst = g.node_index(&idx);
            for s in 0..self.spin_dim {
                out[dst * self.spin_dim + s] = self.data[node * self.spin_dim + s];
            }
        }
        WaveFunction { grid: self.grid.clone(), spin_dim: self.spin_dim, data: out }
    }

    pub fn is_on(&self, grid: &Grid) -> bool {
        self.grid.as_ref() == grid || self.grid.same_as(grid)
    }
}
