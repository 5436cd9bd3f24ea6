use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{FaceId, Grid};
use crate::linalg::dense::min_hermitian_eigenvalue;
use crate::schrodinger::{BoundaryParams, DENSE_LIMIT};
use crate::units::Units;
use crate::wave::WaveFunction;
use crate::C64;

/// Full-grid node index of (particle `particle` at base node `x_node`, the
/// others at `rest_node` of the (N-1)-particle grid).
fn insert_particle(grid: &Grid, rest: &Grid, particle: usize, x_idx: &[usize], rest_node: usize) -> usize {
    let d = grid.dim();
    let r = rest.multi_index(rest_node);
    let mut idx = Vec::with_capacity(grid.total_dim());
    idx.extend_from_slice(&r[..particle * d]);
    idx.extend_from_slice(x_idx);
    idx.extend_from_slice(&r[particle * d..]);
    grid.node_index(&idx)
}

/// The conditional state on the remaining particles after particle
/// `particle` is found at base node `x_node`, and the weighted norm of the
/// unnormalised slice.
pub fn collapse_with_norm(psi: &WaveFunction, particle: usize, x_node: usize) -> Result<(WaveFunction, f64)> {
    let grid = psi.grid();
    let np = grid.particle_count();
    if np < 2 {
        return Err(Error::DimensionMismatch("collapse needs at least two particles".into()));
    }
    if particle >= np {
        return Err(Error::DimensionMismatch(format!("no particle {particle} among {np}")));
    }
    let base = grid.base();
    if x_node >= base.len() {
        return Err(Error::DimensionMismatch(format!("base node {x_node} out of range")));
    }
    let x_idx = base.multi_index(x_node);
    let rest = grid.with_particles(np - 1).into_arc();
    let s = psi.spin_dim();
    let mut data = Vec::with_capacity(rest.len() * s);
    for r in 0..rest.len() {
        let full = insert_particle(grid, &rest, particle, &x_idx, r);
        data.extend_from_slice(psi.at(full));
    }
    let mut out = WaveFunction::new(rest, s, data)?;
    let norm = out.norm();
    if norm == 0.0 {
        return Err(Error::NullSlice);
    }
    out.scale(C64::new(1.0 / norm, 0.0));
    Ok((out, norm))
}

/// `ψ' = ψ(x_particle = X, ·) / ||·||_w`.
pub fn collapse(psi: &WaveFunction, particle: usize, x_node: usize) -> Result<WaveFunction> {
    collapse_with_norm(psi, particle, x_node).map(|(w, _)| w)
}

/// The collapse superoperator `(𝒞ρ)(x', y') = Σ_b c_b ρ((b, x'), (b, y'))` with
/// `c_b = (ħκ/m) w_b` summed over the boundary entries of the detected particle.
/// Density matrices are kernels: `(ρψ)(a) = Σ_b w_b ρ(a, b) ψ(b)`.
#[derive(Debug, Clone)]
pub struct CollapseMap {
    grid: Grid,
    rest: Grid,
    particle: usize,
    /// `(base node, c_b)` per boundary entry.
    coefficients: Vec<(usize, f64)>,
}

impl CollapseMap {
    pub fn new(base: &Grid, particles: usize, particle: usize, boundary: &BoundaryParams, units: Units) -> Result<Self> {
        if particles < 2 || particle >= particles {
            return Err(Error::DimensionMismatch(format!("particle {particle} of {particles}")));
        }
        let base = base.base();
        let coefficients = base
            .boundary()
            .iter()
            .map(|e| {
                let (kappa, _) = boundary.for_face(FaceId { particle, ..e.face });
                (e.node, units.hbar * kappa / units.mass * e.surface_weight)
            })
            .collect();
        Ok(CollapseMap { grid: base.with_particles(particles), rest: base.with_particles(particles - 1), particle, coefficients })
    }

    pub fn apply(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let m = self.rest.len();
        let base = self.grid.base();
        let mut out = DMatrix::zeros(m, m);
        for &(b, c) in &self.coefficients {
            let bi = base.multi_index(b);
            let full: Vec<usize> = (0..m).map(|r| insert_particle(&self.grid, &self.rest, self.particle, &bi, r)).collect();
            for x in 0..m {
                for y in 0..m {
                    out[(x, y)] += rho[(full[x], full[y])] * c;
                }
            }
        }
        out
    }

    /// `Σ_x w_x ρ(x, x)`.
    pub fn kernel_trace(grid: &Grid, rho: &DMatrix<C64>) -> C64 {
        grid.weights().iter().enumerate().map(|(k, w)| rho[(k, k)] * *w).sum()
    }

    pub fn rest_grid(&self) -> &Grid {
        &self.rest
    }

    pub fn coefficients(&self) -> &[(usize, f64)] {
        &self.coefficients
    }

    /// Choi matrix `Σ_jk |j⟩⟨k| ⊗ 𝒞̂(|j⟩⟨k|)` of the map in orthonormal coordinates.
    pub fn choi(&self) -> Result<DMatrix<C64>> {
        let n = self.grid.len();
        let m = self.rest.len();
        let dim = n * m;
        if dim > DENSE_LIMIT {
            return Err(Error::TooLarge { dim, limit: DENSE_LIMIT });
        }
        let base = self.grid.base();
        let mut choi = DMatrix::zeros(dim, dim);
        for &(b, c) in &self.coefficients {
            let bi = base.multi_index(b);
            // in orthonormal coordinates the weight of the collapsed factor divides out
            let k = c / base.weights()[b];
            let full: Vec<usize> = (0..m).map(|r| insert_particle(&self.grid, &self.rest, self.particle, &bi, r)).collect();
            for x in 0..m {
                for y in 0..m {
                    choi[(full[x] * m + x, full[y] * m + y)] += C64::new(k, 0.0);
                }
            }
        }
        Ok(choi)
    }
}

/// Choi matrix of the collapse map for `particles` copies of `base_grid`.
pub fn collapse_superoperator_choi(
    base_grid: &Grid,
    particles: usize,
    particle: usize,
    boundary: &BoundaryParams,
    units: Units,
) -> Result<(DMatrix<C64>, f64)> {
    let choi = CollapseMap::new(base_grid, particles, particle, boundary, units)?.choi()?;
    let min = min_hermitian_eigenvalue(&choi);
    Ok((choi, min))
}
