//! Dirac matrices, the absorbing boundary projector, and a one-dimensional
//! two-spinor Dirac operator that plugs into the same propagator and detection code.
//!
//! The 1D operator is `Π H₀ Π`, where `H₀ = -icħ α⊗D + mc² β + V` uses a
//! summation-by-parts first difference `D = W⁻¹Q` (`Q + Qᵀ = diag(-1, 0, …, 0, 1)`)
//! and `Π` is `P₊(n, θ)` at the two end nodes and the identity elsewhere. Because
//! `Π` is self-adjoint in the weighted metric, the compressed operator keeps the
//! exact flux identity with outflow matrices `M_b = c P₊(nα)P₊`, which are
//! positive on the boundary subspace. Components outside `ran Π` are left
//! untouched by the evolution.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{FaceId, Grid, Side};
use crate::linalg::dense::hermitian_eigen;
use crate::linalg::Triplets;
use crate::schrodinger::{Equation, FluxTerm, OperatorMatrix, PotentialField};
use crate::units::Units;
use crate::wave::WaveFunction;
use crate::C64;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn pauli() -> [DMatrix<C64>; 3] {
    let z = c(0.0, 0.0);
    let o = c(1.0, 0.0);
    let i = c(0.0, 1.0);
    [
        DMatrix::from_row_slice(2, 2, &[z, o, o, z]),
        DMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
        DMatrix::from_row_slice(2, 2, &[o, z, z, -o]),
    ]
}

/// `α_k` and `β` in the Dirac representation (4 components) or the reduced
/// 1D pair `α = σx`, `β = σz` (2 components).
#[derive(Debug, Clone, PartialEq)]
pub struct DiracAlgebra {
    pub alpha: Vec<DMatrix<C64>>,
    pub beta: DMatrix<C64>,
}

pub fn dirac_matrices(spin_dim: usize) -> Result<DiracAlgebra> {
    let [sx, sy, sz] = pauli();
    match spin_dim {
        2 => Ok(DiracAlgebra { alpha: vec![sx], beta: sz }),
        4 => {
            let block = |s: &DMatrix<C64>| {
                let mut m = DMatrix::zeros(4, 4);
                m.view_mut((0, 2), (2, 2)).copy_from(s);
                m.view_mut((2, 0), (2, 2)).copy_from(s);
                m
            };
            let mut beta = DMatrix::zeros(4, 4);
            for k in 0..4 {
                beta[(k, k)] = c(if k < 2 { 1.0 } else { -1.0 }, 0.0);
            }
            Ok(DiracAlgebra { alpha: vec![block(&sx), block(&sy), block(&sz)], beta })
        }
        _ => Err(Error::UnsupportedSpinDim(spin_dim)),
    }
}

impl DiracAlgebra {
    pub fn spin_dim(&self) -> usize {
        self.beta.nrows()
    }

    pub fn space_dim(&self) -> usize {
        self.alpha.len()
    }

    /// `u·α`.
    pub fn alpha_along(&self, u: &[f64]) -> DMatrix<C64> {
        let s = self.spin_dim();
        u.iter().zip(&self.alpha).fold(DMatrix::zeros(s, s), |acc, (&uk, a)| acc + a * c(uk, 0.0))
    }

    /// Largest entry of `{α_i, α_j} - 2δ_ij`, `{α_i, β}` and `β² - I`.
    pub fn anticommutation_residual(&self) -> f64 {
        let s = self.spin_dim();
        let eye = DMatrix::<C64>::identity(s, s);
        let maxabs = |m: DMatrix<C64>| m.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let mut worst = maxabs(&self.beta * &self.beta - &eye);
        for (i, ai) in self.alpha.iter().enumerate() {
            worst = worst.max(maxabs(ai * &self.beta + &self.beta * ai));
            for (j, aj) in self.alpha.iter().enumerate() {
                let want = if i == j { &eye * c(2.0, 0.0) } else { DMatrix::zeros(s, s) };
                worst = worst.max(maxabs(ai * aj + aj * ai - want));
            }
        }
        worst
    }
}

/// Projector onto the `+√(1+θ²)` eigenspace of `u·α + θβ`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryProjector {
    pub normal: Vec<f64>,
    pub theta: f64,
    pub matrix: DMatrix<C64>,
    /// `u·α + θβ`.
    pub generator: DMatrix<C64>,
}

pub fn boundary_projector(alg: &DiracAlgebra, u: &[f64], theta: f64) -> Result<BoundaryProjector> {
    if u.len() != alg.space_dim() {
        return Err(Error::DimensionMismatch(format!("normal of length {} for {} dimensions", u.len(), alg.space_dim())));
    }
    let len = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (len - 1.0).abs() > 1e-12 {
        return Err(Error::NonUnitNormal(len));
    }
    if !theta.is_finite() {
        return Err(Error::Config("theta must be finite".into()));
    }
    let s = alg.spin_dim();
    let generator = alg.alpha_along(u) + &alg.beta * c(theta, 0.0);
    let lambda = (1.0 + theta * theta).sqrt();
    // (u·α + θβ)² = (1 + θ²) I, so (A + λ)/(2λ) is the spectral projector
    let matrix = (&generator + DMatrix::<C64>::identity(s, s) * c(lambda, 0.0)) * c(0.5 / lambda, 0.0);
    Ok(BoundaryProjector { normal: u.to_vec(), theta, matrix, generator })
}

impl BoundaryProjector {
    pub fn eigenvalue(&self) -> f64 {
        (1.0 + self.theta * self.theta).sqrt()
    }

    pub fn rank(&self) -> usize {
        self.matrix.trace().re.round() as usize
    }

    /// Orthonormal basis of the range, as columns.
    pub fn range_basis(&self) -> DMatrix<C64> {
        let (vals, vecs) = hermitian_eigen(&self.matrix);
        let cols: Vec<DVector<C64>> =
            vals.iter().enumerate().filter(|(_, &v)| v > 0.5).map(|(k, _)| vecs.column(k).into_owned()).collect();
        DMatrix::from_columns(&cols)
    }

    /// `(√(1+θ²) - |θ|)`, the smallest value of `ψ†(u·α)ψ / |ψ|²` over the range.
    pub fn outflow_floor(&self) -> f64 {
        self.eigenvalue() - self.theta.abs()
    }

    pub fn apply(&self, psi: &[C64]) -> Vec<C64> {
        let s = self.matrix.nrows();
        (0..s).map(|i| (0..s).map(|j| self.matrix[(i, j)] * psi[j]).sum()).collect()
    }
}

/// `j_k = c ψ†α_kψ` at one node.
pub fn dirac_current(alg: &DiracAlgebra, psi: &WaveFunction, node: usize, light_speed: f64) -> Vec<f64> {
    let s = alg.spin_dim();
    assert_eq!(psi.spin_dim(), s, "spinor has the wrong number of components");
    let v = psi.at(node);
    alg.alpha
        .iter()
        .map(|a| {
            let mut acc = c(0.0, 0.0);
            for i in 0..s {
                for j in 0..s {
                    acc += v[i].conj() * a[(i, j)] * v[j];
                }
            }
            light_speed * acc.re
        })
        .collect()
}

/// The 1D two-spinor operator with absorbing projector closure at both ends.
pub fn assemble_dirac_1d(grid: Arc<Grid>, mass: f64, potential: &PotentialField, theta: f64, units: Units) -> Result<OperatorMatrix> {
    if grid.total_dim() != 1 {
        return Err(Error::InvalidDomain("the Dirac model needs a one-dimensional single-particle grid".into()));
    }
    if !mass.is_finite() {
        return Err(Error::Config("mass must be finite".into()));
    }
    potential.validate()?;
    let n = grid.len();
    if potential.len() != n {
        return Err(Error::DimensionMismatch(format!("potential has {} values for {} nodes", potential.len(), n)));
    }
    let alg = dirac_matrices(2)?;
    let ends = [boundary_projector(&alg, &[-1.0], theta)?, boundary_projector(&alg, &[1.0], theta)?];
    let h = grid.axes()[0].spacing;
    let cl = units.c;
    let eye = DMatrix::<C64>::identity(2, 2);
    if let PotentialField::Matrix(m) = potential {
        if m.iter().any(|b| b.nrows() != 2) {
            return Err(Error::DimensionMismatch("matrix potential must be 2x2 per node".into()));
        }
    }
    let site = |k: usize| -> DMatrix<C64> {
        let local = match potential {
            PotentialField::Scalar(v) => &eye * c(v[k], 0.0),
            PotentialField::Matrix(m) => m[k].clone(),
        };
        &alg.beta * c(mass * cl * cl, 0.0) + local
    };
    let proj = |k: usize| -> Option<&DMatrix<C64>> {
        if k == 0 {
            Some(&ends[0].matrix)
        } else if k == n - 1 {
            Some(&ends[1].matrix)
        } else {
            None
        }
    };
    // -icħ α D: the SBP stencil
    let hop = &alg.alpha[0] * c(0.0, -cl * units.hbar);
    let mut blocks: Vec<(usize, usize, DMatrix<C64>)> = Vec::with_capacity(3 * n);
    for k in 0..n {
        if k == 0 {
            blocks.push((0, 0, site(0) - &hop * c(1.0 / h, 0.0)));
            blocks.push((0, 1, &hop * c(1.0 / h, 0.0)));
        } else if k == n - 1 {
            blocks.push((k, k, site(k) + &hop * c(1.0 / h, 0.0)));
            blocks.push((k, k - 1, -&hop * c(1.0 / h, 0.0)));
        } else {
            blocks.push((k, k, site(k)));
            blocks.push((k, k + 1, &hop * c(0.5 / h, 0.0)));
            blocks.push((k, k - 1, -&hop * c(0.5 / h, 0.0)));
        }
    }
    let mut t = Triplets::new(2 * n);
    for (r, col, mut b) in blocks {
        if let Some(p) = proj(r) {
            b = p * b;
        }
        if let Some(p) = proj(col) {
            b *= p;
        }
        for i in 0..2 {
            for j in 0..2 {
                t.add(2 * r + i, 2 * col + j, b[(i, j)]);
            }
        }
    }
    let flux = [(0usize, 0usize, Side::Lower), (1, n - 1, Side::Upper)]
        .into_iter()
        .map(|(entry, node, side)| {
            let p = &ends[entry];
            // ran P₊ is one-dimensional: P₊ = vv†, and M = c w (v†(nα)v) vv†
            let v = p.range_basis().column(0).into_owned();
            let na = alg.alpha_along(&p.normal);
            let surface = grid.boundary().iter().find(|e| e.node == node).map_or(1.0, |e| e.surface_weight);
            let mu = cl * surface * (v.adjoint() * &na * &v)[(0, 0)].re;
            let gain = DMatrix::from_row_slice(1, 2, &[v[0].conj(), v[1].conj()]) * c(mu.sqrt(), 0.0);
            FluxTerm { entry, node, face: FaceId { particle: 0, axis: 0, side }, gain, sign: 1.0 }
        })
        .collect();
    Ok(OperatorMatrix::from_parts(grid, 2, t.build(), flux, units, Equation::Dirac))
}

/// Applies `Π` (the end-node projectors) to a 1D spinor field, so the result
/// satisfies `(I - P₊)ψ_b = 0`.
pub fn project_boundary(psi: &WaveFunction, theta: f64) -> Result<WaveFunction> {
    if psi.spin_dim() != 2 || psi.grid().total_dim() != 1 {
        return Err(Error::DimensionMismatch("expected a 1D two-spinor field".into()));
    }
    let alg = dirac_matrices(2)?;
    let n = psi.grid().len();
    let mut data = psi.data().to_vec();
    for (node, u) in [(0usize, -1.0), (n - 1, 1.0)] {
        let p = boundary_projector(&alg, &[u], theta)?;
        let v = p.apply(&data[2 * node..2 * node + 2]);
        data[2 * node..2 * node + 2].copy_from_slice(&v);
    }
    WaveFunction::new(psi.grid().clone(), 2, data)
}

/// `max_b ||(I - P₊)ψ_b|| / ||ψ_b||` over the two end nodes (0 for vanishing ψ_b).
pub fn boundary_violation(psi: &WaveFunction, theta: f64) -> Result<f64> {
    let alg = dirac_matrices(2)?;
    let n = psi.grid().len();
    let mut worst = 0.0f64;
    for (node, u) in [(0usize, -1.0), (n - 1, 1.0)] {
        let p = boundary_projector(&alg, &[u], theta)?;
        let b = psi.at(node);
        let pb = p.apply(b);
        let nb = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let r = b.iter().zip(&pb).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
        if nb > 0.0 {
            worst = worst.max(r / nb);
        }
    }
    Ok(worst)
}
