use std::ops::ControlFlow;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::dense::min_hermitian_eigenvalue;
use crate::propagator::{CnPropagator, StepFluxRecord};
use crate::schrodinger::DENSE_LIMIT;
use crate::wave::WaveFunction;
use crate::C64;

use super::distribution::steps_for_horizon;

/// Dense POVM of the discrete detection law, in the orthonormal basis
/// `ψ̂ = W^{1/2} ψ` of the weighted space.
///
/// Row `(n, cell, r)` of `J` is `√τ (L_cell ψ_mid,n)_r`, so the probability of a
/// cell is the squared norm of its block of `Jψ̂`.
#[derive(Debug, Clone)]
pub struct DiscretePovm {
    pub j: DMatrix<C64>,
    pub w_t: DMatrix<C64>,
    pub e_inf: DMatrix<C64>,
    /// `(step, cell)` of each row of `J`.
    pub rows: Vec<(usize, usize)>,
    pub steps: usize,
    sqrt_weights: Vec<f64>,
}

/// Builds `J` and the horizon propagator column by column from basis states.
pub fn assemble_j(prop: &CnPropagator, t_max: f64) -> Result<DiscretePovm> {
    let op = prop.operator();
    let dim = op.dim();
    if dim > DENSE_LIMIT {
        return Err(Error::TooLarge { dim, limit: DENSE_LIMIT });
    }
    if op.flux().iter().any(|f| !f.is_absorbing()) {
        return Err(Error::Invariant("the POVM needs absorbing boundary terms".into()));
    }
    let steps = steps_for_horizon(t_max, prop.tau())?;
    let s = op.spin_dim();
    let mut rows = Vec::new();
    for n in 0..steps {
        for (c, f) in op.flux().iter().enumerate() {
            rows.extend(std::iter::repeat_n((n, c), f.gain.nrows()));
        }
    }
    if rows.len().saturating_mul(dim) > DENSE_LIMIT * DENSE_LIMIT * 8 {
        return Err(Error::TooLarge { dim: rows.len(), limit: DENSE_LIMIT * DENSE_LIMIT * 8 / dim });
    }
    let sqrt_weights: Vec<f64> = op.unknown_weights().iter().map(|w| w.sqrt()).collect();
    let mut j = DMatrix::<C64>::zeros(rows.len(), dim);
    let mut w_t = DMatrix::<C64>::zeros(dim, dim);
    let sqrt_tau = prop.tau().sqrt();
    for col in 0..dim {
        let mut data = vec![C64::new(0.0, 0.0); dim];
        data[col] = C64::new(1.0 / sqrt_weights[col], 0.0);
        let basis = WaveFunction::new(op.grid().clone(), s, data)?;
        let mut r = 0;
        let mut sink = |_: usize, _: &StepFluxRecord, mid: &[C64]| {
            for f in op.flux() {
                for a in f.amplitudes(&mid[f.node * s..(f.node + 1) * s]) {
                    j[(r, col)] = a * sqrt_tau;
                    r += 1;
                }
            }
            ControlFlow::Continue(())
        };
        let last = prop.evolve(&basis, steps, &mut sink)?;
        for (k, z) in last.data().iter().enumerate() {
            w_t[(k, col)] = z * sqrt_weights[k];
        }
    }
    let jj = j.adjoint() * &j;
    let e_inf = DMatrix::<C64>::identity(dim, dim) - &jj;
    Ok(DiscretePovm { j, w_t, e_inf, rows, steps, sqrt_weights })
}

fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

impl DiscretePovm {
    pub fn dim(&self) -> usize {
        self.w_t.nrows()
    }

    /// Spectral norm of `J*J + W_T*W_T - I`.
    pub fn completeness_residual(&self) -> f64 {
        let m = self.j.adjoint() * &self.j + self.w_t.adjoint() * &self.w_t - DMatrix::identity(self.dim(), self.dim());
        spectral_norm_hermitian(&m)
    }

    pub fn min_eig_e_inf(&self) -> f64 {
        min_hermitian_eigenvalue(&self.e_inf)
    }

    /// Largest entry of `E_inf - W_T* W_T`.
    pub fn survivor_residual(&self) -> f64 {
        max_abs(&(&self.e_inf - self.w_t.adjoint() * &self.w_t))
    }

    /// `Jψ̂` for a state in node coordinates.
    pub fn amplitudes(&self, psi: &WaveFunction) -> DVector<C64> {
        let x = DVector::from_iterator(self.dim(), psi.data().iter().zip(&self.sqrt_weights).map(|(z, s)| z * s));
        &self.j * x
    }

    /// `⟨ψ, J* P(cell) J ψ⟩` for every (step, cell), indexed `[step][cell]`.
    pub fn cell_probabilities(&self, psi: &WaveFunction, cells: usize) -> Vec<Vec<f64>> {
        let a = self.amplitudes(psi);
        let mut out = vec![vec![0.0; cells]; self.steps];
        for (k, &(n, c)) in self.rows.iter().enumerate() {
            out[n][c] += a[k].norm_sqr();
        }
        out
    }
}

fn spectral_norm_hermitian(m: &DMatrix<C64>) -> f64 {
    let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
    nalgebra::SymmetricEigen::new(sym).eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::record_distribution;
    use crate::grid::{build_grid, DomainSpec};
    use crate::schrodinger::{assemble_schrodinger, BoundaryParams, PotentialField};
    use crate::units::Units;
    use std::sync::Arc;

    fn prop(kappa: f64, n: usize, tau: f64) -> CnPropagator {
        let g = build_grid(&DomainSpec::interval(0.0, 3.0), n).unwrap().into_arc();
        let op = assemble_schrodinger(g.clone(), &PotentialField::zero(&g), &BoundaryParams::absorbing(kappa), Units::default()).unwrap();
        CnPropagator::new(Arc::new(op), tau).unwrap()
    }

    #[test]
    fn sixteen_nodes_complete_and_positive() {
        let p = prop(1.0, 16, 0.05);
        let povm = assemble_j(&p, 64.0 * 0.05).unwrap();
        assert_eq!(povm.steps, 64);
        assert!(povm.completeness_residual() <= 1e-10);
        assert!(povm.min_eig_e_inf() >= -1e-12);
        assert!(povm.survivor_residual() <= 1e-10);
    }

    #[test]
    fn reflecting_gives_identity() {
        let p = prop(0.0, 10, 0.1);
        let povm = assemble_j(&p, 1.0).unwrap();
        assert!(max_abs(&povm.j) == 0.0);
        assert!((povm.min_eig_e_inf() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn cells_match_recorded_masses() {
        let p = prop(1.0, 16, 0.05);
        let g = p.operator().grid().clone();
        let psi = WaveFunction::gaussian(g, &[vec![2.0]], 0.4, &[vec![1.0]]).unwrap().normalized().unwrap();
        let povm = assemble_j(&p, 2.0).unwrap();
        let d = record_distribution(&p, &psi, 2.0).unwrap();
        let probs = povm.cell_probabilities(&psi, d.cells().len());
        for (a, b) in probs.iter().flatten().zip(d.mass().iter().flatten()) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn size_guard() {
        let p = prop(1.0, DENSE_LIMIT + 1, 0.1);
        assert!(matches!(assemble_j(&p, 0.2), Err(Error::TooLarge { .. })));
    }
}
