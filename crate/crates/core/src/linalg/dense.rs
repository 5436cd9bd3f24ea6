//! Dense helpers: matrix exponential, Hermitian and general eigenproblems.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};

use crate::error::{Error, Result};
use crate::C64;

/// Padé(13) numerator/denominator coefficients.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Largest 1-norm for which Padé(13) is accurate to double precision.
const THETA13: f64 = 5.371920351148152;

fn norm1(a: &DMatrix<C64>) -> f64 {
    a.column_iter().map(|c| c.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

/// `exp(A)` by scaling and squaring with a Padé(13) approximant.
pub fn expm(a: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let nrm = norm1(a);
    let s = if nrm > THETA13 { (nrm / THETA13).log2().ceil() as i32 } else { 0 };
    let a = a * C64::new(2f64.powi(-s), 0.0);
    let b = |k: usize| C64::new(PADE13[k], 0.0);
    let eye = DMatrix::<C64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * b(13) + &a4 * b(11) + &a2 * b(9))
        + &a6 * b(7)
        + &a4 * b(5)
        + &a2 * b(3)
        + &eye * b(1);
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b(12) + &a4 * b(10) + &a2 * b(8))
        + &a6 * b(6)
        + &a4 * b(4)
        + &a2 * b(2)
        + &eye * b(0);
    let lu = (&v - &u).lu();
    let mut r = lu
        .solve(&(&v + &u))
        .ok_or_else(|| Error::Invariant("Padé denominator is singular".into()))?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen(a: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let sym = (a + a.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_columns(&order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>());
    (values, vectors)
}

pub fn min_hermitian_eigenvalue(a: &DMatrix<C64>) -> f64 {
    let sym = (a + a.adjoint()) * C64::new(0.5, 0.0);
    SymmetricEigen::new(sym).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Eigenvalues and unit-norm right eigenvectors of a general complex matrix,
/// from a complex Schur form `A = Q T Q*` followed by back substitution on `T`.
pub fn general_eigen(a: &DMatrix<C64>) -> Result<(Vec<C64>, DMatrix<C64>)> {
    let n = a.nrows();
    let schur = Schur::try_new(a.clone(), 1e-15, 100 * n.max(10))
        .ok_or_else(|| Error::Eigensolver("Schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();
    let scale = t.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for j in 0..n {
        for i in j + 1..n {
            if t[(i, j)].norm() > 1e-10 * scale {
                return Err(Error::Eigensolver("Schur factor is not triangular".into()));
            }
        }
    }
    let values: Vec<C64> = (0..n).map(|k| t[(k, k)]).collect();
    let small = f64::EPSILON * scale;
    let mut vecs = DMatrix::<C64>::zeros(n, n);
    for k in 0..n {
        let lambda = values[k];
        let mut y = DVector::<C64>::zeros(n);
        y[k] = C64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let s: C64 = (i + 1..=k).map(|j| t[(i, j)] * y[j]).sum();
            let mut d = t[(i, i)] - lambda;
            if d.norm() < small {
                d = C64::new(small, 0.0);
            }
            y[i] = -s / d;
        }
        let v = &q * y;
        let nv = v.norm();
        vecs.set_column(k, &(v / C64::new(nv, 0.0)));
    }
    Ok((values, vecs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn expm_of_diagonal_and_nilpotent() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![c(0.0, 1.0), c(-2.0, 0.0), c(30.0, -5.0)]));
        let e = expm(&d).unwrap();
        for k in 0..3 {
            let want = d[(k, k)].exp();
            assert!((e[(k, k)] - want).norm() < 1e-13 * want.norm());
        }
        // exp([[0, 1], [0, 0]]) = [[1, 1], [0, 1]]
        let n = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let e = expm(&n).unwrap();
        assert!((e[(0, 1)] - c(1.0, 0.0)).norm() < 1e-15);
        assert!((e[(1, 0)]).norm() < 1e-15);
    }

    #[test]
    fn expm_rotation_generator() {
        // exp(-i t σx) = cos t I - i sin t σx, with t large enough to force squaring
        let t = 17.3;
        let a = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -t), c(0.0, -t), c(0.0, 0.0)]);
        let e = expm(&a).unwrap();
        assert!((e[(0, 0)] - c(t.cos(), 0.0)).norm() < 1e-12);
        assert!((e[(0, 1)] - c(0.0, -t.sin())).norm() < 1e-12);
    }

    #[test]
    fn general_eigen_reconstructs() {
        let a = DMatrix::from_row_slice(
            3,
            3,
            &[c(1.0, 0.5), c(2.0, 0.0), c(0.0, 1.0), c(0.0, 0.0), c(-1.0, 0.0), c(3.0, 0.0), c(1.0, -1.0), c(0.0, 0.0), c(2.0, 2.0)],
        );
        let (vals, vecs) = general_eigen(&a).unwrap();
        for k in 0..3 {
            let v = vecs.column(k);
            let r = &a * v - v * vals[k];
            assert!(r.norm() < 1e-12, "residual {}", r.norm());
        }
    }

    #[test]
    fn hermitian_eigen_sorted() {
        let a = DMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)]);
        let (vals, vecs) = hermitian_eigen(&a);
        assert!((vals[0] - 1.0).abs() < 1e-14 && (vals[1] - 3.0).abs() < 1e-14);
        let g = vecs.adjoint() * &vecs;
        assert!((g - DMatrix::identity(2, 2)).norm() < 1e-14);
    }
}
