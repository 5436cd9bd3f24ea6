use nalgebra::DMatrix;

use crate::error::Result;
use crate::linalg::dense::{general_eigen, hermitian_eigen};
use crate::error::Error;
use crate::schrodinger::{normality_defect, OperatorMatrix};
use crate::wave::WaveFunction;
use crate::C64;

/// Eigenvalues of H and the Gram matrix of its unit eigenvectors in the weighted metric.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    /// Sorted by real part, then imaginary part.
    pub eigenvalues: Vec<C64>,
    pub gram: DMatrix<C64>,
    pub max_offdiag_gram: f64,
    pub normality_defect: f64,
    /// `max Im λ / max(1, max |λ|)`.
    pub max_im_scaled: f64,
    /// Whether the Hermitian solver was used.
    pub hermitian: bool,
}

pub fn spectrum_report(h: &OperatorMatrix) -> Result<SpectrumReport> {
    let m = h.orthonormal_dense()?;
    let skew = (&m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let size = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let hermitian = skew <= 1e-14 * size;
    let (mut values, vectors) = if hermitian {
        let (v, u) = hermitian_eigen(&m);
        (v.into_iter().map(|x| C64::new(x, 0.0)).collect::<Vec<_>>(), u)
    } else {
        general_eigen(&m)?
    };
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].re.total_cmp(&values[b].re).then(values[a].im.total_cmp(&values[b].im)));
    values = order.iter().map(|&k| values[k]).collect();
    let vecs = DMatrix::from_columns(&order.iter().map(|&k| vectors.column(k).into_owned()).collect::<Vec<_>>());
    // orthonormal coordinates make the weighted Gram matrix the plain one
    let gram = vecs.adjoint() * &vecs;
    let n = gram.nrows();
    let mut max_offdiag = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                max_offdiag = max_offdiag.max(gram[(i, j)].norm());
            }
        }
    }
    let scale = values.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let max_im = values.iter().map(|z| z.im).fold(f64::NEG_INFINITY, f64::max);
    Ok(SpectrumReport {
        eigenvalues: values,
        gram,
        max_offdiag_gram: max_offdiag,
        normality_defect: normality_defect(h)?,
        max_im_scaled: max_im / scale,
        hermitian,
    })
}

/// Normalised eigenvector number `index` (ascending energy) of the Hermitian
/// part of H. For a reflecting boundary this is an eigenmode of H itself.
pub fn eigenmode(h: &OperatorMatrix, index: usize) -> Result<WaveFunction> {
    let m = h.orthonormal_dense()?;
    let sym = (&m + m.adjoint()) * C64::new(0.5, 0.0);
    let (values, vectors) = hermitian_eigen(&sym);
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let &k = order
        .get(index)
        .ok_or_else(|| Error::Config(format!("initial.eigenmode {index} out of range (dimension {})", values.len())))?;
    let w = h.unknown_weights();
    let data = vectors.column(k).iter().zip(&w).map(|(z, w)| z / w.sqrt()).collect();
    WaveFunction::new(h.grid().clone(), h.spin_dim(), data)?.normalized()
}

impl SpectrumReport {
    pub fn min_im(&self) -> f64 {
        self.eigenvalues.iter().map(|z| z.im).fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_im(&self) -> f64 {
        self.eigenvalues.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }

    pub fn gram_identity_residual(&self) -> f64 {
        let n = self.gram.nrows();
        (&self.gram - DMatrix::<C64>::identity(n, n)).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}
