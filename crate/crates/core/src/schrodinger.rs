//! Discrete Schrödinger Hamiltonian with the absorbing boundary condition
//! `∂ψ/∂n = (ν + iκ) ψ` folded into the boundary rows.
//!
//! Interior rows carry the centred second difference. At a boundary node the
//! stencil reaches one ghost node outside the domain; the centred normal
//! derivative `(ψ_ghost - ψ_inner)/(2h) = (ν + iκ) ψ_b` fixes the ghost value,
//! which is substituted back. Per axis and face this gives the row
//!
//! ```text
//! (Hψ)_b = (ħ²/2m) [ (2/h² - 2(ν + iκ)/h) ψ_b - (2/h²) ψ_inner ] + V_b ψ_b
//! ```
//!
//! With trapezoidal weights (half weight `h/2` on the boundary node) the
//! weighted form `W H` is Hermitian apart from the diagonal term
//! `-i κ (ħ²/2m) w_b` per face entry, where `w_b` is the trapezoidal surface
//! weight. Hence, exactly and for every grid vector,
//!
//! ```text
//! Im <ψ, Hψ>_w = -(ħ/2) Σ_b (ħκ/m) w_b |ψ_b|²,
//! ```
//!
//! i.e. the scheme weight equals the surface quadrature weight at every
//! resolution, and the outflow coefficient is `c_b = (ħκ/m) w_b`.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FaceId, Grid, Side};
use crate::linalg::{CsrMatrix, Triplets};
use crate::units::Units;
use crate::C64;

/// Largest dimension for which dense diagnostics are attempted.
pub const DENSE_LIMIT: usize = 2000;

/// Potential sampled on the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialField {
    Scalar(Vec<f64>),
    /// Hermitian `k x k` matrix per node (Dirac potentials).
    Matrix(Vec<DMatrix<C64>>),
}

impl PotentialField {
    pub fn zero(grid: &Grid) -> Self {
        PotentialField::Scalar(vec![0.0; grid.len()])
    }

    pub fn len(&self) -> usize {
        match self {
            PotentialField::Scalar(v) => v.len(),
            PotentialField::Matrix(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PotentialField::Scalar(v) => match v.iter().position(|x| !x.is_finite()) {
                Some(n) => Err(Error::NonFinitePotential(n)),
                None => Ok(()),
            },
            PotentialField::Matrix(ms) => {
                for (n, m) in ms.iter().enumerate() {
                    if m.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                        return Err(Error::NonFinitePotential(n));
                    }
                    if !m.is_square() || (m - m.adjoint()).norm() > 1e-14 * (1.0 + m.norm()) {
                        return Err(Error::NonHermitianPotential(n));
                    }
                }
                Ok(())
            }
        }
    }
}

/// Named potential built-ins, or node values read from a CSV column `value`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PotentialSpec {
    #[default]
    Zero,
    Constant { value: f64 },
    /// `Σ_i ½ m ω² |x_i - center|²`.
    Harmonic {
        omega: f64,
        #[serde(default)]
        center: Vec<f64>,
    },
    /// `height` wherever a particle's first coordinate lies in `[lower, upper]`.
    Barrier { lower: f64, upper: f64, height: f64 },
    /// `height` wherever a particle's first coordinate is `>= position`.
    Step { position: f64, height: f64 },
    Csv { path: std::path::PathBuf },
}

impl PotentialSpec {
    pub fn sample(&self, grid: &Grid, units: &Units) -> Result<PotentialField> {
        let d = grid.dim();
        let per_particle = |f: &dyn Fn(&[f64]) -> f64| -> Vec<f64> {
            (0..grid.len())
                .map(|n| {
                    let x = grid.coords(n);
                    x.chunks(d).map(f).sum()
                })
                .collect()
        };
        let values = match self {
            PotentialSpec::Zero => vec![0.0; grid.len()],
            PotentialSpec::Constant { value } => vec![*value; grid.len()],
            PotentialSpec::Harmonic { omega, center } => {
                let center = if center.is_empty() { vec![0.0; d] } else { center.clone() };
                if center.len() != d {
                    return Err(Error::Config(format!("potential.center needs {d} entries")));
                }
                let k = 0.5 * units.mass * omega * omega;
                per_particle(&|x| k * x.iter().zip(&center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>())
            }
            PotentialSpec::Barrier { lower, upper, height } => {
                per_particle(&|x| if x[0] >= *lower && x[0] <= *upper { *height } else { 0.0 })
            }
            PotentialSpec::Step { position, height } => {
                per_particle(&|x| if x[0] >= *position { *height } else { 0.0 })
            }
            PotentialSpec::Csv { path } => {
                let mut rdr = csv::Reader::from_path(path)?;
                let col = rdr
                    .headers()?
                    .iter()
                    .position(|h| h.trim() == "value")
                    .ok_or_else(|| Error::Config(format!("{}: no 'value' column", path.display())))?;
                let mut v = Vec::with_capacity(grid.len());
                for rec in rdr.records() {
                    let rec = rec?;
                    let field = rec.get(col).unwrap_or("").trim();
                    v.push(field.parse::<f64>().map_err(|_| {
                        Error::Config(format!("{}: bad potential value '{field}'", path.display()))
                    })?);
                }
                if v.len() != grid.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "{} potential values for {} nodes",
                        v.len(),
                        grid.len()
                    )));
                }
                v
            }
        };
        let field = PotentialField::Scalar(values);
        field.validate()?;
        Ok(field)
    }
}

/// Per-face override of the boundary parameters. `particle = None` applies to
/// the matching face of every particle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceOverride {
    #[serde(default)]
    pub particle: Option<usize>,
    pub axis: usize,
    pub side: Side,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub nu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoundaryParams {
    pub kappa: f64,
    pub nu: f64,
    pub overrides: Vec<FaceOverride>,
    /// Permit κ < 0. The resulting evolution is emitting and not covered by
    /// the contraction results; used for adjoint checks.
    pub allow_emitting: bool,
}

impl BoundaryParams {
    pub fn absorbing(kappa: f64) -> Self {
        BoundaryParams { kappa, ..Default::default() }
    }

    pub fn robin(kappa: f64, nu: f64) -> Self {
        BoundaryParams { kappa, nu, ..Default::default() }
    }

    pub fn with_face(mut self, o: FaceOverride) -> Self {
        self.overrides.push(o);
        self
    }

    pub fn emitting(mut self) -> Self {
        self.allow_emitting = true;
        self
    }

    /// `(κ, ν)` in effect on `face`; the last matching override wins.
    pub fn for_face(&self, face: FaceId) -> (f64, f64) {
        let mut out = (self.kappa, self.nu);
        for o in &self.overrides {
            if o.axis == face.axis && o.side == face.side && o.particle.is_none_or(|p| p == face.particle) {
                if let Some(k) = o.kappa {
                    out.0 = k;
                }
                if let Some(n) = o.nu {
                    out.1 = n;
                }
            }
        }
        out
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        for e in grid.boundary() {
            let (k, n) = self.for_face(e.face);
            if !(k.is_finite() && n.is_finite()) {
                return Err(Error::Config(format!("non-finite boundary parameters on {}", e.face)));
            }
            if k < 0.0 && !self.allow_emitting {
                return Err(Error::EmittingBoundary { kappa: k, face: e.face.to_string() });
            }
        }
        Ok(())
    }
}

/// Outflow density at a boundary entry, `ψ_b† M ψ_b` per unit time, stored in
/// factored form `M = sign · L† L`. `sign` is negative only for emitting faces.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxTerm {
    /// Index into `grid.boundary()` for Schrödinger operators; boundary node
    /// ordinal for Dirac operators.
    pub entry: usize,
    pub node: usize,
    pub face: FaceId,
    pub gain: DMatrix<C64>,
    pub sign: f64,
}

impl FluxTerm {
    /// Scalar term with density `c`.
    pub fn scalar(entry: usize, node: usize, face: FaceId, c: f64) -> Self {
        let sign = if c < 0.0 { -1.0 } else { 1.0 };
        FluxTerm { entry, node, face, gain: DMatrix::from_element(1, 1, C64::new(c.abs().sqrt(), 0.0)), sign }
    }

    /// `ψ_b† M ψ_b`; never negative when `sign > 0`.
    pub fn outflow(&self, psi_b: &[C64]) -> f64 {
        self.sign * self.amplitudes(psi_b).iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    /// `L ψ_b`.
    pub fn amplitudes(&self, psi_b: &[C64]) -> Vec<C64> {
        (0..self.gain.nrows())
            .map(|r| (0..self.gain.ncols()).map(|c| self.gain[(r, c)] * psi_b[c]).sum())
            .collect()
    }

    pub fn density(&self) -> DMatrix<C64> {
        self.gain.adjoint() * &self.gain * C64::new(self.sign, 0.0)
    }

    pub fn is_absorbing(&self) -> bool {
        self.sign > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Equation {
    Schrodinger,
    Dirac,
}

/// Sparse non-Hermitian Hamiltonian with its grid metric and boundary flux functional.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    grid: Arc<Grid>,
    spin_dim: usize,
    matrix: CsrMatrix,
    flux: Vec<FluxTerm>,
    units: Units,
    equation: Equation,
}

pub fn assemble_schrodinger(
    grid: Arc<Grid>,
    potential: &PotentialField,
    bp: &BoundaryParams,
    units: Units,
) -> Result<OperatorMatrix> {
    let v = match potential {
        PotentialField::Scalar(v) => v,
        PotentialField::Matrix(_) => {
            return Err(Error::DimensionMismatch("Schrödinger potentials are scalar".into()))
        }
    };
    potential.validate()?;
    if v.len() != grid.len() {
        return Err(Error::DimensionMismatch(format!("{} potential values for {} nodes", v.len(), grid.len())));
    }
    bp.validate(&grid)?;

    let kin = units.kinetic();
    let n = grid.len();
    let d = grid.dim();
    let mut t = Triplets::new(n);
    let face_param = |a: usize, side: Side| -> C64 {
        let face = FaceId { particle: a / d, axis: a % d, side };
        let (kappa, nu) = bp.for_face(face);
        C64::new(nu, kappa)
    };
    for node in 0..n {
        let idx = grid.multi_index(node);
        t.add(node, node, C64::new(v[node], 0.0));
        for (a, ax) in grid.axes().iter().enumerate() {
            let h = ax.spacing;
            let s = grid.strides()[a];
            let tk = kin / (h * h);
            let i = idx[a];
            if i == 0 || i + 1 == ax.nodes {
                let (side, inner) = if i == 0 { (Side::Lower, node + s) } else { (Side::Upper, node - s) };
                let beta = face_param(a, side);
                t.add(node, node, C64::new(2.0 * tk, 0.0) - beta * (2.0 * kin / h));
                t.add(node, inner, C64::new(-2.0 * tk, 0.0));
            } else {
                t.add(node, node, C64::new(2.0 * tk, 0.0));
                t.add(node, node - s, C64::new(-tk, 0.0));
                t.add(node, node + s, C64::new(-tk, 0.0));
            }
        }
    }
    let flux = grid
        .boundary()
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let (kappa, _) = bp.for_face(e.face);
            FluxTerm::scalar(k, e.node, e.face, units.hbar * kappa / units.mass * e.surface_weight)
        })
        .collect();
    Ok(OperatorMatrix { grid, spin_dim: 1, matrix: t.build(), flux, units, equation: Equation::Schrodinger })
}

impl OperatorMatrix {
    pub fn from_parts(
        grid: Arc<Grid>,
        spin_dim: usize,
        matrix: CsrMatrix,
        flux: Vec<FluxTerm>,
        units: Units,
        equation: Equation,
    ) -> Self {
        assert_eq!(matrix.dim(), grid.len() * spin_dim);
        OperatorMatrix { grid, spin_dim, matrix, flux, units, equation }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn spin_dim(&self) -> usize {
        self.spin_dim
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn flux(&self) -> &[FluxTerm] {
        &self.flux
    }

    pub fn units(&self) -> &Units {
        &self.units
    }

    pub fn equation(&self) -> Equation {
        self.equation
    }

    /// Quadrature weight of every unknown (node weight repeated per component).
    pub fn unknown_weights(&self) -> Vec<f64> {
        self.grid.weights().iter().flat_map(|&w| std::iter::repeat_n(w, self.spin_dim)).collect()
    }

    pub fn apply(&self, psi: &[C64]) -> Vec<C64> {
        self.matrix.mul_vec(psi)
    }

    pub fn inner(&self, a: &[C64], b: &[C64]) -> C64 {
        self.grid.inner(a, b)
    }

    pub fn norm_sqr(&self, a: &[C64]) -> f64 {
        self.grid.norm_sqr(a)
    }

    /// Total outflow `Σ_b ψ_b† M_b ψ_b`.
    pub fn outflow(&self, psi: &[C64]) -> f64 {
        let s = self.spin_dim;
        self.flux.iter().map(|f| f.outflow(&psi[f.node * s..(f.node + 1) * s])).sum()
    }

    /// Hermitian matrix `S = (WH - (WH)*)/(2i)`, so that `Im<ψ, Hψ>_w = ψ* S ψ`.
    ///
    /// Forming the skew part entrywise first keeps the cancellation of the
    /// Hermitian part exact instead of leaving it to the quadratic form.
    pub fn dissipation_form(&self) -> CsrMatrix {
        let w = self.unknown_weights();
        let m = self.matrix.map(|r, _, v| v * w[r]);
        let mt = m.conj_transpose();
        let mut t = Triplets::new(m.dim());
        let half_i = C64::new(0.0, -0.5);
        for (r, c, v) in m.iter() {
            t.add(r, c, v * half_i);
        }
        for (r, c, v) in mt.iter() {
            t.add(r, c, -v * half_i);
        }
        t.build()
    }

    /// `Im<ψ, Hψ>_w` evaluated directly on `Hψ` (no skew splitting).
    pub fn im_expectation(&self, psi: &[C64]) -> f64 {
        self.inner(psi, &self.apply(psi)).im
    }

    /// Dense `W^{1/2} H W^{-1/2}`, the matrix of H in an orthonormal basis of the weighted space.
    pub fn orthonormal_dense(&self) -> Result<DMatrix<C64>> {
        let n = self.dim();
        if n > DENSE_LIMIT {
            return Err(Error::TooLarge { dim: n, limit: DENSE_LIMIT });
        }
        let sw: Vec<f64> = self.unknown_weights().iter().map(|w| w.sqrt()).collect();
        let mut m = DMatrix::zeros(n, n);
        for (r, c, v) in self.matrix.iter() {
            m[(r, c)] = v * (sw[r] / sw[c]);
        }
        Ok(m)
    }
}

/// Adjoint in the weighted inner product, `H† = W⁻¹ H* W`.
pub fn weighted_adjoint(h: &OperatorMatrix) -> OperatorMatrix {
    let w = h.unknown_weights();
    let matrix = h.matrix.conj_transpose().map(|r, c, v| v * (w[c] / w[r]));
    let flux = h
        .flux
        .iter()
        .map(|f| FluxTerm { sign: -f.sign, ..f.clone() })
        .collect();
    OperatorMatrix { matrix, flux, ..h.clone() }
}

/// Residual of the discrete flux identity `Im<ψ,Hψ>_w = -(ħ/2) Σ_b ψ_b† M_b ψ_b`,
/// maximised over the probes and relative to `||ψ||²_w`.
pub fn dissipativity_defect(h: &OperatorMatrix, probes: &[Vec<C64>]) -> Result<f64> {
    if probes.is_empty() {
        return Err(Error::EmptyProbes);
    }
    let s = h.dissipation_form();
    let half_hbar = 0.5 * h.units.hbar;
    let mut worst = 0.0f64;
    for (k, psi) in probes.iter().enumerate() {
        if psi.len() != h.dim() {
            return Err(Error::DimensionMismatch(format!("probe {k} has length {}", psi.len())));
        }
        let nrm = h.norm_sqr(psi);
        if nrm == 0.0 {
            return Err(Error::ZeroProbe(k));
        }
        let im: f64 = psi.iter().zip(s.mul_vec(psi)).map(|(a, b)| (a.conj() * b).re).sum();
        worst = worst.max((im + half_hbar * h.outflow(psi)).abs() / nrm);
    }
    Ok(worst)
}

/// `||Ĥ Ĥ* - Ĥ* Ĥ||_F / ||Ĥ||²_F` with `Ĥ` the orthonormal-basis matrix of H.
pub fn normality_defect(h: &OperatorMatrix) -> Result<f64> {
    let m = h.orthonormal_dense()?;
    let ma = m.adjoint();
    let comm = &m * &ma - &ma * &m;
    let nf = m.norm();
    if nf == 0.0 {
        return Ok(0.0);
    }
    Ok(comm.norm() / (nf * nf))
}
