//! Crank–Nicolson time stepping and a dense exponential reference.
//!
//! One step is the Cayley transform `(I + iτH/2ħ)⁻¹ (I - iτH/2ħ)`. With
//! `ψ_mid = (ψ_n + ψ_{n+1})/2` it satisfies, exactly,
//! `||ψ_{n+1}||² - ||ψ_n||² = (2τ/ħ) Im<ψ_mid, Hψ_mid>`, so charging the
//! outflow of `ψ_mid` over the step makes the flux bookkeeping exact, and a
//! dissipative H gives a contraction for every τ > 0.

use std::ops::ControlFlow;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::dense::expm;
use crate::linalg::{BandedLu, CsrMatrix};
use crate::schrodinger::{OperatorMatrix, DENSE_LIMIT};
use crate::wave::WaveFunction;
use crate::C64;

/// Probability charged to each flux term of the operator during one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFluxRecord {
    /// `τ ψ_mid,b† M_b ψ_mid,b`, indexed like `OperatorMatrix::flux()`.
    pub masses: Vec<f64>,
    pub total: f64,
    pub norm_sqr_before: f64,
    pub norm_sqr_after: f64,
}

impl StepFluxRecord {
    /// `|Δ||ψ||² - Σ mass|`.
    pub fn balance_residual(&self) -> f64 {
        ((self.norm_sqr_before - self.norm_sqr_after) - self.total).abs()
    }
}

/// Receives every step's flux record and midpoint state; may stop the evolution.
pub trait FluxSink {
    fn on_step(&mut self, step: usize, record: &StepFluxRecord, midpoint: &[C64]) -> ControlFlow<()>;
}

impl<F> FluxSink for F
where
    F: FnMut(usize, &StepFluxRecord, &[C64]) -> ControlFlow<()>,
{
    fn on_step(&mut self, step: usize, record: &StepFluxRecord, midpoint: &[C64]) -> ControlFlow<()> {
        self(step, record, midpoint)
    }
}

/// Discards everything.
pub struct NullSink;

impl FluxSink for NullSink {
    fn on_step(&mut self, _: usize, _: &StepFluxRecord, _: &[C64]) -> ControlFlow<()> {
        ControlFlow::Continue(())
    }
}

/// Keeps every record.
#[derive(Default)]
pub struct RecordCollector(pub Vec<StepFluxRecord>);

impl FluxSink for RecordCollector {
    fn on_step(&mut self, _: usize, record: &StepFluxRecord, _: &[C64]) -> ControlFlow<()> {
        self.0.push(record.clone());
        ControlFlow::Continue(())
    }
}

/// Crank–Nicolson stepper with a factorisation reused across steps.
#[derive(Debug, Clone)]
pub struct CnPropagator {
    op: Arc<OperatorMatrix>,
    tau: f64,
    implicit: BandedLu,
    explicit: CsrMatrix,
}

impl CnPropagator {
    pub fn new(op: Arc<OperatorMatrix>, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Config(format!("time step must be positive, got {tau}")));
        }
        let a = C64::new(0.0, tau / (2.0 * op.units().hbar));
        let one = C64::new(1.0, 0.0);
        let implicit = BandedLu::factor(&op.matrix().shifted(one, a))?;
        let explicit = op.matrix().shifted(one, -a);
        Ok(CnPropagator { op, tau, implicit, explicit })
    }

    pub fn operator(&self) -> &Arc<OperatorMatrix> {
        &self.op
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    fn check(&self, psi: &WaveFunction) -> Result<()> {
        if psi.data().len() != self.op.dim() || !psi.is_on(self.op.grid()) {
            return Err(Error::DimensionMismatch("wave function is not on the operator's grid".into()));
        }
        Ok(())
    }

    /// Advances `state` by one step; `mid` receives the midpoint state.
    pub fn step_in_place(&self, state: &mut [C64], scratch: &mut [C64], mid: &mut [C64]) -> StepFluxRecord {
        let grid = self.op.grid();
        let before = grid.norm_sqr(state);
        self.explicit.mul_vec_into(state, scratch);
        self.implicit.solve_in_place(scratch);
        for ((m, s), n) in mid.iter_mut().zip(state.iter()).zip(scratch.iter()) {
            *m = (s + n) * 0.5;
        }
        state.copy_from_slice(scratch);
        let after = grid.norm_sqr(state);
        let sd = self.op.spin_dim();
        let masses: Vec<f64> = self
            .op
            .flux()
            .iter()
            .map(|f| self.tau * f.outflow(&mid[f.node * sd..(f.node + 1) * sd]))
            .collect();
        let total = masses.iter().sum();
        StepFluxRecord { masses, total, norm_sqr_before: before, norm_sqr_after: after }
    }

    pub fn cn_step(&self, psi: &WaveFunction) -> Result<(WaveFunction, StepFluxRecord)> {
        self.check(psi)?;
        let mut state = psi.data().to_vec();
        let mut scratch = vec![C64::new(0.0, 0.0); state.len()];
        let mut mid = scratch.clone();
        let rec = self.step_in_place(&mut state, &mut scratch, &mut mid);
        Ok((WaveFunction::new(psi.grid().clone(), psi.spin_dim(), state)?, rec))
    }

    /// Applies `n_steps` steps, streaming each record to `sink`. Stops early
    /// (returning the state after that step) if the sink breaks.
    pub fn evolve(&self, psi0: &WaveFunction, n_steps: usize, sink: &mut dyn FluxSink) -> Result<WaveFunction> {
        self.check(psi0)?;
        let mut state = psi0.data().to_vec();
        let mut scratch = vec![C64::new(0.0, 0.0); state.len()];
        let mut mid = scratch.clone();
        for step in 0..n_steps {
            let rec = self.step_in_place(&mut state, &mut scratch, &mut mid);
            if sink.on_step(step, &rec, &mid).is_break() {
                break;
            }
        }
        WaveFunction::new(psi0.grid().clone(), psi0.spin_dim(), state)
    }
}

/// `exp(-iHt/ħ) ψ0`, computed densely in the orthonormal basis of the weighted space.
pub fn expm_oracle(h: &OperatorMatrix, t: f64, psi0: &WaveFunction) -> Result<WaveFunction> {
    if h.dim() > DENSE_LIMIT {
        return Err(Error::TooLarge { dim: h.dim(), limit: DENSE_LIMIT });
    }
    let m = h.orthonormal_dense()?;
    let e = expm(&(m * C64::new(0.0, -t / h.units().hbar)))?;
    let sw: Vec<f64> = h.unknown_weights().iter().map(|w| w.sqrt()).collect();
    let x = DVector::from_iterator(sw.len(), psi0.data().iter().zip(&sw).map(|(z, s)| z * s));
    let y = e * x;
    let data = y.iter().zip(&sw).map(|(z, s)| z / s).collect();
    WaveFunction::new(psi0.grid().clone(), psi0.spin_dim(), data)
}
