use std::ops::ControlFlow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{FaceId, Grid};
use crate::propagator::{CnPropagator, StepFluxRecord};
use crate::wave::WaveFunction;
use crate::C64;

use super::distribution::{check_normalized, steps_for_horizon, DetectionDistribution};

/// One detection: when, where and which particle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    /// Step index within the stage that produced the event.
    pub step: usize,
    /// Midpoint time of the step, measured from the start of the whole run.
    pub time: f64,
    /// Index into the operator's flux terms.
    pub cell: usize,
    /// Node of the (possibly multi-particle) grid.
    pub node: usize,
    pub face: FaceId,
    /// Node of the detected particle in the single-particle grid.
    pub position_node: usize,
    /// Coordinates of the detected particle.
    pub position: Vec<f64>,
}

impl DetectionEvent {
    pub(crate) fn new(grid: &Grid, step: usize, time: f64, cell: usize, node: usize, face: FaceId) -> Self {
        let position_node = grid.particle_node(node, face.particle);
        let d = grid.dim();
        let position = grid.coords(node)[face.particle * d..(face.particle + 1) * d].to_vec();
        DetectionEvent { step, time, cell, node, face, position_node, position }
    }

    pub fn particle(&self) -> usize {
        self.face.particle
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    Detected(DetectionEvent),
    NoDetectionWithinHorizon,
}

impl Outcome {
    pub fn event(&self) -> Option<&DetectionEvent> {
        match self {
            Outcome::Detected(e) => Some(e),
            Outcome::NoDetectionWithinHorizon => None,
        }
    }
}

/// Streams masses until the cumulative sum passes `u`. Returns the hit
/// `(step, cell, midpoint)` and the final state.
pub(crate) fn stream_until(
    prop: &CnPropagator,
    psi0: &WaveFunction,
    steps: usize,
    u: f64,
) -> Result<(Option<(usize, usize, Vec<C64>)>, WaveFunction)> {
    let mut acc = 0.0;
    let mut hit = None;
    let mut sink = |n: usize, rec: &StepFluxRecord, mid: &[C64]| {
        for (c, m) in rec.masses.iter().enumerate() {
            acc += m;
            if u < acc {
                hit = Some((n, c, mid.to_vec()));
                return ControlFlow::Break(());
            }
        }
        ControlFlow::Continue(())
    };
    let last = prop.evolve(psi0, steps, &mut sink)?;
    Ok((hit, last))
}

/// Draws one outcome from the streamed distribution by inverse CDF. The
/// uniform variate is the first draw of a ChaCha8 stream seeded with `seed`.
pub fn sample_detection(prop: &CnPropagator, psi0: &WaveFunction, t_max: f64, seed: u64) -> Result<Outcome> {
    check_normalized(psi0)?;
    let steps = steps_for_horizon(t_max, prop.tau())?;
    let u: f64 = ChaCha8Rng::seed_from_u64(seed).random();
    let (hit, _) = stream_until(prop, psi0, steps, u)?;
    let op = prop.operator();
    Ok(match hit {
        Some((n, c, _)) => {
            let f = &op.flux()[c];
            Outcome::Detected(DetectionEvent::new(op.grid(), n, (n as f64 + 0.5) * prop.tau(), c, f.node, f.face))
        }
        None => Outcome::NoDetectionWithinHorizon,
    })
}

impl DetectionDistribution {
    /// Same law and variate convention as [`sample_detection`], on recorded masses.
    pub fn sample(&self, seed: u64) -> Outcome {
        let u: f64 = ChaCha8Rng::seed_from_u64(seed).random();
        match self.locate(u) {
            Some((n, c)) => {
                let (node, face) = self.cells()[c];
                Outcome::Detected(DetectionEvent::new(self.grid(), n, self.step_time(n), c, node, face))
            }
            None => Outcome::NoDetectionWithinHorizon,
        }
    }
}
