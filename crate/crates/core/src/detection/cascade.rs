use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::propagator::CnPropagator;
use crate::schrodinger::{assemble_schrodinger, BoundaryParams, PotentialSpec};
use crate::units::Units;
use crate::wave::WaveFunction;

use super::collapse::collapse_with_norm;
use super::distribution::{check_normalized, steps_for_horizon};
use super::sampling::{stream_until, DetectionEvent};

/// One propagator per particle count: `stages[k - 1]` evolves k particles.
#[derive(Debug, Clone)]
pub struct CascadeSetup {
    stages: Vec<Arc<CnPropagator>>,
}

impl CascadeSetup {
    /// Builds Schrödinger stages on `base` with the k-particle potential `potentials[k - 1]`.
    pub fn schrodinger(
        base: &Grid,
        particles: usize,
        potentials: &[PotentialSpec],
        boundary: &BoundaryParams,
        units: Units,
        tau: f64,
    ) -> Result<Self> {
        if particles == 0 {
            return Err(Error::Config("a cascade needs at least one particle".into()));
        }
        if potentials.len() != particles {
            return Err(Error::Config(format!(
                "cascade needs one potential per particle count: got {} for {} particles",
                potentials.len(),
                particles
            )));
        }
        let stages = (1..=particles)
            .map(|k| {
                let g = base.with_particles(k).into_arc();
                let v = potentials[k - 1].sample(&g, &units)?;
                let op = assemble_schrodinger(g, &v, boundary, units)?;
                Ok(Arc::new(CnPropagator::new(Arc::new(op), tau)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_stages(stages)
    }

    pub fn from_stages(stages: Vec<Arc<CnPropagator>>) -> Result<Self> {
        for (k, s) in stages.iter().enumerate() {
            if s.operator().grid().particle_count() != k + 1 {
                return Err(Error::Config(format!("stage {} does not evolve {} particles", k, k + 1)));
            }
            if (s.tau() - stages[0].tau()).abs() > 0.0 {
                return Err(Error::Config("all cascade stages must share one time step".into()));
            }
        }
        if stages.is_empty() {
            return Err(Error::Config("a cascade needs at least one stage".into()));
        }
        Ok(CascadeSetup { stages })
    }

    pub fn particles(&self) -> usize {
        self.stages.len()
    }

    pub fn stage(&self, particles: usize) -> &Arc<CnPropagator> {
        &self.stages[particles - 1]
    }

    pub fn tau(&self) -> f64 {
        self.stages[0].tau()
    }
}

/// One realisation of the detect-collapse-continue process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeResult {
    pub seed: u64,
    /// Detections in time order; `events[k]` happened on the (N-k)-particle grid.
    pub events: Vec<DetectionEvent>,
    /// `1 / ||slice||_w` of each collapse.
    pub normalizations: Vec<f64>,
    /// Norm² of the last evolved stage at the horizon (0 if every particle was detected).
    pub survivor_mass: f64,
    pub truncated: bool,
}

/// Runs the cascade from `psi0` on the N-particle stage. Each stage draws one
/// uniform variate from a single ChaCha8 stream seeded with `seed`.
pub fn cascade_run(setup: &CascadeSetup, psi0: &WaveFunction, t_max: f64, seed: u64) -> Result<CascadeResult> {
    check_normalized(psi0)?;
    let n = psi0.grid().particle_count();
    if n != setup.particles() {
        return Err(Error::DimensionMismatch(format!("state has {n} particles, setup {}", setup.particles())));
    }
    let tau = setup.tau();
    let horizon = steps_for_horizon(t_max, tau)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::new();
    let mut normalizations = Vec::new();
    let mut state = psi0.clone();
    let mut offset = 0usize;
    for k in (1..=n).rev() {
        let prop = setup.stage(k);
        let u: f64 = rng.random();
        let (hit, last) = stream_until(prop, &state, horizon - offset, u)?;
        let Some((step, cell, mid)) = hit else {
            return Ok(CascadeResult { seed, events, normalizations, survivor_mass: last.norm_sqr(), truncated: true });
        };
        let op = prop.operator();
        let f = &op.flux()[cell];
        let event = DetectionEvent::new(op.grid(), step, ((offset + step) as f64 + 0.5) * tau, cell, f.node, f.face);
        offset += step + 1;
        if k > 1 {
            let mid = WaveFunction::new(op.grid().clone(), op.spin_dim(), mid)?;
            let (next, norm) = collapse_with_norm(&mid, event.particle(), event.position_node)?;
            normalizations.push(1.0 / norm);
            state = next;
        }
        events.push(event);
    }
    Ok(CascadeResult { seed, events, normalizations, survivor_mass: 0.0, truncated: false })
}

/// Runs `runs` cascades with seeds `seed, seed + 1, …` on up to `jobs`
/// threads. Results are in seed order whatever the thread count.
pub fn cascade_batch(setup: &CascadeSetup, psi0: &WaveFunction, t_max: f64, seed: u64, runs: usize, jobs: usize) -> Result<Vec<CascadeResult>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        (0..runs as u64)
            .into_par_iter()
            .map(|r| cascade_run(setup, psi0, t_max, seed.wrapping_add(r)))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::sample_detection;
    use crate::detection::Outcome;
    use crate::grid::{build_grid, DomainSpec};

    fn base() -> Grid {
        build_grid(&DomainSpec::interval(0.0, 4.0), 21).unwrap()
    }

    fn zero(n: usize) -> Vec<PotentialSpec> {
        vec![PotentialSpec::Zero; n]
    }

    #[test]
    fn single_particle_matches_plain_sampling() {
        let b = base();
        let setup = CascadeSetup::schrodinger(&b, 1, &zero(1), &BoundaryParams::absorbing(1.0), Units::default(), 0.05).unwrap();
        let psi = WaveFunction::gaussian(b.into_arc(), &[vec![2.0]], 0.5, &[vec![1.0]]).unwrap().normalized().unwrap();
        for seed in 0..30 {
            let run = cascade_run(&setup, &psi, 3.0, seed).unwrap();
            match sample_detection(setup.stage(1), &psi, 3.0, seed).unwrap() {
                Outcome::Detected(e) => assert_eq!(run.events, vec![e]),
                Outcome::NoDetectionWithinHorizon => assert!(run.events.is_empty() && run.truncated),
            }
        }
    }

    #[test]
    fn reflecting_pair_never_detects() {
        let b = base();
        let setup = CascadeSetup::schrodinger(&b, 2, &zero(2), &BoundaryParams::absorbing(0.0), Units::default(), 0.05).unwrap();
        let g = b.with_particles(2).into_arc();
        let psi = WaveFunction::gaussian(g, &[vec![1.5], vec![2.5]], 0.5, &[vec![1.0], vec![-1.0]]).unwrap().normalized().unwrap();
        for seed in 0..5 {
            let r = cascade_run(&setup, &psi, 2.0, seed).unwrap();
            assert!(r.events.is_empty() && r.truncated);
            assert!((r.survivor_mass - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pair_events_are_ordered_and_reproducible() {
        let b = base();
        let setup = CascadeSetup::schrodinger(&b, 2, &zero(2), &BoundaryParams::absorbing(1.0), Units::default(), 0.05).unwrap();
        let g = b.with_particles(2).into_arc();
        let psi = WaveFunction::gaussian(g, &[vec![1.0], vec![3.0]], 0.4, &[vec![-1.0], vec![1.0]]).unwrap().normalized().unwrap();
        let mut full = 0;
        for seed in 0..40 {
            let r = cascade_run(&setup, &psi, 8.0, seed).unwrap();
            assert_eq!(r, cascade_run(&setup, &psi, 8.0, seed).unwrap());
            if r.events.len() == 2 {
                full += 1;
                assert!(r.events[1].time > r.events[0].time);
                assert_eq!(r.normalizations.len(), 1);
                assert!(r.events[1].face.particle == 0);
            }
        }
        assert!(full > 0);
        let serial = cascade_batch(&setup, &psi, 8.0, 7, 12, 1).unwrap();
        assert_eq!(serial, cascade_batch(&setup, &psi, 8.0, 7, 12, 4).unwrap());
        assert_eq!(serial[3], cascade_run(&setup, &psi, 8.0, 10).unwrap());
        assert!(CascadeSetup::schrodinger(&b, 2, &zero(1), &BoundaryParams::absorbing(1.0), Units::default(), 0.05).is_err());
    }
}
