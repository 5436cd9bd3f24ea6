//! Timed evolution cases that double as an invariant sweep.
//!
//! Each case assembles an operator, evolves a seeded random state and reports
//! wall time next to the worst contraction, flux-balance, dissipativity and
//! (optionally) POVM residuals seen. Timings vary between runs; residuals do not.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detection::assemble_j;
use crate::dirac::{assemble_dirac_1d, project_boundary};
use crate::error::{Error, Result};
use crate::grid::{build_grid, DomainSpec};
use crate::propagator::{CnPropagator, StepFluxRecord};
use crate::schrodinger::{assemble_schrodinger, dissipativity_defect, BoundaryParams, PotentialField};
use crate::units::Units;
use crate::wave::WaveFunction;
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BenchEquation {
    #[default]
    Schrodinger,
    Dirac,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchCase {
    pub name: String,
    #[serde(default)]
    pub equation: BenchEquation,
    pub nodes: usize,
    #[serde(default = "one")]
    pub particles: usize,
    #[serde(default = "unit_extent")]
    pub extent: (f64, f64),
    #[serde(default = "unit_kappa")]
    pub kappa: f64,
    #[serde(default)]
    pub theta: f64,
    #[serde(default)]
    pub mass: f64,
    pub tau: f64,
    pub steps: usize,
    /// Horizon, in steps, of an optional POVM completeness check.
    #[serde(default)]
    pub povm_steps: Option<usize>,
    #[serde(default = "default_probes")]
    pub probes: usize,
}

fn one() -> usize {
    1
}

fn unit_extent() -> (f64, f64) {
    (0.0, 10.0)
}

fn unit_kappa() -> f64 {
    1.0
}

fn default_probes() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "BenchConfig::default_cases")]
    pub cases: Vec<BenchCase>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { seed: 0, cases: Self::default_cases() }
    }
}

impl BenchConfig {
    pub fn default_cases() -> Vec<BenchCase> {
        let case = |name: &str, nodes, particles, steps, tau| BenchCase {
            name: name.into(),
            equation: BenchEquation::Schrodinger,
            nodes,
            particles,
            extent: unit_extent(),
            kappa: 1.0,
            theta: 0.0,
            mass: 0.0,
            tau,
            steps,
            povm_steps: None,
            probes: default_probes(),
        };
        vec![
            case("interval-1024", 1024, 1, 10_000, 0.005),
            case("pair-64x64", 64, 2, 1000, 0.01),
            BenchCase { povm_steps: Some(64), extent: (0.0, 3.0), ..case("povm-16", 16, 1, 64, 0.05) },
            BenchCase { equation: BenchEquation::Dirac, theta: 0.5, mass: 1.0, ..case("dirac-200", 200, 1, 1000, 0.01) },
        ]
    }

    /// Parses TOML; errors carry the line and column.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: BenchConfig = toml::from_str(text).map_err(|e| Error::Config(format!("bench config: {e}")))?;
        for c in &cfg.cases {
            if !(c.tau > 0.0) || c.nodes < 3 || c.particles == 0 {
                return Err(Error::Config(format!("bench case '{}': need tau > 0, nodes >= 3, particles >= 1", c.name)));
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// Largest relative norm increase over one step (≤ 0 means contraction).
    pub contraction: f64,
    /// Largest per-step `|Δ||ψ||² - Σ mass|`.
    pub flux_balance: f64,
    /// `|J*J + W_T*W_T - I|` when requested.
    pub povm: Option<f64>,
    pub dissipativity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub case: String,
    pub n_nodes: usize,
    pub n_steps: usize,
    pub wall_ms: f64,
    pub step_ms: f64,
    pub assembly_ms: f64,
    pub residuals: Residuals,
}

impl BenchReport {
    /// Same tolerances as the test suite.
    pub fn within_tolerances(&self) -> bool {
        let r = &self.residuals;
        r.contraction <= 1e-13 && r.flux_balance <= 1e-12 && r.dissipativity <= 1e-12 && r.povm.is_none_or(|p| p <= 1e-10)
    }
}

fn random_data(len: usize, rng: &mut ChaCha8Rng) -> Vec<C64> {
    (0..len).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
}

pub fn run_case(case: &BenchCase, seed: u64) -> Result<BenchReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = if case.particles == 1 {
        DomainSpec::interval(case.extent.0, case.extent.1)
    } else {
        DomainSpec::product(&[case.extent], case.particles)
    };
    let start = Instant::now();
    let grid = build_grid(&spec, case.nodes)?.into_arc();
    let units = Units::default();
    let op = match case.equation {
        BenchEquation::Schrodinger => {
            assemble_schrodinger(grid.clone(), &PotentialField::zero(&grid), &BoundaryParams::absorbing(case.kappa), units)?
        }
        BenchEquation::Dirac => assemble_dirac_1d(grid.clone(), case.mass, &PotentialField::zero(&grid), case.theta, units)?,
    };
    let prop = CnPropagator::new(Arc::new(op), case.tau)?;
    let assembly_ms = start.elapsed().as_secs_f64() * 1e3;

    let op = prop.operator().clone();
    let mut psi = WaveFunction::new(grid.clone(), op.spin_dim(), random_data(op.dim(), &mut rng))?;
    if case.equation == BenchEquation::Dirac {
        psi = project_boundary(&psi, case.theta)?;
    }
    let psi = psi.normalized()?;
    let probes: Vec<Vec<C64>> = (0..case.probes.max(1)).map(|_| random_data(op.dim(), &mut rng)).collect();
    let dissipativity = dissipativity_defect(&op, &probes)?;

    let mut contraction = f64::NEG_INFINITY;
    let mut flux_balance = 0.0f64;
    let mut sink = |_: usize, r: &StepFluxRecord, _: &[C64]| {
        let before = r.norm_sqr_before.sqrt();
        contraction = contraction.max((r.norm_sqr_after.sqrt() - before) / before);
        flux_balance = flux_balance.max(r.balance_residual());
        std::ops::ControlFlow::Continue(())
    };
    let start = Instant::now();
    prop.evolve(&psi, case.steps, &mut sink)?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;

    let povm = match case.povm_steps {
        Some(k) => Some(assemble_j(&prop, k as f64 * case.tau)?.completeness_residual()),
        None => None,
    };
    Ok(BenchReport {
        case: case.name.clone(),
        n_nodes: grid.len(),
        n_steps: case.steps,
        wall_ms,
        step_ms: wall_ms / case.steps.max(1) as f64,
        assembly_ms,
        residuals: Residuals { contraction, flux_balance, povm, dissipativity },
    })
}

/// Runs every case (in parallel across cases when `jobs > 1`); reports keep the case order.
pub fn run_bench(config: &BenchConfig, jobs: usize) -> Result<Vec<BenchReport>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        config
            .cases
            .par_iter()
            .enumerate()
            .map(|(k, c)| run_case(c, config.seed.wrapping_add(k as u64)))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_reports_line_context() {
        let cfg = BenchConfig::from_toml_str("seed = 3\n[[cases]]\nname = \"a\"\nnodes = 32\ntau = 0.01\nsteps = 10\n").unwrap();
        assert_eq!(cfg.cases.len(), 1);
        assert_eq!(cfg.cases[0].kappa, 1.0);
        let err = BenchConfig::from_toml_str("seed = 3\n[[cases]]\nname = \"a\"\nnodes = \"many\"\n").unwrap_err();
        assert!(err.to_string().contains("line 4"), "{err}");
        assert_eq!(BenchConfig::from_toml_str("").unwrap(), BenchConfig::default());
    }

    #[test]
    fn small_cases_are_deterministic() {
        let mut cases = BenchConfig::default_cases();
        for c in &mut cases {
            c.steps = c.steps.min(50);
            c.nodes = c.nodes.min(24);
        }
        let cfg = BenchConfig { seed: 1, cases };
        let a = run_bench(&cfg, 1).unwrap();
        let b = run_bench(&cfg, 3).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.residuals, y.residuals);
            assert!(x.within_tolerances(), "{x:?}");
        }
        assert!(a[2].residuals.povm.is_some());
    }
}
