//! Run configuration as read from a TOML file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use absorb_core::detection::eigenmode;
use absorb_core::dirac::{assemble_dirac_1d, project_boundary};
use absorb_core::schrodinger::{assemble_schrodinger, FaceOverride, PotentialSpec};
use absorb_core::{grid, BoundaryParams, DomainKind, DomainSpec, Grid, OperatorMatrix, Units, WaveFunction, C64};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EquationKind {
    #[default]
    Schrodinger,
    Dirac,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub equation: EquationKind,
    #[serde(default)]
    pub seed: u64,
    pub domain: DomainSection,
    #[serde(default)]
    pub units: Units,
    #[serde(default)]
    pub boundary: BoundarySection,
    #[serde(default)]
    pub potential: PotentialSpec,
    pub initial: InitialState,
    pub time: TimeSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub cascade: CascadeSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub kind: DomainKind,
    pub extents: Vec<(f64, f64)>,
    pub nodes: usize,
    #[serde(default = "one")]
    pub particles: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySection {
    pub kappa: Option<f64>,
    #[serde(default)]
    pub nu: f64,
    pub theta: Option<f64>,
    /// Dirac rest mass.
    #[serde(default)]
    pub mass: f64,
    #[serde(default)]
    pub faces: Vec<FaceOverride>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialState {
    Gaussian {
        centers: Vec<Vec<f64>>,
        width: f64,
        wavenumbers: Vec<Vec<f64>>,
        /// `[re, im]` per spin component (Dirac only).
        #[serde(default)]
        spinor: Vec<(f64, f64)>,
    },
    /// Eigenvector of the Hermitian part of H, counted from the bottom.
    Eigenmode { index: usize },
    /// Node values from a CSV with columns `re,im`, one row per unknown.
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub tau: f64,
    pub t_max: Option<f64>,
    /// Horizon in steps; alternative to `t_max`.
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CascadeSection {
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub exhaustive: bool,
    /// Potential of the k-particle stage at position k-1; defaults to `potential` for every stage.
    #[serde(default)]
    pub stage_potentials: Vec<PotentialSpec>,
}

fn default_runs() -> usize {
    1000
}

impl Default for CascadeSection {
    fn default() -> Self {
        CascadeSection { runs: default_runs(), exhaustive: false, stage_potentials: Vec::new() }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        // relative data paths are taken from the config's directory
        let dir = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        if let PotentialSpec::Csv { path } = &mut cfg.potential {
            fix(path);
        }
        for s in &mut cfg.cascade.stage_potentials {
            if let PotentialSpec::Csv { path } = s {
                fix(path);
            }
        }
        if let InitialState::Csv { path } = &mut cfg.initial {
            fix(path);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.time.tau > 0.0) {
            return Err(config_err("time.tau must be positive"));
        }
        match (self.time.t_max, self.time.steps) {
            (None, None) => return Err(config_err("time.t_max or time.steps required")),
            (Some(t), _) if !(t > 0.0) => return Err(config_err("time.t_max must be positive")),
            (_, Some(0)) => return Err(config_err("time.steps must be positive")),
            _ => {}
        }
        match self.equation {
            EquationKind::Schrodinger => {
                if self.boundary.kappa.is_none() {
                    return Err(config_err("boundary.kappa required"));
                }
            }
            EquationKind::Dirac => {
                if self.boundary.theta.is_none() {
                    return Err(config_err("boundary.theta required"));
                }
                if self.domain.particles != 1 || self.domain.extents.len() != 1 {
                    return Err(config_err("domain: the Dirac equation is supported on a single-particle interval"));
                }
            }
        }
        if self.domain.particles == 0 {
            return Err(config_err("domain.particles must be at least 1"));
        }
        Ok(())
    }

    /// Horizon time; `steps` wins when both are given.
    pub fn t_max(&self) -> f64 {
        match self.time.steps {
            Some(k) => k as f64 * self.time.tau,
            None => self.time.t_max.unwrap_or(0.0),
        }
    }

    pub fn boundary_params(&self, allow_emitting: bool) -> BoundaryParams {
        BoundaryParams {
            kappa: self.boundary.kappa.unwrap_or(0.0),
            nu: self.boundary.nu,
            overrides: self.boundary.faces.clone(),
            allow_emitting,
        }
    }

    pub fn domain_spec(&self) -> DomainSpec {
        DomainSpec { kind: self.domain.kind, extents: self.domain.extents.clone(), particle_count: self.domain.particles, dim: 0 }
    }

    pub fn grid(&self) -> Result<Arc<Grid>, CliError> {
        Ok(grid::build_grid(&self.domain_spec(), self.domain.nodes)?.into_arc())
    }

    pub fn operator(&self, grid: Arc<Grid>, potential: &PotentialSpec, allow_emitting: bool) -> Result<OperatorMatrix, CliError> {
        let v = potential.sample(&grid, &self.units)?;
        Ok(match self.equation {
            EquationKind::Schrodinger => assemble_schrodinger(grid, &v, &self.boundary_params(allow_emitting), self.units)?,
            EquationKind::Dirac => {
                let theta = self.boundary.theta.unwrap_or(0.0);
                if self.boundary.mass < 0.0 {
                    return Err(config_err("boundary.mass must be non-negative"));
                }
                assemble_dirac_1d(grid, self.boundary.mass, &v, theta, self.units)?
            }
        })
    }

    /// The normalised initial state on the operator's grid.
    pub fn initial_state(&self, op: &OperatorMatrix) -> Result<WaveFunction, CliError> {
        let grid = op.grid().clone();
        let spin = op.spin_dim();
        let psi = match &self.initial {
            InitialState::Gaussian { centers, width, wavenumbers, spinor } => {
                let scalar = WaveFunction::gaussian(grid, centers, *width, wavenumbers)?;
                if spin == 1 {
                    if !spinor.is_empty() {
                        return Err(config_err("initial.spinor is only meaningful for the Dirac equation"));
                    }
                    scalar
                } else {
                    let s: Vec<C64> = if spinor.is_empty() {
                        (0..spin).map(|k| C64::new(if k == 0 { 1.0 } else { 0.0 }, 0.0)).collect()
                    } else {
                        spinor.iter().map(|&(re, im)| C64::new(re, im)).collect()
                    };
                    scalar.with_spinor(&s)?
                }
            }
            InitialState::Eigenmode { index } => eigenmode(op, *index)?,
            InitialState::Csv { path } => {
                let mut rdr = csv::Reader::from_path(path).map_err(|e| config_err(format!("initial.path: {e}")))?;
                let mut data = Vec::new();
                for rec in rdr.deserialize::<(f64, f64)>() {
                    let (re, im) = rec.map_err(|e| config_err(format!("initial.path {}: {e}", path.display())))?;
                    data.push(C64::new(re, im));
                }
                WaveFunction::new(grid, spin, data)?
            }
        };
        let psi = match self.equation {
            EquationKind::Dirac => project_boundary(&psi, self.boundary.theta.unwrap_or(0.0))?,
            EquationKind::Schrodinger => psi,
        };
        Ok(psi.normalized()?)
    }
}
