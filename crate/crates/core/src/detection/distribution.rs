use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::ops::ControlFlow;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FaceId, Grid};
use crate::propagator::{CnPropagator, StepFluxRecord};
use crate::wave::WaveFunction;

/// Number of whole steps that fit in `t_max`.
pub fn steps_for_horizon(t_max: f64, tau: f64) -> Result<usize> {
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::Config(format!("horizon must be positive, got {t_max}")));
    }
    Ok((t_max / tau + 1e-9).floor() as usize)
}

pub(crate) fn check_normalized(psi: &WaveFunction) -> Result<()> {
    let n = psi.norm_sqr();
    if (n - 1.0).abs() > 1e-10 {
        return Err(Error::Unnormalized(n));
    }
    Ok(())
}

/// Detected probability per (step, boundary entry), plus the survivor.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionDistribution {
    grid: Arc<Grid>,
    tau: f64,
    /// `(node, face)` of each column.
    cells: Vec<(usize, FaceId)>,
    mass: Vec<Vec<f64>>,
    /// `||ψ_n||²` for n = 0..=steps.
    survival: Vec<f64>,
}

/// One line of the CSV form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub step: usize,
    pub time: f64,
    pub face: String,
    pub coords: Vec<f64>,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub total_detected: f64,
    pub survivor: f64,
    pub per_face: BTreeMap<String, f64>,
}

pub fn record_distribution(prop: &CnPropagator, psi0: &WaveFunction, t_max: f64) -> Result<DetectionDistribution> {
    check_normalized(psi0)?;
    let steps = steps_for_horizon(t_max, prop.tau())?;
    let op = prop.operator();
    let mut mass = Vec::with_capacity(steps);
    let mut survival = vec![psi0.norm_sqr()];
    let mut sink = |_: usize, rec: &StepFluxRecord, _: &[crate::C64]| {
        mass.push(rec.masses.clone());
        survival.push(rec.norm_sqr_after);
        ControlFlow::Continue(())
    };
    prop.evolve(psi0, steps, &mut sink)?;
    let cells = op.flux().iter().map(|f| (f.node, f.face)).collect();
    let d = DetectionDistribution { grid: op.grid().clone(), tau: prop.tau(), cells, mass, survival };
    if let Some(m) = d.mass.iter().flatten().find(|m| **m < 0.0) {
        return Err(Error::Invariant(format!("negative detection mass {m}")));
    }
    Ok(d)
}

impl DetectionDistribution {
    pub fn from_parts(grid: Arc<Grid>, tau: f64, cells: Vec<(usize, FaceId)>, mass: Vec<Vec<f64>>, survival: Vec<f64>) -> Self {
        assert_eq!(survival.len(), mass.len() + 1);
        DetectionDistribution { grid, tau, cells, mass, survival }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn steps(&self) -> usize {
        self.mass.len()
    }

    pub fn horizon(&self) -> f64 {
        self.tau * self.steps() as f64
    }

    pub fn cells(&self) -> &[(usize, FaceId)] {
        &self.cells
    }

    /// `mass[step][cell]`.
    pub fn mass(&self) -> &[Vec<f64>] {
        &self.mass
    }

    pub fn survival(&self) -> &[f64] {
        &self.survival
    }

    pub fn survivor_mass(&self) -> f64 {
        *self.survival.last().unwrap()
    }

    pub fn initial_norm_sqr(&self) -> f64 {
        self.survival[0]
    }

    pub fn total_detected(&self) -> f64 {
        self.mass.iter().flatten().sum()
    }

    pub fn step_time(&self, step: usize) -> f64 {
        (step as f64 + 0.5) * self.tau
    }

    /// `|Σ mass + survivor - ||ψ0||²|`.
    pub fn closure_residual(&self) -> f64 {
        (self.total_detected() + self.survivor_mass() - self.initial_norm_sqr()).abs()
    }

    pub fn per_face(&self) -> BTreeMap<FaceId, f64> {
        let mut out = BTreeMap::new();
        for row in &self.mass {
            for (m, (_, face)) in row.iter().zip(&self.cells) {
                *out.entry(*face).or_insert(0.0) += m;
            }
        }
        out
    }

    /// Total mass per step.
    pub fn step_totals(&self) -> Vec<f64> {
        self.mass.iter().map(|r| r.iter().sum()).collect()
    }

    /// Sums blocks of `factor` consecutive steps (the last block may be short).
    pub fn coarsen_time(&self, factor: usize) -> Vec<Vec<f64>> {
        assert!(factor > 0);
        self.mass
            .chunks(factor)
            .map(|block| (0..self.cells.len()).map(|c| block.iter().map(|r| r[c]).sum()).collect())
            .collect()
    }

    /// Inverse CDF in (step, cell) order: the first cell whose cumulative mass exceeds `u`.
    pub fn locate(&self, u: f64) -> Option<(usize, usize)> {
        let mut acc = 0.0;
        for (n, row) in self.mass.iter().enumerate() {
            for (c, m) in row.iter().enumerate() {
                acc += m;
                if u < acc {
                    return Some((n, c));
                }
            }
        }
        None
    }

    pub fn summary(&self) -> DistributionSummary {
        DistributionSummary {
            total_detected: self.total_detected(),
            survivor: self.survivor_mass(),
            per_face: self.per_face().into_iter().map(|(f, m)| (f.to_string(), m)).collect(),
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = DistributionRow> + '_ {
        self.mass.iter().enumerate().flat_map(move |(n, row)| {
            row.iter().zip(&self.cells).map(move |(&mass, &(node, face))| DistributionRow {
                step: n,
                time: self.step_time(n),
                face: face.to_string(),
                coords: self.grid.coords(node),
                mass,
            })
        })
    }

    fn coord_headers(&self) -> Vec<String> {
        (0..self.grid.total_dim()).map(|k| format!("x{k}")).collect()
    }

    /// CSV with columns `step,time,face,x0..,mass`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["step".to_string(), "time".into(), "face".into()];
        header.extend(self.coord_headers());
        header.push("mass".into());
        w.write_record(&header)?;
        for row in self.rows() {
            let mut rec = vec![row.step.to_string(), row.time.to_string(), row.face];
            rec.extend(row.coords.iter().map(|x| x.to_string()));
            rec.push(row.mass.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV form back.
    pub fn read_csv<R: Read>(input: R) -> Result<Vec<DistributionRow>> {
        let mut r = csv::Reader::from_reader(input);
        let ncoord = r.headers()?.len().saturating_sub(4);
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let num = |k: usize| -> Result<f64> {
                rec[k].parse::<f64>().map_err(|e| Error::Config(format!("bad number {:?}: {e}", &rec[k])))
            };
            rows.push(DistributionRow {
                step: rec[0].parse().map_err(|e| Error::Config(format!("bad step {:?}: {e}", &rec[0])))?,
                time: num(1)?,
                face: rec[2].to_string(),
                coords: (0..ncoord).map(|k| num(3 + k)).collect::<Result<_>>()?,
                mass: num(3 + ncoord)?,
            });
        }
        Ok(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, DomainSpec};
    use crate::schrodinger::{assemble_schrodinger, BoundaryParams, PotentialField};
    use crate::units::Units;

    fn setup(kappa: f64) -> (CnPropagator, WaveFunction) {
        let g = build_grid(&DomainSpec::interval(0.0, 10.0), 101).unwrap().into_arc();
        let op = assemble_schrodinger(g.clone(), &PotentialField::zero(&g), &BoundaryParams::absorbing(kappa), Units::default()).unwrap();
        let psi = WaveFunction::gaussian(g, &[vec![6.0]], 0.8, &[vec![1.5]]).unwrap().normalized().unwrap();
        (CnPropagator::new(Arc::new(op), 0.02).unwrap(), psi)
    }

    #[test]
    fn reflecting_detects_nothing() {
        let (p, psi) = setup(0.0);
        let d = record_distribution(&p, &psi, 4.0).unwrap();
        assert_eq!(d.steps(), 200);
        assert!(d.mass().iter().flatten().all(|m| *m <= 1e-12));
        assert!((d.survivor_mass() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn closes_and_coarsens_additively() {
        let (p, psi) = setup(1.5);
        let d = record_distribution(&p, &psi, 6.0).unwrap();
        assert!(d.total_detected() > 0.1);
        assert!(d.closure_residual() < 1e-10);
        assert!(d.mass().iter().flatten().all(|m| *m >= 0.0));
        let coarse = d.coarsen_time(7);
        let total: f64 = coarse.iter().flatten().sum();
        assert!((total - d.total_detected()).abs() < 1e-13);
        let by_face: f64 = d.per_face().values().sum();
        assert!((by_face - d.total_detected()).abs() < 1e-13);
    }

    #[test]
    fn rejects_unnormalized() {
        let (p, mut psi) = setup(1.0);
        psi.scale(crate::C64::new(1.1, 0.0));
        assert!(matches!(record_distribution(&p, &psi, 1.0), Err(Error::Unnormalized(_))));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let (p, psi) = setup(1.0);
        let d = record_distribution(&p, &psi, 1.0).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let rows = DetectionDistribution::read_csv(buf.as_slice()).unwrap();
        let want: Vec<_> = d.rows().collect();
        assert_eq!(rows, want);
    }
}
