use std::collections::BTreeMap;
use std::io::Write;
use std::ops::ControlFlow;

use crate::error::{Error, Result};
use crate::grid::FaceId;
use crate::propagator::StepFluxRecord;
use crate::wave::WaveFunction;
use crate::C64;

use super::cascade::CascadeSetup;
use super::collapse::collapse_with_norm;
use super::distribution::{check_normalized, steps_for_horizon};
use super::povm::assemble_j;

/// First-event outcome: step, face (with particle) and base-grid node of the detected particle.
pub type FirstKey = (usize, FaceId, usize);

/// One cell of the joint law. `second == None` is "first detection, then no
/// second detection before the horizon".
#[derive(Debug, Clone, PartialEq)]
pub struct JointRow {
    pub first: FirstKey,
    /// `(step within the second stage, face, base node)`.
    pub second: Option<(usize, FaceId, usize)>,
    pub mass: f64,
}

/// Exhaustive joint detection law of a two-particle cascade.
#[derive(Debug, Clone)]
pub struct JointTable {
    pub tau: f64,
    pub steps: usize,
    pub first: BTreeMap<FirstKey, f64>,
    pub rows: Vec<JointRow>,
    /// No detection at all before the horizon.
    pub first_survivor: f64,
    /// Largest difference between the table and the same cells evaluated
    /// through the one-particle POVM applied to the unnormalised slices.
    pub povm_discrepancy: f64,
    coords: Vec<Vec<f64>>,
}

pub fn joint_distribution_2particle(setup: &CascadeSetup, psi0: &WaveFunction, t_max: f64) -> Result<JointTable> {
    check_normalized(psi0)?;
    if setup.particles() != 2 || psi0.grid().particle_count() != 2 {
        return Err(Error::Config("the joint table is defined for two particles".into()));
    }
    let tau = setup.tau();
    let steps = steps_for_horizon(t_max, tau)?;
    if steps < 2 {
        return Err(Error::Config("the joint table needs at least two steps".into()));
    }
    let pair = setup.stage(2);
    let single = setup.stage(1);
    let op2 = pair.operator();
    let g2 = op2.grid();
    let base = g2.base();
    if op2.spin_dim() != 1 {
        return Err(Error::Config("the joint table is implemented for scalar wave functions".into()));
    }
    let limit = 4000usize;
    if g2.len() > limit {
        return Err(Error::TooLarge { dim: g2.len(), limit });
    }

    let mut records = Vec::with_capacity(steps);
    let mut mids = Vec::with_capacity(steps);
    let mut sink = |_: usize, rec: &StepFluxRecord, mid: &[C64]| {
        records.push(rec.masses.clone());
        mids.push(mid.to_vec());
        ControlFlow::Continue(())
    };
    let last = pair.evolve(psi0, steps, &mut sink)?;

    // group the two-particle cells by (face, detected particle's base node)
    let rest = g2.with_particles(1);
    let mut groups: BTreeMap<(FaceId, usize), (Vec<usize>, f64)> = BTreeMap::new();
    for (c, f) in op2.flux().iter().enumerate() {
        let x = g2.particle_node(f.node, f.face.particle);
        let other = g2.particle_node(f.node, 1 - f.face.particle);
        let coeff = f.gain[(0, 0)].norm_sqr() * f.sign / rest.weights()[other];
        let e = groups.entry((f.face, x)).or_insert((Vec::new(), coeff));
        e.0.push(c);
    }

    let j1 = assemble_j(single, (steps - 1) as f64 * tau)?;
    let op1 = single.operator();
    let cells1: Vec<(FaceId, usize)> = op1.flux().iter().map(|f| (f.face, f.node)).collect();

    let mut first = BTreeMap::new();
    let mut rows = Vec::new();
    let mut discrepancy = 0.0f64;
    for n in 0..steps {
        for (&(face, x), (cells, coeff)) in &groups {
            let mass1: f64 = cells.iter().map(|&c| records[n][c]).sum();
            let key = (n, face, x);
            first.insert(key, mass1);
            if mass1 <= 0.0 {
                continue;
            }
            let mid = WaveFunction::new(g2.clone(), 1, mids[n].clone())?;
            let (cond, norm) = collapse_with_norm(&mid, face.particle, x)?;
            let second_steps = steps - n - 1;
            let mut masses2 = Vec::with_capacity(second_steps);
            let mut sink = |_: usize, rec: &StepFluxRecord, _: &[C64]| {
                masses2.push(rec.masses.clone());
                ControlFlow::Continue(())
            };
            let end = single.evolve(&cond, second_steps, &mut sink)?;
            for (m, row) in masses2.iter().enumerate() {
                for (c, &m2) in row.iter().enumerate() {
                    let (f2, node2) = cells1[c];
                    rows.push(JointRow { first: key, second: Some((m, f2, node2)), mass: mass1 * m2 });
                }
            }
            rows.push(JointRow { first: key, second: None, mass: mass1 * end.norm_sqr() });

            // the same cells from J of the one-particle problem and the raw slice
            let mut slice = cond.clone();
            slice.scale(C64::new(norm, 0.0));
            let probs = j1.cell_probabilities(&slice, cells1.len());
            let scale = tau * coeff;
            let start = rows.len() - 1 - masses2.len() * cells1.len();
            for (m, row) in probs.iter().take(second_steps).enumerate() {
                for (c, p) in row.iter().enumerate() {
                    let table = rows[start + m * cells1.len() + c].mass;
                    discrepancy = discrepancy.max((table - scale * p).abs());
                }
            }
        }
    }
    let coords = (0..base.len()).map(|k| base.coords(k)).collect();
    Ok(JointTable { tau, steps, first, rows, first_survivor: last.norm_sqr(), povm_discrepancy: discrepancy, coords })
}

impl JointTable {
    /// Every row plus the no-detection mass.
    pub fn total(&self) -> f64 {
        self.rows.iter().map(|r| r.mass).sum::<f64>() + self.first_survivor
    }

    /// Largest `|Σ_second row - first-event mass|` over first-event cells.
    pub fn marginal_residual(&self) -> f64 {
        let mut sums: BTreeMap<FirstKey, f64> = BTreeMap::new();
        for r in &self.rows {
            *sums.entry(r.first).or_insert(0.0) += r.mass;
        }
        self.first
            .iter()
            .map(|(k, m)| (sums.get(k).copied().unwrap_or(0.0) - m).abs())
            .fold(0.0, f64::max)
    }

    pub fn first_time(&self, key: &FirstKey) -> f64 {
        (key.0 as f64 + 0.5) * self.tau
    }

    /// Absolute time of a second event that followed `first`.
    pub fn second_time(&self, first: &FirstKey, step: usize) -> f64 {
        ((first.0 + 1 + step) as f64 + 0.5) * self.tau
    }

    /// CSV: `kind,step1,time1,face1,x1_*,step2,time2,face2,x2_*,mass`, ending
    /// with the no-detection row and a `total` row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let d = self.coords.first().map_or(0, |c| c.len());
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = vec!["kind".into(), "step1".into(), "time1".into(), "face1".into()];
        header.extend((0..d).map(|k| format!("x1_{k}")));
        header.extend(["step2".into(), "time2".into(), "face2".into()]);
        header.extend((0..d).map(|k| format!("x2_{k}")));
        header.push("mass".into());
        w.write_record(&header)?;
        let blank = |n: usize| vec![String::new(); n];
        for r in &self.rows {
            let (step, face, node) = r.first;
            let mut rec = vec![
                if r.second.is_some() { "pair" } else { "first_only" }.to_string(),
                step.to_string(),
                self.first_time(&r.first).to_string(),
                face.to_string(),
            ];
            rec.extend(self.coords[node].iter().map(|x| x.to_string()));
            match r.second {
                Some((m, f2, n2)) => {
                    rec.extend([m.to_string(), self.second_time(&r.first, m).to_string(), f2.to_string()]);
                    rec.extend(self.coords[n2].iter().map(|x| x.to_string()));
                }
                None => rec.extend(blank(3 + d)),
            }
            rec.push(r.mass.to_string());
            w.write_record(&rec)?;
        }
        let mut none = vec!["none".to_string()];
        none.extend(blank(6 + 2 * d));
        none.push(self.first_survivor.to_string());
        w.write_record(&none)?;
        let mut total = vec!["total".to_string()];
        total.extend(blank(6 + 2 * d));
        total.push(self.total().to_string());
        w.write_record(&total)?;
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, DomainSpec};
    use crate::schrodinger::{BoundaryParams, PotentialSpec};
    use crate::units::Units;

    fn setup() -> (CascadeSetup, crate::grid::Grid) {
        setup_with(0.1)
    }

    fn setup_with(tau: f64) -> (CascadeSetup, crate::grid::Grid) {
        let base = build_grid(&DomainSpec::interval(0.0, 3.0), 9).unwrap();
        let zero = [PotentialSpec::Zero, PotentialSpec::Zero];
        let s = CascadeSetup::schrodinger(&base, 2, &zero, &BoundaryParams::absorbing(1.0), Units::default(), tau).unwrap();
        (s, base)
    }

    #[test]
    fn table_closes_and_matches_the_povm_form() {
        let (s, base) = setup();
        let g = base.with_particles(2).into_arc();
        let psi = WaveFunction::gaussian(g, &[vec![1.0], vec![2.0]], 0.5, &[vec![-1.0], vec![1.0]]).unwrap().normalized().unwrap();
        let t = joint_distribution_2particle(&s, &psi, 3.0).unwrap();
        assert_eq!(t.steps, 30);
        assert!((t.total() - 1.0).abs() <= 1e-8);
        assert!(t.marginal_residual() <= 1e-10);
        assert!(t.povm_discrepancy <= 1e-8);
        assert!(t.rows.iter().all(|r| r.mass >= 0.0));
    }

    #[test]
    fn product_state_factorises() {
        // the conditional law of the second detection does not depend on where
        // particle 0 was seen, up to the O(τ²) error of one CN step on a sum
        let spread = |tau: f64| {
            let (s, base) = setup_with(tau);
            let g = base.with_particles(2).into_arc();
            let psi = WaveFunction::gaussian(g, &[vec![0.8], vec![2.2]], 0.5, &[vec![-1.0], vec![1.0]]).unwrap().normalized().unwrap();
            let t = joint_distribution_2particle(&s, &psi, 1.5).unwrap();
            let n = (0.5 / tau).round() as usize;
            let conditional = |x: usize| -> Vec<f64> {
                let key = t.first.keys().find(|k| k.0 == n && k.1.particle == 0 && k.2 == x).copied().unwrap();
                t.rows.iter().filter(|r| r.first == key).map(|r| r.mass / t.first[&key]).collect()
            };
            conditional(0).iter().zip(conditional(8)).map(|(a, b)| (a - b).abs()).sum::<f64>()
        };
        let coarse = spread(0.02);
        let fine = spread(0.01);
        assert!(fine < coarse / 3.0, "{coarse} -> {fine}");
        assert!(fine < 1e-3, "total variation {fine}");
    }
}
