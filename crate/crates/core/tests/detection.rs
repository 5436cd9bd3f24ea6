use std::collections::BTreeMap;
use std::sync::Arc;

use absorb_core::detection::{cascade_batch, record_distribution, sample_detection, CascadeSetup, DetectionDistribution, Outcome};
use absorb_core::grid::build_grid;
use absorb_core::schrodinger::{assemble_schrodinger, PotentialSpec};
use absorb_core::{BoundaryParams, CnPropagator, DomainSpec, PotentialField, Units, WaveFunction};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn interval_setup() -> (CnPropagator, WaveFunction) {
    let g = build_grid(&DomainSpec::interval(0.0, 6.0), 49).unwrap().into_arc();
    let h = assemble_schrodinger(g.clone(), &PotentialField::zero(&g), &BoundaryParams::absorbing(1.0), Units::default()).unwrap();
    let psi = WaveFunction::gaussian(g, &[vec![2.5]], 0.6, &[vec![0.8]]).unwrap().normalized().unwrap();
    (CnPropagator::new(Arc::new(h), 0.05).unwrap(), psi)
}

/// Pearson statistic and p-value, lumping bins with expected count below 5.
fn chi_squared(expected_p: &[f64], counts: &[u64], n: u64) -> (f64, f64) {
    let (mut stat, mut dof) = (0.0, 0usize);
    let (mut lump_e, mut lump_o) = (0.0, 0u64);
    for (&p, &o) in expected_p.iter().zip(counts) {
        let e = p * n as f64;
        if e >= 5.0 {
            stat += (o as f64 - e).powi(2) / e;
            dof += 1;
        } else {
            lump_e += e;
            lump_o += o;
        }
    }
    if lump_e > 0.0 {
        stat += (lump_o as f64 - lump_e).powi(2) / lump_e;
        dof += 1;
    }
    let p = 1.0 - ChiSquared::new((dof - 1) as f64).unwrap().cdf(stat);
    (stat, p)
}

/// Bin index of an outcome: (coarse time bin, face) pairs, then one bin for no detection.
fn bin(d: &DetectionDistribution, o: &Outcome, coarse: usize, faces: &BTreeMap<String, usize>) -> usize {
    let slots = d.steps().div_ceil(coarse) * faces.len();
    match o.event() {
        Some(e) => (e.step / coarse) * faces.len() + faces[&e.face.to_string()],
        None => slots,
    }
}

fn binned_law(d: &DetectionDistribution, coarse: usize, faces: &BTreeMap<String, usize>) -> Vec<f64> {
    let mut p = vec![0.0; d.steps().div_ceil(coarse) * faces.len() + 1];
    for (n, row) in d.mass().iter().enumerate() {
        for (c, m) in row.iter().enumerate() {
            p[(n / coarse) * faces.len() + faces[&d.cells()[c].1.to_string()]] += m;
        }
    }
    *p.last_mut().unwrap() = d.survivor_mass();
    p
}

fn face_index(d: &DetectionDistribution) -> BTreeMap<String, usize> {
    let mut faces: BTreeMap<String, usize> = d.cells().iter().map(|(_, f)| (f.to_string(), 0)).collect();
    for (k, v) in faces.values_mut().enumerate() {
        *v = k;
    }
    faces
}

#[test]
fn table_samples_follow_the_histogram() {
    let (prop, psi) = interval_setup();
    let d = record_distribution(&prop, &psi, 8.0).unwrap();
    let faces = face_index(&d);
    let law = binned_law(&d, 4, &faces);
    let n = 100_000u64;
    let mut counts = vec![0u64; law.len()];
    for seed in 0..n {
        counts[bin(&d, &d.sample(seed), 4, &faces)] += 1;
    }
    let (stat, p) = chi_squared(&law, &counts, n);
    assert!(p > 0.001, "chi2 {stat}, p {p}");
}

#[test]
fn streamed_sampling_agrees_with_the_table_draw_for_draw() {
    let (prop, psi) = interval_setup();
    let d = record_distribution(&prop, &psi, 8.0).unwrap();
    for seed in 0..400 {
        assert_eq!(sample_detection(&prop, &psi, 8.0, seed).unwrap(), d.sample(seed));
    }
}

#[test]
fn cascade_first_event_follows_the_pair_distribution() {
    let base = build_grid(&DomainSpec::interval(0.0, 3.0), 9).unwrap();
    let zero = [PotentialSpec::Zero, PotentialSpec::Zero];
    let setup = CascadeSetup::schrodinger(&base, 2, &zero, &BoundaryParams::absorbing(1.0), Units::default(), 0.1).unwrap();
    let g = base.with_particles(2).into_arc();
    let psi = WaveFunction::gaussian(g, &[vec![1.2], vec![1.9]], 0.5, &[vec![-0.5], vec![1.0]]).unwrap().normalized().unwrap();
    let d = record_distribution(setup.stage(2), &psi, 3.0).unwrap();
    let faces = face_index(&d);
    let law = binned_law(&d, 3, &faces);
    let runs = cascade_batch(&setup, &psi, 3.0, 0, 10_000, 4).unwrap();
    let mut counts = vec![0u64; law.len()];
    for (seed, r) in runs.iter().enumerate() {
        // same variate convention, so the first event is the table draw exactly
        let first = d.sample(seed as u64);
        match (r.events.first(), first.event()) {
            (Some(a), Some(b)) => assert_eq!((a.step, a.node, a.face), (b.step, b.node, b.face)),
            (None, None) => {}
            other => panic!("seed {seed}: {other:?}"),
        }
        counts[bin(&d, &first, 3, &faces)] += 1;
    }
    let (stat, p) = chi_squared(&law, &counts, runs.len() as u64);
    assert!(p > 0.001, "chi2 {stat}, p {p}");
}
