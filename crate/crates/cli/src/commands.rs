use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use absorb_core::bench::{run_bench, BenchConfig};
use absorb_core::detection::{
    assemble_j, cascade_batch, joint_distribution_2particle, record_distribution, spectrum_report, CascadeSetup,
};
use absorb_core::{CnPropagator, Error};
use serde::Serialize;

use crate::config::{EquationKind, RunConfig};
use crate::{CliError, CommonArgs};

const SPECTRUM_IM_TOL: f64 = 1e-10;

fn load(args: &CommonArgs) -> Result<RunConfig, CliError> {
    let path = args.config.as_ref().ok_or_else(|| CliError::Config("--config PATH required".into()))?;
    RunConfig::load(path)
}

fn out_dir(args: &CommonArgs, cfg: Option<&RunConfig>) -> Result<PathBuf, CliError> {
    let dir = std::env::var_os("ABSORBD_OUT")
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .or_else(|| args.out.clone())
        .or_else(|| cfg.and_then(|c| c.output.dir.clone()))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn invariant(msg: String) -> CliError {
    CliError::Core(Error::Invariant(msg))
}

fn propagator(cfg: &RunConfig, args: &CommonArgs) -> Result<CnPropagator, CliError> {
    let op = cfg.operator(cfg.grid()?, &cfg.potential, args.allow_emitting)?;
    Ok(CnPropagator::new(Arc::new(op), cfg.time.tau)?)
}

pub fn run(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = load(args)?;
    let prop = propagator(&cfg, args)?;
    let psi0 = cfg.initial_state(prop.operator())?;
    let dist = record_distribution(&prop, &psi0, cfg.t_max())?;
    let closure = dist.closure_residual();
    if closure > 1e-10 {
        return Err(invariant(format!("detected + survivor mass misses the initial norm by {closure:e}")));
    }
    if !args.allow_emitting {
        if let Some(k) = dist.survival().windows(2).position(|s| s[1] > s[0] * (1.0 + 2e-13)) {
            return Err(invariant(format!("norm grew at step {k}")));
        }
    }
    let dir = out_dir(args, Some(&cfg))?;
    let mut w = csv::Writer::from_writer(create(&dir, "survival.csv")?);
    w.write_record(["step", "t", "norm2"]).map_err(Error::from)?;
    for (k, n) in dist.survival().iter().enumerate() {
        w.serialize((k, k as f64 * dist.tau(), n)).map_err(Error::from)?;
    }
    w.flush()?;
    let mut f = create(&dir, "distribution.csv")?;
    dist.write_csv(&mut f)?;
    f.flush()?;
    let summary = dist.summary();
    write_json(&dir, "summary.json", &summary)?;
    println!("detected {:.12} survivor {:.12} over {} steps", summary.total_detected, summary.survivor, dist.steps());
    Ok(())
}

#[derive(Serialize)]
struct PovmReport {
    dim: usize,
    steps: usize,
    outcomes: usize,
    completeness_residual: f64,
    #[serde(rename = "min_eig_E_inf")]
    min_eig_e_inf: f64,
    survivor_residual: f64,
    e_inf_matches_survivor: bool,
}

pub fn povm(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = load(args)?;
    let prop = propagator(&cfg, args)?;
    let p = assemble_j(&prop, cfg.t_max())?;
    let report = PovmReport {
        dim: p.dim(),
        steps: p.steps,
        outcomes: p.rows.len(),
        completeness_residual: p.completeness_residual(),
        min_eig_e_inf: p.min_eig_e_inf(),
        survivor_residual: p.survivor_residual(),
        e_inf_matches_survivor: p.survivor_residual() <= 1e-10,
    };
    let dir = out_dir(args, Some(&cfg))?;
    write_json(&dir, "povm_report.json", &report)?;
    println!("completeness {:e} min eig {:e}", report.completeness_residual, report.min_eig_e_inf);
    if report.completeness_residual > 1e-10 || report.min_eig_e_inf < -1e-12 {
        return Err(invariant(format!(
            "POVM check failed: completeness {:e}, min eigenvalue {:e}",
            report.completeness_residual, report.min_eig_e_inf
        )));
    }
    Ok(())
}

pub fn cascade(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = load(args)?;
    if cfg.equation != EquationKind::Schrodinger {
        return Err(CliError::Config("cascade: only the Schrödinger equation is supported".into()));
    }
    let n = cfg.domain.particles;
    if !(1..=3).contains(&n) {
        return Err(CliError::Config(format!("cascade: domain.particles must be 1, 2 or 3, got {n}")));
    }
    let potentials = if cfg.cascade.stage_potentials.is_empty() {
        vec![cfg.potential.clone(); n]
    } else {
        cfg.cascade.stage_potentials.clone()
    };
    if potentials.len() != n {
        return Err(CliError::Config(format!(
            "cascade.stage_potentials needs {n} entries, got {}",
            potentials.len()
        )));
    }
    let base = cfg.grid()?.base();
    let bp = cfg.boundary_params(args.allow_emitting);
    let setup = CascadeSetup::schrodinger(&base, n, &potentials, &bp, cfg.units, cfg.time.tau)?;
    let psi0 = cfg.initial_state(setup.stage(n).operator())?;
    let seed = args.seed.unwrap_or(cfg.seed);
    let dir = out_dir(args, Some(&cfg))?;
    let runs = cascade_batch(&setup, &psi0, cfg.t_max(), seed, cfg.cascade.runs, args.jobs)?;
    let mut w = create(&dir, "runs.jsonl")?;
    for r in &runs {
        serde_json::to_writer(&mut w, r)?;
        writeln!(w)?;
    }
    w.flush()?;
    let complete = runs.iter().filter(|r| !r.truncated).count();
    println!("{} runs, {} fully detected", runs.len(), complete);
    if cfg.cascade.exhaustive {
        if n != 2 {
            return Err(CliError::Config("cascade.exhaustive needs domain.particles = 2".into()));
        }
        let table = joint_distribution_2particle(&setup, &psi0, cfg.t_max())?;
        let mut f = create(&dir, "joint_table.csv")?;
        table.write_csv(&mut f)?;
        f.flush()?;
        let total = table.total();
        println!("joint table total {total:.12}");
        if (total - 1.0).abs() > 1e-8 {
            return Err(invariant(format!("joint table total {total} differs from 1")));
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct SpectrumSummary {
    dim: usize,
    hermitian: bool,
    min_im: f64,
    max_im_scaled: f64,
    max_offdiag_gram: f64,
    normality_defect: f64,
}

pub fn spectrum(args: &CommonArgs) -> Result<(), CliError> {
    let cfg = load(args)?;
    let op = cfg.operator(cfg.grid()?, &cfg.potential, args.allow_emitting)?;
    let r = spectrum_report(&op)?;
    if r.max_im_scaled > SPECTRUM_IM_TOL && !args.allow_emitting {
        return Err(invariant(format!("eigenvalue in the upper half plane: scaled Im = {:e}", r.max_im_scaled)));
    }
    let dir = out_dir(args, Some(&cfg))?;
    let mut w = csv::Writer::from_writer(create(&dir, "spectrum.csv")?);
    w.write_record(["index", "re", "im"]).map_err(Error::from)?;
    for (k, z) in r.eigenvalues.iter().enumerate() {
        w.serialize((k, z.re, z.im)).map_err(Error::from)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_writer(create(&dir, "gram.csv")?);
    w.write_record(["i", "j", "re", "im"]).map_err(Error::from)?;
    for i in 0..r.gram.nrows() {
        for j in 0..r.gram.ncols() {
            let z = r.gram[(i, j)];
            w.serialize((i, j, z.re, z.im)).map_err(Error::from)?;
        }
    }
    w.flush()?;
    let summary = SpectrumSummary {
        dim: r.eigenvalues.len(),
        hermitian: r.hermitian,
        min_im: r.min_im(),
        max_im_scaled: r.max_im_scaled,
        max_offdiag_gram: r.max_offdiag_gram,
        normality_defect: r.normality_defect,
    };
    write_json(&dir, "spectrum_summary.json", &summary)?;
    println!("min Im {:e}, Gram off-diagonal max {:e}", summary.min_im, summary.max_offdiag_gram);
    Ok(())
}

pub fn bench(args: &CommonArgs) -> Result<(), CliError> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            BenchConfig::from_toml_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => BenchConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let reports = run_bench(&cfg, args.jobs)?;
    let dir = out_dir(args, None)?;
    write_json(&dir, "bench.json", &reports)?;
    let mut failed = Vec::new();
    for r in &reports {
        println!(
            "{:<16} {:>6} nodes {:>6} steps {:>10.1} ms  {}",
            r.case,
            r.n_nodes,
            r.n_steps,
            r.wall_ms,
            if r.within_tolerances() { "ok" } else { "RESIDUAL OUT OF TOLERANCE" }
        );
        if !r.within_tolerances() {
            failed.push(r.case.clone());
        }
    }
    if !failed.is_empty() {
        return Err(invariant(format!("bench residuals out of tolerance: {}", failed.join(", "))));
    }
    Ok(())
}
