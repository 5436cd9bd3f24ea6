use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use absorb_core::detection::{record_distribution, sample_detection, spectrum_report, DetectionDistribution, Outcome};
use absorb_core::grid::build_grid;
use absorb_core::schrodinger::assemble_schrodinger;
use absorb_core::{BoundaryParams, CnPropagator, DomainSpec, PotentialField, Units, WaveFunction};
use serde_json::Value;
use tempfile::TempDir;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

/// Copies a shipped config into `dir`, applying textual replacements.
fn variant(dir: &Path, name: &str, edits: &[(&str, &str)]) -> PathBuf {
    let mut text = fs::read_to_string(config(name)).unwrap();
    for (from, to) in edits {
        assert!(text.contains(from), "{from} not in {name}");
        text = text.replace(from, to);
    }
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn absorbd(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_absorbd"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("ABSORBD_OUT")
        .output()
        .unwrap()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "status {:?}\nstdout {}\nstderr {}", o.status, String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr));
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect()
}

fn interval_distribution() -> DetectionDistribution {
    let g = build_grid(&DomainSpec::interval(0.0, 10.0), 201).unwrap().into_arc();
    let h = assemble_schrodinger(g.clone(), &PotentialField::zero(&g), &BoundaryParams::absorbing(1.0), Units::default()).unwrap();
    let prop = CnPropagator::new(Arc::new(h), 0.01).unwrap();
    let psi = WaveFunction::gaussian(g, &[vec![5.0]], 0.6, &[vec![1.0]]).unwrap().normalized().unwrap();
    record_distribution(&prop, &psi, 20.0).unwrap()
}

#[test]
fn run_artifacts_reparse_to_the_computed_values() {
    let out = TempDir::new().unwrap();
    ok(&absorbd(&["run", "--config", config("interval.toml").to_str().unwrap()], out.path()));
    let want = interval_distribution();

    let survival = csv_rows(&out.path().join("survival.csv"));
    assert_eq!(survival.len(), want.steps() + 1);
    for (k, row) in survival.iter().enumerate() {
        assert_eq!(row[0].parse::<usize>().unwrap(), k);
        assert_eq!(row[2].parse::<f64>().unwrap().to_bits(), want.survival()[k].to_bits());
    }

    let rows = DetectionDistribution::read_csv(fs::File::open(out.path().join("distribution.csv")).unwrap()).unwrap();
    let expected: Vec<_> = want.rows().collect();
    assert_eq!(rows.len(), expected.len());
    for (a, b) in rows.iter().zip(&expected) {
        assert_eq!(a.mass.to_bits(), b.mass.to_bits());
        assert_eq!(a.time.to_bits(), b.time.to_bits());
        assert_eq!((a.step, &a.face, &a.coords), (b.step, &b.face, &b.coords));
    }

    let summary = json(&out.path().join("summary.json"));
    let total = summary["total_detected"].as_f64().unwrap();
    assert!((total - want.total_detected()).abs() <= 1e-15);
    assert!((total + summary["survivor"].as_f64().unwrap() - 1.0).abs() <= 1e-10);
    assert_eq!(summary["per_face"].as_object().unwrap().len(), 2);
}

#[test]
fn reflecting_run_detects_nothing() {
    let tmp = TempDir::new().unwrap();
    let cfg = variant(tmp.path(), "interval.toml", &[("kappa = 1.0", "kappa = 0.0")]);
    ok(&absorbd(&["run", "--config", cfg.to_str().unwrap()], tmp.path()));
    let summary = json(&tmp.path().join("summary.json"));
    assert!(summary["total_detected"].as_f64().unwrap().abs() <= 1e-12);
}

#[test]
fn missing_kappa_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = variant(tmp.path(), "interval.toml", &[("kappa = 1.0", "")]);
    let o = absorbd(&["run", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("boundary.kappa required"));
    assert!(!tmp.path().join("summary.json").exists());
}

#[test]
fn malformed_and_emitting_configs_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let cfg = variant(tmp.path(), "interval.toml", &[("nodes = 201", "nodes = \"many\"")]);
    let o = absorbd(&["run", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));

    let cfg = variant(tmp.path(), "spectrum64.toml", &[("kappa = 1.0", "kappa = -1.0")]);
    let o = absorbd(&["spectrum", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    ok(&absorbd(&["spectrum", "--config", cfg.to_str().unwrap(), "--allow-emitting"], tmp.path()));
    let s = json(&tmp.path().join("spectrum_summary.json"));
    assert!(s["max_im_scaled"].as_f64().unwrap() > 1e-6);
}

#[test]
fn resonant_packet_is_absorbed() {
    let out = TempDir::new().unwrap();
    ok(&absorbd(&["run", "--config", config("resonant.toml").to_str().unwrap()], out.path()));
    let total = json(&out.path().join("summary.json"))["total_detected"].as_f64().unwrap();
    assert!(total >= 0.99, "{total}");
}

#[test]
fn povm_report_is_complete_and_reproducible() {
    let out = TempDir::new().unwrap();
    let cfg = config("povm16.toml");
    let args = ["povm", "--config", cfg.to_str().unwrap()];
    ok(&absorbd(&args, out.path()));
    let first = fs::read(out.path().join("povm_report.json")).unwrap();
    ok(&absorbd(&args, out.path()));
    assert_eq!(first, fs::read(out.path().join("povm_report.json")).unwrap());
    let r: Value = serde_json::from_slice(&first).unwrap();
    assert!(r["completeness_residual"].as_f64().unwrap() <= 1e-10);
    assert_eq!(r["steps"].as_u64(), Some(64));
    assert_eq!(r["e_inf_matches_survivor"], Value::Bool(true));

    let tmp = TempDir::new().unwrap();
    let cfg = variant(tmp.path(), "povm16.toml", &[("kappa = 1.0", "kappa = 0.0")]);
    ok(&absorbd(&["povm", "--config", cfg.to_str().unwrap()], tmp.path()));
    let r = json(&tmp.path().join("povm_report.json"));
    assert!((r["min_eig_E_inf"].as_f64().unwrap() - 1.0).abs() <= 1e-12);
}

#[test]
fn oversized_povm_hits_the_guard() {
    let tmp = TempDir::new().unwrap();
    let cfg = variant(tmp.path(), "povm16.toml", &[("nodes = 16", "nodes = 2500")]);
    let o = absorbd(&["povm", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn cascade_runs_are_deterministic_and_the_table_closes() {
    let tmp = TempDir::new().unwrap();
    let cfg = config("pair.toml");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&absorbd(&["cascade", "--config", cfg.to_str().unwrap()], &a));
    ok(&absorbd(&["cascade", "--config", cfg.to_str().unwrap(), "--jobs", "4"], &b));
    let runs = fs::read_to_string(a.join("runs.jsonl")).unwrap();
    assert_eq!(runs, fs::read_to_string(b.join("runs.jsonl")).unwrap());
    assert_eq!(runs.lines().count(), 200);
    let seeds: Vec<u64> = runs.lines().map(|l| serde_json::from_str::<Value>(l).unwrap()["seed"].as_u64().unwrap()).collect();
    assert_eq!(seeds, (7..207).collect::<Vec<_>>());

    let rows = csv_rows(&a.join("joint_table.csv"));
    let total = rows.last().unwrap();
    assert_eq!(total[0], "total");
    assert!((total.last().unwrap().parse::<f64>().unwrap() - 1.0).abs() <= 1e-8);

    let c = tmp.path().join("c");
    ok(&absorbd(&["cascade", "--config", cfg.to_str().unwrap(), "--seed", "8"], &c));
    let shifted = fs::read_to_string(c.join("runs.jsonl")).unwrap();
    assert_eq!(shifted.lines().next(), runs.lines().nth(1));
}

#[test]
fn single_particle_cascade_matches_sampling() {
    let tmp = TempDir::new().unwrap();
    let cfg = variant(tmp.path(), "interval.toml", &[("seed = 1", "seed = 1\n[cascade]\nruns = 25")]);
    ok(&absorbd(&["cascade", "--config", cfg.to_str().unwrap()], tmp.path()));
    let g = build_grid(&DomainSpec::interval(0.0, 10.0), 201).unwrap().into_arc();
    let h = assemble_schrodinger(g.clone(), &PotentialField::zero(&g), &BoundaryParams::absorbing(1.0), Units::default()).unwrap();
    let prop = CnPropagator::new(Arc::new(h), 0.01).unwrap();
    let psi = WaveFunction::gaussian(g, &[vec![5.0]], 0.6, &[vec![1.0]]).unwrap().normalized().unwrap();
    let text = fs::read_to_string(tmp.path().join("runs.jsonl")).unwrap();
    for (r, line) in text.lines().enumerate() {
        let run: Value = serde_json::from_str(line).unwrap();
        match sample_detection(&prop, &psi, 20.0, 1 + r as u64).unwrap() {
            Outcome::Detected(e) => {
                let ev = &run["events"][0];
                assert_eq!(ev["step"].as_u64(), Some(e.step as u64));
                assert_eq!(ev["node"].as_u64(), Some(e.node as u64));
            }
            Outcome::NoDetectionWithinHorizon => assert_eq!(run["truncated"], Value::Bool(true)),
        }
    }
}

#[test]
fn spectrum_lies_in_the_lower_half_plane() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("absorbing");
    ok(&absorbd(&["spectrum", "--config", config("spectrum64.toml").to_str().unwrap()], &out));
    let g = build_grid(&DomainSpec::interval(0.0, 10.0), 64).unwrap().into_arc();
    let h = assemble_schrodinger(g.clone(), &PotentialField::zero(&g), &BoundaryParams::absorbing(1.0), Units::default()).unwrap();
    let want = spectrum_report(&h).unwrap();
    let rows = csv_rows(&out.join("spectrum.csv"));
    assert_eq!(rows.len(), 64);
    for (row, z) in rows.iter().zip(&want.eigenvalues) {
        assert_eq!(row[1].parse::<f64>().unwrap().to_bits(), z.re.to_bits());
        assert_eq!(row[2].parse::<f64>().unwrap().to_bits(), z.im.to_bits());
    }
    assert!(rows.iter().any(|r| r[2].parse::<f64>().unwrap() < -1e-6));
    let offdiag = csv_rows(&out.join("gram.csv"))
        .iter()
        .filter(|r| r[0] != r[1])
        .map(|r| r[2].parse::<f64>().unwrap().hypot(r[3].parse::<f64>().unwrap()))
        .fold(0.0, f64::max);
    assert!(offdiag > 1e-3, "{offdiag}");

    let cfg = variant(tmp.path(), "spectrum64.toml", &[("kappa = 1.0", "kappa = 0.0")]);
    let out = tmp.path().join("reflecting");
    ok(&absorbd(&["spectrum", "--config", cfg.to_str().unwrap()], &out));
    let max_im = csv_rows(&out.join("spectrum.csv")).iter().map(|r| r[2].parse::<f64>().unwrap().abs()).fold(0.0, f64::max);
    assert!(max_im <= 1e-10, "{max_im}");
}

#[test]
fn dirac_run_closes() {
    let out = TempDir::new().unwrap();
    ok(&absorbd(&["run", "--config", config("dirac.toml").to_str().unwrap()], out.path()));
    let s = json(&out.path().join("summary.json"));
    let (total, survivor) = (s["total_detected"].as_f64().unwrap(), s["survivor"].as_f64().unwrap());
    assert!((total + survivor - 1.0).abs() <= 1e-10);
    assert!(total > 0.5, "{total}");
}

#[test]
fn bench_reports_residuals() {
    let out = TempDir::new().unwrap();
    ok(&absorbd(&["bench", "--config", config("bench_small.toml").to_str().unwrap()], out.path()));
    let reports = json(&out.path().join("bench.json"));
    let reports = reports.as_array().unwrap();
    assert_eq!(reports.len(), 4);
    for r in reports {
        assert!(r["residuals"]["contraction"].as_f64().unwrap() <= 1e-13);
        assert!(r["residuals"]["flux_balance"].as_f64().unwrap() <= 1e-12);
    }
    assert!(reports[2]["residuals"]["povm"].as_f64().unwrap() <= 1e-10);
    assert!(reports[0]["residuals"]["povm"].is_null());
}

#[test]
fn env_output_dir_overrides_flag() {
    let tmp = TempDir::new().unwrap();
    let (flag, env) = (tmp.path().join("flag"), tmp.path().join("env"));
    let o = Command::new(env!("CARGO_BIN_EXE_absorbd"))
        .args(["povm", "--config", config("povm16.toml").to_str().unwrap(), "--out"])
        .arg(&flag)
        .env("ABSORBD_OUT", &env)
        .output()
        .unwrap();
    ok(&o);
    assert!(env.join("povm_report.json").exists());
    assert!(!flag.join("povm_report.json").exists());
}
