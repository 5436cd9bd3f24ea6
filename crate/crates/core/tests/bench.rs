use absorb_core::bench::{run_bench, run_case, BenchConfig};

fn default_case(name: &str) -> absorb_core::bench::BenchCase {
    BenchConfig::default_cases().into_iter().find(|c| c.name == name).unwrap()
}

#[test]
fn long_interval_run_contracts() {
    let case = default_case("interval-1024");
    assert_eq!((case.nodes, case.steps), (1024, 10_000));
    let a = run_case(&case, 5).unwrap();
    assert!(a.residuals.contraction <= 1e-13, "{:?}", a.residuals);
    let b = run_case(&case, 5).unwrap();
    assert_eq!(a.residuals, b.residuals);
}

#[test]
fn pair_grid_balances_flux() {
    let case = default_case("pair-64x64");
    let r = run_case(&case, 0).unwrap();
    assert_eq!((r.n_nodes, r.n_steps), (64 * 64, 1000));
    assert!(r.residuals.flux_balance <= 1e-12, "{:?}", r.residuals);
    assert!(r.within_tolerances());
}

#[test]
fn report_serialises_with_the_documented_fields() {
    let mut cfg = BenchConfig::default();
    cfg.cases.retain(|c| c.name == "povm-16");
    let reports = run_bench(&cfg, 1).unwrap();
    let v = serde_json::to_value(&reports[0]).unwrap();
    for key in ["case", "n_nodes", "n_steps", "wall_ms", "residuals"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    for key in ["contraction", "flux_balance", "povm", "dissipativity"] {
        assert!(v["residuals"].get(key).is_some(), "{key}");
    }
    assert!(v["residuals"]["povm"].as_f64().unwrap() <= 1e-10);
}
