use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use serde_json::Value;

fn varta(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_varta"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn designs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("designs")
}

fn model_path() -> String {
    designs().join("trivariate_model.json").display().to_string()
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

fn simulate(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let out = dir.join(format!("sim_{n}_{seed}.csv"));
    let o = varta(&["simulate", "--config", &model_path(), "-n", &n.to_string(), "--seed", &seed.to_string(), "--out", &s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn simulate_is_deterministic_and_positive() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate(dir.path(), 500, 42);
    let b = dir.path().join("again.csv");
    let o = varta(&["simulate", "--model", &model_path(), "-n", "500", "--seed", "42", "--out", &s(&b)]);
    assert_eq!(code(&o), 0);
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ta, tb);
    let text = String::from_utf8(ta).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "X1,X2,X3");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 500);
    for r in rows {
        let vals: Vec<f64> = r.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(vals.len(), 3);
        assert!(vals.iter().all(|v| *v > 0.0));
    }
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(&dir.path().join("x.csv"));
    assert_eq!(code(&varta(&["simulate", "--config", &model_path(), "-n", "0", "--seed", "1", "--out", &out])), 2);
    assert_eq!(code(&varta(&["simulate", "--config", &model_path(), "-n", "10", "--out", &out])), 2);
    assert_eq!(code(&varta(&["frobnicate"])), 2);
    assert_eq!(code(&varta(&[])), 2);
    assert!(!dir.path().join("x.csv").exists());
}

#[test]
fn invalid_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"p": 2, "k": 1, "A": [[0.5, 0.1]], "rho": [0.2], "marginals": []}"#).unwrap();
    let o = varta(&["simulate", "--config", &s(&cfg), "-n", "10", "--seed", "1", "--out", &s(&dir.path().join("x.csv"))]);
    assert_eq!(code(&o), 3);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains('A') || err.contains("marginals"), "{err}");
}

#[test]
fn fit_writes_result_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), 800, 3);
    let out = dir.path().join("fit.json");
    let o = varta(&["fit", "--data", &s(&data), "--families", "weibull,weibull,weibull", "--out", &s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.contains("Multivariate relationships") && table.contains("Marginal parameters"));
    let fr: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(fr["parameters"].as_array().unwrap().len(), 18);
    assert_eq!(fr["converged"], Value::Bool(true));
    let parsed: varta::FitResult = serde_json::from_value(fr).unwrap();
    assert!(parsed.se().iter().all(|v| v.is_finite() && *v > 0.0));
}

#[test]
fn malformed_csv_is_a_validation_error_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    std::fs::write(&data, "a,b\n1.0,2.0\n3.0,oops\n").unwrap();
    let out = dir.path().join("fit.json");
    let o = varta(&["fit", "--data", &s(&data), "--families", "gaussian,gaussian", "--out", &s(&out)]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 2"));
    assert!(!out.exists());

    let good = simulate(dir.path(), 100, 1);
    let o = varta(&["fit", "--data", &s(&good), "--families", "weibull,weibull", "--out", &s(&out)]);
    assert_eq!(code(&o), 3);
    assert!(!out.exists());
    let o = varta(&["fit", "--data", &s(&good), "--families", "weibull,cauchy,weibull", "--out", &s(&out)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn forecast_summary_and_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), 300, 5);
    let run = |tag: &str, paths: &str| {
        let out = dir.path().join(format!("fc_{tag}.csv"));
        let o = varta(&[
            "forecast", "--model", &model_path(), "--data", &s(&data), "--horizon", "9", "--paths", paths,
            "--seed", "17", "--out", &s(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let summary = std::fs::read_to_string(dir.path().join(format!("fc_{tag}.summary.json"))).unwrap();
        (std::fs::read_to_string(out).unwrap(), serde_json::from_str::<Value>(&summary).unwrap())
    };
    let (csv_a, sum_a) = run("a", "1000");
    let (csv_b, sum_b) = run("b", "1000");
    assert_eq!(csv_a, csv_b);
    assert_eq!(sum_a, sum_b);
    assert_eq!(csv_a.lines().next().unwrap(), "horizon,series,path,value");
    assert_eq!(csv_a.lines().count(), 1 + 9 * 3 * 1000);
    let rows = sum_a["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 27);
    for r in rows {
        let q = r["quantiles"].as_array().unwrap();
        let (lo, med, hi) = (q[0].as_f64().unwrap(), r["median"].as_f64().unwrap(), q[1].as_f64().unwrap());
        assert!(lo < med && med < hi);
    }
    let (_, single) = run("one", "1");
    for r in single["rows"].as_array().unwrap() {
        assert_eq!(r["mean"], r["median"]);
    }
    let o = varta(&[
        "forecast", "--model", &model_path(), "--data", &s(&data), "--horizon", "0", "--seed", "1", "--out",
        &s(&dir.path().join("z.csv")),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn diagnose_report_reparses() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), 400, 8);
    let out = dir.path().join("diag.json");
    let cg = dir.path().join("cg.csv");
    let o = varta(&[
        "diagnose", "--model", &model_path(), "--data", &s(&data), "--out", &s(&out), "--correlogram", &s(&cg),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8(o.stdout).unwrap().contains("Ljung-Box"));
    let rep: varta::ResidualReport = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(rep.residuals.len(), 399);
    assert_eq!(rep.whiteness.len(), 3);
    assert!(std::fs::read_to_string(cg).unwrap().starts_with("kind,series,other,lag,value,band"));
}

#[test]
fn support_violation_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("neg.csv");
    let mut text = String::from("a,b,c\n");
    for t in 0..60 {
        text.push_str(&format!("{},1.0,1.0\n", if t == 7 { -1.0 } else { 1.0 + t as f64 * 0.01 }));
    }
    std::fs::write(&data, text).unwrap();
    let o = varta(&["diagnose", "--model", &model_path(), "--data", &s(&data), "--out", &s(&dir.path().join("d.json"))]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 8"));
}

#[test]
fn mc_smoke_design_is_fast() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mc.json");
    let t = Instant::now();
    let o = varta(&["mc", "--config", &s(&designs().join("trivariate_smoke.json")), "--out", &s(&out), "--quiet"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(t.elapsed().as_secs_f64() < 10.0);
    assert!(String::from_utf8(o.stdout).unwrap().contains("Average"));
    let rep: varta::McReport = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let sr = &rep.results[0];
    if sr.used == 1 {
        assert!(sr.parameters.iter().all(|p| p.coverage == 0.0 || p.coverage == 1.0));
    }
}

#[test]
fn invalid_design_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("d.json");
    std::fs::write(&cfg, r#"{"sample_sizes": [200], "replications": 5}"#).unwrap();
    let o = varta(&["mc", "--config", &s(&cfg), "--out", &s(&dir.path().join("r.json"))]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("truth"));
}

#[test]
fn bundled_designs_match_constructors() {
    use varta::montecarlo::{trivariate_truth, McDesign};
    let read = |f: &str| McDesign::from_json(&std::fs::read_to_string(designs().join(f)).unwrap()).unwrap();
    assert_eq!(read("trivariate.json"), McDesign::trivariate(vec![200, 500], 200, 20240101).unwrap());
    assert_eq!(read("six_dim.json").truth, varta::montecarlo::six_dim_truth());
    assert_eq!(varta::io::read_model(Path::new(&model_path())).unwrap(), trivariate_truth());
}
