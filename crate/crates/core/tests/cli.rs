use std::path::Path;
use std::process::{Command, Output};

use condaj::simulate::{MarginalLaw, Scenario};

fn condaj(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_condaj")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = condaj(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// `(time, state, value)` rows of an occupation table.
fn occupation(path: &Path) -> Vec<(f64, i64, f64)> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].parse().unwrap(), r[1].parse().unwrap(), r[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn simulate_then_fit_writes_conserving_tables() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("sample.csv");
    let out = dir.path().join("fit");
    ok(&["simulate", "--out", s(&data), "--n", "300", "--seed", "4"]);
    ok(&["fit", "--input", s(&data), "--out", s(&out), "--x", "0.5", "--x", "0.2", "--theta", "3"]);
    for k in 0..2 {
        for suffix in ["hazard.csv", "occupation.csv", "fit.json"] {
            assert!(out.join(format!("x{k}_{suffix}")).exists());
        }
        let rows = occupation(&out.join(format!("x{k}_occupation.csv")));
        assert_eq!(rows.len() % 3, 0);
        for chunk in rows.chunks(3) {
            assert!(chunk[0].0 <= 3.0);
            assert!((chunk.iter().map(|r| r.2).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("x0_fit.json")).unwrap()).unwrap();
    assert_eq!(json["x"][0].as_f64(), Some(0.5));
    assert_eq!(json["states"], serde_json::json!([1, 2, 3]));
}

#[test]
fn atomic_fit_equals_landmark_subsample_fit() {
    let dir = tempfile::tempdir().unwrap();
    let mut scenario = Scenario::illness_death(400, 6);
    scenario.covariates = vec![MarginalLaw::Discrete {
        values: vec![0.0, 1.0, 2.0],
        probs: vec![0.3, 0.4, 0.3],
    }];
    let scen = dir.path().join("scenario.json");
    std::fs::write(&scen, scenario.to_json().unwrap()).unwrap();
    let data = dir.path().join("sample.csv");
    ok(&["simulate", "--scenario", s(&scen), "--out", s(&data)]);

    // keep subjects whose covariate (given on their first row) equals 1
    let text = std::fs::read_to_string(&data).unwrap();
    let mut lines = text.lines();
    let mut sub = format!("{}\n", lines.next().unwrap());
    let mut keep = std::collections::HashSet::new();
    for line in lines {
        let id = line.split(',').next().unwrap().to_string();
        let x = line.rsplit(',').next().unwrap();
        if !x.is_empty() && x.parse::<f64>().unwrap() == 1.0 {
            keep.insert(id.clone());
        }
        if keep.contains(&id) {
            sub.push_str(line);
            sub.push('\n');
        }
    }
    let sub_path = dir.path().join("sub.csv");
    std::fs::write(&sub_path, sub).unwrap();

    let full = dir.path().join("full");
    let land = dir.path().join("land");
    let declared = ["--states", "1,2,3", "--absorbing", "3"];
    let mut args = vec!["fit", "--input", s(&data), "--out", s(&full), "--x", "1", "--atoms", "1:0,1,2"];
    args.extend(declared);
    ok(&args);
    let mut args = vec!["fit", "--input", s(&sub_path), "--out", s(&land), "--x", "1", "--atoms", "1:1"];
    args.extend(declared);
    ok(&args);
    let a = occupation(&full.join("x0_occupation.csv"));
    let b = occupation(&land.join("x0_occupation.csv"));
    assert_eq!(a.len(), b.len());
    for (ra, rb) in a.iter().zip(&b) {
        assert_eq!((ra.0, ra.1), (rb.0, rb.1));
        assert!((ra.2 - rb.2).abs() <= 1e-12);
    }
}

#[test]
fn empty_kernel_window_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("sample.csv");
    ok(&["simulate", "--out", s(&data), "--n", "50"]);
    let out = condaj(&["fit", "--input", s(&data), "--out", s(&dir.path().join("o")), "--x", "7.5", "--bandwidth", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("7.5"));
}

#[test]
fn invalid_configuration_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("sample.csv");
    ok(&["simulate", "--out", s(&data), "--n", "20"]);
    let o = s(dir.path()).to_string();
    for extra in [
        vec!["--epsilon", "0"],
        vec!["--eta", "1.5"],
        vec!["--kernel", "gaussian"],
        vec!["--atoms", "3:0"],
    ] {
        let mut args = vec!["fit", "--input", s(&data), "--out", &o, "--x", "0.5"];
        args.extend(extra.iter().copied());
        assert_eq!(condaj(&args).status.code(), Some(1), "{extra:?}");
    }
    let out = condaj(&["fit", "--input", s(&data), "--out", &o, "--x", "0.5,0.5"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn floor_warning_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("sample.csv");
    ok(&["simulate", "--out", s(&data), "--n", "40", "--seed", "3"]);
    let out = ok(&["fit", "--input", s(&data), "--out", s(&dir.path().join("o")), "--x", "0.5", "--epsilon", "0.2"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsilon floor active"));
}

#[test]
fn covariance_writes_symmetric_surfaces() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("sample.csv");
    let out = dir.path().join("cov");
    ok(&["simulate", "--out", s(&data), "--n", "200", "--seed", "2"]);
    ok(&["covariance", "--input", s(&data), "--out", s(&out), "--x", "0.5", "--grid", "12"]);
    for name in ["x0_hazard_1_2.csv", "x0_occupation_1.csv", "x0_covariance.json"] {
        assert!(out.join(name).exists(), "{name}");
    }
    let mut rdr = csv::Reader::from_path(out.join("x0_hazard_1_2.csv")).unwrap();
    let cells: Vec<(f64, f64, f64)> = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].parse().unwrap(), r[1].parse().unwrap(), r[2].parse().unwrap())
        })
        .collect();
    assert_eq!(cells.len(), 144);
    for &(a, b, v) in &cells {
        let mirror = cells.iter().find(|c| c.0 == b && c.1 == a).unwrap();
        assert_eq!(mirror.2, v);
    }
}

#[test]
fn quick_check_passes() {
    let out = ok(&["check", "--quick"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("[PASS]")).count(), 10, "{stdout}");
}
