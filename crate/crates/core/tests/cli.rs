use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use polydiagram::geometry::{generate_apd, generate_pd};
use polydiagram::io::{read_grain_map, read_json, read_theta, PhysicalRecord, CORRECT_COLOUR};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polydiagram")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = bin(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(dir: &Path, kind: &str, n: &str, m: &str, seed: &str) -> PathBuf {
    let out = dir.join(format!("{kind}-{seed}"));
    ok(&["generate", "--kind", kind, "--n", n, "--m", m, "--seed", seed, "--out-dir", s(&out)]);
    out
}

#[test]
fn generate_is_deterministic_and_sized() {
    let dir = tempfile::tempdir().unwrap();
    let a = generate(dir.path(), "pd", "50", "70", "7");
    let b = dir.path().join("again");
    ok(&["generate", "--kind", "pd", "--n", "50", "--m", "70", "--seed", "7", "--out-dir", s(&b)]);
    for f in ["grainmap.csv", "physical.json", "theta_true.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let text = fs::read_to_string(a.join("grainmap.csv")).unwrap();
    assert_eq!(text.lines().count(), 19600 + 1);
    assert_eq!(read_grain_map(&a.join("grainmap.csv")).unwrap().len(), 19600);
}

#[test]
fn isotropic_apd_equals_pd() {
    let dir = tempfile::tempdir().unwrap();
    let pd = generate(dir.path(), "pd", "9", "12", "3");
    let apd = dir.path().join("apd0");
    ok(&[
        "generate", "--kind", "apd", "--n", "9", "--m", "12", "--seed", "3", "--anisotropy", "0", "--out-dir", s(&apd),
    ]);
    assert_eq!(
        fs::read(pd.join("grainmap.csv")).unwrap(),
        fs::read(apd.join("grainmap.csv")).unwrap()
    );
}

#[test]
fn fit_outputs_and_warm_restart() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "pd", "8", "20", "1");
    let input = data.join("grainmap.csv");
    let out = dir.path().join("fit");
    ok(&["fit", "--input", s(&input), "--degree", "1", "--iters", "60", "--out-dir", s(&out)]);
    for f in ["theta.csv", "report.json", "labels.csv", "misassignment.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let first: serde_json::Value = read_json(&out.join("report.json")).unwrap();
    let again = dir.path().join("refit");
    ok(&[
        "fit", "--input", s(&input), "--iters", "60", "--init", s(&out.join("theta.csv")), "--out-dir", s(&again),
    ]);
    let second: serde_json::Value = read_json(&again.join("report.json")).unwrap();
    let phis = |v: &serde_json::Value| -> Vec<f64> {
        v["trajectory"]["phi"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
    };
    let (p1, p2) = (phis(&first), phis(&second));
    assert!(p2[0] >= *p1.last().unwrap() - 1e-15);
    assert!(p2.windows(2).all(|w| w[1] >= w[0]));
    assert_eq!(second["init"], "explicit");
}

#[test]
fn heuristic_start_beats_zero_start() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("apd");
    ok(&["generate", "--kind", "apd", "--n", "10", "--m", "25", "--seed", "5", "--out-dir", s(&data)]);
    let input = data.join("grainmap.csv");
    let mut initial = Vec::new();
    for init in ["zero", "heuristic"] {
        let out = dir.path().join(init);
        ok(&[
            "fit", "--input", s(&input), "--degree", "2", "--iters", "5", "--init", init, "--out-dir", s(&out),
        ]);
        let r: serde_json::Value = read_json(&out.join("report.json")).unwrap();
        initial.push(r["trajectory"]["err"][0].as_f64().unwrap());
    }
    assert!(initial[1] < initial[0], "{initial:?}");
}

#[test]
fn fit_then_physical_regenerates_fitted_labels() {
    let dir = tempfile::tempdir().unwrap();
    for (kind, degree) in [("pd", "1"), ("apd", "2")] {
        let data = generate(dir.path(), kind, "6", "15", "2");
        let out = dir.path().join(format!("fit-{kind}"));
        ok(&[
            "fit", "--input", s(&data.join("grainmap.csv")), "--degree", degree, "--iters", "80", "--out-dir", s(&out),
        ]);
        let phys = out.join("physical.json");
        ok(&["convert", "--input", s(&out.join("theta.csv")), "--direction", "to-physical", "--out", s(&phys)]);
        let record: PhysicalRecord = read_json(&phys).unwrap();
        let fitted = read_grain_map(&out.join("labels.csv")).unwrap();
        let regenerated = if degree == "1" {
            generate_pd(&record.to_pd().unwrap(), fitted.grid()).unwrap()
        } else {
            generate_apd(&record.to_apd().unwrap(), fitted.grid()).unwrap()
        };
        assert_eq!(regenerated.labels(), fitted.labels(), "{kind}");
    }
}

#[test]
fn convert_directions() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "apd", "5", "10", "4");
    let theta = data.join("theta_true.csv");
    let leg = dir.path().join("leg.csv");
    let mono = dir.path().join("mono.csv");
    ok(&["convert", "--input", s(&theta), "--direction", "to-legendre", "--out", s(&leg)]);
    ok(&["convert", "--input", s(&leg), "--direction", "to-monomial", "--out", s(&mono)]);
    let (a, b) = (read_theta(&theta).unwrap(), read_theta(&mono).unwrap());
    for (x, y) in a.values().iter().zip(b.values()) {
        assert!((x - y).abs() <= 1e-12);
    }
    let repaired = dir.path().join("rep.csv");
    ok(&["convert", "--input", s(&leg), "--direction", "psd-repair", "--out", s(&repaired)]);
    assert_eq!(read_theta(&repaired).unwrap().kind(), polydiagram::BasisKind::Legendre);

    // Degree 1 coefficients have no quadratic blocks to repair.
    let pd = generate(dir.path(), "pd", "5", "10", "4");
    let out = bin(&[
        "convert", "--input", s(&pd.join("theta_true.csv")), "--direction", "psd-repair", "--out", s(&repaired),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn render_modes() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "pd", "6", "8", "9");
    let map = data.join("grainmap.csv");
    let (a, b) = (dir.path().join("a.ppm"), dir.path().join("b.ppm"));
    ok(&["render", "--input", s(&map), "--mode", "labels", "--out", s(&a)]);
    ok(&["render", "--input", s(&map), "--mode", "labels", "--out", s(&b)]);
    let img = fs::read(&a).unwrap();
    assert_eq!(img, fs::read(&b).unwrap());
    assert!(img.starts_with(b"P6\n16 16\n255\n"));

    // A perfect fit renders uniformly pink.
    let fit = dir.path().join("fit");
    ok(&["fit", "--input", s(&map), "--degree", "1", "--iters", "400", "--out-dir", s(&fit)]);
    let r: serde_json::Value = read_json(&fit.join("report.json")).unwrap();
    if r["err_final"].as_f64().unwrap() == 0.0 {
        let mis = dir.path().join("mis.ppm");
        ok(&["render", "--input", s(&fit.join("misassignment.csv")), "--mode", "misassignment", "--out", s(&mis)]);
        let img = fs::read(&mis).unwrap();
        let header = b"P6\n16 16\n255\n".len();
        assert!(img[header..].chunks(3).all(|p| p == CORRECT_COLOUR));
    }

    let scattered = dir.path().join("scattered.csv");
    fs::write(&scattered, "x1,x2,label\n0.1,0.2,1\n-0.3,0.7,2\n0.5,-0.5,1\n").unwrap();
    let out = bin(&["render", "--input", s(&scattered), "--out", s(&dir.path().join("x.ppm"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("regular"));
}

#[test]
fn metrics_table_from_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "apd", "6", "10", "11");
    let input = data.join("grainmap.csv");
    let mut reports = Vec::new();
    for d in ["1", "2", "3"] {
        let out = dir.path().join(format!("d{d}"));
        ok(&["fit", "--input", s(&input), "--degree", d, "--iters", "30", "--out-dir", s(&out)]);
        reports.push(out.join("report.json"));
    }
    let table = dir.path().join("table.csv");
    let mut args = vec!["metrics", "--inputs"];
    args.extend(reports.iter().map(|p| s(p)));
    args.extend(["--out", s(&table)]);
    ok(&args);
    let text = fs::read_to_string(&table).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "d,K_d,phi_final,acc_final,err_final,compr");
    assert_eq!(lines.len(), 4);
    assert!(lines[2].starts_with("2,6,"));
    assert!(lines[3].starts_with("3,10,"));
}

#[test]
fn config_file_supplies_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let out = dir.path().join("gen");
    fs::write(
        &cfg,
        serde_json::json!({"generate": {"kind": "pd", "n": 4, "m": 5, "seed": 3, "out_dir": s(&out)}}).to_string(),
    )
    .unwrap();
    ok(&["generate", "--config", s(&cfg)]);
    assert_eq!(read_grain_map(&out.join("grainmap.csv")).unwrap().len(), 100);
    // Command-line flags win over the file.
    ok(&["generate", "--config", s(&cfg), "--m", "3"]);
    assert_eq!(read_grain_map(&out.join("grainmap.csv")).unwrap().len(), 36);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "x1,x2,label\n0.5,0.5,1\n0.5,oops,2\n").unwrap();
    let out = bin(&["fit", "--input", s(&bad), "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("line 3") && msg.contains("x2"), "{msg}");

    let out = bin(&["fit", "--input", s(&dir.path().join("missing.csv")), "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(4));

    assert_eq!(bin(&["fit"]).status.code(), Some(2));
    assert_eq!(bin(&["generate", "--kind", "pd", "--n", "1", "--m", "4", "--out-dir", s(dir.path())]).status.code(), Some(2));
}
