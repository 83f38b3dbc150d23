use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn ogc(args: &[&str], out: &Path) -> (i32, String, String) {
    let o =
        Command::new(env!("CARGO_BIN_EXE_ogc")).args(args).env("OGC_OUTPUT_DIR", out).output().expect("binary runs");
    (
        o.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&o.stdout).into(),
        String::from_utf8_lossy(&o.stderr).into(),
    )
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn constants_on_the_disk_reports_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("euclidean_disk.json");
    let (code, stdout, _) = ogc(&["constants", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(code, 0);
    assert!(stdout.contains("PASS"));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("constants.json")).unwrap()).unwrap();
    assert!((v["k0"]["raw"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!((v["m0"]["raw_sq"].as_f64().unwrap() - 4.0).abs() < 0.04);
    assert_eq!(v["m0_inequality"], "PASS");
    assert_eq!(v["strip_inequalities"], "PASS");
}

#[test]
fn radial_scan_writes_an_empty_findings_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("radial_conformal.json");
    let (code, _, _) = ogc(&["scan-ot", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(code, 0);
    let findings = fs::read_to_string(tmp.path().join("ot_chords.csv")).unwrap();
    assert_eq!(findings.lines().count(), 1, "header only");
    assert_eq!(fs::read_to_string(tmp.path().join("scan.csv")).unwrap().lines().count(), 65);
}

#[test]
fn strongly_perturbed_scan_reports_oblique_exits() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{
            "problem": {
                "kind": "geodesic", "dim": 2,
                "metric": {
                    "kind": "perturbed_radial",
                    "profile": { "kind": "polynomial", "coeffs": [1.0, 0.0, 1.0] },
                    "amplitude": 0.8
                }
            },
            "scan": { "grid": 32 }
        }"#,
    );
    let out = tmp.path().join("out");
    let (code, stdout, _) = ogc(&["scan-ot", cfg.to_str().unwrap()], &out);
    assert_eq!(code, 0, "{stdout}");
    let findings = fs::read_to_string(out.join("ot_chords.csv")).unwrap();
    let scan: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("scan.json")).unwrap()).unwrap();
    assert_eq!(findings.lines().count() as u64 - 1, scan["ot_chords"].as_u64().unwrap());
    let min_cos = scan["min_abs_exit_cos"].as_f64().unwrap();
    assert!(min_cos > 0.0 && min_cos < 0.9, "{min_cos}");
}

#[test]
fn malformed_configs_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    for body in [
        "{ not json",
        r#"{ "problem": { "kind": "geodesic", "dim": 2, "metric": { "kind": "euclidean" } }, "typo": 1 }"#,
        r#"{ "problem": { "kind": "geodesic", "dim": 1, "metric": { "kind": "euclidean" } } }"#,
        r#"{ "problem": { "kind": "geodesic", "dim": 2, "metric": { "kind": "euclidean" } },
             "solver": { "tolerances": { "angle": -1.0 } } }"#,
        r#"{ "problem": { "kind": "lagrangian", "dim": 2, "potential": { "kind": "harmonic" }, "energy": 0.5,
             "margin": 0.7 } }"#,
    ] {
        let cfg = write_config(tmp.path(), body);
        let (code, _, stderr) = ogc(&["constants", cfg.to_str().unwrap()], &tmp.path().join("out"));
        assert_eq!(code, 2, "{body}: {stderr}");
        assert!(stderr.contains("error"));
    }
    let (code, _, _) = ogc(&["constants", "/nonexistent/config.json"], tmp.path());
    assert_eq!(code, 2);
    let (code, _, _) = ogc(&["no-such-command", "x.json"], tmp.path());
    assert_eq!(code, 2);
}

#[test]
fn brake_on_a_geodesic_problem_is_a_configuration_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("euclidean_disk.json");
    let (code, _, stderr) = ogc(&["brake", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(code, 2, "{stderr}");
}

#[test]
fn find_ogc_on_the_ellipse_shoots_to_the_major_axis() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("ellipse.json");
    let (code, _, _) = ogc(&["find-ogc", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("ogc.json")).unwrap()).unwrap();
    assert_eq!(v["found"], true);
    assert!((v["report"]["energy"].as_f64().unwrap() - 16.0).abs() < 16e-3);
    assert!(tmp.path().join("ogc.svg").exists());
    let path =
        ogc_core::pathspace::DiscretePath::from_csv(&fs::read_to_string(tmp.path().join("ogc.csv")).unwrap()).unwrap();
    assert!(path.nodes().iter().all(|p| p[1].abs() < 1e-6));
}

#[test]
fn transversality_demo_prints_the_table() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{ "problem": { "kind": "geodesic", "dim": 3, "metric": { "kind": "euclidean" } },
             "transversality": { "lemma_instances": 200 } }"#,
    );
    let (code, stdout, _) = ogc(&["transversality-demo", cfg.to_str().unwrap()], &tmp.path().join("out"));
    assert_eq!(code, 0);
    assert!(stdout.contains("sphere/plane") && stdout.contains("sphere/cylinder"));
    assert!(stdout.contains("200/200"));
    let csv = fs::read_to_string(tmp.path().join("out/transversality.csv")).unwrap();
    assert!(csv.contains("sphere/cylinder,b,false,true,false"), "{csv}");
}
