use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fermi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fermi"))
        .args(args)
        .env_remove("FERMI_THREADS")
        .output()
        .expect("binary runs")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn value(stdout: &str, key: &str) -> f64 {
    let line = stdout.lines().find(|l| l.starts_with(&format!("{key} = "))).unwrap();
    line.split_whitespace().nth(2).unwrap().parse().unwrap()
}

#[test]
fn convert_cesium_sets() {
    for (file, kbar) in [("cesium_set1.toml", 4.0), ("cesium_set2.toml", 1.0)] {
        let out = fermi(&["--config", arg(&configs().join(file)), "convert"]);
        assert!(out.status.success());
        let s = String::from_utf8(out.stdout).unwrap();
        assert!((value(&s, "kbar") - kbar).abs() / kbar < 0.02);
        assert!((value(&s, "kappa") - 0.5).abs() / 0.5 < 0.02);
        assert!((value(&s, "v0") - 4.0).abs() / 4.0 < 0.02);
    }
}

#[test]
fn missing_key_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[dimensionless]\nv0 = 4.0\nlambda = 0.4\nkbar = 1.0\n").unwrap();
    let out = fermi(&["--config", arg(&cfg), "convert"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error[config]"), "{err}");
    assert!(err.contains("dimensionless.kappa"), "{err}");
}

#[test]
fn bad_override_and_parameter_report_category() {
    let out = fermi(&["--override", "run.grid_points=1000", "convert"]);
    assert_eq!(out.status.code(), Some(2));
    let out = fermi(&["--override", "nonsense", "convert"]);
    assert_eq!(out.status.code(), Some(2));
    let out = fermi(&["--override", "dimensionless.kbar=-1", "convert"]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn quick_fig1_writes_outputs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = fermi(&[
        "--config",
        arg(&configs().join("quick.toml")),
        "--out",
        arg(dir.path()),
        "--threads",
        "1",
        "reproduce",
        "fig1",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["poincare.csv", "islands.csv", "pos_dist.csv", "mom_dist.csv", "plateaus.csv", "report.txt", "manifest.toml"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let manifest: toml::Table = std::fs::read_to_string(dir.path().join("manifest.toml")).unwrap().parse().unwrap();
    assert_eq!(manifest["invocation"]["command"].as_str(), Some("reproduce fig1"));
    assert_eq!(manifest["invocation"]["threads"].as_integer(), Some(1));
    assert_eq!(manifest["config"]["run"]["t_final"].as_float(), Some(60.0));
    assert!(manifest["outputs"].as_table().unwrap().contains_key("pos_dist.csv"));
}

#[test]
fn analyze_reads_back_a_profile() {
    let dir = tempfile::tempdir().unwrap();
    let quick = configs().join("quick.toml");
    let run = fermi(&["--config", arg(&quick), "--out", arg(dir.path()), "quantum"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(dir.path().join("psi.bin").exists());
    let a = dir.path().join("a");
    let prof = dir.path().join("pos_dist.csv");
    let out = fermi(&["--config", arg(&quick), "--out", arg(&a), "analyze", "--space", "position", "--profile", arg(&prof)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(a.join("plateaus.csv")).unwrap();
    assert!(text.starts_with("resonance,lo,hi,mean_log10_level,width,detected"));

    std::fs::write(dir.path().join("bad.csv"), "x,y\n1,2\n").unwrap();
    let bad = dir.path().join("bad.csv");
    let out = fermi(&["--config", arg(&quick), "--out", arg(&a), "analyze", "--space", "position", "--profile", arg(&bad)]);
    assert_eq!(out.status.code(), Some(8));
}
