use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pdc_core::jsa::{read_jsi_csv, SchmidtDecomposition};
use pdc_core::phasematch::TuningCurve;
use pdc_core::CountRecord;

fn replica() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/replica.toml")
}

/// Replica config with a coarse grid and short runs.
const QUICK: &[&str] = &[
    "--set",
    "grid.points=192",
    "--set",
    "grid.half_span_nm=4.5",
    "--set",
    "experiments.0.pulses=200000",
    "--set",
    "experiments.1.pulses=200000",
    "--set",
    "experiments.2.pulses=300000",
    "--set",
    "experiments.3.pulses=300000",
];

fn pdcsim(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdcsim"))
        .arg("--config")
        .arg(replica())
        .arg("--out")
        .arg(out)
        .arg("--quiet")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) {
    let o = pdcsim(out, args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn identical_seeds_give_identical_files() {
    let (a, b, c) = (
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
    );
    let mut args = QUICK.to_vec();
    args.extend(["--seed", "11", "simulate"]);
    ok(a.path(), &args);
    ok(b.path(), &args);
    args[QUICK.len() + 1] = "12";
    ok(c.path(), &args);
    for name in [
        "counts_heralding.json",
        "counts_unheralded_g2.json",
        "counts_heralded_g2.json",
        "simulate.json",
    ] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
    assert_ne!(
        read(a.path(), "counts_heralding.json"),
        read(c.path(), "counts_heralding.json")
    );
}

#[test]
fn empty_shg_range_fails_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let o = pdcsim(dir.path(), &["--set", "shg.stop_nm=1553.0", "shg"]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("error") && err.contains("SHG"), "{err}");
}

#[test]
fn emitted_files_read_back() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = QUICK.to_vec();
    args.push("report");
    ok(dir.path(), &args);
    let d = dir.path();

    let curve = TuningCurve::from_csv(&read(d, "shg_tuning.csv")).unwrap();
    assert_eq!(curve.wavelength_nm.len(), 2101);

    let (axes, jsi) = read_jsi_csv(&read(d, "jsi_filtered.csv")).unwrap();
    assert_eq!(axes.shape(), (192, 192));
    assert_eq!(jsi.dim(), (192, 192));

    let modes = SchmidtDecomposition::from_csv(&read(d, "schmidt_filtered.csv")).unwrap();
    let jsa: serde_json::Value = serde_json::from_str(&read(d, "jsa.json")).unwrap();
    let purity = jsa["filtered"]["purity"].as_f64().unwrap();
    assert!((modes.purity() - purity).abs() < 1e-12);

    let text = read(d, "counts_heralded_g2.json");
    let rec = CountRecord::from_json(&text).unwrap();
    assert_eq!(rec.pulses, 300000);
    assert_eq!(rec.to_json().unwrap(), text);

    let report: serde_json::Value = serde_json::from_str(&read(d, "report.json")).unwrap();
    let checks = report["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 21);
    let tally = &report["tally"];
    let total: u64 = ["pass", "fail", "info", "skipped"]
        .iter()
        .map(|k| tally[k].as_u64().unwrap())
        .sum();
    assert_eq!(total, 21);
}

#[test]
fn overrides_reach_the_run() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["--set", "grid.points=200", "--set", "grid.half_span_nm=4.75", "jsa"],
    );
    let jsa: serde_json::Value = serde_json::from_str(&read(dir.path(), "jsa.json")).unwrap();
    assert_eq!(jsa["grid_points"], 200);
    assert_eq!(jsa["half_span_nm"], 4.75);

    ok(dir.path(), &["--set", "chains.idler.detector_efficiency=0.5", "budget"]);
    let b: serde_json::Value = serde_json::from_str(&read(dir.path(), "budget.json")).unwrap();
    let eta = b["idler_chain_transmission"].as_f64().unwrap();
    assert!((b["predicted_raw_idler_heralding"].as_f64().unwrap() - 0.5 * eta).abs() < 1e-12);
}

#[test]
fn bad_references_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for (set, needle) in [
        ("jsa.signal_filter=nope", "nope"),
        ("experiments.0.idler_chain=missing", "missing"),
        ("checks.0.metric=no_such_metric", "no_such_metric"),
        ("checks.2.metric=heralding.heralded_g2", "heralded_g2"),
        ("device.material=unobtainium", "unobtainium"),
        ("device.colour=1", "colour"),
        ("experiments.1.name=heralding", "duplicate"),
    ] {
        let o = pdcsim(dir.path(), &["--set", set, "design"]);
        assert!(!o.status.success(), "{set} accepted");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(needle), "{set}: {err}");
    }
    let o = pdcsim(dir.path(), &["--set", "grid.points", "design"]);
    assert!(!o.status.success());
}

#[test]
fn missing_config_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_pdcsim"))
        .args(["--config", "/nonexistent/run.toml", "budget"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("run.toml"));
}
