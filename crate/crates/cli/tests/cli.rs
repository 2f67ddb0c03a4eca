use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use vortexlab::field::snapshot::Snapshot;
use vortexlab::field::{Grid, VectorField};

fn vxl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vxl"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr_json(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stderr);
    let line = text.lines().last().expect("stderr line");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("not JSON: {line} ({e})"))
}

fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_writes_one_row_per_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = vxl(
        dir.path(),
        &["simulate", "--ic", "taylor-green", "--n", "32", "--re", "100", "--dt", "1e-3", "--t-end", "1.0", "--out", "tg"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("tg/diagnostics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 11);
    assert!(csv.lines().next().unwrap().starts_with("t,mean_u2,"));
    let manifest = read_json(dir.path().join("tg/manifest.json"));
    assert_eq!(manifest["n"], 32);
    assert_eq!(manifest["nu_or_Re"]["re"], 100.0);
    assert_eq!(manifest["ic_kind"], "taylor_green");
    let hist = read_json(dir.path().join("tg/qr_histogram.json"));
    assert_eq!(hist.as_array().unwrap().len(), 11);
    assert!(!dir.path().join("tg/.vxl.lock").exists());

    let s = vxl(dir.path(), &["stats", "tg"]);
    assert!(s.status.success(), "{}", String::from_utf8_lossy(&s.stderr));
    let report = read_json(dir.path().join("tg/stats.json"));
    assert_eq!(report["entropy_monotone"], true);
    assert_eq!(report["lq_violations"], 0);
}

#[test]
fn random_runs_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = vxl(
            dir.path(),
            &[
                "simulate", "--ic", "random", "--k0", "4", "--energy", "0.5", "--seed", "7", "--n", "16", "--t-end",
                "0.05", "--output-interval", "0.01", "--snapshots", "--out", out,
            ],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["diagnostics.csv", "qr_histogram.json", "manifest.json", "series.json", "snapshots/u_00005.vxl"] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert!(a == b, "{name} differs");
    }
}

#[test]
fn bad_config_exits_2_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = vxl(dir.path(), &["simulate", "--dt", "-1"]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr_json(&o);
    assert_eq!(e["exit_code"], 2);
    assert!(e["message"].as_str().unwrap().contains("dt"));
    // nothing is written for a rejected config
    assert!(!dir.path().join("run").exists());

    let o = vxl(dir.path(), &["simulate", "--frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "usage");

    let o = vxl(dir.path(), &["simulate", "--n", "12"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.cfg"), "n = 16\nt_end = 0.02\noutput_interval = 0.01\nre = 50\n").unwrap();
    let o = vxl(dir.path(), &["simulate", "--config", "run.cfg", "--re", "80", "--out", "c"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = read_json(dir.path().join("c/manifest.json"));
    assert_eq!(m["n"], 16);
    assert_eq!(m["nu_or_Re"]["re"], 80.0);
}

#[test]
fn cfl_violation_exits_3_with_state() {
    let dir = tempfile::tempdir().unwrap();
    let o = vxl(dir.path(), &["simulate", "--n", "16", "--dt", "0.5", "--t-end", "1", "--output-interval", "0.5"]);
    assert_eq!(o.status.code(), Some(3));
    let e = stderr_json(&o);
    assert_eq!(e["error"], "numerical_abort");
    assert_eq!(e["state"]["step"], 1);
    assert!(e["state"]["max_velocity"].as_f64().unwrap() > 0.0);
    assert!(!dir.path().join("run/.vxl.lock").exists());
}

#[test]
fn busy_output_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(dir.path().join("run")).unwrap();
    std::fs::write(dir.path().join("run/.vxl.lock"), "1").unwrap();
    let o = vxl(dir.path(), &["simulate", "--n", "16", "--t-end", "0.01", "--output-interval", "0.01"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr_json(&o)["message"].as_str().unwrap().contains("in use"));
}

#[test]
fn thread_cap_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_vxl"))
        .current_dir(dir.path())
        .env("VXL_THREADS", "none")
        .args(["kernel", "--timescale", "--nu", "1", "--u", "1"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_vxl"))
        .current_dir(dir.path())
        .env("VXL_THREADS", "2")
        .args(["kernel", "--timescale", "--nu", "1", "--u", "1"])
        .output()
        .unwrap();
    assert!(o.status.success());
}

#[test]
fn verify_taylor_green_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = vxl(dir.path(), &["verify", "--ic", "taylor-green", "--n", "32"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let reports = read_json(dir.path().join("verify/verify.json"));
    let reports = reports.as_array().unwrap();
    assert!(reports.len() >= 12);
    for r in reports.iter().filter(|r| r["gating"] == true) {
        assert_eq!(r["passes"], true, "{r}");
    }
    let summary = read_json(dir.path().join("verify/verify_summary.json"));
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["trs3_vanishing_reading"], "trS3[trS^4]");
}

#[test]
fn verify_rejects_compressible_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let g = Grid::periodic(16).unwrap();
    let u = VectorField::from_fn(&g, |x, _, _| [x.sin(), 0.0, 0.0]);
    Snapshot::from_vector(&u, 0.0, 0.01).save(dir.path().join("bad.vxl")).unwrap();
    let o = vxl(dir.path(), &["verify", "--snapshot", "bad.vxl"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr_json(&o)["message"].as_str().unwrap().contains("solenoidal"));
}

#[test]
fn verify_zero_field() {
    let dir = tempfile::tempdir().unwrap();
    let g = Grid::periodic(16).unwrap();
    Snapshot::from_vector(&VectorField::zeros(&g), 0.0, 0.01).save(dir.path().join("zero.vxl")).unwrap();
    let o = vxl(dir.path(), &["verify", "--snapshot", "zero.vxl"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for r in read_json(dir.path().join("verify/verify.json")).as_array().unwrap() {
        // the Γ₂ check uses a nonzero test scalar, so it carries roundoff
        if r["name"] == "gamma2" {
            assert!(r["relative"].as_f64().unwrap() < 1e-12);
        } else {
            assert_eq!(r["sup_norm"], 0.0, "{r}");
        }
    }
}

#[test]
fn missing_run_directory_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = vxl(dir.path(), &["stats", "nowhere"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "io");
}

#[test]
fn kernel_suite_passes_at_re_100() {
    let dir = tempfile::tempdir().unwrap();
    let o = vxl(dir.path(), &["kernel", "--sigma", "7.07", "--delta", "0.01", "--out", "k"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(dir.path().join("k/kernel.json"));
    for s in r["sandwich"].as_array().unwrap() {
        assert!(s["lower_slack"].as_f64().unwrap() >= -1e-12);
        assert!(s["upper_slack"].as_f64().unwrap() >= -1e-12);
    }
    assert_eq!(r["propagator"]["decreasing"], true);
    assert_eq!(r["p_beta"]["passes"], true);
    let o = vxl(dir.path(), &["kernel", "--delta", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn timescale_is_printed_and_length_free() {
    let dir = tempfile::tempdir().unwrap();
    let o = vxl(dir.path(), &["kernel", "--timescale", "--nu", "1e-6", "--u", "1"]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "2.0e-6");
    let a = vxl(dir.path(), &["kernel", "--timescale", "--nu", "1.5e-5", "--u", "10", "--length", "1"]);
    let b = vxl(dir.path(), &["kernel", "--timescale", "--nu", "1.5e-5", "--u", "10", "--length", "2"]);
    assert_eq!(String::from_utf8_lossy(&a.stdout).trim(), "3.0e-7");
    assert_eq!(a.stdout, b.stdout);
    let o = vxl(dir.path(), &["kernel", "--timescale", "--nu", "1e-6"]);
    assert_eq!(o.status.code(), Some(2));
}
