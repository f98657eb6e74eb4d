use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn svcvv(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_svcvv"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn svcvv")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}: {}", o.status.code(), stderr(o));
}

fn column(path: &Path, name: &str) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(i).unwrap().to_string()).collect()
}

fn short_spec(dir: &Path, body: &str) {
    fs::write(dir.join("spec.toml"), body).unwrap();
}

#[test]
fn missing_frame_index_is_a_user_error() {
    let dir = tempdir().unwrap();
    fs::create_dir(dir.path().join("empty")).unwrap();
    let o = svcvv(&["vv", "--frames", "empty", "--out", "vv.csv"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("frame index not found"), "{}", stderr(&o));
}

#[test]
fn svc_vv_without_visual_input_is_rejected() {
    let dir = tempdir().unwrap();
    short_spec(dir.path(), "[slalom]\nduration = 5\n");
    assert_ok(&svcvv(&["synth", "--spec", "spec.toml", "--out", "s"], dir.path()));
    let o = svcvv(
        &["predict", "--imu", "s/imu.csv", "--variant", "svc-vv", "--out", "p"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--vv"), "{}", stderr(&o));
}

#[test]
fn zero_visual_gain_reduces_to_svc() {
    let dir = tempdir().unwrap();
    let d = dir.path();
    short_spec(d, "[slalom]\nduration = 30\nhead_roll_gain = -0.5\n");
    assert_ok(&svcvv(&["synth", "--spec", "spec.toml", "--out", "s"], d));
    fs::write(d.join("params.toml"), "base = \"svc-vv\"\nk_vc = 5.0\nk_vvc = 0.0\n").unwrap();
    assert_ok(&svcvv(
        &["predict", "--imu", "s/imu.csv", "--variant", "svc", "--out", "a"],
        d,
    ));
    assert_ok(&svcvv(
        &[
            "predict",
            "--imu",
            "s/imu.csv",
            "--vv",
            "s/vv_truth.csv",
            "--params",
            "params.toml",
            "--variant",
            "svc-vv",
            "--out",
            "b",
        ],
        d,
    ));
    let a = column(&d.join("a/trial.csv"), "msi");
    let b = column(&d.join("b/trial.csv"), "msi");
    assert_eq!(a.len(), 3000);
    assert_eq!(a, b);
    assert!(a.iter().any(|v| v.parse::<f64>().unwrap() > 0.0));
    for f in ["summary.csv", "run_config.toml", "msi.svg"] {
        assert!(d.join("b").join(f).exists(), "{f}");
    }
}

#[test]
fn corrupt_imu_reports_line() {
    let dir = tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("imu.csv"),
        "t,fx,fy,fz,wx,wy,wz\n0,0,9.81,0,0,0,0\n0.01,0,abc,0,0,0,0\n",
    )
    .unwrap();
    let o = svcvv(&["predict", "--imu", "imu.csv", "--variant", "svc", "--out", "p"], d);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("imu.csv:3:"), "{}", stderr(&o));
}

#[test]
fn default_synth_is_deterministic() {
    let dir = tempdir().unwrap();
    let d = dir.path();
    short_spec(d, "[noise]\ngyro_sigma = 0.01\naccel_sigma = 0.05\n");
    assert_ok(&svcvv(
        &["synth", "--spec", "spec.toml", "--seed", "7", "--out", "a"],
        d,
    ));
    assert_ok(&svcvv(
        &["synth", "--spec", "spec.toml", "--seed", "7", "--out", "b"],
        d,
    ));
    assert_ok(&svcvv(
        &["synth", "--spec", "spec.toml", "--seed", "8", "--out", "c"],
        d,
    ));
    let a = fs::read(d.join("a/imu.csv")).unwrap();
    assert_eq!(a, fs::read(d.join("b/imu.csv")).unwrap());
    assert_ne!(a, fs::read(d.join("c/imu.csv")).unwrap());
    let rows = String::from_utf8(a).unwrap().lines().count() - 1;
    assert_eq!(rows, 120_000);
}

#[test]
fn zero_duration_synth_writes_empty_files() {
    let dir = tempdir().unwrap();
    let d = dir.path();
    short_spec(d, "[slalom]\nduration = 0\n");
    assert_ok(&svcvv(&["synth", "--spec", "spec.toml", "--out", "s"], d));
    let imu = fs::read_to_string(d.join("s/imu.csv")).unwrap();
    assert_eq!(imu.trim_end(), "t,fx,fy,fz,wx,wy,wz");
}

#[test]
fn infeasible_slalom_without_clamp_fails() {
    let dir = tempdir().unwrap();
    let d = dir.path();
    short_spec(d, "[slalom]\nduration = 30\nclamp_speed = false\n");
    let o = svcvv(&["synth", "--spec", "spec.toml", "--out", "s"], d);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn level_scene_reads_ninety_degrees() {
    let dir = tempdir().unwrap();
    let d = dir.path();
    short_spec(
        d,
        "[slalom]\nduration = 1\n[scene]\nwidth = 200\nheight = 120\nn_frames = 8\n",
    );
    assert_ok(&svcvv(&["synth", "--spec", "spec.toml", "--out", "s"], d));
    assert_ok(&svcvv(&["vv", "--frames", "s/frames", "--out", "vv.csv"], d));
    let theta = column(&d.join("vv.csv"), "theta_vv_deg");
    assert_eq!(theta.len(), 8);
    for v in theta {
        assert!((v.parse::<f64>().unwrap() - 90.0).abs() < 1.0, "{v}");
    }
    assert!(d.join("vv.run.toml").exists());
}

#[test]
fn predict_from_frames_writes_vv() {
    let dir = tempdir().unwrap();
    let d = dir.path();
    short_spec(
        d,
        "scene_follows_head = true\n[slalom]\nduration = 4\nhead_roll_gain = -0.5\n\
         [scene]\nwidth = 160\nheight = 96\n",
    );
    assert_ok(&svcvv(&["synth", "--spec", "spec.toml", "--out", "s"], d));
    let o = svcvv(
        &[
            "--jobs",
            "1",
            "predict",
            "--imu",
            "s/imu.csv",
            "--frames",
            "s/frames",
            "--variant",
            "svc-vv",
            "--out",
            "p",
        ],
        d,
    );
    assert_ok(&o);
    assert!(d.join("p/vv.csv").exists());
    assert_eq!(column(&d.join("p/trial.csv"), "msi").len(), 400);
}

fn cohort(rows: &[(&str, f64, f64, f64, f64)]) -> String {
    let mut s = String::from("participant_id,condition,mean_misc,max_misc,mean_msi,max_msi\n");
    for (id, lad, wad, msi_lad, msi_wad) in rows {
        s += &format!("{id},LAD,{lad},{lad},{msi_lad},{msi_lad}\n{id},WAD,{wad},{wad},{msi_wad},{msi_wad}\n");
    }
    s
}

#[test]
fn eval_reports_cohort_metrics() {
    let dir = tempdir().unwrap();
    let d = dir.path();
    let mut rows = Vec::new();
    let ids: Vec<String> = (0..27).map(|i| format!("P{i:02}")).collect();
    for (i, id) in ids.iter().enumerate() {
        let row = match i {
            0..=11 => (1.0, 2.0, 1.0, 2.0),
            12..=14 => (1.0, 2.0, 2.0, 1.0),
            15..=16 => (2.0, 1.0, 1.0, 2.0),
            17..=20 => (2.0, 1.0, 2.0, 1.0),
            _ => (0.0, 0.0, 1.0, 2.0),
        };
        rows.push((id.as_str(), row.0, row.1, row.2, row.3));
    }
    fs::write(d.join("cohort.csv"), cohort(&rows)).unwrap();
    let o = svcvv(&["eval", "--summaries", "cohort.csv", "--out", "e"], d);
    assert_ok(&o);
    let report = fs::read_to_string(d.join("e/report.csv")).unwrap();
    assert!(report.contains("recall,0.800000"), "{report}");
    assert!(report.contains("tp,12") && report.contains("fn,3"), "{report}");
    for f in ["report.txt", "confusion.svg", "metrics.svg"] {
        assert!(d.join("e").join(f).exists(), "{f}");
    }
}

#[test]
fn eval_single_participant() {
    let dir = tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("cohort.csv"), cohort(&[("P1", 1.0, 3.0, 0.5, 0.9)])).unwrap();
    let o = svcvv(
        &["eval", "--summaries", "cohort.csv", "--measure", "max", "--out", "e"],
        d,
    );
    assert_ok(&o);
    let report = fs::read_to_string(d.join("e/report.csv")).unwrap();
    assert!(
        report.contains("tp,1") && report.contains("recall,1.000000"),
        "{report}"
    );
}

#[test]
fn plot_overlays_trials() {
    let dir = tempdir().unwrap();
    let d = dir.path();
    short_spec(d, "[slalom]\nduration = 10\n");
    assert_ok(&svcvv(&["synth", "--spec", "spec.toml", "--out", "s"], d));
    assert_ok(&svcvv(
        &["predict", "--imu", "s/imu.csv", "--variant", "svc", "--out", "a"],
        d,
    ));
    assert_ok(&svcvv(
        &[
            "predict",
            "--imu",
            "s/imu.csv",
            "--vv",
            "s/vv_truth.csv",
            "--variant",
            "svc-vv",
            "--out",
            "b",
        ],
        d,
    ));
    let o = svcvv(
        &[
            "plot",
            "--trial",
            "a/trial.csv",
            "--trial",
            "b/trial.csv",
            "--label",
            "svc",
            "--label",
            "svc-vv",
            "--out",
            "msi.svg",
        ],
        d,
    );
    assert_ok(&o);
    let svg = fs::read_to_string(d.join("msi.svg")).unwrap();
    assert!(svg.contains("svc-vv"));
    let o = svcvv(
        &[
            "plot",
            "--trial",
            "a/trial.csv",
            "--label",
            "x",
            "--label",
            "y",
            "--out",
            "m.svg",
        ],
        d,
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempdir().unwrap();
    let d = dir.path();
    short_spec(d, "[slalom]\nduration = 2\n");
    fs::write(d.join("run.toml"), "out = \"from_config\"\n").unwrap();
    assert_ok(&svcvv(
        &[
            "synth",
            "--spec",
            "spec.toml",
            "--out",
            "from_flag",
            "--config",
            "run.toml",
        ],
        d,
    ));
    assert!(d.join("from_config/imu.csv").exists());
    assert!(!d.join("from_flag").exists());
    fs::write(d.join("bad.toml"), "outt = \"x\"\n").unwrap();
    let o = svcvv(
        &["synth", "--spec", "spec.toml", "--out", "y", "--config", "bad.toml"],
        d,
    );
    assert_eq!(o.status.code(), Some(2));
}
