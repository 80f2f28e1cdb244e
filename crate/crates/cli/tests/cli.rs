use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nosam_core::io::{file_sha256, RunManifest};
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_nosam");

fn nosam(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn short_config(dir: &Path, tf: &str) -> String {
    let path = dir.join("short.toml");
    fs::write(&path, format!("tf = {tf}\n")).unwrap();
    path.display().to_string()
}

fn check_manifest(dir: &Path) -> RunManifest {
    let text = fs::read_to_string(dir.join("manifest.json")).unwrap();
    let manifest: RunManifest = serde_json::from_str(&text).unwrap();
    let mut on_disk = Vec::new();
    for entry in walk(dir) {
        let rel = entry.strip_prefix(dir).unwrap().to_string_lossy().replace('\\', "/");
        if rel != "manifest.json" {
            on_disk.push(rel);
        }
    }
    let mut listed: Vec<String> = manifest.files.iter().map(|f| f.path.clone()).collect();
    listed.sort();
    on_disk.sort();
    assert_eq!(listed, on_disk);
    for f in &manifest.files {
        assert_eq!(file_sha256(&dir.join(&f.path)).unwrap(), f.sha256, "{}", f.path);
    }
    manifest
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn unknown_flag_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = nosam(tmp.path(), &["monolithic", "--out", "x", "--frobnicate"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert!(!tmp.path().join("x").exists());
}

#[test]
fn unknown_config_key_is_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.toml"), "alpha_12 = 0.1\n").unwrap();
    let out = nosam(tmp.path(), &["monolithic", "--config", "bad.toml", "--out", "x"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn missing_config_file_is_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = nosam(tmp.path(), &["monolithic", "--config", "nope.toml", "--out", "x"]);
    assert_eq!(code(&out), 4);
}

#[test]
fn empty_time_interval_gives_single_state() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = short_config(tmp.path(), "0.0");
    let out = nosam(tmp.path(), &["monolithic", "--config", &cfg, "--out", "mono"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let info: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("mono/monolithic.json")).unwrap()).unwrap();
    assert_eq!(info["n_states"], 1);
    assert_eq!(fs::metadata(tmp.path().join("mono/trajectory_u.bin")).unwrap().len(), 1001 * 8);
    check_manifest(&tmp.path().join("mono"));
}

#[test]
fn train_and_couple_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = short_config(dir, "2.5e-5");
    assert_eq!(code(&nosam(dir, &["monolithic", "--config", &cfg, "--out", "mono"])), 0);
    check_manifest(&dir.join("mono"));

    for (side, out, form) in [("1", "left", "dirichlet"), ("2", "right", "neumann")] {
        let o = nosam(
            dir,
            &[
                "train", "--config", &cfg, "--trajectory", "mono/trajectory.json", "--subdomain", side,
                "--modes", "6", "--transmission", "dn", "--out", out,
            ],
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        check_manifest(&dir.join(out));
        let ops: Value = serde_json::from_str(&fs::read_to_string(dir.join(out).join("operators.json")).unwrap()).unwrap();
        assert_eq!(ops["transmission_kind"], form);
        let k = ops["K_tilde"].as_array().unwrap();
        assert_eq!(k.len(), 6);
        assert!(k.iter().all(|row| row.as_array().unwrap().len() == 6));
    }

    let o = nosam(
        dir,
        &[
            "couple", "--config", &cfg, "--left", "rom:left", "--right", "rom:right", "--transmission", "dn",
            "--reference", "mono/trajectory.json", "--record-every", "50", "--out", "run",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let run = dir.join("run");
    check_manifest(&run);
    let errors = fs::read_to_string(run.join("errors.csv")).unwrap();
    assert_eq!(errors.lines().next(), Some("step_index,time_s,eps_sub1,eps_sub2,eps_total"));
    assert_eq!(errors.lines().count(), 1 + 101);
    let iterations = fs::read_to_string(run.join("iterations.csv")).unwrap();
    assert_eq!(iterations.lines().next(), Some("step_index,time_s,iterations"));
    assert_eq!(iterations.lines().count(), 1 + 100);
    let summary: Value = serde_json::from_str(&fs::read_to_string(run.join("summary.json")).unwrap()).unwrap();
    for key in ["eps_avg", "mean_iterations", "wall_time_s", "config_hash"] {
        assert!(summary.get(key).is_some(), "{key}");
    }
    let states: Value = serde_json::from_str(&fs::read_to_string(run.join("states.json")).unwrap()).unwrap();
    assert_eq!(states["step_indices"], serde_json::json!([0, 50, 100]));

    let report = nosam(dir, &["report", "--in", "run"]);
    assert_eq!(code(&report), 0);
    assert!(String::from_utf8_lossy(&report.stdout).contains("OpInf-OpInf"));
}

#[test]
fn couple_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = short_config(dir, "1e-5");
    for out in ["a", "b"] {
        let o = nosam(
            dir,
            &["couple", "--config", &cfg, "--left", "fom", "--right", "fom", "--transmission", "rr", "--out", out],
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for file in ["errors.csv", "iterations.csv"] {
        assert_eq!(fs::read(dir.join("a").join(file)).unwrap(), fs::read(dir.join("b").join(file)).unwrap());
    }
}

#[test]
fn coefficients_rejected_for_dirichlet_neumann() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = short_config(tmp.path(), "1e-6");
    let o = nosam(
        tmp.path(),
        &[
            "couple", "--config", &cfg, "--left", "fom", "--right", "fom", "--transmission", "dn", "--alpha12", "0.1",
            "--out", "x",
        ],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn sweep_writes_grid_and_front() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = short_config(dir, "1e-5");
    let o = nosam(
        dir,
        &["sweep", "--config", &cfg, "--preset", "fig2", "--jobs", "2", "--values", "0.001,1", "--out", "sw"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let sw = dir.join("sw");
    check_manifest(&sw);
    let text = fs::read_to_string(sw.join("sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("alpha12_bar,alpha21_bar,beta12,beta21,eps_avg,mean_iterations,wall_time_s,converged")
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 16);
    assert!(rows[0].starts_with("0.001,0.001,0.001,0.001,"));
    assert!(rows[1].starts_with("0.001,0.001,0.001,1.0,"));
    let front = fs::read_to_string(sw.join("pareto.csv")).unwrap();
    assert!(front.lines().count() >= 2);
    assert_eq!(code(&nosam(dir, &["report", "--in", "sw"])), 0);
}

#[test]
fn unknown_preset_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&nosam(tmp.path(), &["preset", "table9", "--out", "x"])), 2);
}
