use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn coopnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coopnet"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL: &[&str] = &["--reps", "3", "--iters", "8", "--slots", "150"];

fn with_out<'a>(base: &[&'a str], dir: &'a Path) -> Vec<&'a str> {
    let mut v = base.to_vec();
    v.extend_from_slice(SMALL);
    v.push("--out");
    v.push(dir.to_str().unwrap());
    v
}

#[test]
fn exit_codes() {
    assert_eq!(coopnet(&["--help"]).status.code(), Some(0));
    assert_eq!(coopnet(&["--version"]).status.code(), Some(0));
    assert_eq!(coopnet(&[]).status.code(), Some(2));
    assert_eq!(coopnet(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        coopnet(&["table1", "--no-such-flag"]).status.code(),
        Some(2)
    );
    assert_eq!(coopnet(&["simulate", "--nu", "1.5"]).status.code(), Some(2));
    assert_eq!(coopnet(&["simulate", "--reps", "0"]).status.code(), Some(2));
    assert_eq!(
        coopnet(&["simulate", "--strategy", "MINIMAL", "--arch", "adhoc"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(coopnet(&["dense-qmin", "--x", "-1"]).status.code(), Some(2));
    assert_eq!(
        coopnet(&["dense-balance", "--alpha", "1"]).status.code(),
        Some(2)
    );
}

#[test]
fn sweep_r0_rejects_ad_hoc() {
    let dir = TempDir::new().unwrap();
    let o = coopnet(&with_out(
        &["sweep-r0", "--arch", "adhoc", "--grid", "0.2,0.5"],
        dir.path(),
    ));
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("manifest.json").exists());
}

#[test]
fn dense_qmin_prints_minimiser() {
    let dir = TempDir::new().unwrap();
    let o = coopnet(&[
        "dense-qmin",
        "--alpha",
        "2",
        "--x",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let line = stdout(&o)
        .lines()
        .find(|l| l.starts_with("y*="))
        .unwrap()
        .to_string();
    let mut parts = line.split_whitespace();
    let y: f64 = parts.next().unwrap()["y*=".len()..].parse().unwrap();
    let q: f64 = parts.next().unwrap()["q=".len()..].parse().unwrap();
    assert!((y - 0.5).abs() <= 1e-8 && (q - 0.75).abs() <= 1e-8);
    let csv = fs::read_to_string(dir.path().join("dense_qmin.csv")).unwrap();
    assert!(csv.starts_with("alpha,x,y_star,q\n2,1,"));
}

#[test]
fn table1_is_byte_identical_across_runs() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for dir in [&a, &b] {
        let o = coopnet(&with_out(&["table1", "--seed", "7"], dir.path()));
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    for name in ["table.csv", "radial.csv", "dynamics.csv"] {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name}");
    }
    let table = fs::read_to_string(a.path().join("table.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "strategy,mean_energy,std_energy");
    assert!(rows[1].starts_with("DEF,1,"));
    assert_eq!(rows.len(), 5);
}

#[test]
fn seed_changes_output() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    coopnet(&with_out(&["table1", "--seed", "7"], a.path()));
    coopnet(&with_out(&["table1", "--seed", "8"], b.path()));
    assert_ne!(
        fs::read(a.path().join("table.csv")).unwrap(),
        fs::read(b.path().join("table.csv")).unwrap()
    );
}

#[test]
fn manifest_records_checksums() {
    let dir = TempDir::new().unwrap();
    let o = coopnet(&with_out(
        &["simulate", "--strategy", "WSLS", "--seed", "3"],
        dir.path(),
    ));
    assert_eq!(o.status.code(), Some(0));
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["tool"], "coopnet");
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seed"], 3);
    assert!(manifest["duration_secs"].as_f64().unwrap() >= 0.0);
    let files = manifest["files"].as_array().unwrap();
    assert_eq!(files.len(), 3);
    for f in files {
        let bytes = fs::read(dir.path().join(f["name"].as_str().unwrap())).unwrap();
        assert_eq!(f["bytes"].as_u64().unwrap() as usize, bytes.len());
        assert_eq!(
            f["sha256"].as_str().unwrap(),
            hex::encode(Sha256::digest(&bytes))
        );
    }
    let leftovers = fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .ends_with(".tmp")
        })
        .count();
    assert_eq!(leftovers, 0);
}

#[test]
fn flags_override_config_file() {
    let dir = TempDir::new().unwrap();
    let conf = dir.path().join("run.conf");
    fs::write(
        &conf,
        "# small run\nnu = 0.45\nseed = 99\nm = 12\ntraffic = fresh\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = coopnet(&[
        "simulate",
        "--config",
        conf.to_str().unwrap(),
        "--seed",
        "5",
        "--reps",
        "2",
        "--iters",
        "4",
        "--slots",
        "50",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let cfg = &manifest["config"];
    assert_eq!(manifest["seed"], 5);
    assert_eq!(cfg["m"], 12);
    assert_eq!(cfg["nu"], 0.45);
    assert_eq!(cfg["traffic"], "Fresh");

    fs::write(&conf, "nu = 0.4\nbogus = 1\n").unwrap();
    let o = coopnet(&["simulate", "--config", conf.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn sweeps_and_dense_outputs() {
    let dir = TempDir::new().unwrap();
    let o = coopnet(&with_out(
        &["sweep-nu", "--grid", "0.3,0.5,0.7"],
        dir.path(),
    ));
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("sweep_nu.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(stdout(&o).contains("minimum at nu"));

    let dir = TempDir::new().unwrap();
    let o = coopnet(&[
        "dense-balance",
        "--rings",
        "6",
        "--alpha",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("dense_balance.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 21);
    let ring = fs::read_to_string(dir.path().join("ring_energy.csv")).unwrap();
    assert_eq!(ring.lines().count(), 7);

    let dir = TempDir::new().unwrap();
    let o = coopnet(&[
        "dense-emin",
        "--alpha",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("E_min=0.25"));
}
