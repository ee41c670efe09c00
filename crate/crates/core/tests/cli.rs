mod common;

use std::fs;
use std::path::Path;
use std::process::Command;

use common::*;
use feddb::cli::{csv_name, run, ExperimentConfig, Overrides};
use feddb::fed::Method;

fn smoke_config(out: &Path) -> ExperimentConfig {
    let mut c = tiny_config();
    c.methods = Method::ALL.to_vec();
    c.rounds = 2;
    c.repeats = 2;
    c.out = out.to_path_buf();
    c
}

#[test]
fn smoke_run_writes_one_csv_per_method_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(dir.path());
    let summary = run(&cfg).unwrap();
    assert_eq!(summary.files.len(), 10);
    for seed in [0, 1] {
        for m in Method::ALL {
            let text = fs::read_to_string(dir.path().join(csv_name(&cfg, m, seed))).unwrap();
            assert_eq!(text.lines().count(), 1 + cfg.rounds);
        }
    }
    assert!(dir.path().join("fixmatch+dpl_synthetic_0.3_1.csv").exists());
    assert_eq!(summary.rows.len(), 5);
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let sa = run(&smoke_config(a.path())).unwrap();
    run(&smoke_config(b.path())).unwrap();
    for f in &sa.files {
        let name = f.file_name().unwrap();
        assert_eq!(fs::read(f).unwrap(), fs::read(b.path().join(name)).unwrap());
    }
}

#[test]
fn summary_recomputes_from_csv_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = smoke_config(dir.path());
    cfg.repeats = 3;
    cfg.rounds = 3;
    let summary = run(&cfg).unwrap();
    for m in &cfg.methods {
        let best: Vec<f64> = (0..3)
            .map(|seed| {
                let mut rdr = csv::Reader::from_path(dir.path().join(csv_name(&cfg, *m, seed))).unwrap();
                let col = rdr.headers().unwrap().iter().position(|h| h == "balanced_test_accuracy").unwrap();
                rdr.records()
                    .map(|r| r.unwrap()[col].parse::<f64>().unwrap())
                    .fold(f64::MIN, f64::max)
            })
            .collect();
        let mean = best.iter().sum::<f64>() / 3.0;
        let var = best.iter().map(|b| (b - mean) * (b - mean)).sum::<f64>() / 3.0;
        let row = summary.row(*m).unwrap();
        assert!((row.mean - mean).abs() < 1e-9);
        assert!((row.std - var.sqrt()).abs() < 1e-9);
    }
}

#[test]
fn flags_win_over_file_values() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.txt");
    fs::write(&path, "delta = 0.1\nrounds = 7\n").unwrap();
    let o = Overrides { delta: Some(0.3), ..Default::default() };
    let cfg = ExperimentConfig::load(Some(&path), &o).unwrap();
    assert_eq!((cfg.delta, cfg.rounds), (0.3, 7));
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_feddb"))
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("tiny.txt");
    let mut cfg = tiny_config();
    cfg.rounds = 1;
    cfg.methods = vec![Method::FixMatch, Method::FedDb];
    cfg.out = dir.path().join("out");
    fs::write(&cfg_path, cfg.to_text()).unwrap();

    let ok = bin().arg("--config").arg(&cfg_path).output().unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    let stdout = String::from_utf8(ok.stdout).unwrap();
    assert!(stdout.contains("fixmatch") && stdout.contains("feddb"));
    assert!(dir.path().join("out/feddb_synthetic_0.3_0.csv").exists());

    let bad = bin().arg("--config").arg(&cfg_path).args(["--tau", "1.5"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
    let unknown = bin().args(["--method", "fedprox"]).output().unwrap();
    assert_eq!(unknown.status.code(), Some(1));

    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let io = bin().arg("--config").arg(&cfg_path).arg("--out").arg(blocker.join("sub")).output().unwrap();
    assert_eq!(io.status.code(), Some(3));

    let nan = bin().arg("--config").arg(&cfg_path).args(["--lr", "1e300", "--rounds", "5"]).output().unwrap();
    assert_eq!(nan.status.code(), Some(2));
}
