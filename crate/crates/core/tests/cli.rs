mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::TINY;

fn shapetune(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shapetune")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn full_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let out = dir.path().join("run");

    let o = shapetune(&["optimize", "--config", p(&cfg), "--out", p(&out), "--set", "optimizer.total_budget=3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("seed 1:"));

    // a second optimize into the same directory is refused
    let o = shapetune(&["optimize", "--config", p(&cfg), "--out", p(&out), "--set", "optimizer.total_budget=3"]);
    assert_eq!(o.status.code(), Some(3));

    let o = shapetune(&["resume", "--out", p(&out)]);
    assert!(o.status.success());

    let o = shapetune(&["evaluate", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = shapetune(&["report", "--out", p(&out)]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("task score") && text.contains("default shaped return"));

    for what in ["incumbent-curve", "report"] {
        let o = shapetune(&["export", "--out", p(&out), "--what", what]);
        assert!(o.status.success(), "{what}");
    }
    assert!(out.join("incumbent_curve.csv").exists());

    let sweep_out = dir.path().join("sweep");
    let o = shapetune(&["sweep", "--config", p(&cfg), "--out", p(&sweep_out), "--set", "landscape.resolution=2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(sweep_out.join("landscape.csv").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let out = dir.path().join("run");

    let o = shapetune(&["optimize", "--config", p(&cfg), "--out", p(&out), "--set", "optimizer.eta=1"]);
    assert_eq!(o.status.code(), Some(3));

    let o = shapetune(&["optimize", "--config", p(&cfg), "--out", p(&out)]);
    assert!(o.status.success());
    // stored config differs from the one given
    let o = shapetune(&["optimize", "--config", p(&cfg), "--out", p(&out), "--set", "master_seed=99"]);
    assert_eq!(o.status.code(), Some(4));

    let journal = out.join("opt-0.jsonl");
    let mut text = std::fs::read_to_string(&journal).unwrap();
    text.push_str("garbage\n");
    std::fs::write(&journal, text).unwrap();
    let o = shapetune(&["resume", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("opt-0.jsonl:"));

    std::fs::remove_file(out.join("opt-1.jsonl")).unwrap();
    std::fs::remove_file(&journal).unwrap();
    let o = shapetune(&["evaluate", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(5));

    let o = shapetune(&["export", "--out", p(&out), "--what", "landscape"]);
    assert_eq!(o.status.code(), Some(1));
}
