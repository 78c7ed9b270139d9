//! Helpers for driving the `kgd` binary from integration tests.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_kgd");

pub const CONFIG_ECHO: &str = "config.resolved.toml";

pub const TINY: &str = r#"
seed = 3

[data.synthetic]
clusters = 4
positions = 5
relations = 3
noise_fraction = 0.05
valid_fraction = 0.1
test_fraction = 0.1
seed = 5

[train]
family = "complex"
dim = 8
epochs = 5
batch_size = 32

[certify]
n0 = 200
max_queries = 12

[multihop]
max_queries = 20
beam = 8
"#;

pub fn kgd(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("KGD_OUT_DIR")
        .output()
        .expect("spawn kgd")
}

pub fn ok(args: &[&str]) {
    let out = kgd(args);
    assert!(
        out.status.success(),
        "kgd {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, body).unwrap();
    p
}

/// Every file in a run directory except the manifest, with wall-clock
/// fields removed from the training log.
pub fn numeric_outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            let mut bytes = fs::read(&p).unwrap();
            if name == "train_log.jsonl" {
                let text = String::from_utf8(bytes).unwrap();
                let stripped: Vec<String> = text
                    .lines()
                    .map(|l| {
                        let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                        v.as_object_mut().unwrap().remove("wall_ms");
                        v.to_string()
                    })
                    .collect();
                bytes = stripped.join("\n").into_bytes();
            }
            (name, bytes)
        })
        .collect()
}

/// train, eval, certify and multihop into `root`; returns the run dirs.
pub fn pipeline(root: &Path, config: &Path) -> Vec<PathBuf> {
    let train = root.join("train");
    ok(&["train", "--config", s(config), "--out", s(&train)]);
    let ckpt = train.join("model.ckpt");
    let mut dirs = vec![train];
    for cmd in ["eval", "certify", "multihop"] {
        let d = root.join(cmd);
        ok(&[cmd, "--config", s(config), "--checkpoint", s(&ckpt), "--out", s(&d)]);
        dirs.push(d);
    }
    dirs
}
