#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use geomalign::embedding_io::{save_embeddings, EmbeddingFormat, EmbeddingSpace};
use serde_json::Value;

pub fn geomalign(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geomalign"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

/// Runs and asserts success, echoing stderr on failure.
pub fn geomalign_ok(args: &[&str]) {
    let out = geomalign(args);
    assert!(
        out.status.success(),
        "geomalign {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

pub fn write_space(dir: &Path, file: &str, space: &EmbeddingSpace) -> PathBuf {
    let path = dir.join(file);
    save_embeddings(space, &path, EmbeddingFormat::infer(&path)).unwrap();
    path
}

pub fn read_report(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Report text with the timestamp line removed.
pub fn without_timestamp(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim_start().starts_with("\"created_unix\""))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
