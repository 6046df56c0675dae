#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn forge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_forge")).args(args).output().expect("spawn forge")
}

pub fn forge_ok(args: &[&str]) -> Output {
    let out = forge(args);
    assert!(
        out.status.success(),
        "forge {args:?} failed ({:?}): {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// synth -> preprocess -> train -> generate -> smooth -> evaluate -> pair
/// inside `dir`, returning every artifact as (relative path, bytes).
pub fn run_chain(cfg: &Path, dir: &Path) -> Vec<(String, Vec<u8>)> {
    let c = s(cfg);
    let p = |n: &str| dir.join(n);
    forge_ok(&["synth", "--config", c, "--route", "1", "--out", s(&p("raw1.csv"))]);
    forge_ok(&["synth", "--config", c, "--route", "2", "--seed", "2", "--out", s(&p("raw2.csv"))]);
    forge_ok(&["preprocess", "--config", c, "--input", s(&p("raw1.csv")), "--route", "flow1", "--out", s(&p("ds1.json"))]);
    forge_ok(&["preprocess", "--config", c, "--input", s(&p("raw2.csv")), "--route", "flow2", "--out", s(&p("ds2.json"))]);
    forge_ok(&["train", "--config", c, "--input", s(&p("ds1.json")), "--out", s(&p("model.fvae"))]);
    forge_ok(&["generate", "--config", c, "--input", s(&p("model.fvae")), "--out", s(&p("gen.csv"))]);
    forge_ok(&["smooth", "--config", c, "--input", s(&p("gen.csv")), "--out", s(&p("smooth.csv"))]);
    forge_ok(&[
        "evaluate", "--config", c, "--input", s(&p("smooth.csv")), "--reference", s(&p("ds1.json")), "--out",
        s(&p("metrics.json")),
    ]);
    forge_ok(&["pair", "--config", c, "--input", s(&p("ds1.json")), s(&p("ds2.json")), "--out", s(&p("library"))]);
    let mut files = Vec::new();
    collect(dir, dir, &mut files);
    files.sort();
    files
}

fn collect(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
    for e in std::fs::read_dir(dir).unwrap() {
        let path = e.unwrap().path();
        if path.is_dir() {
            collect(root, &path, out);
        } else {
            let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
            out.push((rel, std::fs::read(&path).unwrap()));
        }
    }
}
