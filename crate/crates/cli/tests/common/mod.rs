#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use opacity_cli::RunOptions;

pub fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

/// A random-model config. `kind` is "last-state" or "initial-state".
pub fn random_config(seed: u64, n: usize, k: usize, m: usize, horizon: usize, kind: &str, extra: &str) -> String {
    let secret = if kind == "last-state" { "secret = [\"s0\"]" } else { "" };
    format!(
        "[model]\nrandom = {{ n_states = {n}, n_actions = {k}, n_symbols = {m}, seed = {seed} }}\n\n\
         [objective]\nkind = \"{kind}\"\n{secret}\n\n\
         [solver]\nmode = \"exact\"\nhorizon = {horizon}\nseed = {seed}\n{extra}\n"
    )
}

/// Sizes within N <= 4, K <= 3, |O| <= 3, T <= 4, varied by seed.
pub fn random_dims(seed: u64) -> (usize, usize, usize, usize) {
    let s = seed as usize;
    (2 + s % 3, 1 + s % 3, 2 + s % 2, 2 + s % 3)
}

/// One absorbing state that always emits the same symbol.
pub const SINGLE_STATE: &str = r#"
discount = 0.9
states = ["only"]
actions = ["wait", "also-wait"]
initial = [{ state = "only", p = 1.0 }]
transitions = [
  { from = "only", action = "wait", to = "only", p = 1.0 },
  { from = "only", action = "also-wait", to = "only", p = 1.0 },
]
rewards = [{ state = "only", action = "wait", r = 1.0 }]

[observations]
symbols = ["0"]
emissions = [{ state = "only", symbol = "0", p = 1.0 }]
"#;

pub fn options(config: &Path, out: &Path) -> RunOptions {
    RunOptions { config: config.to_path_buf(), out: Some(out.to_path_buf()), ..Default::default() }
}

pub fn opacity(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_opacity")).args(args).output().expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

/// The `column`-th field of every data row.
pub fn csv_column(path: &Path, column: &str) -> Vec<f64> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == column).unwrap_or_else(|| panic!("no column {column}"));
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}
