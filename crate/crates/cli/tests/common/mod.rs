#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_izhrecon"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn izhrecon")
}

pub fn run_with_threads(args: &[&str], threads: usize) -> Output {
    bin()
        .args(args)
        .env("RAYON_NUM_THREADS", threads.to_string())
        .output()
        .expect("spawn izhrecon")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Asserts success and returns stdout.
pub fn ok(out: Output) -> String {
    assert_eq!(
        code(&out),
        0,
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

/// Generates the default 10-neuron network under `<dir>/net`.
pub fn generate(dir: &Path, seed: u64) -> PathBuf {
    let prefix = path(dir, "net");
    ok(run(&["generate", "--neurons", "10", "--seed", &seed.to_string(), "--out-prefix", s(&prefix)]));
    prefix
}

pub fn with(prefix: &Path, suffix: &str) -> PathBuf {
    let mut x = prefix.as_os_str().to_owned();
    x.push(suffix);
    PathBuf::from(x)
}
