//! Programs shipped with the tool, embedded so tests and the CLI do not
//! depend on the working directory.

use std::path::PathBuf;

macro_rules! program {
    ($name:literal) => {
        ($name, include_str!(concat!("../../../corpus/", $name, ".scm")))
    };
}

/// The nine benchmark programs.
pub const BENCHMARKS: [(&str, &str); 9] = [
    program!("len"),
    program!("rev-iter"),
    program!("len-y"),
    program!("tree-count"),
    program!("ins-sort"),
    program!("dfs"),
    program!("flatten"),
    program!("sets"),
    program!("church-nums"),
];

/// Small programs exercising particular precision effects.
pub const EXAMPLES: [(&str, &str); 9] = [
    program!("double-id"),
    program!("double-id-let"),
    program!("eta-stack"),
    program!("eta-heap"),
    program!("app-id"),
    program!("compose-same"),
    program!("fake-rebind"),
    program!("omega"),
    program!("witness-3"),
];

pub fn lookup(name: &str) -> Option<&'static str> {
    BENCHMARKS
        .iter()
        .chain(EXAMPLES.iter())
        .find(|(n, _)| *n == name)
        .map(|(_, src)| *src)
}

/// Every shipped program that terminates.
pub fn terminating() -> impl Iterator<Item = (&'static str, &'static str)> {
    BENCHMARKS
        .iter()
        .chain(EXAMPLES.iter())
        .copied()
        .filter(|(n, _)| *n != "omega")
}

/// Directory holding the corpus files: `CFA2_CORPUS` if set, otherwise the
/// copy in the source tree.
pub fn corpus_dir() -> PathBuf {
    std::env::var_os("CFA2_CORPUS")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../corpus")))
}

/// A program on which stack filtering splits the analysis `n` times: a
/// heap variable holds two lambdas and each is called right after being
/// fetched.
pub fn witness(n: usize) -> String {
    let mut s = String::from(
        "(let* ((merger (lambda (f) (lambda (ignored) f)))\n       (w0 (merger (lambda (x) x)))\n       (clos (merger (lambda (y) y)))",
    );
    for i in 1..=n {
        s.push_str(&format!("\n       (f{i} (clos 0))\n       (r{i} (f{i} 0))"));
    }
    s.push_str(")\n  0)\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::compile;

    #[test]
    fn every_shipped_program_compiles() {
        for (name, src) in BENCHMARKS.iter().chain(EXAMPLES.iter()) {
            compile(src).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn witness_file_matches_generator() {
        assert_eq!(lookup("witness-3").unwrap().trim_end(), witness(3).trim_end());
    }

    #[test]
    fn witness_compiles_at_every_size() {
        for n in 1..=6 {
            compile(&witness(n)).unwrap();
        }
    }
}
