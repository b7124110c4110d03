//! Toy fixtures written to a temporary directory.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const WORDS: [&str; 16] = [
    "the", "a", "cat", "dog", "sat", "ran", "on", "mat", "park", "big", "small", "red", "blue", "quickly", "slowly",
    "home",
];

pub struct Fixture {
    pub dir: tempfile::TempDir,
}

impl Fixture {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn p(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }
}

fn write(dir: &Path, name: &str, body: &str) {
    std::fs::write(dir.join(name), body).unwrap();
}

/// Random sentence over `WORDS`.
fn sentence(r: &mut ChaCha8Rng) -> Vec<&'static str> {
    let n = r.random_range(2..8);
    (0..n).map(|_| WORDS[r.random_range(0..WORDS.len())]).collect()
}

/// Chain-shaped CoNLL-U block: every token hangs off the middle one.
pub fn conllu_block(tokens: &[&str]) -> String {
    let root = tokens.len() / 2;
    let mut s = String::new();
    for (i, t) in tokens.iter().enumerate() {
        let head = if i == root { 0 } else { root + 1 };
        let _ = writeln!(s, "{}\t{t}\t_\t_\t_\t_\t{head}\t_\t_\t_", i + 1);
    }
    s.push('\n');
    s
}

/// Writes `vectors.vec`, `freq.txt`, `pairs.tsv` (with `n` pairs plus an
/// identical pair first) and the matching `pairs.conllu`.
pub fn fixture(n: usize, seed: u64) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let dim = 8;
    let mut vec = format!("{} {dim}\n", WORDS.len());
    for w in WORDS {
        let comps: Vec<String> = (0..dim).map(|_| format!("{:.6}", r.random::<f64>() * 2.0 - 1.0)).collect();
        let _ = writeln!(vec, "{w} {}", comps.join(" "));
    }
    write(dir.path(), "vectors.vec", &vec);
    let freq: String = WORDS.iter().enumerate().map(|(i, w)| format!("{w} {}\n", 1000 / (i + 1))).collect();
    write(dir.path(), "freq.txt", &freq);

    let mut pairs = String::new();
    let mut trees = String::new();
    let same = ["the", "cat", "sat", "on", "the", "mat"];
    let _ = writeln!(pairs, "5.0\t{}\t{}", same.join(" "), same.join(" "));
    trees.push_str(&conllu_block(&same));
    trees.push_str(&conllu_block(&same));
    for _ in 0..n {
        let (a, b) = (sentence(&mut r), sentence(&mut r));
        let shared = a.iter().filter(|w| b.contains(w)).count() as f64;
        let gold = (shared + r.random::<f64>()).min(5.0);
        let _ = writeln!(pairs, "{gold:.3}\t{}\t{}", a.join(" "), b.join(" "));
        trees.push_str(&conllu_block(&a));
        trees.push_str(&conllu_block(&b));
    }
    write(dir.path(), "pairs.tsv", &pairs);
    write(dir.path(), "pairs.conllu", &trees);
    Fixture { dir }
}
