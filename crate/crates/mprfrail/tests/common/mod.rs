#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Clustered Weibull data as CSV text with a binary `trt` and a continuous `age`.
pub fn clustered_csv(q: usize, n_i: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::from("cluster,time,status,trt,age\n");
    for c in 0..q {
        let vb = rng.random_range(-0.7..0.7);
        for _ in 0..n_i {
            let trt = u8::from(rng.random_bool(0.5));
            let age: f64 = rng.random_range(-1.5..1.5);
            let tau = (0.2 - 0.6 * f64::from(trt) + 0.3 * age + vb).exp();
            let gamma = (0.1 - 0.2 * f64::from(trt)).exp();
            let u: f64 = rng.random_range(1e-12..1.0);
            let t = (-u.ln() / tau).powf(1.0 / gamma);
            let cens = rng.random_range(0.0..4.0);
            let status = u8::from(t <= cens);
            out += &format!("site{c},{},{status},{trt},{age}\n", t.min(cens).max(1e-6));
        }
    }
    out
}

pub fn write_csv(dir: &Path, q: usize, n_i: usize, seed: u64) -> PathBuf {
    let p = dir.join("data.csv");
    std::fs::write(&p, clustered_csv(q, n_i, seed)).unwrap();
    p
}

pub fn mprfrail(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mprfrail")).args(args).output().unwrap()
}

pub fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}
