#![allow(dead_code)]

use std::path::PathBuf;

use rdprune_core::io::{load_calib, load_model};
use rdprune_core::{CalibrationSet, ModelGraph, RDCurve, SparsityGrid};

pub const FIXTURES: [&str; 2] = ["mlp_toy", "cnn_toy"];

pub fn fixture_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

pub fn fixture(name: &str) -> (ModelGraph, CalibrationSet) {
    let dir = fixture_dir(name);
    let model = load_model(&dir.join("model.json")).expect("fixture model");
    let calib = load_calib(&dir.join("calib.bin")).expect("fixture calibration");
    (model, calib)
}

/// Curves built straight from distortion tables over `grid`.
pub fn curves_from(grid: &SparsityGrid, values: &[Vec<f64>]) -> Vec<RDCurve> {
    values
        .iter()
        .enumerate()
        .map(|(pos, v)| {
            let counts: Vec<usize> = (0..v.len()).map(|j| grid.count(pos, j)).collect();
            RDCurve::from_values(grid.layers()[pos].layer_index, &counts, v)
        })
        .collect()
}

/// Small deterministic generator for test instances.
pub struct Rng(rand_xoshiro::Xoshiro256StarStar);

impl Rng {
    pub fn new(seed: u64) -> Self {
        use rand_core::SeedableRng;
        Rng(rand_xoshiro::Xoshiro256StarStar::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        use rand_core::RngCore;
        self.0.next_u64()
    }

    /// Uniform in `lo..=hi`.
    pub fn range(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.next_u64() % (hi - lo + 1) as u64) as usize
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn f32s(&mut self, n: usize, scale: f32) -> Vec<f32> {
        (0..n)
            .map(|_| ((self.unit() * 2.0 - 1.0) as f32) * scale)
            .collect()
    }
}

/// Non-decreasing curve starting at 0 with occasional flat steps.
pub fn monotone_curve(rng: &mut Rng, steps: usize) -> Vec<f64> {
    let mut v = vec![0.0];
    for _ in 0..steps {
        let inc = if rng.range(0, 4) == 0 {
            0.0
        } else {
            rng.unit() * 10.0
        };
        v.push(v.last().unwrap() + inc);
    }
    v
}
