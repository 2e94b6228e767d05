#![allow(dead_code)]

pub mod oracle;
pub mod svg;

use std::path::PathBuf;

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

use vecstyle::features::{FeatureNet, Scalar, TapSet, TrunkSpec, WeightStore};

pub const TINY_BLOCKS: [&[usize]; 3] = [&[4, 4], &[8, 8], &[8]];
pub const TINY_TAPS: [&str; 3] = ["conv1_2", "conv2_2", "conv3_1"];

pub fn tiny_spec() -> TrunkSpec {
    TrunkSpec::from_blocks(3, &TINY_BLOCKS)
}

pub fn tiny_weights(seed: u64) -> WeightStore {
    WeightStore::synthetic(&tiny_spec(), seed)
}

pub fn tiny_net<T: Scalar>(seed: u64) -> FeatureNet<T> {
    let spec = tiny_spec();
    let taps = TapSet::at_convs(&spec, &TINY_TAPS).unwrap();
    FeatureNet::new(&spec, &tiny_weights(seed), &taps).unwrap()
}

/// Scalar reimplementation of the perceptual distance on top of the oracle trunk.
pub fn oracle_lpips(x_chw: &[f32], y_chw: &[f32], h: usize, w: usize, weights: &WeightStore) -> f64 {
    let blocks: Vec<Vec<usize>> = TINY_BLOCKS.iter().map(|b| b.to_vec()).collect();
    let lookup = |name: &str| {
        (
            weights.get(&format!("{name}.weight")).unwrap().data.clone(),
            weights.get(&format!("{name}.bias")).unwrap().data.clone(),
        )
    };
    let fx = oracle::run_trunk(oracle::normalize(x_chw, h, w), &blocks, lookup);
    let fy = oracle::run_trunk(oracle::normalize(y_chw, h, w), &blocks, lookup);
    let mut total = 0.0;
    for tap in TINY_TAPS {
        let a = &fx.iter().find(|(n, _)| n == tap).unwrap().1;
        let b = &fy.iter().find(|(n, _)| n == tap).unwrap().1;
        let positions = a.h * a.w;
        let mut sum = 0.0;
        for p in 0..positions {
            let va: Vec<f64> = (0..a.c).map(|c| a.v[c * positions + p]).collect();
            let vb: Vec<f64> = (0..b.c).map(|c| b.v[c * positions + p]).collect();
            let na = va.iter().map(|v| v * v).sum::<f64>().sqrt() + 1e-10;
            let nb = vb.iter().map(|v| v * v).sum::<f64>().sqrt() + 1e-10;
            for c in 0..a.c {
                sum += (va[c] / na - vb[c] / nb).powi(2);
            }
        }
        total += sum / positions as f64;
    }
    total
}

pub fn svg_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/svg")
}
