mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vecstyle::features::{
    read_f32_file, write_f32_file, FixtureIndex, TapFiles, TrunkSpec, WeightStore,
};

use common::{fixture_dir, oracle};

struct Golden {
    name: &'static str,
    blocks: &'static [&'static [usize]],
    taps: &'static [&'static str],
    size: usize,
    inputs: usize,
    seed: u64,
}

const GOLDEN: [Golden; 2] = [
    Golden {
        name: "tiny2",
        blocks: &[&[4, 5]],
        taps: &["conv1_1", "conv1_2"],
        size: 8,
        inputs: 2,
        seed: 101,
    },
    Golden {
        name: "tiny3",
        blocks: &[&[4, 6], &[8, 8], &[8]],
        taps: &["conv1_2", "conv2_2", "conv3_1"],
        size: 16,
        inputs: 3,
        seed: 202,
    },
];

/// Rewrites the checked-in fixtures from the reference implementation.
#[test]
#[ignore = "regenerates checked-in files"]
fn regenerate_golden_fixtures() {
    for g in &GOLDEN {
        let dir = fixture_dir().join("golden").join(g.name);
        std::fs::create_dir_all(&dir).unwrap();
        let spec = TrunkSpec::from_blocks(3, g.blocks);
        let weights = WeightStore::synthetic(&spec, g.seed);
        weights.save(&dir.join("weights.vnstw")).unwrap();
        let blocks: Vec<Vec<usize>> = g.blocks.iter().map(|b| b.to_vec()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
        let mut inputs = Vec::new();
        let mut taps: Vec<Vec<String>> = vec![Vec::new(); g.taps.len()];
        for i in 0..g.inputs {
            let input: Vec<f32> = (0..3 * g.size * g.size).map(|_| rng.gen_range(0.0..1.0)).collect();
            let file = format!("input_{i}.f32");
            write_f32_file(&dir.join(&file), &input).unwrap();
            inputs.push(file);
            let maps = oracle::run_trunk(oracle::normalize(&input, g.size, g.size), &blocks, |name| {
                (
                    weights.get(&format!("{name}.weight")).unwrap().data.clone(),
                    weights.get(&format!("{name}.bias")).unwrap().data.clone(),
                )
            });
            for (t, tap) in g.taps.iter().enumerate() {
                let map = &maps.iter().find(|(n, _)| n == tap).unwrap().1;
                let file = format!("{tap}_{i}.f32");
                let values: Vec<f32> = map.v.iter().map(|v| *v as f32).collect();
                write_f32_file(&dir.join(&file), &values).unwrap();
                taps[t].push(file);
            }
        }
        let index = FixtureIndex {
            seed: g.seed,
            inputs,
            taps: g
                .taps
                .iter()
                .zip(taps)
                .map(|(n, f)| (n.to_string(), TapFiles::Many(f)))
                .collect(),
            height: Some(g.size),
            width: Some(g.size),
            weights: Some("weights.vnstw".into()),
            blocks: Some(blocks),
        };
        std::fs::write(dir.join("index.json"), index.to_json()).unwrap();
    }
}

#[test]
fn golden_forward_parity() {
    for g in &GOLDEN {
        let dir = fixture_dir().join("golden").join(g.name);
        let index = FixtureIndex::load(&dir.join("index.json")).unwrap();
        let report = index.check_parity(&dir, None).unwrap();
        assert_eq!(report.taps.len(), g.taps.len() * g.inputs);
        assert!(report.max_abs_error() <= 1e-5, "{}: {:?}", g.name, report);
    }
}

#[test]
fn golden_weights_match_seed() {
    // the stored weights are the seeded synthetic ones, bit for bit
    for g in &GOLDEN {
        let dir = fixture_dir().join("golden").join(g.name);
        let stored = WeightStore::load(&dir.join("weights.vnstw")).unwrap();
        let spec = TrunkSpec::from_blocks(3, g.blocks);
        assert_eq!(stored, WeightStore::synthetic(&spec, g.seed));
        let input = read_f32_file(&dir.join("input_0.f32")).unwrap();
        assert_eq!(input.len(), 3 * g.size * g.size);
    }
}

#[test]
fn tampered_fixture_is_detected() {
    let g = &GOLDEN[0];
    let src = fixture_dir().join("golden").join(g.name);
    let tmp = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(&src).unwrap() {
        let p = entry.unwrap().path();
        std::fs::copy(&p, tmp.path().join(p.file_name().unwrap())).unwrap();
    }
    let file = tmp.path().join("conv1_2_0.f32");
    let mut v = read_f32_file(&file).unwrap();
    v[7] += 1e-3;
    write_f32_file(&file, &v).unwrap();
    let index = FixtureIndex::load(&tmp.path().join("index.json")).unwrap();
    let report = index.check_parity(tmp.path(), None).unwrap();
    assert!(report.max_abs_error() > 5e-4);
}
