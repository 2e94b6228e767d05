mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vecstyle::engine::*;
use vecstyle::loss::LossConfig;
use vecstyle::raster::RgbImage;
use vecstyle::scene::{extract_params, parse_svg, serialize_svg, Scene};
use vecstyle::synth::{random_blobs, BlobOptions};

fn content(seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_blobs(
        &mut rng,
        48.0,
        40.0,
        &BlobOptions {
            shapes: 4,
            ..Default::default()
        },
    )
}

fn style(seed: u64) -> RgbImage {
    let s = content(seed + 1000);
    rasterize(&s, 48, 40).unwrap()
}

fn quick(iterations: usize) -> OptimConfig {
    OptimConfig {
        iterations,
        ..Default::default()
    }
}

#[test]
fn zero_iterations_return_input() {
    let net = common::tiny_net::<f32>(1);
    let c = content(1);
    let out = run(&c, &style(1), &net, &quick(0), &LossConfig::default(), |_| {}).unwrap();
    assert_eq!(out.scene, c);
    assert_eq!(out.history.len(), 1);
}

#[test]
fn own_render_is_a_fixed_point() {
    let net = common::tiny_net::<f32>(2);
    let c = content(2);
    let own = rasterize(&c, 48, 40).unwrap();
    let lc = LossConfig {
        color_scale_transform: false,
        ..Default::default()
    };
    let out = run(&c, &own, &net, &quick(5), &lc, |_| {}).unwrap();
    assert_eq!(out.scene, c);
    assert!(out.history.iter().all(|r| r.total == 0.0));
}

#[test]
fn topology_and_determinism() {
    let net = common::tiny_net::<f32>(3);
    let c = content(3);
    let s = style(3);
    let a = run(&c, &s, &net, &quick(6), &LossConfig::default(), |_| {}).unwrap();
    let b = run(&c, &s, &net, &quick(6), &LossConfig::default(), |_| {}).unwrap();
    assert_eq!(a.scene.topology(), c.topology());
    assert_ne!(a.scene, c);
    assert_eq!(serialize_svg(&a.scene), serialize_svg(&b.scene));
    assert_eq!(a.history, b.history);
    assert_eq!(a.history.len(), 7);
}

#[test]
fn frozen_groups_stay_put() {
    let net = common::tiny_net::<f32>(4);
    let c = content(4);
    let s = style(4);
    let (before, _) = extract_params(&c);

    let cfg = OptimConfig {
        lr_color: 0.0,
        lr_width: 0.0,
        ..quick(4)
    };
    let out = run(&c, &s, &net, &cfg, &LossConfig::default(), |_| {}).unwrap();
    let (after, _) = extract_params(&out.scene);
    assert_eq!(after.colors, before.colors);
    assert_eq!(after.widths, before.widths);
    assert_ne!(after.points, before.points);

    let cfg = OptimConfig {
        lr_points: PointLr::Fixed(0.0),
        ..quick(4)
    };
    let out = run(&c, &s, &net, &cfg, &LossConfig::default(), |_| {}).unwrap();
    let (after, _) = extract_params(&out.scene);
    assert_eq!(after.points, before.points);
    assert_ne!(after.colors, before.colors);
}

#[test]
fn colors_stay_in_range() {
    let net = common::tiny_net::<f32>(5);
    let c = content(5);
    let cfg = OptimConfig {
        lr_color: 0.5,
        ..quick(5)
    };
    let out = run(&c, &style(5), &net, &cfg, &LossConfig::default(), |_| {}).unwrap();
    let (p, _) = extract_params(&out.scene);
    assert!(p.colors.iter().all(|v| (0.0..=1.0).contains(v)));
    assert!(p.widths.iter().all(|v| *v >= 0.0));
}

#[test]
fn observer_sees_every_step() {
    let net = common::tiny_net::<f32>(6);
    let mut seen = Vec::new();
    run(&content(6), &style(6), &net, &quick(4), &LossConfig::default(), |s| {
        seen.push((s.iteration, s.history.len()))
    })
    .unwrap();
    assert_eq!(seen, [(1, 1), (2, 2), (3, 3), (4, 4)]);
}

#[test]
fn snapshots_and_history() {
    let dir = tempfile::tempdir().unwrap();
    let net = common::tiny_net::<f32>(7);
    let cfg = OptimConfig {
        iterations: 30,
        snapshot_every: 10,
        snapshot_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    let mut at_20 = None;
    let out = run(&content(7), &style(7), &net, &cfg, &LossConfig::default(), |s| {
        if s.iteration == 20 {
            at_20 = Some(s.scene.clone());
        }
    })
    .unwrap();
    let mut names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "history.csv",
            "iter_000010.png",
            "iter_000010.svg",
            "iter_000020.png",
            "iter_000020.svg",
            "iter_000030.png",
            "iter_000030.svg",
        ]
    );
    let svg = std::fs::read(dir.path().join("iter_000020.svg")).unwrap();
    assert_eq!(parse_svg(&svg).unwrap(), at_20.unwrap());
    let last = parse_svg(&std::fs::read(dir.path().join("iter_000030.svg")).unwrap()).unwrap();
    assert_eq!(last, out.scene);

    let csv = std::fs::read_to_string(dir.path().join("history.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], HISTORY_HEADER);
    assert_eq!(lines.len(), 1 + 31);
    let row: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(row[0], "0");
    assert_eq!(row[1].parse::<f64>().unwrap(), {
        let t = out.history[0].total;
        format!("{t:.8e}").parse::<f64>().unwrap()
    });
    assert_eq!(row[4], "2.00000000e-1");
}

#[test]
fn snapshot_dir_errors_name_the_path() {
    let file = tempfile::NamedTempFile::new().unwrap();
    let dir = file.path().join("sub");
    let net = common::tiny_net::<f32>(8);
    let cfg = OptimConfig {
        iterations: 2,
        snapshot_every: 1,
        snapshot_dir: Some(dir.clone()),
        ..Default::default()
    };
    let err = run(&content(8), &style(8), &net, &cfg, &LossConfig::default(), |_| {}).unwrap_err();
    assert!(err.to_string().contains(&dir.display().to_string()), "{err}");
}

#[test]
fn non_finite_aborts_with_iteration() {
    let net = common::tiny_net::<f32>(9);
    let mut s = style(9);
    s.data[5] = f64::NAN;
    let err = run(&content(9), &s, &net, &quick(3), &LossConfig::default(), |_| {}).unwrap_err();
    match err {
        EngineError::NonFinite { iteration, group } => {
            assert_eq!(iteration, 0);
            assert_eq!(group, "loss");
        }
        other => panic!("{other}"),
    }
}

#[test]
fn style_svg_and_png_load_at_working_size() {
    let dir = tempfile::tempdir().unwrap();
    let c = content(10);
    let svg = dir.path().join("style.svg");
    std::fs::write(&svg, serialize_svg(&c)).unwrap();
    let a = load_style(&svg, 24, 20).unwrap();
    assert_eq!((a.width, a.height), (24, 20));
    let png = dir.path().join("style.png");
    rasterize(&c, 48, 40).unwrap().save_png(&png).unwrap();
    let b = load_style(&png, 24, 20).unwrap();
    assert_eq!((b.width, b.height), (24, 20));
    let same = load_style(&png, 48, 40).unwrap();
    assert_eq!((same.width, same.height), (48, 40));
    assert!(load_style(&dir.path().join("missing.png"), 4, 4).is_err());
}
