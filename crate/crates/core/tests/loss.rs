mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vecstyle::gradcheck::{check_against, GradCheckOptions};
use vecstyle::loss::*;
use vecstyle::raster::{render, to_rgb, FlattenPlan, RenderConfig, RgbImage};
use vecstyle::scene::{parse_svg, Scene};
use vecstyle::synth::{random_blobs, BlobOptions};

fn random_rgb(rng: &mut impl Rng, w: usize, h: usize) -> RgbImage {
    RgbImage {
        width: w,
        height: h,
        data: (0..w * h * 3).map(|_| rng.gen_range(0.0..1.0)).collect(),
    }
}

fn chw_f32(img: &RgbImage) -> Vec<f32> {
    img.to_chw().iter().map(|v| *v as f32).collect()
}

#[test]
fn self_distance_is_zero() {
    let net = common::tiny_net::<f32>(1);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = random_rgb(&mut rng, 24, 20);
    let out = lpips(&x, &x, &net, 1.0).unwrap();
    assert_eq!(out.value, 0.0);
    assert!(out.grad.iter().all(|g| *g == 0.0));
}

#[test]
fn symmetric_in_value() {
    let net = common::tiny_net::<f32>(2);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random_rgb(&mut rng, 16, 16);
    let y = random_rgb(&mut rng, 16, 16);
    for s in [1.0, 0.37] {
        let a = lpips(&x, &y, &net, s).unwrap().value;
        let b = lpips(&y, &x, &net, s).unwrap().value;
        assert_eq!(a, b);
        assert!(a > 0.0);
    }
}

#[test]
fn constant_images_match_scalar_reference() {
    let weights = common::tiny_weights(3);
    let net = common::tiny_net::<f64>(3);
    let x = RgbImage::filled(16, 16, [0.2; 3]);
    let y = RgbImage::filled(16, 16, [0.8; 3]);
    let got = lpips(&x, &y, &net, 1.0).unwrap().value;
    let want = common::oracle_lpips(&chw_f32(&x), &chw_f32(&y), 16, 16, &weights);
    assert!((got - want).abs() <= 1e-6, "{got} vs {want}");
}

#[test]
fn color_scale_equals_prescaled_inputs() {
    let net = common::tiny_net::<f64>(4);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random_rgb(&mut rng, 16, 16);
    let y = random_rgb(&mut rng, 16, 16);
    let s = 0.43;
    let scale = |img: &RgbImage| RgbImage {
        data: img.data.iter().map(|v| v * s).collect(),
        ..img.clone()
    };
    let a = lpips(&x, &y, &net, s).unwrap().value;
    let b = lpips(&scale(&x), &scale(&y), &net, 1.0).unwrap().value;
    assert_eq!(a, b);
}

#[test]
fn lpips_gradient_matches_finite_differences() {
    let net = common::tiny_net::<f64>(5);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random_rgb(&mut rng, 12, 12);
    let y = random_rgb(&mut rng, 12, 12);
    let out = lpips(&x, &y, &net, 0.8).unwrap();
    for i in (0..x.data.len()).step_by(7) {
        let h = 1e-6;
        let mut p = x.clone();
        p.data[i] += h;
        let mut q = x.clone();
        q.data[i] -= h;
        let fd = (lpips(&p, &y, &net, 0.8).unwrap().value - lpips(&q, &y, &net, 0.8).unwrap().value)
            / (2.0 * h);
        let err = (fd - out.grad[i]).abs() / fd.abs().max(out.grad[i].abs()).max(1e-8);
        assert!(err < 1e-4, "{i}: {} vs {fd}", out.grad[i]);
    }
}

#[test]
fn mismatched_sizes_rejected() {
    let net = common::tiny_net::<f32>(1);
    let x = RgbImage::filled(16, 16, [0.5; 3]);
    let y = RgbImage::filled(16, 20, [0.5; 3]);
    assert!(matches!(lpips(&x, &y, &net, 1.0), Err(LossError::Dimension { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn lpips_is_non_negative(seed in any::<u64>(), s in 0.0f64..1.0) {
        let net = common::tiny_net::<f32>(seed % 4);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_rgb(&mut rng, 12, 12);
        let y = random_rgb(&mut rng, 12, 12);
        prop_assert!(lpips(&x, &y, &net, s).unwrap().value >= 0.0);
    }
}

const STRIPES: &str = r##"<svg xmlns="http://www.w3.org/2000/svg" width="256" height="256">
  <rect x="-10" y="-10" width="276" height="276" fill="#333"/>
  <path d="M-40 0 L-20 256 L0 0 L20 256 L40 0 L60 256 L80 0 L100 256 L120 0 L140 256
           L160 0 L180 256 L200 0 L220 256 L240 0 L260 256 L280 0"
        fill="none" stroke="#fff" stroke-width="6"/>
</svg>"##;

fn translated(scene: &Scene, shape: usize, dx: f64) -> Scene {
    let mut t = scene.clone();
    for sp in &mut t.shapes[shape].subpaths {
        for p in &mut sp.points {
            p.x += dx;
        }
    }
    t
}

#[test]
fn contour_zero_for_identical_scenes() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let scene = random_blobs(&mut rng, 64.0, 64.0, &BlobOptions::default());
    let cfg = RenderConfig::native(&scene);
    let config = LossConfig::default();
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (v, g, _) = contour_loss(&scene, &scene, &cfg, &config, &mut rng).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.points.iter().all(|x| *x == 0.0));
    }
}

#[test]
fn contour_detects_translation() {
    let scene = parse_svg(STRIPES.as_bytes()).unwrap();
    assert_eq!(scene.shapes.len(), 2);
    let moved = translated(&scene, 1, 50.0);
    let cfg = RenderConfig::native(&scene);
    let config = LossConfig::default();
    let mut greater = 0;
    for seed in 0..100 {
        let mut r1 = ChaCha8Rng::seed_from_u64(seed);
        let mut r2 = ChaCha8Rng::seed_from_u64(seed);
        let (same, _, _) = contour_loss(&scene, &scene, &cfg, &config, &mut r1).unwrap();
        let (diff, _, _) = contour_loss(&moved, &scene, &cfg, &config, &mut r2).unwrap();
        if diff > same {
            greater += 1;
        }
    }
    assert!(greater >= 95, "{greater}/100");
}

struct Fixture {
    scene: Scene,
    style: RgbImage,
    reference: ContourReference,
    net: vecstyle::features::FeatureNet<f64>,
    render: RenderConfig,
}

fn fixture(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = random_blobs(&mut rng, 48.0, 48.0, &BlobOptions::default());
    let content = random_blobs(&mut rng, 48.0, 48.0, &BlobOptions::default());
    let render = RenderConfig::new(48, 48);
    let style = random_rgb(&mut rng, 48, 48);
    Fixture {
        reference: ContourReference::new(&content, &render).unwrap(),
        scene,
        style,
        net: common::tiny_net::<f64>(seed),
        render,
    }
}

impl Fixture {
    fn targets(&self) -> LossTargets<'_, f64> {
        LossTargets {
            style: &self.style,
            contour: &self.reference,
            net: &self.net,
            render: &self.render,
        }
    }
}

#[test]
fn total_is_lpips_plus_weighted_contour() {
    let f = fixture(21);
    let t = f.targets();
    for lambda in [0.0, 1.0, 100.0] {
        let config = LossConfig {
            lambda,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (r, _) = total_loss(&f.scene, &t, &config, &mut rng).unwrap();
        assert_eq!(r.total, r.lpips_term + lambda * r.contour_term);
        assert!(r.lpips_term > 0.0 && r.contour_term > 0.0);
        if lambda == 0.0 {
            assert_eq!(r.total, r.lpips_term);
        }
    }
}

#[test]
fn lambda_linearity_at_fixed_seed() {
    let f = fixture(22);
    let t = f.targets();
    let eval = |lambda: f64| {
        let config = LossConfig {
            lambda,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        total_loss(&f.scene, &t, &config, &mut rng).unwrap().0
    };
    let a = eval(50.0);
    let b = eval(100.0);
    assert_eq!(a.lpips_term, b.lpips_term);
    assert_eq!(a.contour_term, b.contour_term);
    let lhs = b.total - b.lpips_term;
    let rhs = 2.0 * (a.total - a.lpips_term);
    assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs(), "{lhs} vs {rhs}");
}

#[test]
fn colors_take_gradient_from_lpips_only() {
    let f = fixture(23);
    let t = f.targets();
    let run = |lambda: f64| {
        let config = LossConfig {
            lambda,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        total_loss(&f.scene, &t, &config, &mut rng).unwrap().1
    };
    let g0 = run(0.0);
    let g1 = run(100.0);
    assert_eq!(g0.colors, g1.colors);
    assert_ne!(g0.points, g1.points);
}

#[test]
fn own_render_as_style_gives_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let scene = random_blobs(&mut rng, 48.0, 48.0, &BlobOptions::default());
    let render_cfg = RenderConfig::new(48, 48);
    let (img, _) = render(&scene, &render_cfg).unwrap();
    let style = to_rgb(&img, render_cfg.background);
    let reference = ContourReference::new(&scene, &render_cfg).unwrap();
    let net = common::tiny_net::<f32>(0);
    let t = LossTargets {
        style: &style,
        contour: &reference,
        net: &net,
        render: &render_cfg,
    };
    let config = LossConfig {
        color_scale_transform: false,
        ..Default::default()
    };
    let (r, g) = total_loss(&scene, &t, &config, &mut rng).unwrap();
    assert_eq!(r.total, 0.0);
    assert!(g.points.iter().chain(&g.colors).chain(&g.widths).all(|v| *v == 0.0));
}

#[test]
fn seeded_reports_repeat_across_thread_counts() {
    let f = fixture(24);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                let mut rng = ChaCha8Rng::seed_from_u64(99);
                total_loss(&f.scene, &f.targets(), &LossConfig::default(), &mut rng).unwrap()
            })
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn total_gradient_matches_finite_differences() {
    for seed in [41, 42] {
        let f = fixture(seed);
        let t = f.targets();
        let config = LossConfig::default();
        let draw = LossDraw {
            color_scale: 0.7,
            patch: Patch {
                x: 10,
                y: 17,
                width: 12,
                height: 12,
            },
        };
        let plan = FlattenPlan::for_scene(&f.scene, f.render.flatten_tolerance);
        let (_, grads) = total_loss_with(&f.scene, &t, &config, &draw, &plan).unwrap();
        let eval = |s: &Scene| total_loss_with(s, &t, &config, &draw, &plan).unwrap().0.total;
        // the trunk is piecewise linear; a smaller step stays clear of its kinks
        let opts = GradCheckOptions {
            eps: 1e-5,
            ..Default::default()
        };
        let report = check_against(&f.scene, &grads, eval, &opts);
        for g in &report.groups {
            assert!(g.max_rel_error <= 1e-2, "seed {seed}: {g:?}");
        }
    }
}

