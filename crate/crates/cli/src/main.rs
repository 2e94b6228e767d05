//! `vecstyle` command-line front end.
//!
//! Exit codes: 0 success, 2 invalid arguments, 3 parse/format/IO errors,
//! 4 numerical abort, 5 gradient check failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vecstyle::engine::{self, EngineError, OptimConfig, PointLr};
use vecstyle::features::{FeatureNet, TapSet, TrunkSpec, WeightError, WeightStore};
use vecstyle::gradcheck::{check_render, GradCheckOptions};
use vecstyle::loss::{ContourVariant, LossConfig, LossError};
use vecstyle::raster::RenderConfig;
use vecstyle::scene::{parse_svg, serialize_svg, Scene};

const GRADCHECK_TOLERANCE: f64 = 1e-2;

#[derive(Parser, Debug)]
#[command(name = "vecstyle", version, about = "Style transfer for SVG images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimize the content SVG's shapes toward the style image.
    Stylize(StylizeArgs),
    /// Compare rasterizer gradients with central finite differences.
    Gradcheck(GradcheckArgs),
    /// List the tensors of a weights file and validate them against VGG-19.
    WeightsInfo(WeightsInfoArgs),
    /// Write a seeded random VGG-19 weights file.
    SynthWeights(SynthWeightsArgs),
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ContourArg {
    L1,
    L2,
}

#[derive(Args, Debug)]
struct StylizeArgs {
    /// Content SVG
    #[arg(long)]
    content: PathBuf,
    /// Style image (PNG or SVG)
    #[arg(long)]
    style: PathBuf,
    /// VNSTW1 weights file
    #[arg(long)]
    weights: PathBuf,
    /// Output SVG
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 150)]
    iters: usize,
    /// Weight of the contour term
    #[arg(long, default_value_t = 100.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write a snapshot every K iterations (0 = off)
    #[arg(long, default_value_t = 0)]
    snapshot_every: usize,
    #[arg(long)]
    snapshot_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ContourArg::L1)]
    contour: ContourArg,
    /// Disable the random color-scale transform
    #[arg(long)]
    no_color_scale: bool,
    /// Longest side of the working resolution, in pixels
    #[arg(long, default_value_t = 512, value_parser = clap::value_parser!(u32).range(1..))]
    resolution_cap: u32,
    /// Learning rate for points (default: chosen from the shape count)
    #[arg(long)]
    lr_points: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    lr_color: f64,
    #[arg(long, default_value_t = 0.1)]
    lr_width: f64,
    /// Print progress to stderr
    #[arg(long, short)]
    verbose: bool,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Longest side of the render, in pixels
    #[arg(long, default_value_t = 48, value_parser = clap::value_parser!(u32).range(1..))]
    size: u32,
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    /// Parameters probed per group
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u32).range(1..))]
    samples: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct WeightsInfoArgs {
    #[arg(long)]
    weights: PathBuf,
}

#[derive(Args, Debug)]
struct SynthWeightsArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

enum Failure {
    Usage(String),
    Input(String),
    Numerical(String),
    Check(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Input(_) => 3,
            Failure::Numerical(_) => 4,
            Failure::Check(_) => 5,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Input(m) | Failure::Numerical(m) | Failure::Check(m) => m,
        }
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::NonFinite { .. } => Failure::Numerical(e.to_string()),
            EngineError::Config(_) | EngineError::Loss(LossError::Config(_)) => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Input(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Stylize(a) => stylize(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::WeightsInfo(a) => weights_info(a),
        Command::SynthWeights(a) => synth_weights(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("VECSTYLE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| Failure::Usage(format!("VECSTYLE_THREADS={v:?} is not a count")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    Ok(())
}

fn read_scene(path: &Path) -> Result<Scene, Failure> {
    let bytes =
        std::fs::read(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    parse_svg(&bytes).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn read_weights(path: &Path) -> Result<WeightStore, Failure> {
    WeightStore::load(path).map_err(|e| match e {
        WeightError::Io { .. } => Failure::Input(e.to_string()),
        _ => Failure::Input(format!("{}: {e}", path.display())),
    })
}

fn load_weights(path: &Path, spec: &TrunkSpec) -> Result<WeightStore, Failure> {
    let store = read_weights(path)?;
    let unknown = store
        .validate(spec)
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    for name in unknown {
        eprintln!("warning: {}: ignoring unknown tensor {name}", path.display());
    }
    Ok(store)
}

fn stylize(a: StylizeArgs) -> Result<(), Failure> {
    for (v, name) in [(a.lambda, "--lambda"), (a.lr_color, "--lr-color"), (a.lr_width, "--lr-width")] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Failure::Usage(format!("{name} must be a finite value >= 0")));
        }
    }
    if a.snapshot_every > 0 && a.snapshot_dir.is_none() {
        return Err(Failure::Usage("--snapshot-every needs --snapshot-dir".into()));
    }
    let content = read_scene(&a.content)?;
    let spec = TrunkSpec::vgg19();
    let weights = load_weights(&a.weights, &spec)?;
    let net = FeatureNet::<f32>::new(&spec, &weights, &TapSet::default())
        .map_err(|e| Failure::Input(format!("{}: {e}", a.weights.display())))?;
    drop(weights);

    let (w, h) = engine::working_resolution(&content, a.resolution_cap as usize);
    let min = net.min_input_size();
    if w < min || h < min {
        return Err(Failure::Usage(format!(
            "working resolution {w}x{h} is below the trunk minimum {min}x{min}"
        )));
    }
    let style = engine::load_style(&a.style, w, h)?;

    let config = OptimConfig {
        iterations: a.iters,
        lr_color: a.lr_color,
        lr_width: a.lr_width,
        lr_points: a.lr_points.map_or(PointLr::Auto, PointLr::Fixed),
        snapshot_every: a.snapshot_every,
        snapshot_dir: a.snapshot_dir.clone(),
        ..Default::default()
    };
    let loss_config = LossConfig {
        lambda: a.lambda,
        contour_variant: match a.contour {
            ContourArg::L1 => ContourVariant::L1,
            ContourArg::L2 => ContourVariant::L2,
        },
        color_scale_transform: !a.no_color_scale,
        rng_seed: a.seed,
        ..Default::default()
    };
    let verbose = a.verbose;
    let out = engine::run(&content, &style, &net, &config, &loss_config, |s| {
        if verbose {
            if let Some(r) = s.history.last() {
                eprintln!(
                    "iter {:>5}  total {:.6}  lpips {:.6}  contour {:.6}",
                    s.iteration - 1,
                    r.total,
                    r.lpips_term,
                    r.contour_term
                );
            }
        }
    })?;
    std::fs::write(&a.out, serialize_svg(&out.scene))
        .map_err(|e| Failure::Input(format!("{}: {e}", a.out.display())))?;

    let first = &out.history[0];
    let last = out.history.last().expect("at least one evaluation");
    println!("resolution: {w}x{h}");
    println!("iterations: {}", a.iters);
    println!(
        "learning rates: points {} colors {} widths {}",
        out.learning_rates.points, out.learning_rates.colors, out.learning_rates.widths
    );
    println!("initial total: {:.8e}", first.total);
    println!("final total: {:.8e}", last.total);
    println!("final lpips: {:.8e}", last.lpips_term);
    println!("final contour: {:.8e}", last.contour_term);
    println!("color scale: {:.6}", last.color_scale_used);
    println!("patch origin: {},{}", last.patch_origin.0, last.patch_origin.1);
    println!("wrote {}", a.out.display());
    Ok(())
}

fn gradcheck(a: GradcheckArgs) -> Result<(), Failure> {
    if !(a.eps > 0.0 && a.eps.is_finite()) {
        return Err(Failure::Usage("--eps must be positive".into()));
    }
    let scene = read_scene(&a.scene)?;
    let size = a.size as f64;
    let long = scene.width.max(scene.height);
    let config = RenderConfig::new(
        ((scene.width / long * size).round() as usize).max(1),
        ((scene.height / long * size).round() as usize).max(1),
    );
    let opts = GradCheckOptions {
        eps: a.eps,
        samples: a.samples as usize,
        seed: a.seed,
        ..Default::default()
    };
    let report = check_render(&scene, &config, &opts)
        .map_err(|e| Failure::Input(format!("{}: {e}", a.scene.display())))?;
    println!("render: {}x{}", config.out_width, config.out_height);
    for g in &report.groups {
        println!(
            "{:<7} checked {:>4}  max relative error {:.3e}",
            g.group, g.checked, g.max_rel_error
        );
    }
    if report.groups.iter().any(|g| !g.max_rel_error.is_finite()) {
        return Err(Failure::Numerical("non-finite gradient".into()));
    }
    if report.passes(GRADCHECK_TOLERANCE) {
        return Ok(());
    }
    let worst = report.worst().expect("failing report has groups");
    Err(Failure::Check(format!(
        "{} gradient index {} off by {:.3e} (analytic {:.6e}, numeric {:.6e}); tolerance {GRADCHECK_TOLERANCE:e}",
        worst.group,
        worst.worst_index.unwrap_or(0),
        worst.max_rel_error,
        worst.worst_analytic,
        worst.worst_numeric
    )))
}

fn weights_info(a: WeightsInfoArgs) -> Result<(), Failure> {
    let store = read_weights(&a.weights)?;
    let spec = TrunkSpec::vgg19();
    for (name, t) in store.iter() {
        let dims: Vec<String> = t.dims.iter().map(|d| d.to_string()).collect();
        println!("{name:<16} [{}] {}", dims.join(", "), t.data.len());
    }
    println!("tensors: {}", store.len());
    println!("values: {}", store.value_count());
    let unknown = store
        .validate(&spec)
        .map_err(|e| Failure::Input(format!("{}: {e}", a.weights.display())))?;
    for name in &unknown {
        eprintln!("warning: unknown tensor {name}");
    }
    println!("valid VGG-19 trunk ({} conv parameters)", spec.param_count());
    Ok(())
}

fn synth_weights(a: SynthWeightsArgs) -> Result<(), Failure> {
    let spec = TrunkSpec::vgg19();
    WeightStore::synthetic(&spec, a.seed)
        .save(&a.out)
        .map_err(|e| Failure::Input(e.to_string()))?;
    println!("wrote {} ({} conv parameters)", a.out.display(), spec.param_count());
    Ok(())
}
