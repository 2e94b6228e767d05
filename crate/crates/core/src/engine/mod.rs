//! Adam over control points, colors and stroke widths.

mod adam;
mod snapshot;

use std::borrow::Borrow;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::features::{FeatureNet, Scalar};
use crate::loss::{total_loss, ContourReference, LossConfig, LossError, LossReport, LossTargets};
use crate::raster::{render, to_rgb, RenderConfig, RgbImage};
use crate::scene::{apply_params, extract_params, parse_svg, ParamGroups, Scene};
pub use adam::Adam;
pub use snapshot::{history_csv, write_history, write_snapshot, HISTORY_HEADER};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid optimizer configuration: {0}")]
    Config(String),
    #[error("non-finite {group} at iteration {iteration}")]
    NonFinite { iteration: usize, group: &'static str },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Style { path: PathBuf, message: String },
}

/// Learning rate for control points.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum PointLr {
    /// Chosen from the shape count by [`point_lr_schedule`].
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimConfig {
    pub iterations: usize,
    pub lr_color: f64,
    pub lr_width: f64,
    pub lr_points: PointLr,
    pub betas: (f64, f64),
    pub eps: f64,
    /// Write a snapshot every this many steps; 0 disables.
    pub snapshot_every: usize,
    pub snapshot_dir: Option<PathBuf>,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            iterations: 150,
            lr_color: 0.01,
            lr_width: 0.1,
            lr_points: PointLr::Auto,
            betas: (0.9, 0.999),
            eps: 1e-8,
            snapshot_every: 0,
            snapshot_dir: None,
        }
    }
}

impl OptimConfig {
    /// Learning rates zero are accepted: they freeze a group.
    pub fn validate(&self) -> Result<(), EngineError> {
        let lr_points = match self.lr_points {
            PointLr::Auto => 0.0,
            PointLr::Fixed(v) => v,
        };
        for (name, v) in [
            ("lr_color", self.lr_color),
            ("lr_width", self.lr_width),
            ("lr_points", lr_points),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(EngineError::Config(format!("{name} = {v} must be >= 0")));
            }
        }
        let (b1, b2) = self.betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return Err(EngineError::Config(format!("betas {:?} must lie in [0, 1)", self.betas)));
        }
        if !(self.eps > 0.0) {
            return Err(EngineError::Config("eps must be positive".into()));
        }
        if self.snapshot_every > 0 && self.snapshot_dir.is_none() {
            return Err(EngineError::Config("snapshots need a directory".into()));
        }
        Ok(())
    }

    pub fn point_lr(&self, n_shapes: usize) -> f64 {
        match self.lr_points {
            PointLr::Auto => point_lr_schedule(n_shapes.max(1)),
            PointLr::Fixed(v) => v,
        }
    }
}

/// Point learning rate by shape count. Boundaries belong to the upper bucket.
pub fn point_lr_schedule(n_shapes: usize) -> f64 {
    match n_shapes {
        0..=299 => 0.2,
        300..=999 => 0.3,
        1000..=1599 => 0.4,
        _ => 0.8,
    }
}

/// Learning rates actually used by a run, `[points, colors, widths]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningRates {
    pub points: f64,
    pub colors: f64,
    pub widths: f64,
}

/// Pixel size for `scene`: its viewport with the long side capped at `cap`.
pub fn working_resolution(scene: &Scene, cap: usize) -> (usize, usize) {
    let (w, h) = (scene.width.max(1.0), scene.height.max(1.0));
    let long = w.max(h);
    let s = if long > cap as f64 { cap as f64 / long } else { 1.0 };
    (
        ((w * s).round() as usize).max(1),
        ((h * s).round() as usize).max(1),
    )
}

/// Renders `scene` over white at `width × height`.
pub fn rasterize(scene: &Scene, width: usize, height: usize) -> Result<RgbImage, EngineError> {
    let config = RenderConfig::new(width, height);
    let (img, _) = render(scene, &config).map_err(LossError::from)?;
    Ok(to_rgb(&img, config.background))
}

/// Loads a style image from PNG or SVG and brings it to `width × height`.
pub fn load_style(path: &Path, width: usize, height: usize) -> Result<RgbImage, EngineError> {
    let is_svg = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("svg"));
    if is_svg {
        let bytes = std::fs::read(path).map_err(|source| EngineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let scene = parse_svg(&bytes).map_err(|e| EngineError::Style {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        return rasterize(&scene, width, height);
    }
    let img = RgbImage::load(path).map_err(|e| EngineError::Style {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if (img.width, img.height) == (width, height) {
        Ok(img)
    } else {
        Ok(img.resize(width, height))
    }
}

/// Mutable state of a run.
#[derive(Debug, Clone)]
pub struct RunState {
    pub scene: Scene,
    /// Steps taken so far.
    pub iteration: usize,
    /// Moments for points, colors and widths.
    pub adam: [Adam; 3],
    /// One entry per loss evaluation; entry `i` scores the scene after `i` steps.
    pub history: Vec<LossReport>,
}

/// A run in progress, advanced one step at a time.
pub struct Stylizer<T, N> {
    state: RunState,
    style: RgbImage,
    reference: ContourReference,
    net: N,
    render: RenderConfig,
    config: OptimConfig,
    loss_config: LossConfig,
    lr: LearningRates,
    rng: ChaCha8Rng,
    _scalar: std::marker::PhantomData<T>,
}

impl<T: Scalar, N: Borrow<FeatureNet<T>>> Stylizer<T, N> {
    /// The working resolution is the style image's size.
    pub fn new(
        content: &Scene,
        style: RgbImage,
        net: N,
        config: OptimConfig,
        loss_config: LossConfig,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        loss_config.validate()?;
        let render = RenderConfig::new(style.width, style.height);
        let reference = ContourReference::new(content, &render)?;
        let (params, _) = extract_params(content);
        let lr = LearningRates {
            points: config.point_lr(content.shapes.len()),
            colors: config.lr_color,
            widths: config.lr_width,
        };
        Ok(Self {
            state: RunState {
                scene: content.clone(),
                iteration: 0,
                adam: [
                    Adam::new(params.points.len()),
                    Adam::new(params.colors.len()),
                    Adam::new(params.widths.len()),
                ],
                history: Vec::new(),
            },
            style,
            reference,
            net,
            render,
            rng: ChaCha8Rng::seed_from_u64(loss_config.rng_seed),
            config,
            loss_config,
            lr,
            _scalar: std::marker::PhantomData,
        })
    }

    pub fn state(&self) -> &RunState {
        &self.state
    }

    pub fn scene(&self) -> &Scene {
        &self.state.scene
    }

    pub fn learning_rates(&self) -> LearningRates {
        self.lr
    }

    pub fn render_config(&self) -> &RenderConfig {
        &self.render
    }

    fn evaluate(&mut self) -> Result<(LossReport, ParamGroups), EngineError> {
        let targets = LossTargets {
            style: &self.style,
            contour: &self.reference,
            net: self.net.borrow(),
            render: &self.render,
        };
        let (report, grads) = total_loss(&self.state.scene, &targets, &self.loss_config, &mut self.rng)?;
        let iteration = self.state.iteration;
        if !report.total.is_finite() {
            return Err(EngineError::NonFinite { iteration, group: "loss" });
        }
        for (group, g) in grads.groups() {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(EngineError::NonFinite { iteration, group });
            }
        }
        self.state.history.push(report.clone());
        Ok((report, grads))
    }

    /// Scores the current scene and takes one Adam step. Returns the score.
    pub fn step(&mut self) -> Result<LossReport, EngineError> {
        let (report, grads) = self.evaluate()?;
        let (mut params, _) = extract_params(&self.state.scene);
        let (b1, b2) = self.config.betas;
        let eps = self.config.eps;
        let [ap, ac, aw] = &mut self.state.adam;
        ap.step(&mut params.points, &grads.points, self.lr.points, b1, b2, eps);
        ac.step(&mut params.colors, &grads.colors, self.lr.colors, b1, b2, eps);
        aw.step(&mut params.widths, &grads.widths, self.lr.widths, b1, b2, eps);
        let iteration = self.state.iteration;
        for (group, p) in params.groups() {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(EngineError::NonFinite { iteration, group });
            }
        }
        self.state.scene = apply_params(&self.state.scene, &params)
            .expect("layout is fixed for the whole run");
        self.state.iteration += 1;
        Ok(report)
    }

    /// Scores the current scene without stepping.
    pub fn finish(&mut self) -> Result<LossReport, EngineError> {
        Ok(self.evaluate()?.0)
    }

    pub fn into_state(self) -> RunState {
        self.state
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub scene: Scene,
    pub history: Vec<LossReport>,
    pub learning_rates: LearningRates,
}

/// Runs `config.iterations` steps, then scores the result.
///
/// `observer` sees the state after every step. Snapshots and `history.csv`
/// are written when `snapshot_every > 0`.
pub fn run<T: Scalar>(
    content: &Scene,
    style: &RgbImage,
    net: &FeatureNet<T>,
    config: &OptimConfig,
    loss_config: &LossConfig,
    mut observer: impl FnMut(&RunState),
) -> Result<RunOutput, EngineError> {
    let mut st = Stylizer::new(content, style.clone(), net, config.clone(), loss_config.clone())?;
    let dir = config.snapshot_dir.as_deref().filter(|_| config.snapshot_every > 0);
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir).map_err(|source| EngineError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    for _ in 0..config.iterations {
        st.step()?;
        let state = st.state();
        if let Some(dir) = dir {
            if state.iteration % config.snapshot_every == 0 {
                write_snapshot(dir, state.iteration, &state.scene, &st.render)?;
            }
        }
        observer(state);
    }
    st.finish()?;
    let lr = st.learning_rates();
    if let Some(dir) = dir {
        write_history(dir, &st.state().history, lr)?;
    }
    let state = st.into_state();
    Ok(RunOutput {
        scene: state.scene,
        history: state.history,
        learning_rates: lr,
    })
}
