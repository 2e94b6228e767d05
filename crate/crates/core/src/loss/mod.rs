//! Objective: perceptual distance to the style image plus a weighted contour term.

mod contour;
mod lpips;

use rand::Rng;
use thiserror::Error;

use crate::features::{FeatureError, FeatureNet, Scalar};
use crate::raster::{
    render_with_plan, to_rgb, to_rgb_backward, FlattenPlan, RasterError, RenderConfig, RgbImage,
};
use crate::scene::{ParamGroups, Scene};
pub use contour::{contour_loss_at, patch_distance, ContourReference, Patch};
pub use lpips::{lpips, LpipsOutput, NORM_EPS};

#[derive(Debug, Error)]
pub enum LossError {
    #[error("{what} is {actual:?}, expected {expected:?}")]
    Dimension {
        what: &'static str,
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("invalid loss configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ContourVariant {
    #[default]
    L1,
    L2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    /// Weight of the contour term.
    pub lambda: f64,
    pub contour_variant: ContourVariant,
    /// Patch size as fractions of `(width, height)`.
    pub patch_fraction: (f64, f64),
    /// Scale both images by one `s ~ U(0, 1)` per evaluation.
    pub color_scale_transform: bool,
    pub rng_seed: u64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 100.0,
            contour_variant: ContourVariant::L1,
            patch_fraction: (0.25, 0.25),
            color_scale_transform: true,
            rng_seed: 0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(LossError::Config(format!("lambda {} must be >= 0", self.lambda)));
        }
        let (fx, fy) = self.patch_fraction;
        if !(fx > 0.0 && fx <= 1.0 && fy > 0.0 && fy <= 1.0) {
            return Err(LossError::Config(format!(
                "patch fraction {:?} must lie in (0, 1]",
                self.patch_fraction
            )));
        }
        Ok(())
    }

    /// Patch size for a `width × height` image.
    pub fn patch_size(&self, width: usize, height: usize) -> Result<(usize, usize), LossError> {
        if width < 4 || height < 4 {
            return Err(LossError::Dimension {
                what: "contour image",
                expected: (4, 4),
                actual: (width, height),
            });
        }
        let pw = ((width as f64 * self.patch_fraction.0).floor() as usize).max(1);
        let ph = ((height as f64 * self.patch_fraction.1).floor() as usize).max(1);
        Ok((pw, ph))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub lpips_term: f64,
    /// Before multiplying by lambda.
    pub contour_term: f64,
    pub color_scale_used: f64,
    pub patch_origin: (usize, usize),
}

/// Random choices of one loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossDraw {
    pub color_scale: f64,
    pub patch: Patch,
}

impl LossDraw {
    /// Draws the color scale (when enabled) and then the patch origin.
    pub fn sample(
        rng: &mut impl Rng,
        config: &LossConfig,
        width: usize,
        height: usize,
    ) -> Result<Self, LossError> {
        let color_scale = if config.color_scale_transform {
            rng.gen::<f64>()
        } else {
            1.0
        };
        let (pw, ph) = config.patch_size(width, height)?;
        let x = rng.gen_range(0..=width - pw);
        let y = rng.gen_range(0..=height - ph);
        Ok(Self {
            color_scale,
            patch: Patch {
                x,
                y,
                width: pw,
                height: ph,
            },
        })
    }
}

/// [`lpips`] with the color scale drawn from `rng` when the transform is on.
pub fn lpips_sampled<T: Scalar>(
    x: &RgbImage,
    y: &RgbImage,
    net: &FeatureNet<T>,
    config: &LossConfig,
    rng: &mut impl Rng,
) -> Result<(LpipsOutput, f64), LossError> {
    let s = if config.color_scale_transform {
        rng.gen::<f64>()
    } else {
        1.0
    };
    Ok((lpips(x, y, net, s)?, s))
}

/// Contour term between two scenes with a patch drawn from `rng`.
pub fn contour_loss(
    scene_out: &Scene,
    scene_content: &Scene,
    render: &RenderConfig,
    config: &LossConfig,
    rng: &mut impl Rng,
) -> Result<(f64, ParamGroups, Patch), LossError> {
    let reference = ContourReference::new(scene_content, render)?;
    let (pw, ph) = config.patch_size(render.out_width, render.out_height)?;
    let patch = Patch {
        x: rng.gen_range(0..=render.out_width - pw),
        y: rng.gen_range(0..=render.out_height - ph),
        width: pw,
        height: ph,
    };
    let plan = FlattenPlan::for_scene(scene_out, render.flatten_tolerance);
    let (v, g) = contour_loss_at(
        scene_out,
        &reference,
        render,
        &plan,
        patch,
        config.contour_variant,
    )?;
    Ok((v, g, patch))
}

/// Everything the objective compares the optimized scene against.
#[derive(Debug, Clone)]
pub struct LossTargets<'a, T> {
    pub style: &'a RgbImage,
    pub contour: &'a ContourReference,
    pub net: &'a FeatureNet<T>,
    pub render: &'a RenderConfig,
}

/// Draws this evaluation's randomness from `rng` and evaluates [`total_loss_with`].
pub fn total_loss<T: Scalar>(
    scene: &Scene,
    targets: &LossTargets<'_, T>,
    config: &LossConfig,
    rng: &mut impl Rng,
) -> Result<(LossReport, ParamGroups), LossError> {
    let draw = LossDraw::sample(rng, config, targets.render.out_width, targets.render.out_height)?;
    let plan = FlattenPlan::for_scene(scene, targets.render.flatten_tolerance);
    total_loss_with(scene, targets, config, &draw, &plan)
}

/// The objective at fixed random choices and flattening plan.
///
/// Color gradients come from the perceptual term alone; point and width
/// gradients add `lambda` times the contour gradient.
pub fn total_loss_with<T: Scalar>(
    scene: &Scene,
    targets: &LossTargets<'_, T>,
    config: &LossConfig,
    draw: &LossDraw,
    plan: &FlattenPlan,
) -> Result<(LossReport, ParamGroups), LossError> {
    config.validate()?;
    let r = targets.render;
    if (targets.style.width, targets.style.height) != (r.out_width, r.out_height) {
        return Err(LossError::Dimension {
            what: "style image",
            expected: (r.out_width, r.out_height),
            actual: (targets.style.width, targets.style.height),
        });
    }
    let (img, mut tape) = render_with_plan(scene, r, plan)?;
    let x = to_rgb(&img, r.background);
    let lp = lpips(&x, targets.style, targets.net, draw.color_scale)?;
    let mut grads = tape.backward(&to_rgb_backward(&lp.grad, r.background))?;

    let (contour, cgrad) = contour_loss_at(
        scene,
        targets.contour,
        r,
        plan,
        draw.patch,
        config.contour_variant,
    )?;
    if config.lambda > 0.0 {
        for (a, b) in grads.points.iter_mut().zip(&cgrad.points) {
            *a += config.lambda * b;
        }
        for (a, b) in grads.widths.iter_mut().zip(&cgrad.widths) {
            *a += config.lambda * b;
        }
    }
    let report = LossReport {
        total: lp.value + config.lambda * contour,
        lpips_term: lp.value,
        contour_term: contour,
        color_scale_used: draw.color_scale,
        patch_origin: (draw.patch.x, draw.patch.y),
    };
    Ok((report, grads))
}
