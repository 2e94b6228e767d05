use crate::raster::{
    render_contour_with_plan, to_rgb, to_rgb_backward, FlattenPlan, RenderConfig, RgbImage,
};
use crate::scene::{ParamGroups, Scene};

use super::{ContourVariant, LossError};

const WHITE: [f64; 3] = [1.0, 1.0, 1.0];

/// Axis-aligned pixel window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Patch {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

/// Mean absolute (or squared) difference of `x` and `z` inside `patch`, with
/// the gradient with respect to `x` over the whole image.
pub fn patch_distance(
    x: &RgbImage,
    z: &RgbImage,
    patch: Patch,
    variant: ContourVariant,
) -> Result<(f64, Vec<f64>), LossError> {
    if (x.width, x.height) != (z.width, z.height) {
        return Err(LossError::Dimension {
            what: "contour image",
            expected: (x.width, x.height),
            actual: (z.width, z.height),
        });
    }
    if patch.width == 0
        || patch.height == 0
        || patch.x + patch.width > x.width
        || patch.y + patch.height > x.height
    {
        return Err(LossError::Config(format!(
            "patch {patch:?} does not fit a {}x{} image",
            x.width, x.height
        )));
    }
    let n = (patch.width * patch.height * 3) as f64;
    let mut grad = vec![0.0; x.data.len()];
    let mut acc = 0.0;
    for py in patch.y..patch.y + patch.height {
        let row = (py * x.width + patch.x) * 3;
        for i in row..row + patch.width * 3 {
            let d = x.data[i] - z.data[i];
            match variant {
                ContourVariant::L1 => {
                    acc += d.abs();
                    grad[i] = if d > 0.0 {
                        1.0 / n
                    } else if d < 0.0 {
                        -1.0 / n
                    } else {
                        0.0
                    };
                }
                ContourVariant::L2 => {
                    acc += d * d;
                    grad[i] = 2.0 * d / n;
                }
            }
        }
    }
    Ok((acc / n, grad))
}

/// The content scene's contour render, computed once per run.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourReference {
    pub image: RgbImage,
}

impl ContourReference {
    pub fn new(content: &Scene, config: &RenderConfig) -> Result<Self, LossError> {
        let plan = FlattenPlan::for_scene(content, config.flatten_tolerance);
        let (img, _) = render_contour_with_plan(content, config, &plan)?;
        Ok(Self {
            image: to_rgb(&img, WHITE),
        })
    }
}

/// Contour term of `scene` against `reference` in one patch, with its
/// gradient with respect to points and widths.
pub fn contour_loss_at(
    scene: &Scene,
    reference: &ContourReference,
    config: &RenderConfig,
    plan: &FlattenPlan,
    patch: Patch,
    variant: ContourVariant,
) -> Result<(f64, ParamGroups), LossError> {
    let (img, mut tape) = render_contour_with_plan(scene, config, plan)?;
    let rgb = to_rgb(&img, WHITE);
    let (value, grad) = patch_distance(&rgb, &reference.image, patch, variant)?;
    let grads = tape.backward(&to_rgb_backward(&grad, WHITE))?;
    Ok((value, grads))
}
