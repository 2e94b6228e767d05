//! Central finite-difference checks of analytic parameter gradients.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::raster::{render_with_plan, FlattenPlan, RasterError, RenderConfig};
use crate::scene::{apply_params_unclamped, extract_params, ParamGroups, Scene};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub eps: f64,
    /// Parameters checked per group (all of them when the group is smaller).
    pub samples: usize,
    pub seed: u64,
    /// Denominator floor of the relative error, so that pairs of near-zero
    /// values compare absolutely.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            samples: 100,
            seed: 0,
            floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupCheck {
    pub group: &'static str,
    pub checked: usize,
    pub max_rel_error: f64,
    /// Index within the group of the worst parameter.
    pub worst_index: Option<usize>,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub groups: Vec<GroupCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.groups.iter().all(|g| g.max_rel_error <= tolerance)
    }

    pub fn worst(&self) -> Option<&GroupCheck> {
        self.groups
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic` against central differences of `eval`, probing a
/// seeded sample of parameters in each group. Parameters are written with
/// [`apply_params_unclamped`] so probes at the `[0, 1]` boundary stay two-sided.
pub fn check_against<F>(
    scene: &Scene,
    analytic: &ParamGroups,
    eval: F,
    opts: &GradCheckOptions,
) -> GradCheckReport
where
    F: Fn(&Scene) -> f64 + Sync,
{
    let (base, _) = extract_params(scene);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut groups = Vec::new();
    for (gi, (name, values)) in base.groups().iter().enumerate() {
        let n = values.len();
        let picks: Vec<usize> = if n <= opts.samples {
            (0..n).collect()
        } else {
            let mut v = sample(&mut rng, n, opts.samples).into_vec();
            v.sort_unstable();
            v
        };
        let numeric: Vec<f64> = picks
            .par_iter()
            .map(|&i| {
                let probe = |delta: f64| {
                    let mut p = base.clone();
                    group_mut(&mut p, gi)[i] += delta;
                    let s = apply_params_unclamped(scene, &p).expect("same layout");
                    eval(&s)
                };
                (probe(opts.eps) - probe(-opts.eps)) / (2.0 * opts.eps)
            })
            .collect();
        let a_group = analytic.groups()[gi].1;
        let mut check = GroupCheck {
            group: name,
            checked: picks.len(),
            max_rel_error: 0.0,
            worst_index: None,
            worst_analytic: 0.0,
            worst_numeric: 0.0,
        };
        for (&i, &f) in picks.iter().zip(&numeric) {
            let a = a_group[i];
            let e = relative_error(a, f, opts.floor);
            if check.worst_index.is_none() || e > check.max_rel_error || !e.is_finite() {
                check.max_rel_error = if e.is_finite() { e } else { f64::INFINITY };
                check.worst_index = Some(i);
                check.worst_analytic = a;
                check.worst_numeric = f;
            }
        }
        groups.push(check);
    }
    GradCheckReport { groups }
}

fn group_mut(p: &mut ParamGroups, i: usize) -> &mut Vec<f64> {
    match i {
        0 => &mut p.points,
        1 => &mut p.colors,
        _ => &mut p.widths,
    }
}

/// Checks the rasterizer gradient of a seeded random linear functional
/// `L = Σ r·pixel` with `r ~ U(-1, 1)`, holding the flattening plan fixed.
pub fn check_render(
    scene: &Scene,
    config: &RenderConfig,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport, RasterError> {
    let plan = FlattenPlan::for_scene(scene, config.flatten_tolerance);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let weights: Vec<f64> = (0..config.out_width * config.out_height * 4)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let (_, mut tape) = render_with_plan(scene, config, &plan)?;
    let analytic = tape.backward(&weights)?;
    let eval = |s: &Scene| {
        let (img, _) = render_with_plan(s, config, &plan).expect("validated config");
        img.data.iter().zip(&weights).map(|(p, w)| p * w).sum::<f64>()
    };
    Ok(check_against(scene, &analytic, eval, opts))
}
