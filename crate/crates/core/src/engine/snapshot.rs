use std::fmt::Write as _;
use std::path::Path;

use super::{EngineError, LearningRates};
use crate::loss::LossReport;
use crate::raster::{render, RenderConfig};
use crate::scene::{serialize_svg, Scene};

pub const HISTORY_HEADER: &str = "iter,total,lpips,contour,lr_points,lr_color,lr_width";

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> EngineError + '_ {
    move |source| EngineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `iter_NNNNNN.svg` and `iter_NNNNNN.png` for `scene`.
pub fn write_snapshot(
    dir: &Path,
    iteration: usize,
    scene: &Scene,
    config: &RenderConfig,
) -> Result<(), EngineError> {
    let svg = dir.join(format!("iter_{iteration:06}.svg"));
    std::fs::write(&svg, serialize_svg(scene)).map_err(io(&svg))?;
    let png = dir.join(format!("iter_{iteration:06}.png"));
    let (img, _) = render(scene, config).map_err(crate::loss::LossError::from)?;
    img.save_png(&png).map_err(|e| EngineError::Io {
        path: png.clone(),
        source: std::io::Error::other(e),
    })?;
    Ok(())
}

/// One CSV row per evaluation, values to 9 significant digits.
pub fn history_csv(history: &[LossReport], lr: LearningRates) -> String {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for (i, r) in history.iter().enumerate() {
        let _ = writeln!(
            out,
            "{i},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}",
            r.total, r.lpips_term, r.contour_term, lr.points, lr.colors, lr.widths
        );
    }
    out
}

pub fn write_history(dir: &Path, history: &[LossReport], lr: LearningRates) -> Result<(), EngineError> {
    let path = dir.join("history.csv");
    std::fs::write(&path, history_csv(history, lr)).map_err(io(&path))
}
