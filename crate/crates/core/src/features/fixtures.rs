//! Golden activation fixtures: raw little-endian `f32` arrays plus a JSON index.
//!
//! ```json
//! {"seed": 0, "inputs": ["input_0.f32"], "taps": {"conv1_2": "conv1_2_0.f32"}}
//! ```
//!
//! Inputs are `3 × H × W` images in `[0, 1]` before normalization; tap files
//! hold the pre-ReLU `C × H_l × W_l` maps. With several inputs a tap maps to a
//! list of files, one per input. Optional keys: `height`/`width` (square
//! inputs are assumed otherwise), `weights` (a VNSTW1 file next to the index)
//! and `blocks` (per-block conv channel counts of a non-VGG-19 trunk).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FeatureError, FeatureNet, TapSet, TrunkSpec, WeightStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TapFiles {
    One(String),
    Many(Vec<String>),
}

impl TapFiles {
    pub fn for_input(&self, i: usize) -> Option<&str> {
        match self {
            TapFiles::One(f) if i == 0 => Some(f),
            TapFiles::One(_) => None,
            TapFiles::Many(v) => v.get(i).map(String::as_str),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureIndex {
    pub seed: u64,
    pub inputs: Vec<String>,
    pub taps: BTreeMap<String, TapFiles>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TapParity {
    pub tap: String,
    pub input: usize,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParityReport {
    pub taps: Vec<TapParity>,
}

impl ParityReport {
    pub fn max_abs_error(&self) -> f64 {
        self.taps.iter().map(|t| t.max_abs_error).fold(0.0, f64::max)
    }
}

pub fn read_f32_file(path: &Path) -> Result<Vec<f32>, FeatureError> {
    let bytes = std::fs::read(path)
        .map_err(|e| FeatureError::Fixture(format!("{}: {e}", path.display())))?;
    if bytes.len() % 4 != 0 {
        return Err(FeatureError::Fixture(format!(
            "{}: length {} is not a multiple of 4",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

pub fn write_f32_file(path: &Path, values: &[f32]) -> Result<(), FeatureError> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    std::fs::write(path, bytes).map_err(|e| FeatureError::Fixture(format!("{}: {e}", path.display())))
}

impl FixtureIndex {
    pub fn load(path: &Path) -> Result<Self, FeatureError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FeatureError::Fixture(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| FeatureError::Fixture(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn spec(&self) -> TrunkSpec {
        match &self.blocks {
            Some(blocks) => {
                let b: Vec<&[usize]> = blocks.iter().map(Vec::as_slice).collect();
                TrunkSpec::from_blocks(3, &b)
            }
            None => TrunkSpec::vgg19(),
        }
    }

    fn input_dims(&self, len: usize) -> Result<(usize, usize), FeatureError> {
        let n = len / 3;
        let (h, w) = match (self.height, self.width) {
            (Some(h), Some(w)) => (h, w),
            _ => {
                let side = (n as f64).sqrt().round() as usize;
                (side, side)
            }
        };
        if h * w * 3 != len {
            return Err(FeatureError::Fixture(format!(
                "input of {len} values is not 3x{h}x{w}"
            )));
        }
        Ok((h, w))
    }

    /// Runs every input through a trunk built from `dir` (or `weights` when
    /// given) and compares each tap against its stored activations.
    pub fn check_parity(
        &self,
        dir: &Path,
        weights: Option<&WeightStore>,
    ) -> Result<ParityReport, FeatureError> {
        let spec = self.spec();
        let loaded;
        let store = match (weights, &self.weights) {
            (Some(w), _) => w,
            (None, Some(file)) => {
                loaded = WeightStore::load(&dir.join(file))?;
                &loaded
            }
            (None, None) => {
                return Err(FeatureError::Fixture("no weights given or named in the index".into()))
            }
        };
        let mut names: Vec<&str> = self.taps.keys().map(String::as_str).collect();
        names.sort_by_key(|n| spec.conv_by_name(n).map_or(usize::MAX, |c| c.index));
        let taps = TapSet::at_convs(&spec, &names)?;
        let net = FeatureNet::<f32>::new(&spec, store, &taps)?;
        let mut report = ParityReport { taps: Vec::new() };
        for (i, input) in self.inputs.iter().enumerate() {
            let chw = read_f32_file(&dir.join(input))?;
            let (h, w) = self.input_dims(chw.len())?;
            let n = h * w;
            let mut hwc = vec![0.0f32; chw.len()];
            for c in 0..3 {
                for p in 0..n {
                    hwc[p * 3 + c] = chw[c * n + p];
                }
            }
            let out = net.features(w, h, &hwc)?;
            for map in &out.maps {
                let file = self.taps[&map.name].for_input(i).ok_or_else(|| {
                    FeatureError::Fixture(format!("tap {} has no file for input {i}", map.name))
                })?;
                let expected = read_f32_file(&dir.join(file))?;
                if expected.len() != map.data.len() {
                    return Err(FeatureError::Shape {
                        what: format!("fixture {file}"),
                        expected: map.data.len(),
                        actual: expected.len(),
                    });
                }
                let max_abs_error = map
                    .data
                    .iter()
                    .zip(&expected)
                    .map(|(a, b)| (*a as f64 - *b as f64).abs())
                    .fold(0.0, f64::max);
                report.taps.push(TapParity {
                    tap: map.name.clone(),
                    input: i,
                    max_abs_error,
                });
            }
        }
        Ok(report)
    }
}
