//! VGG-style convolutional feature trunk with input gradients.

mod fixtures;
mod net;
mod trunk;
mod weights;

use thiserror::Error;

pub use fixtures::{read_f32_file, write_f32_file, FixtureIndex, ParityReport, TapFiles, TapParity};
pub use net::{FeatureNet, FeatureTape, FeatureTaps, Scalar, TapMap, IMAGENET_MEAN, IMAGENET_STD};
pub use trunk::{ConvInfo, TapSet, TrunkLayer, TrunkSpec};
pub use weights::{lpips_weight_name, Tensor, WeightError, WeightStore, MAGIC};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error(transparent)]
    Weights(#[from] WeightError),
    #[error("invalid tap set: {0}")]
    TapSet(String),
    #[error("input is {width}x{height}, the trunk needs at least {min}x{min}")]
    InputSize {
        width: usize,
        height: usize,
        min: usize,
    },
    #[error("{what}: expected {expected} values, got {actual}")]
    Shape {
        what: String,
        expected: usize,
        actual: usize,
    },
    #[error("fixture: {0}")]
    Fixture(String),
}
