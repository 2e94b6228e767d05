use std::ops::Range;

use super::FeatureError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TrunkLayer {
    /// 3×3 convolution, stride 1, zero padding 1.
    Conv {
        name: String,
        in_channels: usize,
        out_channels: usize,
    },
    Relu,
    /// 2×2 max-pool, stride 2.
    MaxPool,
}

/// Layer sequence of a VGG-style convolutional trunk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrunkSpec {
    pub layers: Vec<TrunkLayer>,
}

const VGG19_BLOCKS: [&[usize]; 5] = [
    &[64, 64],
    &[128, 128],
    &[256, 256, 256, 256],
    &[512, 512, 512, 512],
    &[512, 512, 512, 512],
];

impl TrunkSpec {
    /// The 37-layer VGG-19 feature stack.
    pub fn vgg19() -> Self {
        Self::from_blocks(3, &VGG19_BLOCKS)
    }

    /// Blocks of `conv, relu` pairs, each block closed by a max-pool.
    /// Convolutions are named `convK_J` (block K, position J, both 1-based).
    pub fn from_blocks(in_channels: usize, blocks: &[&[usize]]) -> Self {
        let mut layers = Vec::new();
        let mut c = in_channels;
        for (k, block) in blocks.iter().enumerate() {
            for (j, &out) in block.iter().enumerate() {
                layers.push(TrunkLayer::Conv {
                    name: format!("conv{}_{}", k + 1, j + 1),
                    in_channels: c,
                    out_channels: out,
                });
                layers.push(TrunkLayer::Relu);
                c = out;
            }
            layers.push(TrunkLayer::MaxPool);
        }
        Self { layers }
    }

    pub fn is_vgg19(&self) -> bool {
        *self == Self::vgg19()
    }

    pub fn input_channels(&self) -> usize {
        self.convs().next().map_or(3, |c| c.in_channels)
    }

    /// `(conv, relu, pool)` layer counts.
    pub fn counts(&self) -> (usize, usize, usize) {
        let mut n = (0, 0, 0);
        for l in &self.layers {
            match l {
                TrunkLayer::Conv { .. } => n.0 += 1,
                TrunkLayer::Relu => n.1 += 1,
                TrunkLayer::MaxPool => n.2 += 1,
            }
        }
        n
    }

    pub fn convs(&self) -> impl Iterator<Item = ConvInfo<'_>> {
        self.layers.iter().enumerate().filter_map(|(index, l)| match l {
            TrunkLayer::Conv {
                name,
                in_channels,
                out_channels,
            } => Some(ConvInfo {
                index,
                name,
                in_channels: *in_channels,
                out_channels: *out_channels,
            }),
            _ => None,
        })
    }

    pub fn conv_by_name(&self, name: &str) -> Option<ConvInfo<'_>> {
        self.convs().find(|c| c.name == name)
    }

    /// Total conv kernel and bias parameter count.
    pub fn param_count(&self) -> usize {
        self.convs()
            .map(|c| c.out_channels * c.in_channels * 9 + c.out_channels)
            .sum()
    }

    /// Pools strictly before layer `index`.
    pub fn pools_before(&self, index: usize) -> usize {
        self.layers[..index.min(self.layers.len())]
            .iter()
            .filter(|l| matches!(l, TrunkLayer::MaxPool))
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvInfo<'a> {
    pub index: usize,
    pub name: &'a str,
    pub in_channels: usize,
    pub out_channels: usize,
}

/// Layer-index intervals; each contributes the output of its last convolution
/// (taken before the ReLU that follows it).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TapSet {
    pub intervals: Vec<Range<usize>>,
}

impl Default for TapSet {
    fn default() -> Self {
        Self {
            intervals: vec![0..4, 9..16, 16..23, 23..30, 30..36],
        }
    }
}

impl TapSet {
    /// One interval per named convolution, `[conv, conv + 2)`.
    pub fn at_convs(spec: &TrunkSpec, names: &[&str]) -> Result<Self, FeatureError> {
        let mut intervals = Vec::new();
        for name in names {
            let conv = spec
                .conv_by_name(name)
                .ok_or_else(|| FeatureError::TapSet(format!("no convolution named {name}")))?;
            intervals.push(conv.index..conv.index + 2);
        }
        Ok(Self { intervals })
    }

    /// Resolves each interval to the layer index of its tap.
    pub fn resolve(&self, spec: &TrunkSpec) -> Result<Vec<usize>, FeatureError> {
        let mut taps = Vec::with_capacity(self.intervals.len());
        let mut prev_end = 0;
        for (i, r) in self.intervals.iter().enumerate() {
            if r.start >= r.end || r.end > spec.layers.len() {
                return Err(FeatureError::TapSet(format!(
                    "interval {r:?} is empty or past the last layer"
                )));
            }
            if i > 0 && r.start < prev_end {
                return Err(FeatureError::TapSet(format!(
                    "interval {r:?} overlaps or precedes its predecessor"
                )));
            }
            prev_end = r.end;
            let tap = r
                .clone()
                .rev()
                .find(|&l| matches!(spec.layers[l], TrunkLayer::Conv { .. }))
                .ok_or_else(|| {
                    FeatureError::TapSet(format!("interval {r:?} contains no convolution"))
                })?;
            taps.push(tap);
        }
        Ok(taps)
    }
}
