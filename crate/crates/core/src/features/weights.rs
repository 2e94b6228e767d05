//! The VNSTW1 tensor container.
//!
//! Little-endian: magic `VNSTW1`, `u32` tensor count, then per tensor a `u16`
//! name length, the UTF-8 name, a `u8` rank, `rank` `u32` dims and the
//! row-major `f32` values.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use thiserror::Error;

use super::trunk::TrunkSpec;

pub const MAGIC: &[u8; 6] = b"VNSTW1";

#[derive(Debug, Error)]
pub enum WeightError {
    #[error("not a VNSTW1 weight file (header {found:?})")]
    BadMagic { found: Vec<u8> },
    #[error("truncated weight file: {what} needs {needed} bytes at byte offset {offset}, {available} left")]
    Truncated {
        what: String,
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("tensor name at byte offset {offset} is not valid UTF-8")]
    BadName { offset: usize },
    #[error("{extra} unexpected trailing bytes after the last tensor at byte offset {offset}")]
    Trailing { offset: usize, extra: usize },
    #[error("duplicate tensor {name}")]
    Duplicate { name: String },
    #[error("missing tensor {name}")]
    Missing { name: String },
    #[error("tensor {name} has shape {actual:?}, expected {expected:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("tensor {name} holds negative or non-finite channel weights")]
    InvalidChannelWeights { name: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Self {
        assert_eq!(dims.iter().product::<usize>(), data.len());
        Self { dims, data }
    }
}

/// Named tensors in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: impl FnOnce() -> String) -> Result<&'a [u8], WeightError> {
        let available = self.buf.len() - self.pos;
        if n > available {
            return Err(WeightError::Truncated {
                what: what(),
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: impl FnOnce() -> String) -> Result<u32, WeightError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Parameter name for channel weights of tap `l`.
pub fn lpips_weight_name(l: usize) -> String {
    format!("lpips.w{l}")
}

fn is_lpips_name(name: &str) -> bool {
    name.strip_prefix("lpips.w")
        .is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<(), WeightError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(WeightError::Duplicate { name });
        }
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Total number of scalar values over all tensors.
    pub fn value_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    /// Parses a VNSTW1 byte stream without checking it against any trunk.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WeightError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        let magic = r.take(6, || "magic".into()).map_err(|_| WeightError::BadMagic {
            found: bytes[..bytes.len().min(6)].to_vec(),
        })?;
        if magic != MAGIC {
            return Err(WeightError::BadMagic {
                found: magic.to_vec(),
            });
        }
        let count = r.u32(|| "tensor count".into())? as usize;
        let mut store = WeightStore::new();
        for t in 0..count {
            let len_bytes = r.take(2, || format!("name length of tensor {t}"))?;
            let name_len = u16::from_le_bytes([len_bytes[0], len_bytes[1]]) as usize;
            let name_offset = r.pos;
            let name = std::str::from_utf8(r.take(name_len, || format!("name of tensor {t}"))?)
                .map_err(|_| WeightError::BadName {
                    offset: name_offset,
                })?
                .to_owned();
            let rank = r.take(1, || format!("rank of {name}"))?[0] as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(r.u32(|| format!("dims of {name}"))? as usize);
            }
            let n: usize = dims.iter().product();
            let raw = r.take(n.saturating_mul(4), || format!("values of {name}"))?;
            let data = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            store.insert(name, Tensor { dims, data })?;
        }
        if r.pos != bytes.len() {
            return Err(WeightError::Trailing {
                offset: r.pos,
                extra: bytes.len() - r.pos,
            });
        }
        Ok(store)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(10 + self.value_count() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        for (name, t) in self.iter() {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.dims.len() as u8);
            for d in &t.dims {
                out.extend_from_slice(&(*d as u32).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self, WeightError> {
        let bytes = std::fs::read(path).map_err(|source| WeightError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: &Path) -> Result<(), WeightError> {
        std::fs::write(path, self.to_bytes()).map_err(|source| WeightError::Io {
            path: path.to_owned(),
            source,
        })
    }

    /// Checks every convolution of `spec` has an OIHW kernel and a bias of
    /// the right shape. Returns the names of tensors the trunk does not use.
    pub fn validate(&self, spec: &TrunkSpec) -> Result<Vec<String>, WeightError> {
        let mut known = std::collections::HashSet::new();
        for conv in spec.convs() {
            for (suffix, expected) in [
                ("weight", vec![conv.out_channels, conv.in_channels, 3, 3]),
                ("bias", vec![conv.out_channels]),
            ] {
                let name = format!("{}.{suffix}", conv.name);
                let t = self.get(&name).ok_or_else(|| WeightError::Missing {
                    name: name.clone(),
                })?;
                if t.dims != expected {
                    return Err(WeightError::Shape {
                        name,
                        expected,
                        actual: t.dims.clone(),
                    });
                }
                known.insert(name);
            }
        }
        for (name, t) in self.iter() {
            if is_lpips_name(name) {
                if t.dims.len() != 1 {
                    return Err(WeightError::Shape {
                        name: name.to_owned(),
                        expected: vec![t.data.len()],
                        actual: t.dims.clone(),
                    });
                }
                if t.data.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(WeightError::InvalidChannelWeights {
                        name: name.to_owned(),
                    });
                }
                known.insert(name.to_owned());
            }
        }
        Ok(self
            .names
            .iter()
            .filter(|n| !known.contains(*n))
            .cloned()
            .collect())
    }

    /// He-normal kernels and small uniform biases, reproducible from `seed`.
    pub fn synthetic(spec: &TrunkSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = WeightStore::new();
        for conv in spec.convs() {
            let fan_in = (conv.in_channels * 9) as f32;
            let normal = Normal::new(0.0f32, (2.0 / fan_in).sqrt()).expect("positive std");
            let n = conv.out_channels * conv.in_channels * 9;
            let w: Vec<f32> = (0..n).map(|_| normal.sample(&mut rng)).collect();
            let bias = Uniform::new_inclusive(-0.05f32, 0.05);
            let b: Vec<f32> = (0..conv.out_channels).map(|_| bias.sample(&mut rng)).collect();
            store
                .insert(
                    format!("{}.weight", conv.name),
                    Tensor::new(vec![conv.out_channels, conv.in_channels, 3, 3], w),
                )
                .expect("unique conv names");
            store
                .insert(
                    format!("{}.bias", conv.name),
                    Tensor::new(vec![conv.out_channels], b),
                )
                .expect("unique conv names");
        }
        store
    }

    /// Same tensor names and shapes as `spec` requires, all values zero.
    pub fn zeros(spec: &TrunkSpec) -> Self {
        let mut store = WeightStore::new();
        for conv in spec.convs() {
            let n = conv.out_channels * conv.in_channels * 9;
            store
                .insert(
                    format!("{}.weight", conv.name),
                    Tensor::new(
                        vec![conv.out_channels, conv.in_channels, 3, 3],
                        vec![0.0; n],
                    ),
                )
                .expect("unique conv names");
            store
                .insert(
                    format!("{}.bias", conv.name),
                    Tensor::new(vec![conv.out_channels], vec![0.0; conv.out_channels]),
                )
                .expect("unique conv names");
        }
        store
    }
}
