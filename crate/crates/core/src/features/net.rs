use std::fmt::Debug;
use std::iter::Sum;
use std::ops::AddAssign;

use num_traits::Float;
use rayon::prelude::*;

use super::trunk::{TapSet, TrunkLayer, TrunkSpec};
use super::weights::{lpips_weight_name, WeightStore};
use super::FeatureError;

pub const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];

/// Upper bound on im2col buffer entries per work block.
const COL_BUDGET: usize = 1 << 21;

/// Floating-point type the trunk runs in.
pub trait Scalar:
    Float + Send + Sync + Debug + Default + Sum + AddAssign + 'static
{
    /// `C = A·B` for row-major, densely packed `A (m×k)`, `B (k×n)`, `C (m×n)`.
    fn matmul(m: usize, k: usize, n: usize, a: &[Self], b: &[Self], c: &mut [Self]);

    fn of(v: f64) -> Self {
        <Self as num_traits::NumCast>::from(v).expect("representable")
    }

    fn of_f32(v: f32) -> Self {
        <Self as num_traits::NumCast>::from(v).expect("representable")
    }
}

impl Scalar for f32 {
    fn matmul(m: usize, k: usize, n: usize, a: &[f32], b: &[f32], c: &mut [f32]) {
        assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
        // SAFETY: the asserted lengths cover every index the strides reach.
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                k as isize,
                1,
                b.as_ptr(),
                n as isize,
                1,
                0.0,
                c.as_mut_ptr(),
                n as isize,
                1,
            )
        }
    }
}

impl Scalar for f64 {
    fn matmul(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
        assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
        // SAFETY: as above.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                k as isize,
                1,
                b.as_ptr(),
                n as isize,
                1,
                0.0,
                c.as_mut_ptr(),
                n as isize,
                1,
            )
        }
    }
}

#[derive(Debug, Clone)]
enum NetLayer<T> {
    Conv {
        cin: usize,
        cout: usize,
        /// `cout × (cin·9)`
        kernel: Vec<T>,
        /// Flipped transpose, `cin × (cout·9)`, used for the input gradient.
        kernel_t: Vec<T>,
        bias: Vec<T>,
    },
    Relu,
    Pool,
}

/// One tapped activation map, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TapMap<T> {
    pub name: String,
    pub layer: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
    /// Non-negative per-channel weights of the perceptual distance.
    pub weights: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTaps<T> {
    pub maps: Vec<TapMap<T>>,
}

/// Forward record needed for one input-gradient pass.
#[derive(Debug)]
pub struct FeatureTape<T> {
    width: usize,
    height: usize,
    relu_masks: Vec<Option<Vec<bool>>>,
    pool_argmax: Vec<Option<Vec<u8>>>,
    /// `(channels, height, width)` at each layer's input.
    shapes: Vec<(usize, usize, usize)>,
    _scalar: std::marker::PhantomData<T>,
}

/// A VGG-style trunk truncated after its deepest tap.
#[derive(Debug, Clone)]
pub struct FeatureNet<T> {
    layers: Vec<NetLayer<T>>,
    taps: Vec<usize>,
    tap_names: Vec<String>,
    channel_weights: Vec<Vec<T>>,
    in_channels: usize,
    min_size: usize,
}

impl<T: Scalar> FeatureNet<T> {
    pub fn new(spec: &TrunkSpec, weights: &WeightStore, taps: &TapSet) -> Result<Self, FeatureError> {
        weights.validate(spec)?;
        let tap_layers = taps.resolve(spec)?;
        let last = *tap_layers
            .last()
            .ok_or_else(|| FeatureError::TapSet("no taps".into()))?;
        let mut layers = Vec::with_capacity(last + 1);
        for layer in &spec.layers[..=last] {
            layers.push(match layer {
                TrunkLayer::Conv {
                    name,
                    in_channels,
                    out_channels,
                } => {
                    let (cin, cout) = (*in_channels, *out_channels);
                    let w = &weights
                        .get(&format!("{name}.weight"))
                        .expect("validated")
                        .data;
                    let b = &weights.get(&format!("{name}.bias")).expect("validated").data;
                    let kernel: Vec<T> = w.iter().map(|v| T::of_f32(*v)).collect();
                    let mut kernel_t = vec![T::zero(); kernel.len()];
                    for o in 0..cout {
                        for i in 0..cin {
                            for k in 0..9 {
                                kernel_t[(i * cout + o) * 9 + (8 - k)] = kernel[(o * cin + i) * 9 + k];
                            }
                        }
                    }
                    NetLayer::Conv {
                        cin,
                        cout,
                        kernel,
                        kernel_t,
                        bias: b.iter().map(|v| T::of_f32(*v)).collect(),
                    }
                }
                TrunkLayer::Relu => NetLayer::Relu,
                TrunkLayer::MaxPool => NetLayer::Pool,
            });
        }
        let mut tap_names = Vec::new();
        let mut channel_weights = Vec::new();
        for (l, &t) in tap_layers.iter().enumerate() {
            let TrunkLayer::Conv {
                name, out_channels, ..
            } = &spec.layers[t]
            else {
                unreachable!("taps resolve to convolutions")
            };
            tap_names.push(name.clone());
            let key = lpips_weight_name(l);
            let w = match weights.get(&key) {
                Some(tensor) if tensor.data.len() != *out_channels => {
                    return Err(FeatureError::Weights(super::WeightError::Shape {
                        name: key,
                        expected: vec![*out_channels],
                        actual: tensor.dims.clone(),
                    }))
                }
                Some(tensor) => tensor.data.iter().map(|v| T::of_f32(*v)).collect(),
                None => vec![T::one(); *out_channels],
            };
            channel_weights.push(w);
        }
        let min_size = 2usize << spec.pools_before(last);
        Ok(Self {
            layers,
            taps: tap_layers,
            tap_names,
            channel_weights,
            in_channels: spec.input_channels(),
            min_size,
        })
    }

    pub fn tap_names(&self) -> &[String] {
        &self.tap_names
    }

    pub fn tap_layers(&self) -> &[usize] {
        &self.taps
    }

    /// Smallest accepted input side; every tap keeps at least 2×2 positions.
    pub fn min_input_size(&self) -> usize {
        self.min_size
    }

    /// Number of layers evaluated per forward pass.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Runs the trunk on an `height × width × 3` image with values in `[0, 1]`.
    pub fn forward(
        &self,
        width: usize,
        height: usize,
        image: &[T],
    ) -> Result<(FeatureTaps<T>, FeatureTape<T>), FeatureError> {
        let (taps, tape) = self.run(width, height, image, true)?;
        Ok((taps, tape.expect("recorded")))
    }

    /// Forward pass without recording a tape.
    pub fn features(&self, width: usize, height: usize, image: &[T]) -> Result<FeatureTaps<T>, FeatureError> {
        Ok(self.run(width, height, image, false)?.0)
    }

    fn run(
        &self,
        width: usize,
        height: usize,
        image: &[T],
        record: bool,
    ) -> Result<(FeatureTaps<T>, Option<FeatureTape<T>>), FeatureError> {
        if width < self.min_size || height < self.min_size {
            return Err(FeatureError::InputSize {
                width,
                height,
                min: self.min_size,
            });
        }
        let c0 = self.in_channels;
        if image.len() != width * height * c0 {
            return Err(FeatureError::Shape {
                what: "input image".into(),
                expected: width * height * c0,
                actual: image.len(),
            });
        }
        let n = width * height;
        let mut x = vec![T::zero(); c0 * n];
        for (i, px) in image.chunks_exact(c0).enumerate() {
            for c in 0..c0 {
                let (mean, std) = if c0 == 3 {
                    (T::of(IMAGENET_MEAN[c]), T::of(IMAGENET_STD[c]))
                } else {
                    (T::zero(), T::one())
                };
                x[c * n + i] = (px[c] - mean) / std;
            }
        }
        let (mut c, mut h, mut w) = (c0, height, width);
        let mut maps = Vec::with_capacity(self.taps.len());
        let mut tape = record.then(|| FeatureTape {
            width,
            height,
            relu_masks: vec![None; self.layers.len()],
            pool_argmax: vec![None; self.layers.len()],
            shapes: Vec::with_capacity(self.layers.len()),
            _scalar: std::marker::PhantomData,
        });
        let mut next_tap = 0;
        for (li, layer) in self.layers.iter().enumerate() {
            if let Some(t) = tape.as_mut() {
                t.shapes.push((c, h, w));
            }
            match layer {
                NetLayer::Conv {
                    cout, kernel, bias, ..
                } => {
                    x = conv3x3(&x, c, h, w, kernel, *cout, Some(bias));
                    c = *cout;
                }
                NetLayer::Relu => {
                    let mut mask = record.then(|| Vec::with_capacity(x.len()));
                    for v in &mut x {
                        // NaN passes through so a poisoned input shows up in the loss
                        let keep = !(*v <= T::zero());
                        if !keep {
                            *v = T::zero();
                        }
                        if let Some(m) = mask.as_mut() {
                            m.push(keep);
                        }
                    }
                    if let Some(t) = tape.as_mut() {
                        t.relu_masks[li] = mask;
                    }
                }
                NetLayer::Pool => {
                    let (y, arg) = max_pool(&x, c, h, w, record);
                    x = y;
                    h /= 2;
                    w /= 2;
                    if let Some(t) = tape.as_mut() {
                        t.pool_argmax[li] = arg;
                    }
                }
            }
            if next_tap < self.taps.len() && self.taps[next_tap] == li {
                maps.push(TapMap {
                    name: self.tap_names[next_tap].clone(),
                    layer: li,
                    channels: c,
                    height: h,
                    width: w,
                    data: x.clone(),
                    weights: self.channel_weights[next_tap].clone(),
                });
                next_tap += 1;
            }
        }
        Ok((FeatureTaps { maps }, tape))
    }

    /// Gradient with respect to the un-normalized `height × width × 3` input,
    /// given one gradient array per tap (same layout as the tap's data).
    pub fn backward(&self, tape: FeatureTape<T>, tap_grads: &[Vec<T>]) -> Result<Vec<T>, FeatureError> {
        if tap_grads.len() != self.taps.len() {
            return Err(FeatureError::Shape {
                what: "tap gradient count".into(),
                expected: self.taps.len(),
                actual: tap_grads.len(),
            });
        }
        // output shape of each tapped layer is the next layer's input shape or, for the last, computed
        let out_shape = |li: usize| -> (usize, usize, usize) {
            let (c, h, w) = tape.shapes[li];
            match &self.layers[li] {
                NetLayer::Conv { cout, .. } => (*cout, h, w),
                NetLayer::Relu => (c, h, w),
                NetLayer::Pool => (c, h / 2, w / 2),
            }
        };
        for (k, &li) in self.taps.iter().enumerate() {
            let (c, h, w) = out_shape(li);
            if tap_grads[k].len() != c * h * w {
                return Err(FeatureError::Shape {
                    what: format!("gradient of tap {}", self.tap_names[k]),
                    expected: c * h * w,
                    actual: tap_grads[k].len(),
                });
            }
        }
        let last = self.layers.len() - 1;
        let (c, h, w) = out_shape(last);
        let mut g = vec![T::zero(); c * h * w];
        let mut tap = self.taps.len();
        for li in (0..=last).rev() {
            if tap > 0 && self.taps[tap - 1] == li {
                tap -= 1;
                for (a, b) in g.iter_mut().zip(&tap_grads[tap]) {
                    *a += *b;
                }
            }
            let (c, h, w) = tape.shapes[li];
            g = match &self.layers[li] {
                NetLayer::Conv {
                    cin, cout, kernel_t, ..
                } => conv3x3(&g, *cout, h, w, kernel_t, *cin, None),
                NetLayer::Relu => {
                    let mask = tape.relu_masks[li].as_ref().expect("recorded");
                    for (v, keep) in g.iter_mut().zip(mask) {
                        if !keep {
                            *v = T::zero();
                        }
                    }
                    g
                }
                NetLayer::Pool => {
                    let arg = tape.pool_argmax[li].as_ref().expect("recorded");
                    unpool(&g, arg, c, h, w)
                }
            };
        }
        let (width, height) = (tape.width, tape.height);
        let n = width * height;
        let c0 = self.in_channels;
        let mut out = vec![T::zero(); n * c0];
        for ch in 0..c0 {
            let std = if c0 == 3 { T::of(IMAGENET_STD[ch]) } else { T::one() };
            for i in 0..n {
                out[i * c0 + ch] = g[ch * n + i] / std;
            }
        }
        Ok(out)
    }
}

/// Same-padded 3×3 convolution of a `cin × h × w` map with a `cout × (cin·9)` kernel.
fn conv3x3<T: Scalar>(
    x: &[T],
    cin: usize,
    h: usize,
    w: usize,
    kernel: &[T],
    cout: usize,
    bias: Option<&[T]>,
) -> Vec<T> {
    let k = cin * 9;
    let rows_per_block = (COL_BUDGET / (k * w)).clamp(1, h);
    let blocks: Vec<(usize, Vec<T>)> = (0..h.div_ceil(rows_per_block))
        .into_par_iter()
        .map(|b| {
            let r0 = b * rows_per_block;
            let r1 = (r0 + rows_per_block).min(h);
            let p = (r1 - r0) * w;
            let mut cols = vec![T::zero(); k * p];
            for ci in 0..cin {
                let plane = &x[ci * h * w..(ci + 1) * h * w];
                for ky in 0..3 {
                    for kx in 0..3 {
                        let row = &mut cols[(ci * 9 + ky * 3 + kx) * p..][..p];
                        for y in r0..r1 {
                            let sy = y as isize + ky as isize - 1;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            let src = &plane[sy as usize * w..][..w];
                            let dst = &mut row[(y - r0) * w..][..w];
                            match kx {
                                0 => dst[1..].copy_from_slice(&src[..w - 1]),
                                1 => dst.copy_from_slice(src),
                                _ => dst[..w - 1].copy_from_slice(&src[1..]),
                            }
                        }
                    }
                }
            }
            let mut out = vec![T::zero(); cout * p];
            T::matmul(cout, k, p, kernel, &cols, &mut out);
            (r0, out)
        })
        .collect();
    let mut y = vec![T::zero(); cout * h * w];
    for (r0, out) in blocks {
        let p = out.len() / cout;
        for o in 0..cout {
            let b = bias.map_or(T::zero(), |b| b[o]);
            let dst = &mut y[o * h * w + r0 * w..][..p];
            for (d, s) in dst.iter_mut().zip(&out[o * p..(o + 1) * p]) {
                *d = *s + b;
            }
        }
    }
    y
}

/// 2×2 stride-2 max-pool; ties go to the first element in row-major window order.
fn max_pool<T: Scalar>(x: &[T], c: usize, h: usize, w: usize, record: bool) -> (Vec<T>, Option<Vec<u8>>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Vec::with_capacity(c * oh * ow);
    let mut arg = record.then(|| Vec::with_capacity(c * oh * ow));
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let base = 2 * oy * w + 2 * ox;
                let cand = [plane[base], plane[base + 1], plane[base + w], plane[base + w + 1]];
                let mut best = 0;
                for k in 1..4 {
                    if cand[k] > cand[best] || (cand[k].is_nan() && !cand[best].is_nan()) {
                        best = k;
                    }
                }
                y.push(cand[best]);
                if let Some(a) = arg.as_mut() {
                    a.push(best as u8);
                }
            }
        }
    }
    (y, arg)
}

fn unpool<T: Scalar>(g: &[T], arg: &[u8], c: usize, h: usize, w: usize) -> Vec<T> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![T::zero(); c * h * w];
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let i = (ch * oh + oy) * ow + ox;
                let a = arg[i] as usize;
                let (dy, dx) = (a / 2, a % 2);
                out[ch * h * w + (2 * oy + dy) * w + 2 * ox + dx] += g[i];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::WeightStore;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut impl Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()
    }

    fn tiny_net() -> FeatureNet<f64> {
        let spec = TrunkSpec::from_blocks(3, &[&[4, 5], &[6]]);
        let w = WeightStore::synthetic(&spec, 7);
        let taps = TapSet::at_convs(&spec, &["conv1_2", "conv2_1"]).unwrap();
        FeatureNet::new(&spec, &w, &taps).unwrap()
    }

    /// Direct nested-loop convolution.
    fn direct_conv(x: &[f64], cin: usize, h: usize, w: usize, k: &[f64], b: &[f64]) -> Vec<f64> {
        let cout = b.len();
        let mut y = vec![0.0; cout * h * w];
        for o in 0..cout {
            for yy in 0..h {
                for xx in 0..w {
                    let mut acc = b[o];
                    for i in 0..cin {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let sy = yy as isize + ky as isize - 1;
                                let sx = xx as isize + kx as isize - 1;
                                if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize {
                                    acc += k[((o * cin + i) * 3 + ky) * 3 + kx]
                                        * x[(i * h + sy as usize) * w + sx as usize];
                                }
                            }
                        }
                    }
                    y[(o * h + yy) * w + xx] = acc;
                }
            }
        }
        y
    }

    #[test]
    fn im2col_matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (cin, cout, h, w) = (3, 4, 7, 9);
        let x = random_image(&mut rng, cin * h * w);
        let k: Vec<f64> = (0..cout * cin * 9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..cout).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let got = conv3x3(&x, cin, h, w, &k, cout, Some(&b));
        let want = direct_conv(&x, cin, h, w, &k, &b);
        for (g, e) in got.iter().zip(&want) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn pool_ties_route_to_first() {
        let x = [1.0, 1.0, 1.0, 1.0];
        let (y, arg) = max_pool(&x, 1, 2, 2, true);
        assert_eq!(y, [1.0]);
        assert_eq!(arg.unwrap(), [0]);
        let g = unpool(&[2.0], &[0], 1, 2, 2);
        assert_eq!(g, [2.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_weights_give_zero_taps() {
        let spec = TrunkSpec::vgg19();
        let net = FeatureNet::<f32>::new(&spec, &WeightStore::zeros(&spec), &TapSet::default()).unwrap();
        let taps = net.features(64, 64, &vec![0.0; 64 * 64 * 3]).unwrap();
        assert_eq!(taps.maps.len(), 5);
        assert!(taps.maps.iter().all(|m| m.data.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn undersized_input_rejected() {
        let spec = TrunkSpec::vgg19();
        let net = FeatureNet::<f32>::new(&spec, &WeightStore::zeros(&spec), &TapSet::default()).unwrap();
        assert_eq!(net.min_input_size(), 32);
        assert!(matches!(
            net.features(31, 64, &vec![0.0; 31 * 64 * 3]),
            Err(FeatureError::InputSize { .. })
        ));
    }

    #[test]
    fn zero_and_scaled_tap_gradients() {
        let net = tiny_net();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let img = random_image(&mut rng, 8 * 8 * 3);
        let (taps, tape) = net.forward(8, 8, &img).unwrap();
        let zeros: Vec<Vec<f64>> = taps.maps.iter().map(|m| vec![0.0; m.data.len()]).collect();
        assert!(net.backward(tape, &zeros).unwrap().iter().all(|v| *v == 0.0));

        let g1: Vec<Vec<f64>> = taps
            .maps
            .iter()
            .map(|m| (0..m.data.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let g2: Vec<Vec<f64>> = g1.iter().map(|v| v.iter().map(|x| 2.0 * x).collect()).collect();
        let (_, t1) = net.forward(8, 8, &img).unwrap();
        let (_, t2) = net.forward(8, 8, &img).unwrap();
        let a = net.backward(t1, &g1).unwrap();
        let b = net.backward(t2, &g2).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(2.0 * x, *y);
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let net = tiny_net();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = random_image(&mut rng, 8 * 8 * 3);
        let (taps, tape) = net.forward(8, 8, &img).unwrap();
        let r: Vec<Vec<f64>> = taps
            .maps
            .iter()
            .map(|m| (0..m.data.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let grad = net.backward(tape, &r).unwrap();
        let f = |x: &[f64]| -> f64 {
            let t = net.features(8, 8, x).unwrap();
            t.maps
                .iter()
                .zip(&r)
                .map(|(m, r)| m.data.iter().zip(r).map(|(a, b)| a * b).sum::<f64>())
                .sum()
        };
        let eps = 1e-6;
        for i in 0..img.len() {
            let mut p = img.clone();
            p[i] += eps;
            let mut q = img.clone();
            q[i] -= eps;
            let fd = (f(&p) - f(&q)) / (2.0 * eps);
            let err = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6);
            assert!(err <= 1e-3, "input {i}: {} vs {fd}", grad[i]);
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let net = tiny_net();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let img = random_image(&mut rng, 16 * 12 * 3);
        assert_eq!(net.features(16, 12, &img).unwrap(), net.features(16, 12, &img).unwrap());
    }
}
