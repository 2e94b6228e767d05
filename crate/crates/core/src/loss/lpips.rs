use crate::features::{FeatureNet, Scalar, TapMap};
use crate::raster::RgbImage;

use super::LossError;

/// Added to the channel norm before dividing.
pub const NORM_EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LpipsOutput {
    pub value: f64,
    /// `∂value/∂x`, `H × W × 3`.
    pub grad: Vec<f64>,
}

/// Perceptual distance between `x` and `y` after scaling both by `scale`.
///
/// Each tap is unit-normalized over channels at every position, the
/// difference is weighted per channel, squared, averaged over positions and
/// summed over taps. Only `x` receives a gradient.
pub fn lpips<T: Scalar>(
    x: &RgbImage,
    y: &RgbImage,
    net: &FeatureNet<T>,
    scale: f64,
) -> Result<LpipsOutput, LossError> {
    if (x.width, x.height) != (y.width, y.height) {
        return Err(LossError::Dimension {
            what: "style image",
            expected: (x.width, x.height),
            actual: (y.width, y.height),
        });
    }
    let s = T::of(scale);
    let xs: Vec<T> = x.data.iter().map(|v| T::of(*v) * s).collect();
    let ys: Vec<T> = y.data.iter().map(|v| T::of(*v) * s).collect();
    let (fx, tape) = net.forward(x.width, x.height, &xs)?;
    let fy = net.features(y.width, y.height, &ys)?;
    let mut value = 0.0;
    let mut tap_grads = Vec::with_capacity(fx.maps.len());
    for (a, b) in fx.maps.iter().zip(&fy.maps) {
        let (v, g) = tap_distance(a, b);
        value += v;
        tap_grads.push(g);
    }
    let g = net.backward(tape, &tap_grads)?;
    Ok(LpipsOutput {
        value,
        grad: g.iter().map(|v| v.to_f64().unwrap_or(f64::NAN) * scale).collect(),
    })
}

/// Value and `∂/∂a` of one tap's term.
fn tap_distance<T: Scalar>(a: &TapMap<T>, b: &TapMap<T>) -> (f64, Vec<T>) {
    let (c, n) = (a.channels, a.height * a.width);
    let w: Vec<f64> = a.weights.iter().map(|v| v.to_f64().unwrap_or(0.0)).collect();
    let mut value = 0.0;
    let mut grad = vec![T::zero(); c * n];
    let mut xa = vec![0.0; c];
    let mut xb = vec![0.0; c];
    let mut gh = vec![0.0; c];
    let inv_n = 1.0 / n as f64;
    for p in 0..n {
        for ch in 0..c {
            xa[ch] = a.data[ch * n + p].to_f64().unwrap_or(f64::NAN);
            xb[ch] = b.data[ch * n + p].to_f64().unwrap_or(f64::NAN);
        }
        let na = xa.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nb = xb.iter().map(|v| v * v).sum::<f64>().sqrt();
        let da = na + NORM_EPS;
        let db = nb + NORM_EPS;
        let mut dot = 0.0;
        for ch in 0..c {
            let d = xa[ch] / da - xb[ch] / db;
            value += w[ch] * w[ch] * d * d * inv_n;
            gh[ch] = 2.0 * w[ch] * w[ch] * d * inv_n;
            dot += gh[ch] * xa[ch];
        }
        if na == 0.0 {
            // dead position: the normalized vector is pinned at zero
            continue;
        }
        for ch in 0..c {
            let g = gh[ch] / da - dot * xa[ch] / (na * da * da);
            grad[ch * n + p] = T::of(g);
        }
    }
    (value, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(c: usize, data: Vec<f64>, weights: Vec<f64>) -> TapMap<f64> {
        TapMap {
            name: "t".into(),
            layer: 0,
            channels: c,
            height: 1,
            width: data.len() / c,
            data,
            weights,
        }
    }

    #[test]
    fn tap_gradient_matches_finite_differences() {
        let a = map(3, vec![0.3, -1.2, 0.5, 2.0, 0.1, -0.4], vec![1.0, 0.5, 2.0]);
        let b = map(3, vec![-0.7, 0.2, 0.9, 0.0, 1.0, 0.3], vec![1.0, 0.5, 2.0]);
        let (_, g) = tap_distance(&a, &b);
        for i in 0..a.data.len() {
            let h = 1e-6;
            let mut p = a.clone();
            p.data[i] += h;
            let mut q = a.clone();
            q.data[i] -= h;
            let fd = (tap_distance(&p, &b).0 - tap_distance(&q, &b).0) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-7, "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn zero_positions_normalize_to_zero() {
        let a = map(2, vec![0.0, 0.0], vec![1.0, 1.0]);
        let b = map(2, vec![3.0, 4.0], vec![1.0, 1.0]);
        let (v, g) = tap_distance(&a, &b);
        assert!((v - 1.0).abs() < 1e-9);
        assert_eq!(g, [0.0, 0.0]);
    }
}
