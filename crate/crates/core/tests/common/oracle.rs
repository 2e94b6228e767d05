//! Direct nested-loop reference for the convolutional trunk. Shares no code
//! with the library's im2col/GEMM path.

pub const MEAN: [f64; 3] = [0.485, 0.456, 0.406];
pub const STD: [f64; 3] = [0.229, 0.224, 0.225];

pub struct Map {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub v: Vec<f64>,
}

impl Map {
    fn at(&self, c: usize, y: isize, x: isize) -> f64 {
        if y < 0 || x < 0 || y >= self.h as isize || x >= self.w as isize {
            0.0
        } else {
            self.v[(c * self.h + y as usize) * self.w + x as usize]
        }
    }
}

pub fn conv(m: &Map, kernel: &[f32], bias: &[f32]) -> Map {
    let cout = bias.len();
    let mut v = vec![0.0; cout * m.h * m.w];
    for o in 0..cout {
        for y in 0..m.h {
            for x in 0..m.w {
                let mut acc = bias[o] as f64;
                for i in 0..m.c {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let k = kernel[((o * m.c + i) * 3 + ky) * 3 + kx] as f64;
                            acc += k * m.at(i, y as isize + ky as isize - 1, x as isize + kx as isize - 1);
                        }
                    }
                }
                v[(o * m.h + y) * m.w + x] = acc;
            }
        }
    }
    Map { c: cout, h: m.h, w: m.w, v }
}

pub fn relu(m: &Map) -> Map {
    Map { c: m.c, h: m.h, w: m.w, v: m.v.iter().map(|x| x.max(0.0)).collect() }
}

pub fn pool(m: &Map) -> Map {
    let (h, w) = (m.h / 2, m.w / 2);
    let mut v = Vec::with_capacity(m.c * h * w);
    for c in 0..m.c {
        for y in 0..h {
            for x in 0..w {
                let mut best = f64::NEG_INFINITY;
                for dy in 0..2 {
                    for dx in 0..2 {
                        best = best.max(m.at(c, (2 * y + dy) as isize, (2 * x + dx) as isize));
                    }
                }
                v.push(best);
            }
        }
    }
    Map { c: m.c, h, w, v }
}

/// Normalizes a `3 × h × w` input in `[0, 1]`.
pub fn normalize(chw: &[f32], h: usize, w: usize) -> Map {
    let n = h * w;
    let v = chw
        .iter()
        .enumerate()
        .map(|(i, x)| (*x as f64 - MEAN[i / n]) / STD[i / n])
        .collect();
    Map { c: 3, h, w, v }
}

/// Runs blocks of (conv, relu) pairs closed by pools, returning the
/// pre-activation output of every convolution keyed by `convK_J`.
pub fn run_trunk(
    input: Map,
    blocks: &[Vec<usize>],
    weight: impl Fn(&str) -> (Vec<f32>, Vec<f32>),
) -> Vec<(String, Map)> {
    let mut out = Vec::new();
    let mut x = input;
    for (k, block) in blocks.iter().enumerate() {
        for j in 0..block.len() {
            let name = format!("conv{}_{}", k + 1, j + 1);
            let (kern, bias) = weight(&name);
            let y = conv(&x, &kern, &bias);
            x = relu(&y);
            out.push((name, y));
        }
        x = pool(&x);
    }
    out
}
