use std::path::Path;

use image::imageops::FilterType;
use image::{ImageBuffer, Rgb, Rgb32FImage, RgbImage as Rgb8Image, Rgba, RgbaImage};

/// Premultiplied RGBA, `height × width × 4`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl RasterImage {
    pub fn pixel(&self, x: usize, y: usize) -> [f64; 4] {
        let i = (y * self.width + x) * 4;
        [self.data[i], self.data[i + 1], self.data[i + 2], self.data[i + 3]]
    }

    /// Straight-alpha 8-bit RGBA.
    pub fn to_rgba8(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len());
        for px in self.data.chunks_exact(4) {
            let a = px[3].clamp(0.0, 1.0);
            for c in &px[..3] {
                let v = if a > 0.0 { c / a } else { 0.0 };
                out.push(to_u8(v));
            }
            out.push(to_u8(a));
        }
        out
    }

    pub fn save_png(&self, path: &Path) -> image::ImageResult<()> {
        let buf: RgbaImage =
            ImageBuffer::from_raw(self.width as u32, self.height as u32, self.to_rgba8())
                .expect("buffer size matches dimensions");
        buf.save(path)
    }
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Opaque RGB in `[0, 1]`, `height × width × 3`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl RgbImage {
    pub fn filled(width: usize, height: usize, color: [f64; 3]) -> Self {
        Self {
            width,
            height,
            data: color.iter().copied().cycle().take(width * height * 3).collect(),
        }
    }

    /// Loads any format the `image` crate reads; transparency is composited over white.
    pub fn load(path: &Path) -> image::ImageResult<Self> {
        let img = image::open(path)?.to_rgba32f();
        let (w, h) = img.dimensions();
        let mut data = Vec::with_capacity((w * h * 3) as usize);
        for Rgba([r, g, b, a]) in img.pixels().copied() {
            let a = a as f64;
            for c in [r, g, b] {
                data.push(c as f64 * a + (1.0 - a));
            }
        }
        Ok(Self {
            width: w as usize,
            height: h as usize,
            data,
        })
    }

    pub fn save_png(&self, path: &Path) -> image::ImageResult<()> {
        let bytes: Vec<u8> = self.data.iter().map(|v| to_u8(*v)).collect();
        let buf: Rgb8Image = ImageBuffer::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer size matches dimensions");
        buf.save(path)
    }

    /// Bilinear-filtered resize.
    pub fn resize(&self, width: usize, height: usize) -> Self {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let src: Rgb32FImage = ImageBuffer::from_raw(
            self.width as u32,
            self.height as u32,
            self.data.iter().map(|v| *v as f32).collect(),
        )
        .expect("buffer size matches dimensions");
        let out = image::imageops::resize(&src, width as u32, height as u32, FilterType::Triangle);
        Self {
            width,
            height,
            data: out
                .pixels()
                .flat_map(|Rgb(c)| c.map(|v| (v as f64).clamp(0.0, 1.0)))
                .collect(),
        }
    }

    /// Channel-planar copy (`3 × H × W`), the layout the feature network consumes.
    pub fn to_chw(&self) -> Vec<f64> {
        let n = self.width * self.height;
        let mut out = vec![0.0; 3 * n];
        for (i, px) in self.data.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * n + i] = px[c];
            }
        }
        out
    }
}

/// Composites a premultiplied image over an opaque background.
pub fn to_rgb(image: &RasterImage, background: [f64; 3]) -> RgbImage {
    let mut data = Vec::with_capacity(image.width * image.height * 3);
    for px in image.data.chunks_exact(4) {
        for c in 0..3 {
            data.push(px[c] + (1.0 - px[3]) * background[c]);
        }
    }
    RgbImage {
        width: image.width,
        height: image.height,
        data,
    }
}

/// Gradient of [`to_rgb`]: maps `∂L/∂rgb` (`H×W×3`) to `∂L/∂rgba` (`H×W×4`).
pub fn to_rgb_backward(grad_rgb: &[f64], background: [f64; 3]) -> Vec<f64> {
    let mut out = Vec::with_capacity(grad_rgb.len() / 3 * 4);
    for g in grad_rgb.chunks_exact(3) {
        out.extend_from_slice(g);
        out.push(-(g[0] * background[0] + g[1] * background[1] + g[2] * background[2]));
    }
    out
}
