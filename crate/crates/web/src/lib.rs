//! Browser bindings: render an SVG, show its outline image, and run a
//! stylization session one step at a time.
//!
//! The session uses a small random-weight trunk so it runs interactively in a
//! page; the loss and optimizer are the same as the native pipeline.

use vecstyle::engine::{working_resolution, EngineError, OptimConfig, Stylizer};
use vecstyle::features::{FeatureNet, TapSet, TrunkSpec, WeightStore};
use vecstyle::loss::{LossConfig, LossReport};
use vecstyle::raster::{render, render_contour, to_rgb, RenderConfig, RgbImage};
use vecstyle::scene::{parse_svg, serialize_svg, Scene};
use wasm_bindgen::prelude::*;

const DEMO_BLOCKS: [&[usize]; 3] = [&[8, 8], &[16, 16], &[32, 32]];
const DEMO_TAPS: [&str; 3] = ["conv1_2", "conv2_2", "conv3_2"];

pub const EXAMPLE_CONTENT: &str = include_str!("../../core/tests/fixtures/svg/content_20.svg");
pub const EXAMPLE_STYLE: &str = include_str!("../../core/tests/fixtures/svg/style_mosaic.svg");

fn parse(svg: &str) -> Result<Scene, String> {
    parse_svg(svg.as_bytes()).map_err(|e| e.to_string())
}

fn fit(scene: &Scene, long_side: u32) -> (usize, usize) {
    working_resolution(scene, long_side.max(1) as usize)
}

fn rgb_to_rgba8(img: &RgbImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(img.width * img.height * 4);
    for px in img.data.chunks_exact(3) {
        out.extend(px.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
        out.push(255);
    }
    out
}

/// Pixels returned to the page, straight-alpha RGBA8.
#[wasm_bindgen]
pub struct Frame {
    width: u32,
    height: u32,
    rgba: Vec<u8>,
}

#[wasm_bindgen]
impl Frame {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[wasm_bindgen(getter)]
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }
}

pub fn render_frame(svg: &str, long_side: u32) -> Result<Frame, String> {
    let scene = parse(svg)?;
    let (w, h) = fit(&scene, long_side);
    let (img, _) = render(&scene, &RenderConfig::new(w, h)).map_err(|e| e.to_string())?;
    Ok(Frame {
        width: w as u32,
        height: h as u32,
        rgba: img.to_rgba8(),
    })
}

pub fn contour_frame(svg: &str, long_side: u32) -> Result<Frame, String> {
    let scene = parse(svg)?;
    let (w, h) = fit(&scene, long_side);
    let (img, _) = render_contour(&scene, &RenderConfig::new(w, h)).map_err(|e| e.to_string())?;
    Ok(Frame {
        width: w as u32,
        height: h as u32,
        rgba: rgb_to_rgba8(&to_rgb(&img, [1.0; 3])),
    })
}

/// Rasterizes an SVG with its longest side scaled to `long_side` pixels.
#[wasm_bindgen(js_name = renderSvg)]
pub fn render_svg(svg: &str, long_side: u32) -> Result<Frame, JsError> {
    render_frame(svg, long_side).map_err(|e| JsError::new(&e))
}

/// The outline image the contour loss compares: fills black, strokes white.
#[wasm_bindgen(js_name = renderContour)]
pub fn render_contour_svg(svg: &str, long_side: u32) -> Result<Frame, JsError> {
    contour_frame(svg, long_side).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = exampleContent)]
pub fn example_content() -> String {
    EXAMPLE_CONTENT.to_string()
}

#[wasm_bindgen(js_name = exampleStyle)]
pub fn example_style() -> String {
    EXAMPLE_STYLE.to_string()
}

fn demo_net(seed: u64) -> FeatureNet<f32> {
    let spec = TrunkSpec::from_blocks(3, &DEMO_BLOCKS);
    let taps = TapSet::at_convs(&spec, &DEMO_TAPS).expect("demo taps exist");
    FeatureNet::new(&spec, &WeightStore::synthetic(&spec, seed), &taps).expect("synthetic weights match")
}

/// A stylization run the page advances with [`StyleSession::step`].
#[wasm_bindgen]
pub struct StyleSession {
    run: Stylizer<f32, FeatureNet<f32>>,
    last: Option<LossReport>,
}

impl StyleSession {
    pub fn create(
        content_svg: &str,
        style_svg: &str,
        long_side: u32,
        lambda: f64,
        seed: u64,
    ) -> Result<Self, String> {
        let content = parse(content_svg)?;
        let (w, h) = fit(&content, long_side);
        let style_scene = parse(style_svg)?;
        let (img, _) = render(&style_scene, &RenderConfig::new(w, h)).map_err(|e| e.to_string())?;
        Self::start(&content, to_rgb(&img, [1.0; 3]), lambda, seed)
    }

    pub fn create_from_pixels(
        content_svg: &str,
        rgba: &[u8],
        width: u32,
        height: u32,
        long_side: u32,
        lambda: f64,
        seed: u64,
    ) -> Result<Self, String> {
        let (width, height) = (width as usize, height as usize);
        if width == 0 || height == 0 || rgba.len() != width * height * 4 {
            return Err(format!("expected {width}x{height} RGBA pixels, got {} bytes", rgba.len()));
        }
        let content = parse(content_svg)?;
        let (w, h) = fit(&content, long_side);
        let mut data = Vec::with_capacity(width * height * 3);
        for px in rgba.chunks_exact(4) {
            let a = px[3] as f64 / 255.0;
            for c in &px[..3] {
                data.push(*c as f64 / 255.0 * a + 1.0 - a);
            }
        }
        let style = RgbImage { width, height, data }.resize(w, h);
        Self::start(&content, style, lambda, seed)
    }

    fn start(content: &Scene, style: RgbImage, lambda: f64, seed: u64) -> Result<Self, String> {
        let net = demo_net(seed);
        let min = net.min_input_size();
        if style.width < min || style.height < min {
            return Err(format!("working size {}x{} is below {min}x{min}", style.width, style.height));
        }
        let loss = LossConfig {
            lambda,
            rng_seed: seed,
            ..Default::default()
        };
        let run = Stylizer::new(content, style, net, OptimConfig::default(), loss).map_err(|e| e.to_string())?;
        Ok(Self { run, last: None })
    }

    pub fn advance(&mut self, steps: u32) -> Result<f64, String> {
        for _ in 0..steps {
            let report = self.run.step().map_err(|e: EngineError| e.to_string())?;
            self.last = Some(report);
        }
        Ok(self.last.as_ref().map_or(f64::NAN, |r| r.total))
    }

    pub fn scene(&self) -> &Scene {
        self.run.scene()
    }
}

#[wasm_bindgen]
impl StyleSession {
    #[wasm_bindgen(constructor)]
    pub fn new(
        content_svg: &str,
        style_svg: &str,
        long_side: u32,
        lambda: f64,
        seed: u32,
    ) -> Result<StyleSession, JsError> {
        Self::create(content_svg, style_svg, long_side, lambda, seed as u64).map_err(|e| JsError::new(&e))
    }

    /// Starts a session against raster pixels, e.g. from a canvas.
    #[wasm_bindgen(js_name = fromPixels)]
    pub fn from_pixels(
        content_svg: &str,
        rgba: &[u8],
        width: u32,
        height: u32,
        long_side: u32,
        lambda: f64,
        seed: u32,
    ) -> Result<StyleSession, JsError> {
        Self::create_from_pixels(content_svg, rgba, width, height, long_side, lambda, seed as u64)
            .map_err(|e| JsError::new(&e))
    }

    /// Takes `steps` optimizer steps; returns the last scored total loss.
    pub fn step(&mut self, steps: u32) -> Result<f64, JsError> {
        self.advance(steps).map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen(getter)]
    pub fn iteration(&self) -> u32 {
        self.run.state().iteration as u32
    }

    /// Last scored `[total, lpips, contour]`, empty before the first step.
    #[wasm_bindgen(js_name = lastLoss)]
    pub fn last_loss(&self) -> Vec<f64> {
        self.last
            .as_ref()
            .map(|r| vec![r.total, r.lpips_term, r.contour_term])
            .unwrap_or_default()
    }

    pub fn svg(&self) -> String {
        String::from_utf8(serialize_svg(self.run.scene())).expect("serializer writes UTF-8")
    }

    pub fn frame(&self) -> Frame {
        let config = self.run.render_config();
        let (img, _) = render(self.run.scene(), config).expect("session scene renders");
        Frame {
            width: config.out_width as u32,
            height: config.out_height as u32,
            rgba: img.to_rgba8(),
        }
    }
}
