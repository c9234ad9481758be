//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every entry point takes a scene document (TOML) and returns plain arrays so the
//! page can draw straight onto a canvas.

use crowdsal::flowfield::{downsample_to_grid, mean_flow, synth_scene, SceneSpec};
use crowdsal::pipeline::{analyze_window, sub_seed, PipelineConfig};
use crowdsal::ranking::Polarity;
use crowdsal::raster::render_heatmap;
use crowdsal::stability::ftle_field;
use crowdsal::{advection::flow_map, Error, FlowSequence, GridSpec};
use wasm_bindgen::prelude::*;

fn js_err(e: Error) -> JsError {
    JsError::new(&format!("{}: {e}", e.category()))
}

fn load(scene_toml: &str, seed: u64) -> Result<FlowSequence, JsError> {
    let mut scene = SceneSpec::from_toml(scene_toml).map_err(js_err)?;
    if let Some(noise) = scene.noise.as_mut() {
        noise.seed.get_or_insert(sub_seed(seed, "noise"));
    }
    synth_scene(&scene).map_err(js_err)
}

/// Saliency heatmap plus detected regions.
#[wasm_bindgen]
pub struct Saliency {
    width: usize,
    height: usize,
    rgba: Vec<u8>,
    regions: Vec<f64>,
    diagnostics: String,
}

#[wasm_bindgen]
impl Saliency {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Heatmap pixels, RGBA row-major.
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }

    /// Regions flattened as `[x, y, w, h, polarity, score]` with polarity +1 high, -1 low.
    pub fn regions(&self) -> Vec<f64> {
        self.regions.clone()
    }

    pub fn diagnostics(&self) -> String {
        self.diagnostics.clone()
    }
}

/// Runs the full pipeline on the first `tau` frames of a scene.
#[wasm_bindgen]
pub fn analyze_scene(scene_toml: &str, seed: u64, cols: usize, rows: usize, tau: usize, alpha: f64) -> Result<Saliency, JsError> {
    let seq = load(scene_toml, seed)?;
    let cfg = PipelineConfig {
        tau,
        grid: [cols, rows],
        alpha,
        seed,
        queries: 100.min(cols * rows),
        ..Default::default()
    };
    let a = analyze_window(&seq, 0, &cfg).map_err(js_err)?;
    let img = render_heatmap(&a.extrema.grid_scores, &a.layout);
    let mut regions = Vec::with_capacity(a.regions.regions.len() * 6);
    for r in &a.regions.regions {
        let pol = if r.polarity == Polarity::High { 1.0 } else { -1.0 };
        regions.extend([r.bbox.x as f64, r.bbox.y as f64, r.bbox.w as f64, r.bbox.h as f64, pol, r.score]);
    }
    Ok(Saliency {
        width: img.width,
        height: img.height,
        rgba: img.to_rgba(),
        regions,
        diagnostics: a.diagnostics.join("\n"),
    })
}

/// FTLE per particle, row-major over the `cols x rows` grid.
#[wasm_bindgen]
pub fn ftle(scene_toml: &str, seed: u64, cols: usize, rows: usize, tau: usize) -> Result<Vec<f64>, JsError> {
    let seq = load(scene_toml, seed)?;
    let mean = mean_flow(&seq, 0, tau).map_err(js_err)?;
    let cfg = PipelineConfig {
        tau,
        ..Default::default()
    };
    let disp = flow_map(&mean, GridSpec::new(cols, rows), tau, 1.0, cfg.boundary).map_err(js_err)?;
    Ok(ftle_field(&disp).map_err(js_err)?.phi)
}

/// Block-averaged mean flow, interleaved `[u0, v0, u1, v1, ...]` over the grid.
#[wasm_bindgen]
pub fn grid_flow(scene_toml: &str, seed: u64, cols: usize, rows: usize, tau: usize) -> Result<Vec<f64>, JsError> {
    let seq = load(scene_toml, seed)?;
    let mean = mean_flow(&seq, 0, tau).map_err(js_err)?;
    let g = downsample_to_grid(&mean, GridSpec::new(cols, rows)).map_err(js_err)?;
    Ok(g.u().iter().zip(g.v()).flat_map(|(&u, &v)| [u, v]).collect())
}
