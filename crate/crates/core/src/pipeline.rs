//! End-to-end saliency analysis: configuration, stage orchestration and artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::advection::{flow_map, BoundaryPolicy, DisplacementField};
use crate::error::{Error, Result};
use crate::flowfield::{
    downsample_to_grid, load_sequence, mean_flow, synth_scene, BlockLayout, FlowField, FlowSequence, GridSpec,
    SceneSpec,
};
use crate::phase::{phase_structure, static_mask, DEFAULT_EPS_STATIC};
use crate::ranking::{
    aggregate_ranks, assemble_features, average_over_classes, build_affinity, extract_extrema, knn_graph, normalized_operator,
    regions_from_mask, sample_queries, ExtremaResult, Polarity, RegionSet, ScoreVector,
};
use crate::raster::{render_heatmap, sidecar_path, write_graymap, write_scores, ScoreSidecar};
use crate::stability::{ftle_field, stability_structure, StabilityField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct PipelineConfig {
    /// Directory or frame pattern of `.flo` files, or a scene document (`.toml`).
    pub input: PathBuf,
    pub output: PathBuf,
    pub tau: usize,
    pub grid: [usize; 2],
    pub dt: f64,
    pub alpha: f64,
    pub k: usize,
    pub queries: usize,
    pub seed: u64,
    pub high_pct: f64,
    pub low_pct: f64,
    pub epsilon_static: f64,
    pub min_region: usize,
    pub boundary: BoundaryPolicy,
    /// Frame rate recorded for `.flo` input; scenes carry their own.
    pub fps: f64,
    /// Analyze only this window; all windows when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: PathBuf::new(),
            output: PathBuf::from("out"),
            tau: 50,
            grid: [64, 48],
            dt: 1.0,
            alpha: 0.99,
            k: 7,
            queries: 100,
            seed: 0,
            high_pct: 5.0,
            low_pct: 5.0,
            epsilon_static: DEFAULT_EPS_STATIC,
            min_region: 3,
            boundary: BoundaryPolicy::Extrapolate,
            fps: 25.0,
            window: None,
        }
    }
}

/// Partial configuration, as read from a config file or assembled from flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ConfigOverrides {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub tau: Option<usize>,
    pub grid: Option<[usize; 2]>,
    pub dt: Option<f64>,
    pub alpha: Option<f64>,
    pub k: Option<usize>,
    pub queries: Option<usize>,
    pub seed: Option<u64>,
    pub high_pct: Option<f64>,
    pub low_pct: Option<f64>,
    pub epsilon_static: Option<f64>,
    pub min_region: Option<usize>,
    pub boundary: Option<BoundaryPolicy>,
    pub fps: Option<f64>,
    pub window: Option<usize>,
}

impl ConfigOverrides {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn apply(&self, cfg: &mut PipelineConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = &self.$f { cfg.$f = v.clone(); } )* };
        }
        set!(input, output, tau, grid, dt, alpha, k, queries, seed, high_pct, low_pct, epsilon_static, min_region, boundary, fps);
        if self.window.is_some() {
            cfg.window = self.window;
        }
    }
}

impl PipelineConfig {
    pub fn grid_spec(&self) -> GridSpec {
        GridSpec::new(self.grid[0], self.grid[1])
    }

    /// Integration steps per window.
    pub fn steps(&self) -> Result<usize> {
        let steps = (self.tau as f64 / self.dt).round();
        if !(self.dt > 0.0) || steps < 1.0 || (steps * self.dt - self.tau as f64).abs() > 1e-9 {
            return Err(Error::Parameter(format!(
                "dt = {} must divide tau = {} into whole steps",
                self.dt, self.tau
            )));
        }
        Ok(steps as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau == 0 {
            return Err(Error::Parameter("tau must be at least 1".into()));
        }
        self.steps()?;
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::Parameter(format!("alpha = {} must lie in [0, 1)", self.alpha)));
        }
        if self.k == 0 || self.queries == 0 {
            return Err(Error::Parameter("k and queries must be positive".into()));
        }
        for p in [self.high_pct, self.low_pct] {
            if !(p > 0.0 && p < 50.0) {
                return Err(Error::Parameter(format!("percentile {p} must lie in (0, 50)")));
            }
        }
        if !(self.epsilon_static >= 0.0) {
            return Err(Error::Parameter("epsilon-static must be non-negative".into()));
        }
        Ok(())
    }

    pub fn to_lock(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_lock(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Independent stream seed derived from the run seed and a stream name.
pub fn sub_seed(seed: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Loads the configured input as a flow sequence.
pub fn load_input(cfg: &PipelineConfig) -> Result<(FlowSequence, Option<SceneSpec>)> {
    let path = &cfg.input;
    let is_scene = path.extension().is_some_and(|e| e == "toml");
    if is_scene {
        let text = fs::read_to_string(path).map_err(|e| Error::Input {
            path: path.clone(),
            detail: e.to_string(),
        })?;
        let mut scene = SceneSpec::from_toml(&text)?;
        if let Some(noise) = scene.noise.as_mut() {
            noise.seed.get_or_insert(sub_seed(cfg.seed, "noise"));
        }
        let seq = synth_scene(&scene)?;
        return Ok((seq, Some(scene)));
    }
    if !path.exists() && !path.to_string_lossy().contains('%') {
        return Err(Error::Input {
            path: path.clone(),
            detail: "no such file or directory".into(),
        });
    }
    Ok((load_sequence(path, cfg.fps)?, None))
}

/// Everything computed for one analysis window.
#[derive(Debug, Clone)]
pub struct WindowAnalysis {
    pub start: usize,
    pub layout: BlockLayout,
    pub mean: FlowField,
    pub grid_field: FlowField,
    pub displacement: DisplacementField,
    pub stability: StabilityField,
    pub static_mask: Vec<bool>,
    /// Ranked node -> grid index.
    pub nodes: Vec<usize>,
    pub scores: ScoreVector,
    pub queries: Vec<usize>,
    pub extrema: ExtremaResult,
    pub regions: RegionSet,
    pub diagnostics: Vec<String>,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.at_stage(name))
}

/// Runs every stage on frames `[start, start + tau)`.
pub fn analyze_window(seq: &FlowSequence, start: usize, cfg: &PipelineConfig) -> Result<WindowAnalysis> {
    cfg.validate()?;
    let grid = cfg.grid_spec();
    let mean = stage("mean-flow", mean_flow(seq, start, cfg.tau))?;
    let layout = stage("downsample", grid.blocks(mean.width(), mean.height()))?;
    let grid_field = stage("downsample", downsample_to_grid(&mean, grid))?;
    let displacement = stage("flow-map", flow_map(&mean, grid, cfg.steps()?, cfg.dt, cfg.boundary))?;
    let stability = stage("ftle", ftle_field(&displacement))?;
    let mask = static_mask(&grid_field, cfg.epsilon_static);
    let s_map = stability_structure(&stability);
    let theta = phase_structure(&grid_field, &mask);
    let features = stage("features", assemble_features(&s_map, &theta, &mask))?;
    let mut diagnostics = features.diagnostics.clone();
    if !stability.floored.is_empty() {
        diagnostics.push(format!("{} particles with floored FTLE", stability.floored.len()));
    }

    let (nodes, scores, queries) = if features.n() < 2 || features.is_degenerate() {
        diagnostics.push("all particles share one feature row; nothing to rank".into());
        let n = features.n();
        (
            features.index_map.clone(),
            ScoreVector {
                c: vec![0.0; n],
                alpha: cfg.alpha,
                m: 0,
            },
            Vec::new(),
        )
    } else {
        let neighbors = stage("graph", knn_graph(&features, cfg.k))?;
        let affinity = build_affinity(&neighbors);
        if !affinity.patched.is_empty() {
            diagnostics.push(format!("patched local scale of {} nodes", affinity.patched.len()));
        }
        let op = stage("graph", normalized_operator(&affinity))?;
        if op.n() < affinity.n() {
            diagnostics.push(format!("removed {} isolated nodes", affinity.n() - op.n()));
        }
        let queries = stage("ranking", sample_queries(op.n(), cfg.queries, sub_seed(cfg.seed, "queries")))?;
        let mut scores = stage("ranking", aggregate_ranks(&op, &queries, cfg.alpha))?;
        let classes = features.duplicate_classes();
        let node_class: Vec<usize> = op.nodes.iter().map(|&i| classes[i]).collect();
        average_over_classes(&mut scores.c, &node_class);
        let nodes = op.nodes.iter().map(|&i| features.index_map[i]).collect();
        (nodes, scores, queries)
    };

    let extrema = if nodes.is_empty() {
        ExtremaResult {
            grid,
            high_mask: vec![false; grid.len()],
            low_mask: vec![false; grid.len()],
            high_pct: cfg.high_pct,
            low_pct: cfg.low_pct,
            cuts: None,
            grid_scores: vec![0.0; grid.len()],
        }
    } else {
        stage("extrema", extract_extrema(&scores.c, &nodes, grid, cfg.high_pct, cfg.low_pct))?
    };
    let mut regions = regions_from_mask(&extrema.high_mask, &layout, Polarity::High, &extrema.grid_scores, cfg.min_region);
    regions.extend(regions_from_mask(&extrema.low_mask, &layout, Polarity::Low, &extrema.grid_scores, cfg.min_region));
    Ok(WindowAnalysis {
        start,
        layout,
        mean,
        grid_field,
        displacement,
        stability,
        static_mask: mask,
        nodes,
        scores,
        queries,
        extrema,
        regions: RegionSet {
            width: layout.width,
            height: layout.height,
            regions,
        },
        diagnostics,
    })
}

/// Window start frames: stride `tau`, whole windows only.
pub fn window_starts(len: usize, tau: usize) -> Vec<usize> {
    if tau == 0 || len < tau {
        return Vec::new();
    }
    (0..=(len - tau)).step_by(tau).collect()
}

pub const SALIENCY_FILE: &str = "saliency.ppm";
pub const PHI_FILE: &str = "phi.pgm";
pub const REGIONS_FILE: &str = "regions.toml";
pub const SCORES_FILE: &str = "scores.bin";
pub const SCORES_SIDECAR: &str = "scores.toml";
pub const LOCK_FILE: &str = "config.lock";
pub const TRUTH_FILE: &str = "truth.toml";

#[derive(Debug, Clone)]
pub struct WindowOutput {
    pub dir: PathBuf,
    pub analysis: WindowAnalysis,
}

pub fn score_sidecar(cfg: &PipelineConfig, a: &WindowAnalysis) -> ScoreSidecar {
    ScoreSidecar {
        n: a.extrema.grid_scores.len(),
        cols: a.layout.grid.cols,
        rows: a.layout.grid.rows,
        width: a.layout.width,
        height: a.layout.height,
        alpha: cfg.alpha,
        k: cfg.k,
        m: a.scores.m,
        seed: cfg.seed,
        high_pct: cfg.high_pct,
        low_pct: cfg.low_pct,
    }
}

fn write_window(dir: &Path, cfg: &PipelineConfig, a: &WindowAnalysis, scene: Option<&SceneSpec>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let heat = render_heatmap(&a.extrema.grid_scores, &a.layout);
    fs::write(dir.join(SALIENCY_FILE), heat.to_ppm())?;
    let grid = a.layout.grid;
    write_graymap(&dir.join(PHI_FILE), &a.stability.phi, grid.cols, grid.rows)?;
    fs::write(dir.join(REGIONS_FILE), a.regions.to_toml())?;
    let mut scores = Vec::with_capacity(a.extrema.grid_scores.len() * 8);
    write_scores(&mut scores, &a.extrema.grid_scores)?;
    fs::write(dir.join(SCORES_FILE), scores)?;
    fs::write(
        dir.join(SCORES_SIDECAR),
        score_sidecar(cfg, a).to_toml(),
    )?;
    fs::write(dir.join(LOCK_FILE), cfg.to_lock())?;
    if let Some(scene) = scene {
        fs::write(dir.join(TRUTH_FILE), scene.ground_truth(a.start, cfg.tau).to_toml())?;
    }
    Ok(())
}

fn remove_artifacts(dir: &Path) {
    for f in [SALIENCY_FILE, PHI_FILE, REGIONS_FILE, SCORES_FILE, SCORES_SIDECAR, LOCK_FILE, TRUTH_FILE] {
        let _ = fs::remove_file(dir.join(f));
    }
    let _ = fs::remove_file(sidecar_path(&dir.join(PHI_FILE)));
}

/// Loads the input, analyzes every window (or the configured one) and writes
/// artifacts. A single window writes into the output directory itself, several
/// windows into `window_NNNN` subdirectories.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Vec<WindowOutput>> {
    cfg.validate()?;
    let (seq, scene) = stage("input", load_input(cfg))?;
    let starts = window_starts(seq.len(), cfg.tau);
    if starts.is_empty() {
        return Err(Error::Range(format!(
            "sequence of {} frames is shorter than tau = {}",
            seq.len(),
            cfg.tau
        ))
        .at_stage("input"));
    }
    let selected: Vec<(usize, usize)> = match cfg.window {
        Some(w) => {
            let s = *starts
                .get(w)
                .ok_or_else(|| Error::Parameter(format!("window {w} out of range ({} windows)", starts.len())))?;
            vec![(w, s)]
        }
        None => starts.iter().copied().enumerate().collect(),
    };
    let multi = selected.len() > 1;
    let mut outputs = Vec::with_capacity(selected.len());
    for (w, start) in selected {
        let dir = if multi {
            cfg.output.join(format!("window_{w:04}"))
        } else {
            cfg.output.clone()
        };
        let analysis = analyze_window(&seq, start, cfg)?;
        if let Err(e) = write_window(&dir, cfg, &analysis, scene.as_ref()) {
            remove_artifacts(&dir);
            for done in &outputs {
                let done: &WindowOutput = done;
                remove_artifacts(&done.dir);
            }
            return Err(e.at_stage("write"));
        }
        outputs.push(WindowOutput { dir, analysis });
    }
    Ok(outputs)
}
