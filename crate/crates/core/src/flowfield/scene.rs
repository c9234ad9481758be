//! Synthetic crowd scenes built from superposed primitive flows.
//!
//! A scene document is TOML:
//!
//! ```toml
//! width = 320
//! height = 240
//! duration = 50
//!
//! [[element]]
//! kind = "lane"          # uniform flow, optionally restricted to `region = [x, y, w, h]`
//! direction = [1.0, 0.0]
//! speed = 1.0
//!
//! [[element]]
//! kind = "agent"         # disk of radius `radius` moving along `path` at `speed`
//! path = [[220.0, 120.0], [170.0, 120.0]]
//! speed = 1.0
//! radius = 15.0
//!
//! [noise]                # uniform noise in [-amplitude, amplitude] inside `region`
//! region = [140, 100, 40, 40]
//! amplitude = 2.0
//! seed = 7
//! ```
//!
//! Other element kinds: `source`/`sink` (`center`, `strength`, optional `extent`
//! used for ground truth) and `saddle` (`center`, `rate`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FlowField, FlowSequence};
use crate::error::{Error, Result};
use crate::eval::{Category, GroundTruth, TruthEntry};
use crate::geom::Rect;

fn default_fps() -> f64 {
    25.0
}

fn default_amplitude() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub duration: usize,
    #[serde(default = "default_fps")]
    pub fps: f64,
    #[serde(default, rename = "element")]
    pub elements: Vec<Element>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Element {
    Lane {
        direction: [f64; 2],
        speed: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        region: Option<Rect>,
    },
    Source {
        center: [f64; 2],
        strength: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        extent: Option<f64>,
    },
    Sink {
        center: [f64; 2],
        strength: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        extent: Option<f64>,
    },
    Saddle {
        center: [f64; 2],
        rate: f64,
    },
    Agent {
        path: Vec<[f64; 2]>,
        speed: f64,
        radius: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub region: Rect,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SceneSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene serializes")
    }

    /// Checks every constraint and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let (w, h) = (self.width, self.height);
        if w < 2 || h < 2 {
            errs.push(format!("frame {w}x{h} must be at least 2x2"));
        }
        if self.duration == 0 {
            errs.push("duration must be at least 1 frame".into());
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            errs.push(format!("fps {} must be positive", self.fps));
        }
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        for (i, el) in self.elements.iter().enumerate() {
            match el {
                Element::Lane {
                    direction,
                    speed,
                    region,
                } => {
                    if !finite(direction) || direction[0].hypot(direction[1]) == 0.0 {
                        errs.push(format!("element {i}: lane direction must be a finite nonzero vector"));
                    }
                    if !speed.is_finite() {
                        errs.push(format!("element {i}: lane speed must be finite"));
                    }
                    if let Some(r) = region {
                        if !r.fits_in(w, h) {
                            errs.push(format!("element {i}: lane region {r:?} exceeds {w}x{h}"));
                        }
                    }
                }
                Element::Source {
                    center,
                    strength,
                    extent,
                }
                | Element::Sink {
                    center,
                    strength,
                    extent,
                } => {
                    if !finite(center) || !strength.is_finite() {
                        errs.push(format!("element {i}: center and strength must be finite"));
                    } else if !in_frame(*center, w, h) {
                        errs.push(format!("element {i}: center {center:?} outside frame"));
                    }
                    if extent.is_some_and(|e| !(e.is_finite() && e > 0.0)) {
                        errs.push(format!("element {i}: extent must be positive"));
                    }
                }
                Element::Saddle { center, rate } => {
                    if !finite(center) || !rate.is_finite() {
                        errs.push(format!("element {i}: center and rate must be finite"));
                    } else if !in_frame(*center, w, h) {
                        errs.push(format!("element {i}: center {center:?} outside frame"));
                    }
                }
                Element::Agent {
                    path,
                    speed,
                    radius,
                } => {
                    if path.is_empty() {
                        errs.push(format!("element {i}: agent path is empty"));
                    }
                    if let Some(p) = path.iter().find(|p| !finite(&p[..]) || !in_frame(**p, w, h)) {
                        errs.push(format!("element {i}: path point {p:?} outside frame"));
                    }
                    if !(speed.is_finite() && *speed >= 0.0) {
                        errs.push(format!("element {i}: agent speed must be non-negative"));
                    }
                    if !(radius.is_finite() && *radius > 0.0) {
                        errs.push(format!("element {i}: agent radius must be positive"));
                    }
                }
            }
        }
        if let Some(noise) = &self.noise {
            if !noise.region.fits_in(w, h) {
                errs.push(format!("noise region {:?} exceeds {w}x{h}", noise.region));
            }
            if !(noise.amplitude.is_finite() && noise.amplitude >= 0.0) {
                errs.push(format!("noise amplitude {} must be non-negative", noise.amplitude));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    /// Ground-truth regions implied by the scene for frames `[start, start + tau)`.
    ///
    /// Noise regions and agent sweeps are local irregularities; sources and sinks
    /// with an `extent` contribute a square of half-size `extent`.
    pub fn ground_truth(&self, start: usize, tau: usize) -> GroundTruth {
        let mut entries = Vec::new();
        for el in &self.elements {
            match el {
                Element::Source {
                    center,
                    extent: Some(e),
                    ..
                }
                | Element::Sink {
                    center,
                    extent: Some(e),
                    ..
                } => {
                    if let Some(bbox) = clip_box(center[0] - e, center[1] - e, center[0] + e, center[1] + e, self.width, self.height) {
                        entries.push(TruthEntry {
                            bbox,
                            category: Category::SourceSink,
                        });
                    }
                }
                Element::Agent {
                    path,
                    speed,
                    radius,
                } => {
                    let agent = AgentTrack::new(path, *speed);
                    let mut env: Option<Rect> = None;
                    for t in start..start + tau {
                        let (p, moving) = agent.at(t as f64);
                        if !moving {
                            continue;
                        }
                        let r = *radius;
                        if let Some(b) = clip_box(p[0] - r, p[1] - r, p[0] + r, p[1] + r, self.width, self.height) {
                            env = Some(env.map_or(b, |e| e.union(&b)));
                        }
                    }
                    if let Some(bbox) = env {
                        entries.push(TruthEntry {
                            bbox,
                            category: Category::LocalIrregularity,
                        });
                    }
                }
                _ => {}
            }
        }
        if let Some(noise) = &self.noise {
            if noise.amplitude > 0.0 && !noise.region.is_empty() {
                entries.push(TruthEntry {
                    bbox: noise.region,
                    category: Category::LocalIrregularity,
                });
            }
        }
        GroundTruth {
            width: self.width,
            height: self.height,
            entries,
        }
    }
}

fn in_frame(p: [f64; 2], w: usize, h: usize) -> bool {
    p[0] >= 0.0 && p[1] >= 0.0 && p[0] <= (w - 1) as f64 && p[1] <= (h - 1) as f64
}

/// Pixel box covering every pixel center in `[x0, x1] x [y0, y1]`, clipped to the frame.
fn clip_box(x0: f64, y0: f64, x1: f64, y1: f64, w: usize, h: usize) -> Option<Rect> {
    let lo_x = x0.ceil().max(0.0);
    let lo_y = y0.ceil().max(0.0);
    let hi_x = x1.floor().min((w - 1) as f64);
    let hi_y = y1.floor().min((h - 1) as f64);
    if hi_x < lo_x || hi_y < lo_y {
        return None;
    }
    Some(Rect::new(
        lo_x as u32,
        lo_y as u32,
        (hi_x - lo_x) as u32 + 1,
        (hi_y - lo_y) as u32 + 1,
    ))
}

struct AgentTrack<'a> {
    path: &'a [[f64; 2]],
    speed: f64,
    total: f64,
}

impl<'a> AgentTrack<'a> {
    fn new(path: &'a [[f64; 2]], speed: f64) -> Self {
        let total = path
            .windows(2)
            .map(|s| (s[1][0] - s[0][0]).hypot(s[1][1] - s[0][1]))
            .sum();
        Self { path, speed, total }
    }

    /// Position at frame `t` and whether the agent is still travelling.
    fn at(&self, t: f64) -> ([f64; 2], bool) {
        let mut s = self.speed * t;
        if self.speed == 0.0 || s >= self.total {
            return (*self.path.last().unwrap(), false);
        }
        for seg in self.path.windows(2) {
            let len = (seg[1][0] - seg[0][0]).hypot(seg[1][1] - seg[0][1]);
            if s < len {
                let a = s / len;
                let p = [
                    seg[0][0] + a * (seg[1][0] - seg[0][0]),
                    seg[0][1] + a * (seg[1][1] - seg[0][1]),
                ];
                return (p, true);
            }
            s -= len;
        }
        (*self.path.last().unwrap(), false)
    }

    /// Unit direction of travel at frame `t`.
    fn heading(&self, t: f64) -> [f64; 2] {
        let mut s = self.speed * t;
        for seg in self.path.windows(2) {
            let (dx, dy) = (seg[1][0] - seg[0][0], seg[1][1] - seg[0][1]);
            let len = dx.hypot(dy);
            if s < len {
                return [dx / len, dy / len];
            }
            s -= len;
        }
        [0.0, 0.0]
    }
}

fn static_field(spec: &SceneSpec) -> FlowField {
    let mut field = FlowField::zeros(spec.width, spec.height);
    let w = spec.width;
    let (us, vs) = field.components_mut();
    for el in &spec.elements {
        match el {
            Element::Lane {
                direction,
                speed,
                region,
            } => {
                let norm = direction[0].hypot(direction[1]);
                let (du, dv) = (speed * direction[0] / norm, speed * direction[1] / norm);
                let r = region.unwrap_or(Rect::new(0, 0, spec.width as u32, spec.height as u32));
                for y in r.y as usize..r.bottom() as usize {
                    for x in r.x as usize..r.right() as usize {
                        us[y * w + x] += du;
                        vs[y * w + x] += dv;
                    }
                }
            }
            Element::Source {
                center, strength, ..
            }
            | Element::Sink {
                center, strength, ..
            } => {
                let sign = if matches!(el, Element::Sink { .. }) { -1.0 } else { 1.0 };
                for (i, (u, v)) in us.iter_mut().zip(vs.iter_mut()).enumerate() {
                    let dx = (i % w) as f64 - center[0];
                    let dy = (i / w) as f64 - center[1];
                    let r2 = (dx * dx + dy * dy).max(1.0);
                    *u += sign * strength * dx / r2;
                    *v += sign * strength * dy / r2;
                }
            }
            Element::Saddle { center, rate } => {
                for (i, (u, v)) in us.iter_mut().zip(vs.iter_mut()).enumerate() {
                    *u += rate * ((i % w) as f64 - center[0]);
                    *v -= rate * ((i / w) as f64 - center[1]);
                }
            }
            Element::Agent { .. } => {}
        }
    }
    field
}

/// Renders the scene's frames. Deterministic: noise uses the scene's seed (0 if unset).
pub fn synth_scene(spec: &SceneSpec) -> Result<FlowSequence> {
    spec.validate()?;
    let base = static_field(spec);
    let agents: Vec<_> = spec
        .elements
        .iter()
        .filter_map(|el| match el {
            Element::Agent {
                path,
                speed,
                radius,
            } => Some((AgentTrack::new(path, *speed), *radius)),
            _ => None,
        })
        .collect();
    let w = spec.width;
    let mut frames = Vec::with_capacity(spec.duration);
    for t in 0..spec.duration {
        let mut frame = base.clone();
        let (us, vs) = frame.components_mut();
        for (track, radius) in &agents {
            let (p, moving) = track.at(t as f64);
            if !moving {
                continue;
            }
            let dir = track.heading(t as f64);
            let (du, dv) = (track.speed * dir[0], track.speed * dir[1]);
            let x0 = (p[0] - radius).ceil().max(0.0) as usize;
            let x1 = ((p[0] + radius).floor() as usize).min(spec.width - 1);
            let y0 = (p[1] - radius).ceil().max(0.0) as usize;
            let y1 = ((p[1] + radius).floor() as usize).min(spec.height - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let (dx, dy) = (x as f64 - p[0], y as f64 - p[1]);
                    if dx * dx + dy * dy <= radius * radius {
                        us[y * w + x] += du;
                        vs[y * w + x] += dv;
                    }
                }
            }
        }
        frames.push(frame);
    }
    let seq = FlowSequence::new(frames, spec.fps)?;
    match &spec.noise {
        Some(n) => inject_noise(&seq, n.region, n.amplitude, n.seed.unwrap_or(0)),
        None => Ok(seq),
    }
}

/// Adds i.i.d. uniform noise in `[-amplitude, amplitude]` to both components inside
/// `region`, frame by frame in row-major pixel order.
pub fn inject_noise(seq: &FlowSequence, region: Rect, amplitude: f64, seed: u64) -> Result<FlowSequence> {
    if !region.fits_in(seq.width(), seq.height()) {
        return Err(Error::Range(format!(
            "noise region {region:?} exceeds {}x{} frame",
            seq.width(),
            seq.height()
        )));
    }
    if !(amplitude.is_finite() && amplitude >= 0.0) {
        return Err(Error::Range(format!("noise amplitude {amplitude} must be non-negative")));
    }
    if amplitude == 0.0 || region.is_empty() {
        return Ok(seq.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = seq.width();
    let mut frames = seq.frames().to_vec();
    for frame in &mut frames {
        let (us, vs) = frame.components_mut();
        for y in region.y as usize..region.bottom() as usize {
            for x in region.x as usize..region.right() as usize {
                us[y * w + x] += rng.gen_range(-amplitude..=amplitude);
                vs[y * w + x] += rng.gen_range(-amplitude..=amplitude);
            }
        }
    }
    FlowSequence::new(frames, seq.fps)
}
