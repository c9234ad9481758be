use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowfield::{BlockLayout, GridSpec};
use crate::geom::Rect;

/// Score spread below which a scene is treated as having no extrema.
pub const DEGENERATE_SPREAD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    High,
    Low,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtremaResult {
    pub grid: GridSpec,
    pub high_mask: Vec<bool>,
    pub low_mask: Vec<bool>,
    pub high_pct: f64,
    pub low_pct: f64,
    /// Cut values; `None` when the degenerate-scene guard fired.
    pub cuts: Option<(f64, f64)>,
    /// Scores over the full grid; unranked particles hold the median score.
    pub grid_scores: Vec<f64>,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Marks particles at or above the `high_pct` upper percentile and at or below the
/// `low_pct` lower percentile. `nodes[i]` is the grid index of score `i`.
///
/// A tie class straddling a cut is taken or left whole, whichever lands closer to
/// the requested count (taken on a draw). Particles caught by both cuts belong to
/// neither.
pub fn extract_extrema(
    scores: &[f64],
    nodes: &[usize],
    grid: GridSpec,
    high_pct: f64,
    low_pct: f64,
) -> Result<ExtremaResult> {
    for (name, p) in [("high", high_pct), ("low", low_pct)] {
        if !(p > 0.0 && p < 50.0) {
            return Err(Error::Parameter(format!("{name} percentile {p} must lie in (0, 50)")));
        }
    }
    if scores.len() != nodes.len() || scores.is_empty() {
        return Err(Error::Parameter("scores and node map must be non-empty and equal length".into()));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let neutral = median(&sorted);
    let mut grid_scores = vec![neutral; grid.len()];
    for (&s, &g) in scores.iter().zip(nodes) {
        grid_scores[g] = s;
    }
    let mut high_mask = vec![false; grid.len()];
    let mut low_mask = vec![false; grid.len()];
    let spread = sorted[n - 1] - sorted[0];
    if !(spread >= DEGENERATE_SPREAD) {
        return Ok(ExtremaResult {
            grid,
            high_mask,
            low_mask,
            high_pct,
            low_pct,
            cuts: None,
            grid_scores,
        });
    }
    let count = |pct: f64| (((pct * n as f64) / 100.0).ceil() as usize).clamp(1, n);
    let high_cut = upper_cut(&sorted, count(high_pct));
    let low_cut = lower_cut(&sorted, count(low_pct));
    for (&s, &g) in scores.iter().zip(nodes) {
        let hi = s >= high_cut;
        let lo = s <= low_cut;
        high_mask[g] = hi && !lo;
        low_mask[g] = lo && !hi;
    }
    Ok(ExtremaResult {
        grid,
        high_mask,
        low_mask,
        high_pct,
        low_pct,
        cuts: Some((high_cut, low_cut)),
        grid_scores,
    })
}

/// Smallest score kept by the upper cut for a target of `t` particles.
fn upper_cut(sorted: &[f64], t: usize) -> f64 {
    let n = sorted.len();
    let v = sorted[n - t];
    let above = n - sorted.partition_point(|&x| x <= v);
    let with_ties = n - sorted.partition_point(|&x| x < v);
    if with_ties - t <= t - above {
        v
    } else if above > 0 {
        sorted[n - above]
    } else {
        f64::INFINITY
    }
}

/// Largest score kept by the lower cut for a target of `t` particles.
fn lower_cut(sorted: &[f64], t: usize) -> f64 {
    let v = sorted[t - 1];
    let below = sorted.partition_point(|&x| x < v);
    let with_ties = sorted.partition_point(|&x| x <= v);
    if with_ties - t <= t - below {
        v
    } else if below > 0 {
        sorted[below - 1]
    } else {
        f64::NEG_INFINITY
    }
}

/// A connected group of extremal particles mapped back to pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub bbox: Rect,
    pub polarity: Polarity,
    /// Mean rank score over the region's particles.
    pub score: f64,
    pub particles: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RegionSet {
    pub width: usize,
    pub height: usize,
    #[serde(default, rename = "region")]
    pub regions: Vec<Region>,
}

impl RegionSet {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("regions serialize")
    }

    pub fn count(&self, polarity: Polarity) -> usize {
        self.regions.iter().filter(|r| r.polarity == polarity).count()
    }
}

/// 8-connected components of `mask` with at least `min_particles` members, as pixel
/// bounding boxes. Components are reported in row-major order of their first particle.
pub fn regions_from_mask(
    mask: &[bool],
    layout: &BlockLayout,
    polarity: Polarity,
    scores: &[f64],
    min_particles: usize,
) -> Vec<Region> {
    let grid = layout.grid;
    assert_eq!(mask.len(), grid.len());
    let mut seen = vec![false; grid.len()];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..grid.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut members = Vec::new();
        while let Some(i) = stack.pop() {
            members.push(i);
            let (c, r) = grid.coords(i);
            for dr in -1isize..=1 {
                for dc in -1isize..=1 {
                    let (nc, nr) = (c as isize + dc, r as isize + dr);
                    if nc < 0 || nr < 0 || nc >= grid.cols as isize || nr >= grid.rows as isize {
                        continue;
                    }
                    let j = grid.index(nc as usize, nr as usize);
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        if members.len() < min_particles {
            continue;
        }
        let bbox = members
            .iter()
            .map(|&i| {
                let (c, r) = grid.coords(i);
                layout.block_rect(c, r)
            })
            .reduce(|a, b| a.union(&b))
            .unwrap();
        let score = members.iter().map(|&i| scores[i]).sum::<f64>() / members.len() as f64;
        out.push(Region {
            bbox,
            polarity,
            score,
            particles: members.len(),
        });
    }
    out
}
