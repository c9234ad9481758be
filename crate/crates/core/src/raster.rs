//! Portable graymap/pixmap output, the saliency color lookup and score dumps.

use std::fs;
use std::io::Write;
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowfield::BlockLayout;

/// 256-entry lookup: 0 is blue, 128 mid-gray, 255 red, linear in between.
pub fn saliency_colormap() -> [[u8; 3]; 256] {
    let mut lut = [[0u8; 3]; 256];
    for (i, c) in lut.iter_mut().enumerate() {
        let (r, g, b) = if i <= 128 {
            let t = i as f64 / 128.0;
            (128.0 * t, 128.0 * t, 255.0 - 127.0 * t)
        } else {
            let t = (i - 128) as f64 / 127.0;
            (128.0 + 127.0 * t, 128.0 * (1.0 - t), 128.0 * (1.0 - t))
        };
        *c = [r.round() as u8, g.round() as u8, b.round() as u8];
    }
    lut
}

fn median_of(values: &[f64]) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Lookup index per score: min maps to 0, median to 128, max to 255.
pub fn color_indices(scores: &[f64]) -> Vec<u8> {
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let med = median_of(scores);
    scores
        .iter()
        .map(|&s| {
            let idx = if s <= med {
                if med > lo {
                    128.0 * (s - lo) / (med - lo)
                } else {
                    128.0
                }
            } else if hi > med {
                128.0 + 127.0 * (s - med) / (hi - med)
            } else {
                128.0
            };
            idx.round().clamp(0.0, 255.0) as u8
        })
        .collect()
}

/// RGB raster of particle scores upsampled to the frame by block.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    /// Same pixels with an opaque alpha channel, for canvas output.
    pub fn to_rgba(&self) -> Vec<u8> {
        self.data
            .chunks_exact(3)
            .flat_map(|p| [p[0], p[1], p[2], 255])
            .collect()
    }
}

pub fn render_heatmap(grid_scores: &[f64], layout: &BlockLayout) -> RgbImage {
    assert_eq!(grid_scores.len(), layout.grid.len());
    let lut = saliency_colormap();
    let idx = color_indices(grid_scores);
    let cols: Vec<usize> = (0..layout.width).map(|x| layout.col_of(x)).collect();
    let mut data = Vec::with_capacity(layout.width * layout.height * 3);
    for y in 0..layout.height {
        let row = layout.row_of(y);
        for &col in &cols {
            data.extend_from_slice(&lut[idx[layout.grid.index(col, row)] as usize]);
        }
    }
    RgbImage {
        width: layout.width,
        height: layout.height,
        data,
    }
}

/// Bounds used to normalize a graymap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrayBounds {
    pub min: f64,
    pub max: f64,
}

/// 16-bit binary graymap (big-endian samples) min-max normalized over `values`.
pub fn graymap16(values: &[f64], width: usize, height: usize) -> (Vec<u8>, GrayBounds) {
    assert_eq!(values.len(), width * height);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    for &v in values {
        let t = if max > min { (v - min) / (max - min) } else { 0.0 };
        let s = (t * 65535.0).round().clamp(0.0, 65535.0) as u16;
        out.extend_from_slice(&s.to_be_bytes());
    }
    (out, GrayBounds { min, max })
}

/// Writes the graymap and a `<path>.toml` sidecar holding the normalization bounds.
pub fn write_graymap(path: &Path, values: &[f64], width: usize, height: usize) -> Result<()> {
    let (bytes, bounds) = graymap16(values, width, height);
    fs::write(path, bytes)?;
    fs::write(sidecar_path(path), toml::to_string(&bounds).expect("bounds serialize"))?;
    Ok(())
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".toml");
    s.into()
}

/// Parameters stored next to a score dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ScoreSidecar {
    pub n: usize,
    pub cols: usize,
    pub rows: usize,
    pub width: usize,
    pub height: usize,
    pub alpha: f64,
    pub k: usize,
    pub m: usize,
    pub seed: u64,
    pub high_pct: f64,
    pub low_pct: f64,
}

impl ScoreSidecar {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("sidecar serializes")
    }
}

/// `n` little-endian f64 values.
pub fn write_scores(mut out: impl Write, scores: &[f64]) -> Result<()> {
    for &s in scores {
        out.write_f64::<LittleEndian>(s)?;
    }
    Ok(())
}

pub fn read_scores(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::Format {
            field: "scores",
            detail: format!("{} bytes is not a whole number of f64 values", bytes.len()),
        });
    }
    let mut r = bytes;
    let mut out = vec![0.0; bytes.len() / 8];
    r.read_f64_into::<LittleEndian>(&mut out)?;
    Ok(out)
}
