//! Flow fields, sequences, temporal averaging and particle-grid downsampling.

mod flo;
mod scene;

pub use flo::{load_flo, load_sequence, read_flo, save_flo, write_flo, FLO_MAGIC};
pub use scene::{
    inject_noise, synth_scene, Element, NoiseSpec, SceneSpec,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Point, Rect};

/// Dense per-pixel velocity field in pixels/frame, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Range(format!("empty field {width}x{height}")));
        }
        let len = width * height;
        if u.len() != len || v.len() != len {
            return Err(Error::Range(format!(
                "component lengths {}/{} do not match {width}x{height}",
                u.len(),
                v.len()
            )));
        }
        if let Some(i) = u.iter().chain(v.iter()).position(|x| !x.is_finite()) {
            let comp = if i < len { "u" } else { "v" };
            return Err(Error::Format {
                field: "velocity",
                detail: format!("non-finite {comp} at pixel {}", i % len),
            });
        }
        Ok(Self { width, height, u, v })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::uniform(width, height, 0.0, 0.0)
    }

    pub fn uniform(width: usize, height: usize, u: f64, v: f64) -> Self {
        let len = width * height;
        Self {
            width,
            height,
            u: vec![u; len],
            v: vec![v; len],
        }
    }

    /// Builds a field by evaluating `f(x, y)` at every pixel center.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(f64, f64) -> (f64, f64)) -> Self {
        let mut u = Vec::with_capacity(width * height);
        let mut v = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let (a, b) = f(x as f64, y as f64);
                u.push(a);
                v.push(b);
            }
        }
        Self { width, height, u, v }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub(crate) fn components_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.u, &mut self.v)
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    pub fn same_shape(&self, other: &FlowField) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn map(&self, mut f: impl FnMut(f64, f64) -> (f64, f64)) -> FlowField {
        let (u, v) = self.u.iter().zip(&self.v).map(|(&a, &b)| f(a, b)).unzip();
        FlowField {
            width: self.width,
            height: self.height,
            u,
            v,
        }
    }
}

/// Ordered flow frames sharing one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSequence {
    frames: Vec<FlowField>,
    pub fps: f64,
}

impl FlowSequence {
    pub fn new(frames: Vec<FlowField>, fps: f64) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::Range("flow sequence needs at least one frame".into()))?;
        if let Some(i) = frames.iter().position(|f| !f.same_shape(first)) {
            return Err(Error::Range(format!(
                "frame {i} is {}x{}, expected {}x{}",
                frames[i].width, frames[i].height, first.width, first.height
            )));
        }
        Ok(Self { frames, fps })
    }

    pub fn frames(&self) -> &[FlowField] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<FlowField> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }
}

/// Per-pixel mean of `u` and `v` over frames `[start, start + tau)`.
///
/// Accumulation runs frame by frame in order, then divides once.
pub fn mean_flow(seq: &FlowSequence, start: usize, tau: usize) -> Result<FlowField> {
    if tau == 0 {
        return Err(Error::Range("tau must be at least 1".into()));
    }
    let end = start
        .checked_add(tau)
        .filter(|&e| e <= seq.len())
        .ok_or_else(|| {
            Error::Range(format!(
                "window [{start}, {start}+{tau}) exceeds sequence of {} frames",
                seq.len()
            ))
        })?;
    let (w, h) = (seq.width(), seq.height());
    let mut u = vec![0.0; w * h];
    let mut v = vec![0.0; w * h];
    for frame in &seq.frames[start..end] {
        for (acc, x) in u.iter_mut().zip(&frame.u) {
            *acc += x;
        }
        for (acc, x) in v.iter_mut().zip(&frame.v) {
            *acc += x;
        }
    }
    let scale = tau as f64;
    u.iter_mut().chain(v.iter_mut()).for_each(|x| *x /= scale);
    Ok(FlowField {
        width: w,
        height: h,
        u,
        v,
    })
}

/// Particle lattice: `cols x rows` pixel blocks, one particle per block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub cols: usize,
    pub rows: usize,
}

impl GridSpec {
    pub const fn new(cols: usize, rows: usize) -> Self {
        Self { cols, rows }
    }

    pub fn len(&self) -> usize {
        self.cols * self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.cols + col
    }

    pub fn coords(&self, i: usize) -> (usize, usize) {
        (i % self.cols, i / self.cols)
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if self.cols < 2 || self.rows < 2 || self.cols > width || self.rows > height {
            return Err(Error::Range(format!(
                "grid {}x{} incompatible with {width}x{height} frame (need 2 <= cols <= width, 2 <= rows <= height)",
                self.cols, self.rows
            )));
        }
        Ok(())
    }

    pub fn blocks(&self, width: usize, height: usize) -> Result<BlockLayout> {
        self.validate(width, height)?;
        Ok(BlockLayout {
            grid: *self,
            width,
            height,
        })
    }
}

/// Pixel geometry of a grid over a frame. Blocks are `width / cols` pixels wide;
/// remainder pixels join the last block along each axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLayout {
    pub grid: GridSpec,
    pub width: usize,
    pub height: usize,
}

impl BlockLayout {
    fn span(extent: usize, parts: usize, k: usize) -> (usize, usize) {
        let size = extent / parts;
        let start = k * size;
        let end = if k + 1 == parts { extent } else { start + size };
        (start, end)
    }

    pub fn x_span(&self, col: usize) -> (usize, usize) {
        Self::span(self.width, self.grid.cols, col)
    }

    pub fn y_span(&self, row: usize) -> (usize, usize) {
        Self::span(self.height, self.grid.rows, row)
    }

    pub fn block_rect(&self, col: usize, row: usize) -> Rect {
        let (x0, x1) = self.x_span(col);
        let (y0, y1) = self.y_span(row);
        Rect::new(x0 as u32, y0 as u32, (x1 - x0) as u32, (y1 - y0) as u32)
    }

    /// Center of a block in pixel coordinates.
    pub fn center(&self, col: usize, row: usize) -> Point {
        let (x0, x1) = self.x_span(col);
        let (y0, y1) = self.y_span(row);
        Point::new((x0 + x1 - 1) as f64 / 2.0, (y0 + y1 - 1) as f64 / 2.0)
    }

    pub fn centers(&self) -> Vec<Point> {
        let mut out = Vec::with_capacity(self.grid.len());
        for row in 0..self.grid.rows {
            for col in 0..self.grid.cols {
                out.push(self.center(col, row));
            }
        }
        out
    }

    /// Column of the block containing pixel column `x`.
    pub fn col_of(&self, x: usize) -> usize {
        (x / (self.width / self.grid.cols)).min(self.grid.cols - 1)
    }

    pub fn row_of(&self, y: usize) -> usize {
        (y / (self.height / self.grid.rows)).min(self.grid.rows - 1)
    }
}

/// Block-mean downsampling: each particle's velocity is the mean over its pixel block.
pub fn downsample_to_grid(field: &FlowField, grid: GridSpec) -> Result<FlowField> {
    let layout = grid.blocks(field.width, field.height)?;
    let mut u = Vec::with_capacity(grid.len());
    let mut v = Vec::with_capacity(grid.len());
    for row in 0..grid.rows {
        let (y0, y1) = layout.y_span(row);
        for col in 0..grid.cols {
            let (x0, x1) = layout.x_span(col);
            let (mut su, mut sv) = (0.0, 0.0);
            for y in y0..y1 {
                let base = y * field.width;
                for x in x0..x1 {
                    su += field.u[base + x];
                    sv += field.v[base + x];
                }
            }
            let count = ((x1 - x0) * (y1 - y0)) as f64;
            u.push(su / count);
            v.push(sv / count);
        }
    }
    Ok(FlowField {
        width: grid.cols,
        height: grid.rows,
        u,
        v,
    })
}
