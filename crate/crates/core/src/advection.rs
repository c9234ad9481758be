//! Particle advection through a steady mean flow.
//!
//! Velocities are sampled with Catmull-Rom bicubic interpolation and pathlines
//! integrated with fixed-step RK4.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowfield::{BlockLayout, FlowField, GridSpec};
use crate::geom::Point;

/// What happens to samples and particles outside the frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryPolicy {
    /// Sample at the nearest boundary point and continue the field linearly from
    /// there using the interpolant's gradient. Particles move freely.
    #[default]
    Extrapolate,
    /// Sample at the nearest boundary point; particles stick to the boundary.
    Clamp,
}

#[inline]
fn catmull_rom(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

#[inline]
fn catmull_rom_deriv(t: f64) -> [f64; 4] {
    let t2 = t * t;
    [
        0.5 * (-3.0 * t2 + 4.0 * t - 1.0),
        0.5 * (9.0 * t2 - 10.0 * t),
        0.5 * (-9.0 * t2 + 8.0 * t + 1.0),
        0.5 * (3.0 * t2 - 2.0 * t),
    ]
}

/// Node value with linear ghost extension past the edges, so the interpolant
/// reproduces linear fields all the way to the boundary.
#[inline]
fn node(data: &[f64], w: usize, h: usize, i: isize, j: isize) -> f64 {
    let row = |jj: usize| -> f64 {
        let base = jj * w;
        if i < 0 {
            let slope = if w > 1 { data[base + 1] - data[base] } else { 0.0 };
            data[base] + i as f64 * slope
        } else if i as usize >= w {
            let last = base + w - 1;
            let slope = if w > 1 { data[last] - data[last - 1] } else { 0.0 };
            data[last] + (i as usize - (w - 1)) as f64 * slope
        } else {
            data[base + i as usize]
        }
    };
    if j < 0 {
        let f0 = row(0);
        let slope = if h > 1 { row(1) - f0 } else { 0.0 };
        f0 + j as f64 * slope
    } else if j as usize >= h {
        let f = row(h - 1);
        let slope = if h > 1 { f - row(h - 2) } else { 0.0 };
        f + (j as usize - (h - 1)) as f64 * slope
    } else {
        row(j as usize)
    }
}

/// Splits a clamped coordinate into a cell index and fraction in [0, 1].
#[inline]
fn cell(x: f64, n: usize) -> (isize, f64) {
    if n < 2 {
        return (0, 0.0);
    }
    let i = (x.floor() as isize).min(n as isize - 2);
    (i, x - i as f64)
}

/// Value and gradient of the bicubic interpolant at an in-frame position.
fn bicubic(data: &[f64], w: usize, h: usize, x: f64, y: f64, grad: bool) -> (f64, f64, f64) {
    let (ci, tx) = cell(x, w);
    let (cj, ty) = cell(y, h);
    let wx = catmull_rom(tx);
    let wy = catmull_rom(ty);
    let (dx, dy) = if grad {
        (catmull_rom_deriv(tx), catmull_rom_deriv(ty))
    } else {
        ([0.0; 4], [0.0; 4])
    };
    // offsets from the second node keep constant fields exact
    let mut rows = [(0.0, 0.0); 4];
    for (b, r) in rows.iter_mut().enumerate() {
        let j = cj - 1 + b as isize;
        let f1 = node(data, w, h, ci, j);
        let (mut rv, mut rd) = (f1, 0.0);
        for a in [0, 2, 3] {
            let df = node(data, w, h, ci - 1 + a as isize, j) - f1;
            rv += wx[a] * df;
            rd += dx[a] * df;
        }
        *r = (rv, rd);
    }
    let r1 = rows[1].0;
    let (mut val, mut gx, mut gy) = (r1, 0.0, 0.0);
    for (b, &(rv, rd)) in rows.iter().enumerate() {
        gx += wy[b] * rd;
        if b != 1 {
            val += wy[b] * (rv - r1);
            gy += dy[b] * (rv - r1);
        }
    }
    (val, gx, gy)
}

/// Interpolated velocity at `pos`, in pixels/frame.
pub fn sample_velocity(field: &FlowField, pos: Point, policy: BoundaryPolicy) -> (f64, f64) {
    let (w, h) = (field.width(), field.height());
    let qx = pos.x.clamp(0.0, (w - 1) as f64);
    let qy = pos.y.clamp(0.0, (h - 1) as f64);
    let outside = qx != pos.x || qy != pos.y;
    let extrapolate = outside && policy == BoundaryPolicy::Extrapolate;
    let (u, ux, uy) = bicubic(field.u(), w, h, qx, qy, extrapolate);
    let (v, vx, vy) = bicubic(field.v(), w, h, qx, qy, extrapolate);
    if extrapolate {
        let (ex, ey) = (pos.x - qx, pos.y - qy);
        (u + ux * ex + uy * ey, v + vx * ex + vy * ey)
    } else {
        (u, v)
    }
}

/// Trace of one particle: `samples[0]` is the seed, one entry per step after that.
#[derive(Debug, Clone, PartialEq)]
pub struct Pathline {
    pub seed: Point,
    pub samples: Vec<Point>,
}

impl Pathline {
    pub fn steps(&self) -> usize {
        self.samples.len() - 1
    }

    pub fn end(&self) -> Point {
        *self.samples.last().unwrap()
    }
}

fn clamp_to(field: &FlowField, p: Point) -> Point {
    Point::new(
        p.x.clamp(0.0, (field.width() - 1) as f64),
        p.y.clamp(0.0, (field.height() - 1) as f64),
    )
}

fn check_params(steps: usize, dt: f64) -> Result<()> {
    if steps == 0 {
        return Err(Error::Parameter("advection needs at least one step".into()));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Parameter(format!("step size {dt} must be positive")));
    }
    Ok(())
}

/// Returns the displacement from `seed`; `visit` sees each intermediate position.
/// Displacement is accumulated on its own so identical velocity histories give
/// bit-identical results regardless of the seed's magnitude.
fn integrate(
    field: &FlowField,
    seed: Point,
    steps: usize,
    dt: f64,
    policy: BoundaryPolicy,
    mut visit: impl FnMut(Point),
) -> Result<(f64, f64)> {
    let vel = |dx: f64, dy: f64| sample_velocity(field, Point::new(seed.x + dx, seed.y + dy), policy);
    let (mut dx, mut dy) = (0.0, 0.0);
    for step in 1..=steps {
        let k1 = vel(dx, dy);
        let k2 = vel(dx + 0.5 * dt * k1.0, dy + 0.5 * dt * k1.1);
        let k3 = vel(dx + 0.5 * dt * k2.0, dy + 0.5 * dt * k2.1);
        let k4 = vel(dx + dt * k3.0, dy + dt * k3.1);
        dx += dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        dy += dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        if policy == BoundaryPolicy::Clamp {
            let p = clamp_to(field, Point::new(seed.x + dx, seed.y + dy));
            (dx, dy) = (p.x - seed.x, p.y - seed.y);
        }
        if !(dx.is_finite() && dy.is_finite()) {
            return Err(Error::Integration {
                x: seed.x,
                y: seed.y,
                step,
            });
        }
        visit(Point::new(seed.x + dx, seed.y + dy));
    }
    Ok((dx, dy))
}

/// Integrates every seed through the steady field for `steps` RK4 steps of `dt` frames.
pub fn advect(
    field: &FlowField,
    seeds: &[Point],
    steps: usize,
    dt: f64,
    policy: BoundaryPolicy,
) -> Result<Vec<Pathline>> {
    check_params(steps, dt)?;
    seeds
        .iter()
        .map(|&seed| {
            let mut samples = Vec::with_capacity(steps + 1);
            samples.push(seed);
            integrate(field, seed, steps, dt, policy, |p| samples.push(p))?;
            Ok(Pathline { seed, samples })
        })
        .collect()
}

/// Final-minus-initial displacement of one particle per grid block.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    pub layout: BlockLayout,
    /// Seed positions (block centers), row-major over the grid.
    pub seeds: Vec<Point>,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
    pub tau: f64,
    pub dt: f64,
}

impl DisplacementField {
    pub fn grid(&self) -> GridSpec {
        self.layout.grid
    }

    /// Flow-map image `seed + displacement` of particle `i`.
    pub fn mapped(&self, i: usize) -> Point {
        Point::new(self.seeds[i].x + self.dx[i], self.seeds[i].y + self.dy[i])
    }
}

/// Seeds a particle at every block center of `grid` over `field` and advects it.
pub fn flow_map(
    field: &FlowField,
    grid: GridSpec,
    steps: usize,
    dt: f64,
    policy: BoundaryPolicy,
) -> Result<DisplacementField> {
    check_params(steps, dt)?;
    let layout = grid.blocks(field.width(), field.height())?;
    let seeds = layout.centers();
    let mut dx = Vec::with_capacity(seeds.len());
    let mut dy = Vec::with_capacity(seeds.len());
    for &seed in &seeds {
        let (ex, ey) = integrate(field, seed, steps, dt, policy, |_| {})?;
        dx.push(ex);
        dy.push(ey);
    }
    Ok(DisplacementField {
        layout,
        seeds,
        dx,
        dy,
        tau: steps as f64 * dt,
        dt,
    })
}

/// Writes pathlines as CSV rows `seed_x,seed_y,step,x,y`.
pub fn write_pathlines_csv(pathlines: &[Pathline], mut out: impl Write) -> Result<()> {
    writeln!(out, "seed_x,seed_y,step,x,y")?;
    for pl in pathlines {
        for (step, p) in pl.samples.iter().enumerate() {
            writeln!(out, "{},{},{},{},{}", pl.seed.x, pl.seed.y, step, p.x, p.y)?;
        }
    }
    Ok(())
}
