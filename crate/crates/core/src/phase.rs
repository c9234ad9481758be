//! Pairwise phase shift between mean-flow directions.

use std::f64::consts::PI;

use crate::flowfield::FlowField;
use crate::stability::{PairwiseKind, PairwiseMap};

/// Default speed below which a particle counts as static, pixels/frame.
pub const DEFAULT_EPS_STATIC: f64 = 1e-6;

/// Value stored in rows and columns of static particles. Never used as a feature.
pub const STATIC_SENTINEL: f64 = -1.0;

/// Angle between two velocities in `[0, pi]`, or [`STATIC_SENTINEL`] if either is
/// slower than `eps_static`.
pub fn phase_shift(a: (f64, f64), b: (f64, f64), eps_static: f64) -> f64 {
    let na = a.0.hypot(a.1);
    let nb = b.0.hypot(b.1);
    if na < eps_static || nb < eps_static {
        return STATIC_SENTINEL;
    }
    // atan2 form: exact zero for parallel vectors, no clamping needed
    let cross = a.0 * b.1 - a.1 * b.0;
    let dot = a.0 * b.0 + a.1 * b.1;
    cross.abs().atan2(dot)
}

/// Marks particles whose mean speed is below `eps_static`.
pub fn static_mask(field: &FlowField, eps_static: f64) -> Vec<bool> {
    field
        .u()
        .iter()
        .zip(field.v())
        .map(|(u, v)| u.hypot(*v) < eps_static)
        .collect()
}

/// `values[i][j]` is the phase shift between particles `i` and `j`; zero on the
/// diagonal and [`STATIC_SENTINEL`] in rows/columns flagged by `mask`.
pub fn phase_structure(grid_field: &FlowField, mask: &[bool]) -> PairwiseMap {
    let n = grid_field.len();
    assert_eq!(mask.len(), n, "mask does not match field");
    let (u, v) = (grid_field.u(), grid_field.v());
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let theta = if mask[i] || mask[j] {
                STATIC_SENTINEL
            } else {
                phase_shift((u[i], v[i]), (u[j], v[j]), 0.0)
            };
            values[i * n + j] = theta;
            values[j * n + i] = theta;
        }
        if mask[i] {
            values[i * n + i] = STATIC_SENTINEL;
        }
    }
    debug_assert!(values.iter().all(|&t| t == STATIC_SENTINEL || (0.0..=PI).contains(&t)));
    PairwiseMap::dense(n, PairwiseKind::Phase, values)
}
