//! Flow-map Jacobians, finite-time Lyapunov exponents and the pairwise
//! stability-difference structure.

use crate::advection::DisplacementField;
use crate::error::{Error, Result};
use crate::flowfield::GridSpec;

/// Eigenvalues below `FTLE_EPS^2` count as non-positive and are floored.
pub const FTLE_EPS: f64 = 1e-12;

/// Pairwise maps at or below this many particles are stored densely.
pub const MATERIALIZE_LIMIT: usize = 4096;

pub type Mat2 = [[f64; 2]; 2];

/// Jacobian of the flow map `F(p) = p + displacement(p)` at particle `i`, per pixel of
/// seed offset. Central differences inside the grid, one-sided on its edges.
pub fn jacobian(disp: &DisplacementField, i: usize) -> Result<Mat2> {
    let grid = disp.grid();
    if grid.cols < 3 || grid.rows < 3 {
        return Err(Error::Range(format!(
            "Jacobian needs a grid of at least 3x3, got {}x{}",
            grid.cols, grid.rows
        )));
    }
    let (col, row) = grid.coords(i);
    let pair = |k: usize, n: usize| match k {
        0 => (0, 1),
        k if k + 1 == n => (k - 1, k),
        k => (k - 1, k + 1),
    };
    let (c0, c1) = pair(col, grid.cols);
    let (r0, r1) = pair(row, grid.rows);
    let (a, b) = (grid.index(c0, row), grid.index(c1, row));
    let (c, d) = (grid.index(col, r0), grid.index(col, r1));
    let hx = disp.seeds[b].x - disp.seeds[a].x;
    let hy = disp.seeds[d].y - disp.seeds[c].y;
    // identity plus displacement gradient: a rigid translation gives exactly I
    let (u, v) = (&disp.dx, &disp.dy);
    Ok([
        [1.0 + (u[b] - u[a]) / hx, (u[d] - u[c]) / hy],
        [(v[b] - v[a]) / hx, 1.0 + (v[d] - v[c]) / hy],
    ])
}

/// Largest eigenvalue of the Cauchy-Green tensor `J^T J`.
pub fn max_stretch(j: &Mat2) -> f64 {
    let a = j[0][0] * j[0][0] + j[1][0] * j[1][0];
    let b = j[0][0] * j[0][1] + j[1][0] * j[1][1];
    let c = j[0][1] * j[0][1] + j[1][1] * j[1][1];
    0.5 * (a + c) + (0.5 * (a - c)).hypot(b)
}

/// `(1/tau) * ln sqrt(lambda_max(J^T J))`, or `None` when the eigenvalue is numerically
/// non-positive.
pub fn try_ftle(j: &Mat2, tau: f64) -> Option<f64> {
    let lambda = max_stretch(j);
    if lambda.is_finite() && lambda > FTLE_EPS * FTLE_EPS {
        Some(0.5 * lambda.ln() / tau)
    } else {
        None
    }
}

/// Stability coefficient; degenerate tensors return the floor `ln(eps) / tau`.
pub fn ftle(j: &Mat2, tau: f64) -> f64 {
    try_ftle(j, tau).unwrap_or(FTLE_EPS.ln() / tau)
}

/// Per-particle stability coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityField {
    pub grid: GridSpec,
    pub phi: Vec<f64>,
    pub tau: f64,
    /// Particles whose value was floored.
    pub floored: Vec<usize>,
}

pub fn ftle_field(disp: &DisplacementField) -> Result<StabilityField> {
    let n = disp.grid().len();
    let mut phi = Vec::with_capacity(n);
    let mut floored = Vec::new();
    for i in 0..n {
        let j = jacobian(disp, i)?;
        phi.push(match try_ftle(&j, disp.tau) {
            Some(x) => x,
            None => {
                floored.push(i);
                FTLE_EPS.ln() / disp.tau
            }
        });
    }
    if !floored.is_empty() {
        log::warn!("{} particles had a degenerate flow-map tensor; FTLE floored", floored.len());
    }
    Ok(StabilityField {
        grid: disp.grid(),
        phi,
        tau: disp.tau,
        floored,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairwiseKind {
    Stability,
    Phase,
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    Dense(Vec<f64>),
    /// `values[i][j] = phi[i] - phi[j]`, generated on demand.
    Differences(Vec<f64>),
}

/// `n x n` similarity structure over particles in row-major grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseMap {
    n: usize,
    kind: PairwiseKind,
    storage: Storage,
}

impl PairwiseMap {
    pub(crate) fn dense(n: usize, kind: PairwiseKind, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), n * n);
        Self {
            n,
            kind,
            storage: Storage::Dense(values),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> PairwiseKind {
        self.kind
    }

    pub fn is_materialized(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            Storage::Dense(v) => v[i * self.n + j],
            Storage::Differences(phi) => phi[i] - phi[j],
        }
    }

    /// Writes row `i` into `out`.
    pub fn row_into(&self, i: usize, out: &mut [f64]) {
        match &self.storage {
            Storage::Dense(v) => out.copy_from_slice(&v[i * self.n..(i + 1) * self.n]),
            Storage::Differences(phi) => {
                for (o, p) in out.iter_mut().zip(phi) {
                    *o = phi[i] - p;
                }
            }
        }
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.row_into(i, &mut out);
        out
    }

    /// Dense copy of the full matrix.
    pub fn to_dense(&self) -> Vec<f64> {
        match &self.storage {
            Storage::Dense(v) => v.clone(),
            Storage::Differences(_) => (0..self.n).flat_map(|i| self.row(i)).collect(),
        }
    }
}

/// `values[i][j] = phi[i] - phi[j]`. Materialized when `n <= MATERIALIZE_LIMIT`.
pub fn stability_structure(phi: &StabilityField) -> PairwiseMap {
    stability_structure_with_limit(&phi.phi, MATERIALIZE_LIMIT)
}

pub fn stability_structure_with_limit(phi: &[f64], limit: usize) -> PairwiseMap {
    let n = phi.len();
    let lazy = PairwiseMap {
        n,
        kind: PairwiseKind::Stability,
        storage: Storage::Differences(phi.to_vec()),
    };
    if n > limit {
        return lazy;
    }
    PairwiseMap::dense(n, PairwiseKind::Stability, lazy.to_dense())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::advection::{flow_map, BoundaryPolicy};
    use crate::flowfield::FlowField;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const EXTRA: BoundaryPolicy = BoundaryPolicy::Extrapolate;

    fn saddle_disp(rate: f64) -> DisplacementField {
        let f = FlowField::from_fn(128, 128, |x, y| (rate * (x - 63.5), -rate * (y - 63.5)));
        flow_map(&f, GridSpec::new(32, 32), 50, 1.0, EXTRA).unwrap()
    }

    #[test]
    fn uniform_and_zero_displacement_give_identity() {
        for f in [FlowField::uniform(60, 40, 0.7, -0.3), FlowField::zeros(60, 40)] {
            let d = flow_map(&f, GridSpec::new(10, 8), 50, 1.0, EXTRA).unwrap();
            for i in 0..d.seeds.len() {
                let j = jacobian(&d, i).unwrap();
                assert!((j[0][0] - 1.0).abs() < 1e-12 && (j[1][1] - 1.0).abs() < 1e-12);
                assert!(j[0][1].abs() < 1e-12 && j[1][0].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn saddle_jacobian_is_exponential() {
        let d = saddle_disp(0.1);
        let (ex, ey) = (5f64.exp(), (-5f64).exp());
        for i in [0, 17, 500, 1023] {
            let j = jacobian(&d, i).unwrap();
            assert!((j[0][0] / ex - 1.0).abs() < 0.02, "{j:?}");
            assert!((j[1][1] / ey - 1.0).abs() < 0.02, "{j:?}");
            assert!(j[0][1].abs() < 1e-9 && j[1][0].abs() < 1e-9);
        }
    }

    #[test]
    fn small_grid_is_rejected() {
        let f = FlowField::zeros(10, 10);
        let d = flow_map(&f, GridSpec::new(2, 5), 5, 1.0, EXTRA).unwrap();
        assert!(matches!(jacobian(&d, 0), Err(Error::Range(_))));
    }

    #[test]
    fn ftle_closed_forms() {
        assert_eq!(ftle(&[[1.0, 0.0], [0.0, 1.0]], 50.0), 0.0);
        let j = [[5f64.exp(), 0.0], [0.0, (-5f64).exp()]];
        assert!((ftle(&j, 50.0) - 0.1).abs() < 1e-15);
        assert!((ftle(&[[2.0, 0.0], [0.0, 2.0]], 1.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn ftle_floor_for_collapsed_tensor() {
        let z = [[0.0, 0.0], [0.0, 0.0]];
        assert_eq!(try_ftle(&z, 50.0), None);
        assert_eq!(ftle(&z, 50.0), FTLE_EPS.ln() / 50.0);
    }

    #[test]
    fn ftle_of_rotation_matrix_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let a: f64 = rng.gen_range(-3.2..3.2);
            let j = [[a.cos(), -a.sin()], [a.sin(), a.cos()]];
            assert!(ftle(&j, 10.0).abs() < 1e-15);
        }
    }

    #[test]
    fn field_values_for_simple_flows() {
        let d = flow_map(&FlowField::zeros(30, 30), GridSpec::new(6, 6), 10, 1.0, EXTRA).unwrap();
        let s = ftle_field(&d).unwrap();
        assert!(s.phi.iter().all(|&p| p == 0.0));
        assert!(s.floored.is_empty());

        let s = ftle_field(&saddle_disp(0.1)).unwrap();
        assert!(s.phi.iter().all(|&p| (p - 0.1).abs() <= 0.005));
    }

    #[test]
    fn structure_of_two_particles() {
        let m = stability_structure_with_limit(&[0.2, 0.5], 10);
        assert!(m.is_materialized());
        assert_eq!(m.to_dense(), vec![0.0, 0.2 - 0.5, 0.5 - 0.2, 0.0]);
        let c = stability_structure_with_limit(&[0.3; 5], 10);
        assert!(c.to_dense().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn lazy_rows_match_materialized() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let phi: Vec<f64> = (0..100).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dense = stability_structure_with_limit(&phi, 4096);
        let lazy = stability_structure_with_limit(&phi, 10);
        assert!(!lazy.is_materialized());
        assert_eq!(dense.to_dense(), lazy.to_dense());
        for i in 0..100 {
            assert_eq!(dense.row(i), lazy.row(i));
            for j in 0..100 {
                assert_eq!(dense.get(i, j), -dense.get(j, i));
            }
        }
    }
}
