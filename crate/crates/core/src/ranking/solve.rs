use crate::error::{Error, Result};

use super::graph::NormalizedOperator;

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ta, tb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    for (k, (x, y)) in ta.iter().zip(tb).enumerate() {
        acc[k] += x * y;
    }
    (acc[0] + acc[2]) + (acc[1] + acc[3])
}

/// Dense lower-triangular Cholesky factor, row-major.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Factors the symmetric matrix given by its lower triangle (row-major, `n x n`).
    /// Fails on the first non-positive pivot.
    pub fn factor(mut a: Vec<f64>, n: usize) -> Result<Self> {
        assert_eq!(a.len(), n * n);
        for i in 0..n {
            for j in 0..=i {
                let (head, tail) = a.split_at_mut(i * n);
                let row_i = &mut tail[..n];
                let s = if j < i {
                    let row_j = &head[j * n..j * n + j];
                    row_i[j] - dot(&row_i[..j], row_j)
                } else {
                    row_i[i] - dot(&row_i[..i], &row_i[..i])
                };
                if j == i {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::Numerical(format!(
                            "matrix is not positive definite: pivot {i} = {s:e}"
                        )));
                    }
                    row_i[i] = s.sqrt();
                } else {
                    row_i[j] = s / head[j * n + j];
                }
            }
            for x in &mut a[i * n + i + 1..(i + 1) * n] {
                *x = 0.0;
            }
        }
        Ok(Self { n, l: a })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Solves `L L^T x = b`. Leading zeros in `b` are skipped.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let first = b.iter().position(|&x| x != 0.0).unwrap_or(n);
        let mut z = vec![0.0; n];
        for i in first..n {
            let row = &self.l[i * n..i * n + i];
            z[i] = (b[i] - dot(&row[first..], &z[first..i])) / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let xi = z[i] / self.l[i * n + i];
            z[i] = xi;
            let row = &self.l[i * n..i * n + i];
            for (zj, lij) in z[..i].iter_mut().zip(row) {
                *zj -= lij * xi;
            }
        }
        z
    }
}

/// Factorization of `I - alpha L`, shared by every query.
#[derive(Debug, Clone)]
pub struct RankSolver<'a> {
    op: &'a NormalizedOperator,
    alpha: f64,
    chol: Cholesky,
}

pub const RESIDUAL_TOL: f64 = 1e-8;

impl<'a> RankSolver<'a> {
    pub fn new(op: &'a NormalizedOperator, alpha: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::Parameter(format!("alpha = {alpha} must lie in [0, 1)")));
        }
        let n = op.n();
        let mut a = vec![0.0; n * n];
        for (i, row) in op.adj.iter().enumerate() {
            for &(j, x) in row {
                if j <= i {
                    a[i * n + j] = -alpha * x;
                }
            }
            a[i * n + i] += 1.0;
        }
        let chol = Cholesky::factor(a, n)?;
        Ok(Self { op, alpha, chol })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n(&self) -> usize {
        self.chol.n()
    }

    /// Solves `(I - alpha L) c = y` and checks the residual.
    pub fn solve(&self, y: &[f64]) -> Result<Vec<f64>> {
        let c = self.chol.solve(y);
        let mut lc = vec![0.0; c.len()];
        self.op.apply(&c, &mut lc);
        let res: f64 = c
            .iter()
            .zip(&lc)
            .zip(y)
            .map(|((ci, li), yi)| {
                let r = ci - self.alpha * li - yi;
                r * r
            })
            .sum::<f64>()
            .sqrt();
        let ynorm = y.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(res <= RESIDUAL_TOL * ynorm.max(f64::MIN_POSITIVE)) {
            return Err(Error::Numerical(format!(
                "ranking solve residual {res:e} exceeds {RESIDUAL_TOL:e} * |y|"
            )));
        }
        Ok(c)
    }

    /// Rank scores for a single query node.
    pub fn rank(&self, query: usize) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.n()];
        y[query] = 1.0;
        self.solve(&y)
    }
}
