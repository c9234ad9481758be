//! Manifold ranking over the feature graph.
//!
//! Feature rows are linked into a self-tuned kNN graph `W`, normalized to
//! `L = D^{-1/2} W D^{-1/2}` and ranked by solving `(I - alpha L) c = y` for each
//! query indicator `y`. The operator is what the ranking literature sometimes calls
//! the normalized Laplacian, although it is the normalized adjacency (the usual
//! Laplacian is `I - L`).

mod extrema;
mod features;
mod graph;
mod solve;

pub use extrema::{extract_extrema, regions_from_mask, ExtremaResult, Polarity, Region, RegionSet, DEGENERATE_SPREAD};
pub use features::{assemble_features, FeatureSet};
pub use graph::{build_affinity, knn_graph, normalized_operator, AffinityGraph, Neighbors, NormalizedOperator};
pub use solve::{Cholesky, RankSolver, RESIDUAL_TOL};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Averaged rank scores, one per operator node.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub c: Vec<f64>,
    pub alpha: f64,
    pub m: usize,
}

/// Rank scores for a single query: `(I - alpha L)^{-1} e_query`.
pub fn rank(op: &NormalizedOperator, query: usize, alpha: f64) -> Result<ScoreVector> {
    if query >= op.n() {
        return Err(Error::Parameter(format!("query {query} out of range for {} nodes", op.n())));
    }
    let solver = RankSolver::new(op, alpha)?;
    Ok(ScoreVector {
        c: solver.rank(query)?,
        alpha,
        m: 1,
    })
}

/// Replaces each score by the mean over its class. `class[i]` is any label shared by
/// nodes that must score alike, typically from [`FeatureSet::duplicate_classes`].
///
/// Nodes with identical features are interchangeable, but kNN tie-breaking by index
/// singles some of them out as hubs; averaging removes that dependence on node order.
pub fn average_over_classes(c: &mut [f64], class: &[usize]) {
    assert_eq!(c.len(), class.len());
    let mut sum: std::collections::BTreeMap<usize, (f64, usize)> = Default::default();
    for (&x, &k) in c.iter().zip(class) {
        let e = sum.entry(k).or_default();
        e.0 += x;
        e.1 += 1;
    }
    for (x, k) in c.iter_mut().zip(class) {
        let (s, cnt) = sum[k];
        *x = s / cnt as f64;
    }
}

/// `m` distinct node indices drawn uniformly, deterministic in `seed`.
pub fn sample_queries(n_active: usize, m: usize, seed: u64) -> Result<Vec<usize>> {
    if m == 0 || m > n_active {
        return Err(Error::Parameter(format!(
            "cannot draw {m} distinct queries from {n_active} nodes"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, n_active, m).into_vec())
}

/// Mean of the per-query rank vectors. The factorization is built once and the
/// sum runs over queries in ascending index order, so the result does not depend
/// on the order `queries` is given in.
pub fn aggregate_ranks(op: &NormalizedOperator, queries: &[usize], alpha: f64) -> Result<ScoreVector> {
    let solver = RankSolver::new(op, alpha)?;
    aggregate_with(&solver, queries)
}

pub fn aggregate_with(solver: &RankSolver<'_>, queries: &[usize]) -> Result<ScoreVector> {
    if queries.is_empty() {
        return Err(Error::Parameter("no queries to rank".into()));
    }
    let n = solver.n();
    if let Some(q) = queries.iter().find(|&&q| q >= n) {
        return Err(Error::Parameter(format!("query {q} out of range for {n} nodes")));
    }
    let mut sorted = queries.to_vec();
    sorted.sort_unstable();
    let mut total = vec![0.0; n];
    for &q in &sorted {
        let c = solver.rank(q)?;
        for (t, x) in total.iter_mut().zip(&c) {
            *t += x;
        }
    }
    let m = sorted.len();
    total.iter_mut().for_each(|x| *x /= m as f64);
    Ok(ScoreVector {
        c: total,
        alpha: solver.alpha(),
        m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node() -> NormalizedOperator {
        NormalizedOperator {
            nodes: vec![0, 1],
            degree: vec![1.0, 1.0],
            adj: vec![vec![(1, 1.0)], vec![(0, 1.0)]],
        }
    }

    #[test]
    fn alpha_zero_returns_indicator() {
        let s = rank(&two_node(), 1, 0.0).unwrap();
        assert_eq!(s.c, vec![0.0, 1.0]);
    }

    #[test]
    fn two_node_hand_case() {
        // (I - 0.5 [[0,1],[1,0]])^{-1} = (1/0.75) [[1, 0.5], [0.5, 1]]
        let s = rank(&two_node(), 0, 0.5).unwrap();
        assert!((s.c[0] - 4.0 / 3.0).abs() < 1e-12);
        assert!((s.c[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn neighbor_score_grows_with_alpha() {
        let mut last = -1.0;
        for k in 0..=9 {
            let c = rank(&two_node(), 0, k as f64 * 0.1).unwrap().c;
            assert!(c[1] > last);
            last = c[1];
        }
    }

    #[test]
    fn queries_are_distinct_and_reproducible() {
        let a = sample_queries(500, 100, 9).unwrap();
        let b = sample_queries(500, 100, 9).unwrap();
        assert_eq!(a, b);
        let mut s = a.clone();
        s.sort_unstable();
        s.dedup();
        assert_eq!(s.len(), 100);
        let mut all = sample_queries(20, 20, 1).unwrap();
        all.sort_unstable();
        assert_eq!(all, (0..20).collect::<Vec<_>>());
        assert!(sample_queries(5, 6, 0).is_err());
    }

    #[test]
    fn single_query_aggregate_equals_rank() {
        let op = two_node();
        let a = aggregate_ranks(&op, &[1], 0.7).unwrap();
        assert_eq!(a.c, rank(&op, 1, 0.7).unwrap().c);
    }
}
