use crate::error::{Error, Result};

use super::features::FeatureSet;

/// Squared Euclidean distance with a fixed eight-lane summation order.
#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ta, tb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            let d = x[k] - y[k];
            acc[k] += d * d;
        }
    }
    for (k, (x, y)) in ta.iter().zip(tb).enumerate() {
        let d = x - y;
        acc[k] += d * d;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]))
}

/// Neighbor lists from a brute-force kNN search.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbors {
    pub k: usize,
    /// `lists[i]` holds the `k` nearest `(node, distance)` pairs of node `i`, nearest
    /// first, ties broken by lower node index.
    pub lists: Vec<Vec<(usize, f64)>>,
    /// Smallest nonzero distance from each node to any other node.
    pub min_nonzero: Vec<Option<f64>>,
}

impl Neighbors {
    pub fn n(&self) -> usize {
        self.lists.len()
    }

    /// Union-symmetrized edge set: `edges[i]` lists `(j, dist)` sorted by `j`.
    pub fn symmetrized(&self) -> Vec<Vec<(usize, f64)>> {
        let mut edges: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.n()];
        for (i, list) in self.lists.iter().enumerate() {
            for &(j, d) in list {
                edges[i].push((j, d));
                edges[j].push((i, d));
            }
        }
        for e in &mut edges {
            e.sort_by(|a, b| a.0.cmp(&b.0));
            e.dedup_by_key(|x| x.0);
        }
        edges
    }
}

/// Exact kNN over Euclidean feature distance.
pub fn knn_graph(features: &FeatureSet, k: usize) -> Result<Neighbors> {
    let n = features.n();
    if k == 0 || k >= n {
        return Err(Error::Parameter(format!("k = {k} must satisfy 1 <= k < n = {n}")));
    }
    // Full distance matrix, filled in tiles so each row pair is computed once.
    const TILE: usize = 16;
    let mut d2 = vec![0.0f64; n * n];
    for bi in (0..n).step_by(TILE) {
        for bj in (bi..n).step_by(TILE) {
            for i in bi..(bi + TILE).min(n) {
                let ri = features.row(i);
                for j in bj.max(i + 1)..(bj + TILE).min(n) {
                    let d = sq_dist(ri, features.row(j));
                    d2[i * n + j] = d;
                    d2[j * n + i] = d;
                }
            }
        }
    }
    let mut lists = Vec::with_capacity(n);
    let mut min_nonzero = Vec::with_capacity(n);
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        let row = &d2[i * n..(i + 1) * n];
        order.clear();
        order.extend((0..n).filter(|&j| j != i));
        let cmp = |a: &usize, b: &usize| row[*a].total_cmp(&row[*b]).then(a.cmp(b));
        order.select_nth_unstable_by(k - 1, cmp);
        let head = &mut order[..k];
        head.sort_by(cmp);
        lists.push(head.iter().map(|&j| (j, row[j].sqrt())).collect());
        min_nonzero.push(
            row.iter()
                .enumerate()
                .filter(|&(j, &d)| j != i && d > 0.0)
                .map(|(_, &d)| d)
                .min_by(f64::total_cmp)
                .map(f64::sqrt),
        );
    }
    Ok(Neighbors {
        k,
        lists,
        min_nonzero,
    })
}

/// Symmetric self-tuned affinity over the symmetrized kNN edges.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityGraph {
    pub k: usize,
    /// `adj[i]` lists `(j, W_ij)` sorted by `j`; no self loops.
    pub adj: Vec<Vec<(usize, f64)>>,
    pub sigma: Vec<f64>,
    /// Nodes whose local scale was patched because the k-th neighbor coincided.
    pub patched: Vec<usize>,
}

impl AffinityGraph {
    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adj[i]
            .binary_search_by_key(&j, |e| e.0)
            .map_or(0.0, |p| self.adj[i][p].1)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n();
        let mut w = vec![0.0; n * n];
        for (i, row) in self.adj.iter().enumerate() {
            for &(j, x) in row {
                w[i * n + j] = x;
            }
        }
        w
    }
}

/// `W_ij = exp(-d_ij^2 / (sigma_i sigma_j))` with `sigma_i` the distance to the k-th
/// neighbor. A zero scale falls back to the node's smallest nonzero distance, then to
/// the mean of the positive scales, then to 1.
pub fn build_affinity(neighbors: &Neighbors) -> AffinityGraph {
    let k = neighbors.k;
    let mut sigma: Vec<f64> = neighbors.lists.iter().map(|l| l[k - 1].1).collect();
    let mut patched = Vec::new();
    let mut unresolved = Vec::new();
    for (i, s) in sigma.iter_mut().enumerate() {
        if *s > 0.0 {
            continue;
        }
        patched.push(i);
        match neighbors.min_nonzero[i] {
            Some(d) => *s = d,
            None => unresolved.push(i),
        }
    }
    if !unresolved.is_empty() {
        let positive: Vec<f64> = sigma.iter().copied().filter(|&s| s > 0.0).collect();
        let fallback = if positive.is_empty() {
            1.0
        } else {
            positive.iter().sum::<f64>() / positive.len() as f64
        };
        for i in unresolved {
            sigma[i] = fallback;
        }
    }
    if !patched.is_empty() {
        log::info!("patched local scale of {} coincident nodes", patched.len());
    }
    let adj = neighbors
        .symmetrized()
        .into_iter()
        .enumerate()
        .map(|(i, edges)| {
            edges
                .into_iter()
                .map(|(j, d)| (j, (-(d * d) / (sigma[i] * sigma[j])).exp()))
                .collect()
        })
        .collect();
    AffinityGraph {
        k,
        adj,
        sigma,
        patched,
    }
}

/// Sparse `D^{-1/2} W D^{-1/2}` over the nodes with positive degree.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedOperator {
    /// Operator node -> affinity-graph node.
    pub nodes: Vec<usize>,
    pub degree: Vec<f64>,
    pub adj: Vec<Vec<(usize, f64)>>,
}

impl NormalizedOperator {
    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.adj) {
            *o = row.iter().map(|&(j, w)| w * x[j]).sum();
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n();
        let mut l = vec![0.0; n * n];
        for (i, row) in self.adj.iter().enumerate() {
            for &(j, x) in row {
                l[i * n + j] = x;
            }
        }
        l
    }
}

pub fn normalized_operator(w: &AffinityGraph) -> Result<NormalizedOperator> {
    let degree_all: Vec<f64> = w.adj.iter().map(|r| r.iter().map(|e| e.1).sum()).collect();
    let nodes: Vec<usize> = (0..w.n()).filter(|&i| degree_all[i] > 0.0).collect();
    if nodes.is_empty() {
        return Err(Error::DegenerateGraph("affinity matrix is all zero".into()));
    }
    if nodes.len() < w.n() {
        log::warn!("removed {} isolated nodes", w.n() - nodes.len());
    }
    let mut remap = vec![usize::MAX; w.n()];
    for (new, &old) in nodes.iter().enumerate() {
        remap[old] = new;
    }
    let inv_sqrt: Vec<f64> = degree_all.iter().map(|d| if *d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }).collect();
    let adj = nodes
        .iter()
        .map(|&i| {
            w.adj[i]
                .iter()
                .filter(|e| e.1 > 0.0)
                .map(|&(j, x)| (remap[j], x * (inv_sqrt[i] * inv_sqrt[j])))
                .collect()
        })
        .collect();
    Ok(NormalizedOperator {
        degree: nodes.iter().map(|&i| degree_all[i]).collect(),
        nodes,
        adj,
    })
}
