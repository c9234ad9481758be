use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::stability::{PairwiseKind, PairwiseMap};

/// Per-particle feature rows: the scaled stability-structure row followed by the
/// scaled phase-structure row, restricted to non-static particles.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    n: usize,
    dim: usize,
    rows: Vec<f64>,
    /// Feature row -> particle (grid) index.
    pub index_map: Vec<usize>,
    pub diagnostics: Vec<String>,
}

impl FeatureSet {
    /// Builds a set from explicit rows, mainly for tests and tools.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Parameter("feature rows differ in length".into()));
        }
        Ok(Self {
            n,
            dim,
            rows: rows.into_iter().flatten().collect(),
            index_map: (0..n).collect(),
            diagnostics: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rows
    }

    /// True when every row equals the first one.
    /// For each row, the index of the first row bit-identical to it.
    pub fn duplicate_classes(&self) -> Vec<usize> {
        use std::collections::hash_map::{DefaultHasher, Entry};
        use std::collections::HashMap;
        use std::hash::{Hash, Hasher};

        let mut buckets: HashMap<u64, Vec<usize>> = HashMap::new();
        let mut class = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let row = self.row(i);
            let mut h = DefaultHasher::new();
            row.iter().for_each(|x| x.to_bits().hash(&mut h));
            let firsts = match buckets.entry(h.finish()) {
                Entry::Occupied(e) => e.into_mut(),
                Entry::Vacant(e) => e.insert(Vec::new()),
            };
            let same = |&&f: &&usize| self.row(f).iter().zip(row).all(|(a, b)| a.to_bits() == b.to_bits());
            match firsts.iter().find(same) {
                Some(&f) => class.push(f),
                None => {
                    firsts.push(i);
                    class.push(i);
                }
            }
        }
        class
    }

    pub fn is_degenerate(&self) -> bool {
        (1..self.n).all(|i| self.row(i) == self.row(0))
    }
}

/// Min-max scales the stability structure to [0, 1] (global bounds over the active
/// block), divides phase shifts by pi and drops static particles' rows and columns.
pub fn assemble_features(
    stability: &PairwiseMap,
    phase: &PairwiseMap,
    static_mask: &[bool],
) -> Result<FeatureSet> {
    let n_total = stability.n();
    if phase.n() != n_total || static_mask.len() != n_total {
        return Err(Error::Parameter(format!(
            "structure sizes differ: stability {}, phase {}, mask {}",
            n_total,
            phase.n(),
            static_mask.len()
        )));
    }
    debug_assert_eq!(stability.kind(), PairwiseKind::Stability);
    debug_assert_eq!(phase.kind(), PairwiseKind::Phase);
    let active: Vec<usize> = (0..n_total).filter(|&i| !static_mask[i]).collect();
    let n = active.len();
    let dim = 2 * n;
    let mut diagnostics = Vec::new();

    let mut buf = vec![0.0; n_total];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &i in &active {
        stability.row_into(i, &mut buf);
        for &j in &active {
            lo = lo.min(buf[j]);
            hi = hi.max(buf[j]);
        }
    }
    let range = hi - lo;
    let constant = !(range > 0.0);
    if constant && n > 0 {
        diagnostics.push("stability structure is constant; using 0.5 for all stability features".into());
        log::warn!("degenerate scene: constant stability structure");
    }

    let mut rows = vec![0.0; n * dim];
    let mut theta = vec![0.0; n_total];
    for (r, &i) in active.iter().enumerate() {
        let out = &mut rows[r * dim..(r + 1) * dim];
        stability.row_into(i, &mut buf);
        phase.row_into(i, &mut theta);
        for (c, &j) in active.iter().enumerate() {
            out[c] = if constant { 0.5 } else { ((buf[j] - lo) / range).clamp(0.0, 1.0) };
            out[n + c] = (theta[j] / PI).clamp(0.0, 1.0);
        }
    }
    Ok(FeatureSet {
        n,
        dim,
        rows,
        index_map: active,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowfield::FlowField;
    use crate::phase::{phase_structure, static_mask};
    use crate::stability::stability_structure_with_limit;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_particle_scaling() {
        let s = stability_structure_with_limit(&[0.0, 1.0], 10);
        let f = FlowField::uniform(2, 1, 1.0, 0.0);
        let th = phase_structure(&f, &[false, false]);
        let fs = assemble_features(&s, &th, &[false, false]).unwrap();
        assert_eq!(fs.dim(), 4);
        assert_eq!(fs.row(0), &[0.5, 0.0, 0.0, 0.0]);
        assert_eq!(fs.row(1), &[1.0, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn identical_particles_identical_rows() {
        let s = stability_structure_with_limit(&[0.3, 0.3, 0.9], 10);
        let f = FlowField::new(3, 1, vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]).unwrap();
        let th = phase_structure(&f, &[false; 3]);
        let fs = assemble_features(&s, &th, &[false; 3]).unwrap();
        assert_eq!(fs.row(0), fs.row(1));
        assert_ne!(fs.row(0), fs.row(2));
    }

    #[test]
    fn constant_stability_is_flagged() {
        let s = stability_structure_with_limit(&[0.2; 4], 10);
        let f = FlowField::uniform(2, 2, 1.0, 0.0);
        let th = phase_structure(&f, &[false; 4]);
        let fs = assemble_features(&s, &th, &[false; 4]).unwrap();
        assert_eq!(fs.diagnostics.len(), 1);
        assert!(fs.row(2)[..4].iter().all(|&x| x == 0.5));
        assert!(fs.is_degenerate());
    }

    #[test]
    fn masked_particles_are_dropped() {
        let f = FlowField::new(3, 1, vec![1.0, 0.0, -1.0], vec![0.0; 3]).unwrap();
        let mask = static_mask(&f, 1e-6);
        let s = stability_structure_with_limit(&[0.0, 5.0, 1.0], 10);
        let th = phase_structure(&f, &mask);
        let fs = assemble_features(&s, &th, &mask).unwrap();
        assert_eq!(fs.n(), 2);
        assert_eq!(fs.index_map, vec![0, 2]);
        // S over active {0, 2}: entries {0, -1, 1, 0}
        assert_eq!(fs.row(0), &[0.5, 0.0, 0.0, 1.0]);
        assert_eq!(fs.row(1), &[1.0, 0.5, 1.0, 0.0]);
    }

    #[test]
    fn every_entry_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..20 {
            let n = rng.gen_range(2..40);
            let phi: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let f = FlowField::from_fn(n, 1, |_, _| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            let mask: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.1)).collect();
            let s = stability_structure_with_limit(&phi, 16);
            let th = phase_structure(&f, &mask);
            let fs = assemble_features(&s, &th, &mask).unwrap();
            assert!(fs.as_slice().iter().all(|x| (0.0..=1.0).contains(x)));
            assert_eq!(fs.dim(), 2 * fs.n());
        }
    }
}
