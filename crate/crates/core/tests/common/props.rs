//! Randomized invariant checks shared by the property tests and the acceptance run.
//! Each check draws 100 instances from a fixed seed and panics on the first violation.

use crowdsal::advection::{flow_map, BoundaryPolicy};
use crowdsal::eval::{f_measure, match_detections, overlap, Category, CategoryCounts, GroundTruth, TruthEntry};
use crowdsal::flowfield::{downsample_to_grid, mean_flow, read_flo, write_flo, FlowField, FlowSequence, GridSpec};
use crowdsal::phase::{phase_structure, static_mask};
use crowdsal::ranking::{
    aggregate_ranks, assemble_features, build_affinity, knn_graph, normalized_operator, FeatureSet, RankSolver,
};
use crowdsal::stability::{ftle_field, stability_structure_with_limit};
use crowdsal::Rect;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const INSTANCES: usize = 100;

pub type Check = fn();

pub fn all() -> Vec<(&'static str, Check)> {
    vec![
        ("mean flow is linear", mean_flow_is_linear),
        ("downsampling preserves the global mean", downsample_preserves_mean),
        (".flo round trip is exact at f32", flo_round_trip),
        ("FTLE ignores constant velocity offsets", ftle_translation_invariant),
        ("uniform flow has zero FTLE", uniform_flow_zero_ftle),
        ("stability structure is antisymmetric", stability_antisymmetric),
        ("phase structure is scale invariant", phase_scale_invariant),
        ("phase structure is rotation invariant", phase_rotation_invariant),
        ("phase structure is symmetric and bounded", phase_symmetric_bounded),
        ("features lie in [0, 1]", features_bounded),
        ("affinity is symmetric with entries in [0, 1]", affinity_bounds),
        ("normalized operator has spectral radius <= 1", operator_spectrum),
        ("I - alpha L is positive definite", system_spd),
        ("rank scores are permutation equivariant", ranking_permutation_equivariant),
        ("IoU is symmetric and bounded", iou_bounds),
        ("matching is one-to-one and F is bounded", matching_consistent),
    ]
}

fn rng(tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x5eed_0000 + tag)
}

fn random_field(rng: &mut ChaCha8Rng, w: usize, h: usize) -> FlowField {
    FlowField::from_fn(w, h, |_, _| (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
}

fn random_features(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> FeatureSet {
    FeatureSet::from_rows((0..n).map(|_| (0..dim).map(|_| rng.gen::<f64>()).collect()).collect()).unwrap()
}

pub fn mean_flow_is_linear() {
    let mut r = rng(1);
    for _ in 0..INSTANCES {
        let (w, h, t) = (r.gen_range(2..9), r.gen_range(2..9), r.gen_range(1..6));
        let a: Vec<_> = (0..t).map(|_| random_field(&mut r, w, h)).collect();
        let b: Vec<_> = (0..t).map(|_| random_field(&mut r, w, h)).collect();
        let (p, q) = (r.gen_range(-3.0..3.0), r.gen_range(-3.0..3.0));
        let mix: Vec<_> = a
            .iter()
            .zip(&b)
            .map(|(fa, fb)| {
                let u = fa.u().iter().zip(fb.u()).map(|(x, y)| p * x + q * y).collect();
                let v = fa.v().iter().zip(fb.v()).map(|(x, y)| p * x + q * y).collect();
                FlowField::new(w, h, u, v).unwrap()
            })
            .collect();
        let ma = mean_flow(&FlowSequence::new(a, 25.0).unwrap(), 0, t).unwrap();
        let mb = mean_flow(&FlowSequence::new(b, 25.0).unwrap(), 0, t).unwrap();
        let mm = mean_flow(&FlowSequence::new(mix, 25.0).unwrap(), 0, t).unwrap();
        for i in 0..w * h {
            let want = p * ma.u()[i] + q * mb.u()[i];
            assert!((mm.u()[i] - want).abs() <= 1e-12 * (1.0 + want.abs()));
        }
    }
}

pub fn downsample_preserves_mean() {
    let mut r = rng(2);
    for _ in 0..INSTANCES {
        let (cols, rows) = (r.gen_range(2..6), r.gen_range(2..6));
        let (bw, bh) = (r.gen_range(1..5), r.gen_range(1..5));
        let f = random_field(&mut r, cols * bw, rows * bh);
        let g = downsample_to_grid(&f, GridSpec::new(cols, rows)).unwrap();
        let fm = f.u().iter().sum::<f64>() / f.len() as f64;
        let gm = g.u().iter().sum::<f64>() / g.len() as f64;
        assert!((fm - gm).abs() <= 1e-12);
    }
}

pub fn flo_round_trip() {
    let mut r = rng(3);
    for _ in 0..INSTANCES {
        let (w, h) = (r.gen_range(1..12), r.gen_range(1..12));
        let f = random_field(&mut r, w, h);
        let f32ed = f.map(|u, v| (u as f32 as f64, v as f32 as f64));
        let mut buf = Vec::new();
        write_flo(&f32ed, &mut buf).unwrap();
        assert_eq!(read_flo(buf.as_slice()).unwrap(), f32ed);
    }
}

pub fn ftle_translation_invariant() {
    let mut r = rng(4);
    for _ in 0..INSTANCES {
        let (a, b, c, d) = (
            r.gen_range(-0.05..0.05),
            r.gen_range(-0.05..0.05),
            r.gen_range(-0.05..0.05),
            r.gen_range(-0.05..0.05),
        );
        let (ou, ov) = (r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
        let base = FlowField::from_fn(32, 24, |x, y| (a * (x - 16.0) + b * (y - 12.0), c * (x - 16.0) + d * (y - 12.0)));
        let shifted = base.map(|u, v| (u + ou, v + ov));
        let grid = GridSpec::new(8, 6);
        let p0 = ftle_field(&flow_map(&base, grid, 20, 1.0, BoundaryPolicy::Extrapolate).unwrap()).unwrap();
        let p1 = ftle_field(&flow_map(&shifted, grid, 20, 1.0, BoundaryPolicy::Extrapolate).unwrap()).unwrap();
        for (x, y) in p0.phi.iter().zip(&p1.phi) {
            assert!((x - y).abs() <= 1e-9, "{x} vs {y}");
        }
    }
}

pub fn uniform_flow_zero_ftle() {
    let mut r = rng(5);
    for _ in 0..INSTANCES {
        let f = FlowField::uniform(r.gen_range(12..40), r.gen_range(12..40), r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0));
        let disp = flow_map(&f, GridSpec::new(4, 4), r.gen_range(1..30), 1.0, BoundaryPolicy::Extrapolate).unwrap();
        assert!(ftle_field(&disp).unwrap().phi.iter().all(|&p| p == 0.0));
    }
}

pub fn stability_antisymmetric() {
    let mut r = rng(6);
    for _ in 0..INSTANCES {
        let n = r.gen_range(1..60);
        let phi: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let dense = stability_structure_with_limit(&phi, usize::MAX);
        let lazy = stability_structure_with_limit(&phi, 0);
        for i in 0..n {
            for j in 0..n {
                assert_eq!(dense.get(i, j), -dense.get(j, i));
                assert_eq!(dense.get(i, j), lazy.get(i, j));
            }
        }
    }
}

fn phase_of(f: &FlowField) -> Vec<f64> {
    phase_structure(f, &static_mask(f, 1e-6)).to_dense()
}

pub fn phase_scale_invariant() {
    let mut r = rng(7);
    for _ in 0..INSTANCES {
        let f = random_field(&mut r, 6, 5);
        let base = phase_of(&f);
        let p2 = 2f64.powi(r.gen_range(-4..5));
        assert_eq!(phase_of(&f.map(|u, v| (p2 * u, p2 * v))), base);
        let c = r.gen_range(0.1..10.0);
        for (x, y) in phase_of(&f.map(|u, v| (c * u, c * v))).iter().zip(&base) {
            assert!((x - y).abs() <= 1e-12);
        }
    }
}

pub fn phase_rotation_invariant() {
    let mut r = rng(8);
    for _ in 0..INSTANCES {
        let f = random_field(&mut r, 6, 5);
        let (s, c) = r.gen_range(-3.1..3.1f64).sin_cos();
        let rot = f.map(|u, v| (c * u - s * v, s * u + c * v));
        for (x, y) in phase_of(&rot).iter().zip(&phase_of(&f)) {
            assert!((x - y).abs() <= 1e-12);
        }
    }
}

pub fn phase_symmetric_bounded() {
    let mut r = rng(9);
    for _ in 0..INSTANCES {
        let f = random_field(&mut r, 7, 4);
        let n = f.len();
        let m = phase_of(&f);
        for i in 0..n {
            assert_eq!(m[i * n + i], 0.0);
            for j in 0..n {
                assert_eq!(m[i * n + j], m[j * n + i]);
                assert!((0.0..=std::f64::consts::PI).contains(&m[i * n + j]));
            }
        }
    }
}

pub fn features_bounded() {
    let mut r = rng(10);
    for _ in 0..INSTANCES {
        let f = random_field(&mut r, 5, 4);
        let n = f.len();
        let mask: Vec<bool> = (0..n).map(|_| r.gen_bool(0.1)).collect();
        let phi: Vec<f64> = (0..n).map(|_| r.gen_range(-0.2..0.2)).collect();
        let s = stability_structure_with_limit(&phi, usize::MAX);
        let t = phase_structure(&f, &mask);
        if let Ok(fs) = assemble_features(&s, &t, &mask) {
            assert!(fs.as_slice().iter().all(|x| (0.0..=1.0).contains(x)));
            assert_eq!(fs.dim(), 2 * fs.n());
        }
    }
}

pub fn affinity_bounds() {
    let mut r = rng(11);
    for _ in 0..INSTANCES {
        let n = r.gen_range(10..60);
        let fs = random_features(&mut r, n, 4);
        let w = build_affinity(&knn_graph(&fs, r.gen_range(1..8)).unwrap()).to_dense();
        for i in 0..n {
            assert_eq!(w[i * n + i], 0.0);
            for j in 0..n {
                assert_eq!(w[i * n + j], w[j * n + i]);
                assert!((0.0..=1.0).contains(&w[i * n + j]));
            }
        }
    }
}

fn operator_matrix(r: &mut ChaCha8Rng) -> (crowdsal::ranking::NormalizedOperator, DMatrix<f64>) {
    let n = r.gen_range(10..80);
    let fs = random_features(r, n, 3);
    let op = normalized_operator(&build_affinity(&knn_graph(&fs, r.gen_range(1..8)).unwrap())).unwrap();
    let m = DMatrix::from_row_slice(op.n(), op.n(), &op.to_dense());
    (op, m)
}

pub fn operator_spectrum() {
    let mut r = rng(12);
    for _ in 0..INSTANCES {
        let (_, l) = operator_matrix(&mut r);
        assert!((&l - l.transpose()).abs().max() == 0.0);
        let eig = SymmetricEigen::new(l).eigenvalues;
        assert!(eig.iter().all(|e| e.abs() <= 1.0 + 1e-10));
    }
}

pub fn system_spd() {
    let mut r = rng(13);
    for _ in 0..INSTANCES {
        let (op, l) = operator_matrix(&mut r);
        let alpha = r.gen_range(0.0..0.999);
        let a = DMatrix::identity(op.n(), op.n()) - l * alpha;
        assert!(SymmetricEigen::new(a).eigenvalues.min() > 0.0);
        assert!(RankSolver::new(&op, alpha).is_ok());
    }
}

pub fn ranking_permutation_equivariant() {
    let mut r = rng(14);
    for _ in 0..INSTANCES {
        let n = r.gen_range(10..50);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| r.gen::<f64>()).collect()).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, r.gen_range(0..=i));
        }
        // permuted[perm[i]] = rows[i]
        let mut permuted = vec![Vec::new(); n];
        for (i, row) in rows.iter().enumerate() {
            permuted[perm[i]] = row.clone();
        }
        let k = r.gen_range(2..6);
        let op_a = normalized_operator(&build_affinity(&knn_graph(&FeatureSet::from_rows(rows).unwrap(), k).unwrap())).unwrap();
        let op_b =
            normalized_operator(&build_affinity(&knn_graph(&FeatureSet::from_rows(permuted).unwrap(), k).unwrap())).unwrap();
        assert_eq!(op_a.n(), n);
        let queries: Vec<usize> = (0..n).filter(|_| r.gen_bool(0.3)).chain([0]).collect();
        let mapped: Vec<usize> = queries.iter().map(|&q| perm[q]).collect();
        let ca = aggregate_ranks(&op_a, &queries, 0.9).unwrap().c;
        let cb = aggregate_ranks(&op_b, &mapped, 0.9).unwrap().c;
        for i in 0..n {
            assert!((ca[i] - cb[perm[i]]).abs() <= 1e-9 * (1.0 + ca[i].abs()));
        }
    }
}

fn random_rect(r: &mut ChaCha8Rng) -> Rect {
    Rect::new(r.gen_range(0..80), r.gen_range(0..80), r.gen_range(1..40), r.gen_range(1..40))
}

pub fn iou_bounds() {
    let mut r = rng(15);
    for _ in 0..INSTANCES {
        let (a, b) = (random_rect(&mut r), random_rect(&mut r));
        let o = overlap(&a, &b);
        assert_eq!(o, overlap(&b, &a));
        assert!((0.0..=1.0).contains(&o));
        assert_eq!(overlap(&a, &a), 1.0);
    }
}

pub fn matching_consistent() {
    let mut r = rng(16);
    for _ in 0..INSTANCES {
        let dets: Vec<Rect> = (0..r.gen_range(0..8)).map(|_| random_rect(&mut r)).collect();
        let truth = GroundTruth {
            width: 120,
            height: 120,
            entries: (0..r.gen_range(0..8))
                .map(|i| TruthEntry {
                    bbox: random_rect(&mut r),
                    category: Category::ALL[i % 3],
                })
                .collect(),
        };
        let rep = match_detections(&dets, &truth, 0.5);
        let mut seen_d = std::collections::HashSet::new();
        let mut seen_t = std::collections::HashSet::new();
        for p in &rep.pairing {
            assert!(seen_d.insert(p.detection) && seen_t.insert(p.truth));
            assert!(p.iou > 0.5);
        }
        let t: CategoryCounts = rep.total;
        assert_eq!(t.labelled, truth.entries.len());
        assert_eq!(t.detected + t.missed, t.labelled);
        assert_eq!(t.detected + t.false_detections, dets.len());
        assert!((0.0..=1.0).contains(&f_measure(&t)));
    }
}
