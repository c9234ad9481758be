//! Matching detected regions to ground truth and reporting detection counts.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Rect;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Crowding,
    SourceSink,
    LocalIrregularity,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Crowding, Category::SourceSink, Category::LocalIrregularity];

    /// Row label in the summary table.
    pub fn label(&self) -> &'static str {
        match self {
            Category::Crowding => "Crowding",
            Category::SourceSink => "Sources \\& Sinks",
            Category::LocalIrregularity => "Local Irregularity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthEntry {
    pub bbox: Rect,
    pub category: Category,
}

/// Ground-truth document: frame size plus a list of `[[region]]` entries with
/// `bbox = [x, y, w, h]` and `category`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub width: usize,
    pub height: usize,
    #[serde(default, rename = "region")]
    pub entries: Vec<TruthEntry>,
}

impl GroundTruth {
    pub fn from_toml(text: &str) -> Result<Self> {
        let gt: GroundTruth = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if let Some(e) = gt.entries.iter().find(|e| !e.bbox.fits_in(gt.width, gt.height)) {
            return Err(Error::Validation(vec![format!(
                "ground-truth box {:?} exceeds {}x{} frame",
                e.bbox, gt.width, gt.height
            )]));
        }
        Ok(gt)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("ground truth serializes")
    }
}

/// Intersection over union of two pixel rectangles; 0 if either is empty.
pub fn overlap(a: &Rect, b: &Rect) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

/// Counts for one category. `detections()` includes false detections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub labelled: usize,
    pub detected: usize,
    pub missed: usize,
    pub false_detections: usize,
}

impl CategoryCounts {
    /// Builds counts from the four table columns (labelled, detections, missed, false).
    pub fn from_table(labelled: usize, detections: usize, missed: usize, false_detections: usize) -> Result<Self> {
        let detected = labelled
            .checked_sub(missed)
            .filter(|&d| d + false_detections == detections)
            .ok_or_else(|| {
                Error::Parameter(format!(
                    "inconsistent row: {labelled} labelled, {detections} detections, {missed} missed, {false_detections} false"
                ))
            })?;
        Ok(Self {
            labelled,
            detected,
            missed,
            false_detections,
        })
    }

    pub fn detections(&self) -> usize {
        self.detected + self.false_detections
    }

    pub fn add(&mut self, o: &CategoryCounts) {
        self.labelled += o.labelled;
        self.detected += o.detected;
        self.missed += o.missed;
        self.false_detections += o.false_detections;
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0 or undefined.
pub fn f_measure(c: &CategoryCounts) -> f64 {
    let tp = c.detected as f64;
    let p_den = (c.detected + c.false_detections) as f64;
    let r_den = (c.detected + c.missed) as f64;
    if tp == 0.0 || p_den == 0.0 || r_den == 0.0 {
        return 0.0;
    }
    let (p, r) = (tp / p_den, tp / r_den);
    2.0 * p * r / (p + r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pairing {
    pub detection: usize,
    pub truth: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub category: Category,
    #[serde(flatten)]
    pub counts: CategoryCounts,
    pub f_measure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub categories: Vec<CategoryReport>,
    /// False detections that overlap no ground-truth region.
    pub unattributed_false: usize,
    pub total: CategoryCounts,
    pub f_measure: f64,
    #[serde(default)]
    pub pairing: Vec<Pairing>,
}

impl MatchReport {
    pub fn counts(&self, category: Category) -> CategoryCounts {
        self.categories
            .iter()
            .find(|c| c.category == category)
            .map(|c| c.counts)
            .unwrap_or_default()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report serializes")
    }
}

/// Greedy one-to-one matching in descending IoU order; a pair counts when its IoU
/// exceeds `thresh`. Unmatched detections are attributed to the category of the
/// ground-truth box they overlap most, if any.
pub fn match_detections(detections: &[Rect], truth: &GroundTruth, thresh: f64) -> MatchReport {
    let mut candidates = Vec::new();
    for (d, det) in detections.iter().enumerate() {
        for (g, gt) in truth.entries.iter().enumerate() {
            let iou = overlap(det, &gt.bbox);
            if iou > thresh {
                candidates.push(Pairing {
                    detection: d,
                    truth: g,
                    iou,
                });
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.iou
            .total_cmp(&a.iou)
            .then(a.detection.cmp(&b.detection))
            .then(a.truth.cmp(&b.truth))
    });
    let mut det_used = vec![false; detections.len()];
    let mut gt_used = vec![false; truth.entries.len()];
    let mut pairing = Vec::new();
    for c in candidates {
        if !det_used[c.detection] && !gt_used[c.truth] {
            det_used[c.detection] = true;
            gt_used[c.truth] = true;
            pairing.push(c);
        }
    }

    let mut counts = [CategoryCounts::default(); 3];
    let slot = |c: Category| Category::ALL.iter().position(|&x| x == c).unwrap();
    for (g, gt) in truth.entries.iter().enumerate() {
        let s = &mut counts[slot(gt.category)];
        s.labelled += 1;
        if gt_used[g] {
            s.detected += 1;
        } else {
            s.missed += 1;
        }
    }
    let mut unattributed_false = 0;
    for (d, det) in detections.iter().enumerate() {
        if det_used[d] {
            continue;
        }
        let best = truth
            .entries
            .iter()
            .map(|gt| (overlap(det, &gt.bbox), gt.category))
            .filter(|(iou, _)| *iou > 0.0)
            .max_by(|a, b| a.0.total_cmp(&b.0));
        match best {
            Some((_, cat)) => counts[slot(cat)].false_detections += 1,
            None => unattributed_false += 1,
        }
    }
    let mut total = CategoryCounts::default();
    counts.iter().for_each(|c| total.add(c));
    total.false_detections += unattributed_false;
    MatchReport {
        categories: Category::ALL
            .iter()
            .zip(counts)
            .map(|(&category, counts)| CategoryReport {
                category,
                counts,
                f_measure: f_measure(&counts),
            })
            .collect(),
        unattributed_false,
        f_measure: f_measure(&total),
        total,
        pairing,
    }
}

pub const TABLE_HEADER: &str = "Motion Category & Total # of Labelled Region & # of Detection & # of Missed Detection & # of False Detection \\\\";

/// One `&`-separated line per category in the column order of the header.
pub fn summary_table(rows: &[(Category, CategoryCounts)]) -> String {
    let mut out = String::from(TABLE_HEADER);
    out.push('\n');
    for (cat, c) in rows {
        let _ = writeln!(
            out,
            "{} & {} & {} & {} & {} \\\\",
            cat.label(),
            c.labelled,
            c.detections(),
            c.missed,
            c.false_detections,
        );
    }
    out
}

/// `label: F = x.xxx` per category, following the table.
pub fn f_measure_lines(rows: &[(Category, CategoryCounts)]) -> String {
    let mut out = String::new();
    for (cat, c) in rows {
        let _ = writeln!(out, "{}: F = {:.3}", cat.label(), f_measure(c));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn iou_basics() {
        let a = Rect::new(10, 10, 20, 20);
        assert_eq!(overlap(&a, &a), 1.0);
        assert_eq!(overlap(&a, &Rect::new(40, 40, 5, 5)), 0.0);
        let half = Rect::new(10, 10, 10, 20);
        assert_eq!(overlap(&half, &a), 0.5);
        assert_eq!(overlap(&Rect::new(0, 0, 0, 5), &a), 0.0);
    }

    #[test]
    fn iou_symmetric_and_monotone_in_translation() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..200 {
            let a = Rect::new(rng.gen_range(0..50), rng.gen_range(0..50), rng.gen_range(1..30), rng.gen_range(1..30));
            let b = Rect::new(rng.gen_range(0..50), rng.gen_range(0..50), rng.gen_range(1..30), rng.gen_range(1..30));
            assert_eq!(overlap(&a, &b), overlap(&b, &a));
            let mut last = overlap(&a, &a);
            for dx in 1..40 {
                let moved = Rect::new(a.x + dx, a.y, a.w, a.h);
                let o = overlap(&a, &moved);
                assert!(o <= last);
                last = o;
            }
        }
    }

    fn gt(entries: &[(Rect, Category)]) -> GroundTruth {
        GroundTruth {
            width: 200,
            height: 200,
            entries: entries.iter().map(|&(bbox, category)| TruthEntry { bbox, category }).collect(),
        }
    }

    #[test]
    fn single_match() {
        let r = Rect::new(5, 5, 20, 20);
        let rep = match_detections(&[r], &gt(&[(r, Category::Crowding)]), 0.5);
        assert_eq!(
            rep.counts(Category::Crowding),
            CategoryCounts { labelled: 1, detected: 1, missed: 0, false_detections: 0 }
        );
        assert_eq!(rep.f_measure, 1.0);
    }

    #[test]
    fn no_detections_all_missed() {
        let t = gt(&[
            (Rect::new(0, 0, 5, 5), Category::SourceSink),
            (Rect::new(10, 0, 5, 5), Category::SourceSink),
            (Rect::new(20, 0, 5, 5), Category::LocalIrregularity),
        ]);
        let rep = match_detections(&[], &t, 0.5);
        assert_eq!(rep.total.missed, 3);
        assert_eq!(rep.f_measure, 0.0);
    }

    #[test]
    fn threshold_is_strict() {
        let a = Rect::new(0, 0, 10, 20);
        let b = Rect::new(0, 0, 20, 20);
        let rep = match_detections(&[a], &gt(&[(b, Category::Crowding)]), 0.5);
        assert_eq!(rep.total.detected, 0);
        assert_eq!(rep.counts(Category::Crowding).false_detections, 1);
    }

    fn optimal_matches(dets: &[Rect], gts: &[Rect], thresh: f64) -> usize {
        fn go(d: usize, dets: &[Rect], gts: &[Rect], used: &mut Vec<bool>, thresh: f64) -> usize {
            if d == dets.len() {
                return 0;
            }
            let mut best = go(d + 1, dets, gts, used, thresh);
            for g in 0..gts.len() {
                if !used[g] && overlap(&dets[d], &gts[g]) > thresh {
                    used[g] = true;
                    best = best.max(1 + go(d + 1, dets, gts, used, thresh));
                    used[g] = false;
                }
            }
            best
        }
        go(0, dets, gts, &mut vec![false; gts.len()], thresh)
    }

    #[test]
    fn greedy_agrees_with_exhaustive_assignment() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut gaps = 0;
        for _ in 0..500 {
            let rect = |rng: &mut ChaCha8Rng| Rect::new(rng.gen_range(0..40), rng.gen_range(0..40), rng.gen_range(5..25), rng.gen_range(5..25));
            let dets: Vec<Rect> = (0..rng.gen_range(0..=6)).map(|_| rect(&mut rng)).collect();
            let gts: Vec<Rect> = (0..rng.gen_range(0..=6)).map(|_| rect(&mut rng)).collect();
            let truth = gt(&gts.iter().map(|&r| (r, Category::LocalIrregularity)).collect::<Vec<_>>());
            let rep = match_detections(&dets, &truth, 0.5);
            // one-to-one
            let mut ds: Vec<_> = rep.pairing.iter().map(|p| p.detection).collect();
            let mut gs: Vec<_> = rep.pairing.iter().map(|p| p.truth).collect();
            ds.sort_unstable();
            ds.dedup();
            gs.sort_unstable();
            gs.dedup();
            assert_eq!(ds.len(), rep.pairing.len());
            assert_eq!(gs.len(), rep.pairing.len());
            assert_eq!(rep.total.detected + rep.total.missed, gts.len());
            let opt = optimal_matches(&dets, &gts, 0.5);
            assert!(rep.total.detected <= opt);
            if opt != rep.total.detected {
                gaps += 1;
                eprintln!("greedy/optimal gap: greedy {} vs optimal {opt} for {dets:?} / {gts:?}", rep.total.detected);
            }
        }
        eprintln!("{gaps} greedy/optimal gap cases out of 500");
    }

    #[test]
    fn f_measure_values() {
        let perfect = CategoryCounts { labelled: 4, detected: 4, missed: 0, false_detections: 0 };
        assert_eq!(f_measure(&perfect), 1.0);
        let none = CategoryCounts { labelled: 4, detected: 0, missed: 4, false_detections: 0 };
        assert_eq!(f_measure(&none), 0.0);
        let crowd = CategoryCounts::from_table(13, 12, 1, 0).unwrap();
        assert!((f_measure(&crowd) - 24.0 / 25.0).abs() < 1e-15);
        assert!(CategoryCounts::from_table(43, 40, 2, 6).is_err());
    }

    #[test]
    fn f_measure_is_one_only_when_perfect() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..1000 {
            let c = CategoryCounts {
                labelled: 0,
                detected: rng.gen_range(0..5),
                missed: rng.gen_range(0..3),
                false_detections: rng.gen_range(0..3),
            };
            let f = f_measure(&c);
            assert!((0.0..=1.0).contains(&f));
            assert_eq!(f == 1.0, c.missed == 0 && c.false_detections == 0 && c.detected > 0);
        }
    }

    #[test]
    fn table_layout() {
        let rows = [(Category::Crowding, CategoryCounts::from_table(13, 12, 1, 0).unwrap())];
        let t = summary_table(&rows);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], TABLE_HEADER);
        assert_eq!(lines[1], "Crowding & 13 & 12 & 1 & 0 \\\\");
        assert_eq!(f_measure_lines(&rows), "Crowding: F = 0.960\n");
        assert_eq!(summary_table(&[]).lines().count(), 1);
    }

    #[test]
    fn ground_truth_document() {
        let text = r#"
            width = 100
            height = 80
            [[region]]
            bbox = [10, 10, 20, 20]
            category = "source_sink"
        "#;
        let g = GroundTruth::from_toml(text).unwrap();
        assert_eq!(g.entries[0].category, Category::SourceSink);
        assert_eq!(GroundTruth::from_toml(&g.to_toml()).unwrap(), g);
        assert!(GroundTruth::from_toml(&text.replace("[10, 10, 20, 20]", "[90, 10, 20, 20]")).is_err());
        assert!(GroundTruth::from_toml(&text.replace("source_sink", "stampede")).is_err());
    }
}
