use serde::{Deserialize, Serialize};

use super::{per_frame, EvalFrame};
use crate::aami::{AamiClass, NUM_CLASSES};
use crate::detect::{match_detections, Detection, GroundTruth, MatchMode};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    /// All detections with at least this confidence are counted.
    pub confidence: f64,
    pub tp: usize,
    pub fp: usize,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub class: AamiClass,
    pub iou_threshold: f64,
    pub num_ground_truths: usize,
    /// One point per distinct confidence, highest confidence first.
    pub points: Vec<PrPoint>,
}

impl PrCurve {
    /// A class without ground truth has no recall axis.
    pub fn is_defined(&self) -> bool {
        self.num_ground_truths > 0
    }
}

/// TP/FP flag for every `class` prediction in one frame, matching
/// same-class predictions against same-class ground truth.
fn frame_outcomes(frame: &EvalFrame, iou_threshold: f64, class: AamiClass) -> (Vec<(f64, bool)>, usize) {
    let preds: Vec<Detection> = frame.predictions.iter().filter(|d| d.class == class).copied().collect();
    let gts: Vec<GroundTruth> = frame.ground_truths.iter().filter(|g| g.class == class).copied().collect();
    let m = match_detections(&preds, &gts, iou_threshold, MatchMode::SameClass);
    let mut tp = vec![false; preds.len()];
    for &(p, _, _) in &m.pairs {
        tp[p] = true;
    }
    (preds.iter().zip(tp).map(|(d, t)| (d.confidence, t)).collect(), gts.len())
}

pub fn pr_curve(frames: &[EvalFrame], iou_threshold: f64, class: AamiClass) -> PrCurve {
    let per = per_frame(frames, |f| frame_outcomes(f, iou_threshold, class));
    let num_ground_truths = per.iter().map(|(_, n)| n).sum();
    let mut outcomes: Vec<(f64, bool)> = per.into_iter().flat_map(|(o, _)| o).collect();
    outcomes.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (i, &(conf, hit)) in outcomes.iter().enumerate() {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_at_this_confidence = outcomes.get(i + 1).is_none_or(|n| n.0 != conf);
        if last_at_this_confidence {
            points.push(PrPoint {
                confidence: conf,
                tp,
                fp,
                precision: tp as f64 / (tp + fp) as f64,
                recall: if num_ground_truths > 0 {
                    tp as f64 / num_ground_truths as f64
                } else {
                    0.0
                },
            });
        }
    }
    PrCurve {
        class,
        iou_threshold,
        num_ground_truths,
        points,
    }
}

/// 101-point interpolated AP: the precision envelope (best precision at
/// recall ≥ r) averaged over r = 0.00, 0.01, …, 1.00. `None` for a class
/// without ground truth.
pub fn average_precision(curve: &PrCurve) -> Option<f64> {
    if !curve.is_defined() {
        return None;
    }
    let n = curve.num_ground_truths;
    // envelope[k] = max precision over points k.., recall only grows with k
    let mut envelope = vec![0.0f64; curve.points.len()];
    let mut best = 0.0f64;
    for (k, p) in curve.points.iter().enumerate().rev() {
        best = best.max(p.precision);
        envelope[k] = best;
    }
    let mut sum = 0.0;
    let mut k = 0;
    for i in 0..=100usize {
        // recall >= i/100, compared exactly in integers
        while k < curve.points.len() && curve.points[k].tp * 100 < i * n {
            k += 1;
        }
        if k < curve.points.len() {
            sum += envelope[k];
        }
    }
    Some(sum / 101.0)
}

/// Mean over the defined entries.
pub fn mean_ap(per_class: &[Option<f64>]) -> Result<f64> {
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::Undefined("no class has ground truth, mAP is undefined".into()));
    }
    Ok(defined.iter().sum::<f64>() / defined.len() as f64)
}

/// 0.50, 0.55, …, 0.95
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSummary {
    pub thresholds: Vec<f64>,
    /// `per_class_ap[t][c]`
    pub per_class_ap: Vec<[Option<f64>; NUM_CLASSES]>,
    pub map_per_threshold: Vec<f64>,
    /// Mean over thresholds of the per-threshold mAP.
    pub aggregate: f64,
}

impl MapSummary {
    /// Mean AP of one class across all thresholds.
    pub fn class_mean(&self, class: AamiClass) -> Option<f64> {
        let vals: Vec<f64> = self.per_class_ap.iter().filter_map(|row| row[class.id()]).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

pub fn map_over_thresholds(frames: &[EvalFrame], thresholds: &[f64]) -> Result<MapSummary> {
    if thresholds.is_empty() {
        return Err(Error::Config("no IoU thresholds given".into()));
    }
    let mut per_class_ap = Vec::with_capacity(thresholds.len());
    let mut map_per_threshold = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let aps = AamiClass::ALL.map(|c| average_precision(&pr_curve(frames, t, c)));
        map_per_threshold.push(mean_ap(&aps)?);
        per_class_ap.push(aps);
    }
    let aggregate = map_per_threshold.iter().sum::<f64>() / map_per_threshold.len() as f64;
    Ok(MapSummary {
        thresholds: thresholds.to_vec(),
        per_class_ap,
        map_per_threshold,
        aggregate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bbox::BoundingBox;
    use crate::detect::tests::arb_box;
    use proptest::prelude::*;

    fn gt(c: AamiClass, cx: f64) -> GroundTruth {
        GroundTruth::new(c, BoundingBox::new(cx, 0.5, 0.05, 0.4))
    }

    fn det(c: AamiClass, cx: f64, conf: f64) -> Detection {
        Detection::new(c, BoundingBox::new(cx, 0.5, 0.05, 0.4), conf)
    }

    fn frame(id: &str, preds: Vec<Detection>, gts: Vec<GroundTruth>) -> EvalFrame {
        EvalFrame {
            id: id.into(),
            predictions: preds,
            ground_truths: gts,
        }
    }

    #[test]
    fn perfect_detector_single_point() {
        let gts = vec![gt(AamiClass::V, 0.2), gt(AamiClass::V, 0.6)];
        let preds = gts.iter().map(|g| Detection::new(g.class, g.bbox, 1.0)).collect();
        let frames = [frame("a", preds, gts)];
        let c = pr_curve(&frames, 0.5, AamiClass::V);
        assert_eq!(c.points.len(), 1);
        let p = c.points[0];
        assert_eq!((p.confidence, p.precision, p.recall), (1.0, 1.0, 1.0));
        assert_eq!(average_precision(&c), Some(1.0));
    }

    #[test]
    fn wrong_class_zero_precision() {
        let frames = [frame("a", vec![det(AamiClass::S, 0.2, 0.9)], vec![gt(AamiClass::V, 0.2)])];
        let c = pr_curve(&frames, 0.5, AamiClass::S);
        assert!(c.points.iter().all(|p| p.precision == 0.0));
        assert!(!c.is_defined());
        assert_eq!(average_precision(&c), None);
        assert_eq!(average_precision(&pr_curve(&frames, 0.5, AamiClass::V)), Some(0.0));
    }

    #[test]
    fn mean_ap_arithmetic() {
        assert_eq!(mean_ap(&[Some(1.0), Some(0.5)]).unwrap(), 0.75);
        assert_eq!(mean_ap(&[Some(0.3)]).unwrap(), 0.3);
        assert_eq!(mean_ap(&[Some(0.3), None]).unwrap(), 0.3);
        assert!(matches!(mean_ap(&[None, None]), Err(Error::Undefined(_))));
        let table = [0.978, 0.959, 0.927, 0.961, 0.978];
        let m = mean_ap(&table.map(Some)).unwrap();
        assert!((m - 0.961).abs() <= 0.0005, "{m}");
        let mut rev = table;
        rev.reverse();
        assert_eq!(mean_ap(&rev.map(Some)).unwrap(), m);
    }

    #[test]
    fn jittered_boxes_only_count_at_050() {
        // ground truth w = 0.1, prediction shifted so IoU = 0.52
        let g = GroundTruth::new(AamiClass::N, BoundingBox::new(0.5, 0.5, 0.1, 0.4));
        let shift = 0.1 * (1.0 - 0.52) / (1.0 + 0.52);
        let p = Detection::new(AamiClass::N, BoundingBox::new(0.5 + shift, 0.5, 0.1, 0.4), 0.9);
        let iou = crate::detect::iou(&p.bbox, &g.bbox);
        assert!(iou > 0.5 && iou < 0.55, "{iou}");
        let frames = [frame("a", vec![p], vec![g])];
        let s = map_over_thresholds(&frames, &coco_thresholds()).unwrap();
        assert_eq!(s.map_per_threshold[0], 1.0);
        assert!(s.map_per_threshold[1..].iter().all(|&m| m == 0.0));
        assert!((s.aggregate - 0.1).abs() < 1e-12);
    }

    #[test]
    fn empty_detections_zero_everywhere() {
        let frames = [frame("a", vec![], vec![gt(AamiClass::N, 0.5)])];
        let s = map_over_thresholds(&frames, &coco_thresholds()).unwrap();
        assert!(s.map_per_threshold.iter().all(|&m| m == 0.0));
        let perfect = [frame("a", vec![det(AamiClass::N, 0.5, 0.7)], vec![gt(AamiClass::N, 0.5)])];
        let s = map_over_thresholds(&perfect, &coco_thresholds()).unwrap();
        assert!(s.map_per_threshold.iter().all(|&m| m == 1.0));
    }

    /// Re-matches from scratch at every confidence cut.
    fn brute_force_points(frames: &[EvalFrame], thr: f64, class: AamiClass) -> Vec<(f64, usize, usize)> {
        let mut confs: Vec<f64> = frames
            .iter()
            .flat_map(|f| f.predictions.iter().filter(|d| d.class == class).map(|d| d.confidence))
            .collect();
        confs.sort_by(|a, b| b.total_cmp(a));
        confs.dedup();
        confs
            .into_iter()
            .map(|t| {
                let (mut tp, mut fp) = (0, 0);
                for f in frames {
                    let preds: Vec<Detection> =
                        f.predictions.iter().filter(|d| d.class == class && d.confidence >= t).copied().collect();
                    let gts: Vec<GroundTruth> = f.ground_truths.iter().filter(|g| g.class == class).copied().collect();
                    let m = match_detections(&preds, &gts, thr, MatchMode::SameClass);
                    tp += m.pairs.len();
                    fp += m.unmatched_predictions.len();
                }
                (t, tp, fp)
            })
            .collect()
    }

    /// For every recall level, the best precision among all confidence cuts reaching it.
    fn brute_force_ap(frames: &[EvalFrame], thr: f64, class: AamiClass) -> Option<f64> {
        let n: usize = frames.iter().map(|f| f.ground_truths.iter().filter(|g| g.class == class).count()).sum();
        if n == 0 {
            return None;
        }
        let pts = brute_force_points(frames, thr, class);
        let mut sum = 0.0;
        for i in 0..=100 {
            let r = i as f64 / 100.0;
            let best = pts
                .iter()
                .filter(|(_, tp, _)| *tp as f64 / n as f64 >= r - 1e-12)
                .map(|(_, tp, fp)| *tp as f64 / (*tp + *fp) as f64)
                .fold(0.0, f64::max);
            sum += best;
        }
        Some(sum / 101.0)
    }

    fn twelve_detections() -> Vec<EvalFrame> {
        use AamiClass::*;
        vec![
            frame(
                "f0",
                vec![det(V, 0.1, 0.95), det(V, 0.3, 0.6), det(V, 0.52, 0.55), det(S, 0.7, 0.5)],
                vec![gt(V, 0.1), gt(V, 0.5), gt(S, 0.9)],
            ),
            frame(
                "f1",
                vec![det(V, 0.2, 0.9), det(V, 0.21, 0.85), det(V, 0.8, 0.3), det(V, 0.6, 0.6)],
                vec![gt(V, 0.2), gt(V, 0.6)],
            ),
            frame(
                "f2",
                vec![det(V, 0.4, 0.7), det(V, 0.9, 0.2), det(S, 0.9, 0.8), det(V, 0.05, 0.75)],
                vec![gt(V, 0.4), gt(S, 0.9), gt(V, 0.7)],
            ),
        ]
    }

    #[test]
    fn curve_matches_prefix_enumeration() {
        let frames = twelve_detections();
        for class in [AamiClass::V, AamiClass::S] {
            let c = pr_curve(&frames, 0.5, class);
            let bf = brute_force_points(&frames, 0.5, class);
            let got: Vec<(f64, usize, usize)> = c.points.iter().map(|p| (p.confidence, p.tp, p.fp)).collect();
            assert_eq!(got, bf);
            let ap = average_precision(&c).unwrap();
            assert!((ap - brute_force_ap(&frames, 0.5, class).unwrap()).abs() < 1e-9);
        }
        let v = pr_curve(&frames, 0.5, AamiClass::V);
        assert_eq!(v.num_ground_truths, 6);
        assert!(v.points.windows(2).all(|w| w[1].recall >= w[0].recall));
    }

    fn arb_frames(max_dets: usize) -> impl Strategy<Value = Vec<EvalFrame>> {
        let cls = (0usize..2).prop_map(|c| AamiClass::from_id(c).unwrap());
        let conf = (1u32..=10).prop_map(|c| c as f64 / 10.0);
        let one = (
            prop::collection::vec((cls.clone(), arb_box(), conf), 0..=max_dets / 3),
            prop::collection::vec((cls, arb_box()), 0..5),
        )
            .prop_map(|(d, g)| EvalFrame {
                id: String::new(),
                predictions: d.into_iter().map(|(c, b, s)| Detection::new(c, b, s)).collect(),
                ground_truths: g.into_iter().map(|(c, b)| GroundTruth::new(c, b)).collect(),
            });
        prop::collection::vec(one, 1..4)
    }

    proptest! {
        #[test]
        fn ap_matches_exhaustive_oracle(frames in arb_frames(20), thr in 0.1f64..0.9) {
            for class in [AamiClass::N, AamiClass::S] {
                let got = average_precision(&pr_curve(&frames, thr, class));
                let want = brute_force_ap(&frames, thr, class);
                match (got, want) {
                    (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b),
                    (a, b) => prop_assert_eq!(a, b),
                }
            }
        }

        #[test]
        fn adding_top_correct_detection_never_lowers_ap(frames in arb_frames(12), pick in any::<prop::sample::Index>()) {
            let class = AamiClass::N;
            let before = average_precision(&pr_curve(&frames, 0.5, class));
            // find a ground truth the current matching leaves unclaimed
            let mut candidates = Vec::new();
            for (fi, f) in frames.iter().enumerate() {
                let preds: Vec<Detection> = f.predictions.iter().filter(|d| d.class == class).copied().collect();
                let gts: Vec<GroundTruth> = f.ground_truths.iter().filter(|g| g.class == class).copied().collect();
                let m = match_detections(&preds, &gts, 0.5, MatchMode::SameClass);
                candidates.extend(m.unmatched_ground_truths.iter().map(|&g| (fi, gts[g])));
            }
            prop_assume!(!candidates.is_empty());
            let (fi, g) = candidates[pick.index(candidates.len())];
            let mut more = frames.clone();
            more[fi].predictions.push(Detection::new(class, g.bbox, 1.0));
            let after = average_precision(&pr_curve(&more, 0.5, class));
            prop_assert!(after.unwrap() >= before.unwrap() - 1e-12);
        }
    }
}
