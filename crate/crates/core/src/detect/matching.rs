use serde::{Deserialize, Serialize};

use super::{iou, Detection, GroundTruth};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchMode {
    /// Predictions may only claim ground truths of their own class.
    SameClass,
    /// Any class; used to build the confusion matrix.
    ClassAgnostic,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchResult {
    /// (prediction index, ground-truth index, IoU), in the order predictions were processed.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_predictions: Vec<usize>,
    pub unmatched_ground_truths: Vec<usize>,
}

/// Greedy matching: predictions in descending confidence (ties by input
/// index) each claim the unclaimed ground truth with the highest IoU that is
/// at least `iou_threshold`. Equal IoUs go to the lower ground-truth index.
pub fn match_detections(
    predictions: &[Detection],
    ground_truths: &[GroundTruth],
    iou_threshold: f64,
    mode: MatchMode,
) -> MatchResult {
    let mut order: Vec<usize> = (0..predictions.len()).collect();
    order.sort_by(|&a, &b| {
        predictions[b]
            .confidence
            .total_cmp(&predictions[a].confidence)
            .then(a.cmp(&b))
    });

    let mut claimed = vec![false; ground_truths.len()];
    let mut result = MatchResult::default();
    for p in order {
        let pred = &predictions[p];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in ground_truths.iter().enumerate() {
            if claimed[g] || (mode == MatchMode::SameClass && gt.class != pred.class) {
                continue;
            }
            let overlap = iou(&pred.bbox, &gt.bbox);
            if overlap >= iou_threshold && best.is_none_or(|(_, b)| overlap > b) {
                best = Some((g, overlap));
            }
        }
        match best {
            Some((g, overlap)) => {
                claimed[g] = true;
                result.pairs.push((p, g, overlap));
            }
            None => result.unmatched_predictions.push(p),
        }
    }
    result.unmatched_predictions.sort_unstable();
    result.unmatched_ground_truths = (0..ground_truths.len()).filter(|&g| !claimed[g]).collect();
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aami::AamiClass;
    use crate::bbox::BoundingBox;
    use crate::detect::tests::arb_box;
    use proptest::prelude::*;

    fn gt(class: AamiClass, b: BoundingBox) -> GroundTruth {
        GroundTruth::new(class, b)
    }

    #[test]
    fn identical_sets_fully_match() {
        let boxes = [
            BoundingBox::new(0.2, 0.5, 0.1, 0.3),
            BoundingBox::new(0.5, 0.5, 0.1, 0.3),
            BoundingBox::new(0.8, 0.5, 0.1, 0.3),
        ];
        let gts: Vec<_> = boxes.iter().map(|&b| gt(AamiClass::N, b)).collect();
        let preds: Vec<_> = boxes.iter().map(|&b| Detection::new(AamiClass::N, b, 1.0)).collect();
        let m = match_detections(&preds, &gts, 0.5, MatchMode::SameClass);
        assert_eq!(m.pairs.len(), 3);
        assert!(m.pairs.iter().all(|&(p, g, o)| p == g && o == 1.0));
        assert!(m.unmatched_predictions.is_empty() && m.unmatched_ground_truths.is_empty());
    }

    #[test]
    fn picks_highest_iou() {
        // prediction [0.2, 0.6] x [0, 1]; gt A shifted to give IoU 0.6, gt B 0.8
        let pred = Detection::new(AamiClass::V, BoundingBox::from_corners(0.2, 0.0, 0.6, 1.0), 0.9);
        let a = gt(AamiClass::V, BoundingBox::from_corners(0.2, 0.0, 0.44, 1.0)); // 0.24/0.4
        let b = gt(AamiClass::V, BoundingBox::from_corners(0.2, 0.0, 0.52, 1.0)); // 0.32/0.4
        assert!((iou(&pred.bbox, &a.bbox) - 0.6).abs() < 1e-12);
        assert!((iou(&pred.bbox, &b.bbox) - 0.8).abs() < 1e-12);
        let m = match_detections(&[pred], &[a, b], 0.5, MatchMode::SameClass);
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(m.pairs[0].1, 1);
        assert_eq!(m.unmatched_ground_truths, vec![0]);
    }

    #[test]
    fn below_threshold_unmatched_both_sides() {
        let pred = Detection::new(AamiClass::N, BoundingBox::from_corners(0.0, 0.0, 0.13, 1.0), 0.9);
        let g = gt(AamiClass::N, BoundingBox::from_corners(0.0, 0.0, 0.39, 1.0)); // IoU 1/3
        let m = match_detections(&[pred], &[g], 0.5, MatchMode::SameClass);
        assert!(m.pairs.is_empty());
        assert_eq!(m.unmatched_predictions, vec![0]);
        assert_eq!(m.unmatched_ground_truths, vec![0]);
    }

    #[test]
    fn class_modes() {
        let b = BoundingBox::new(0.5, 0.5, 0.2, 0.2);
        let pred = Detection::new(AamiClass::S, b, 0.9);
        let g = gt(AamiClass::N, b);
        assert!(match_detections(&[pred], &[g], 0.5, MatchMode::SameClass).pairs.is_empty());
        assert_eq!(match_detections(&[pred], &[g], 0.5, MatchMode::ClassAgnostic).pairs.len(), 1);
    }

    #[test]
    fn higher_confidence_claims_first() {
        let b = BoundingBox::new(0.5, 0.5, 0.2, 0.2);
        let low = Detection::new(AamiClass::N, b, 0.3);
        let high = Detection::new(AamiClass::N, BoundingBox::new(0.51, 0.5, 0.2, 0.2), 0.9);
        let m = match_detections(&[low, high], &[gt(AamiClass::N, b)], 0.5, MatchMode::SameClass);
        assert_eq!(m.pairs[0].0, 1);
        assert_eq!(m.unmatched_predictions, vec![0]);
    }

    fn arb_scene() -> impl Strategy<Value = (Vec<Detection>, Vec<GroundTruth>)> {
        let det = (0usize..2, arb_box(), 0.0f64..1.0)
            .prop_map(|(c, b, p)| Detection::new(AamiClass::from_id(c).unwrap(), b, p));
        let truth = (0usize..2, arb_box()).prop_map(|(c, b)| GroundTruth::new(AamiClass::from_id(c).unwrap(), b));
        (prop::collection::vec(det, 0..12), prop::collection::vec(truth, 0..12))
    }

    proptest! {
        #[test]
        fn pairs_are_injective_and_above_threshold((preds, gts) in arb_scene(), thr in 0.05f64..0.95) {
            for mode in [MatchMode::SameClass, MatchMode::ClassAgnostic] {
                let m = match_detections(&preds, &gts, thr, mode);
                let mut ps: Vec<_> = m.pairs.iter().map(|p| p.0).collect();
                let mut gs: Vec<_> = m.pairs.iter().map(|p| p.1).collect();
                ps.sort_unstable();
                gs.sort_unstable();
                ps.dedup();
                gs.dedup();
                prop_assert_eq!(ps.len(), m.pairs.len());
                prop_assert_eq!(gs.len(), m.pairs.len());
                prop_assert!(m.pairs.iter().all(|p| p.2 >= thr));
                prop_assert_eq!(m.pairs.len() + m.unmatched_predictions.len(), preds.len());
                prop_assert_eq!(m.pairs.len() + m.unmatched_ground_truths.len(), gts.len());
            }
        }

        #[test]
        fn lower_threshold_never_loses_pairs((preds, gts) in arb_scene(), hi in 0.3f64..0.95, gap in 0.0f64..0.3) {
            let lo = hi - gap;
            for mode in [MatchMode::SameClass, MatchMode::ClassAgnostic] {
                let at_hi = match_detections(&preds, &gts, hi, mode).pairs.len();
                let at_lo = match_detections(&preds, &gts, lo, mode).pairs.len();
                prop_assert!(at_lo >= at_hi, "hi {} -> {}, lo {} -> {}", hi, at_hi, lo, at_lo);
            }
        }
    }
}
