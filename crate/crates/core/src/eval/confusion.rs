use serde::{Deserialize, Serialize};

use super::{per_frame, EvalFrame};
use crate::aami::{AamiClass, NUM_CLASSES};
use crate::detect::{match_detections, Detection, MatchMode};

/// Row/column index of the background class.
pub const BACKGROUND: usize = NUM_CLASSES;
const SIZE: usize = NUM_CLASSES + 1;

/// Counts indexed `[predicted][actual]`, background last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; SIZE]; SIZE],
}

impl ConfusionMatrix {
    pub fn get(&self, predicted: usize, actual: usize) -> u64 {
        self.counts[predicted][actual]
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        for (row, other_row) in self.counts.iter_mut().zip(&other.counts) {
            for (a, b) in row.iter_mut().zip(other_row) {
                *a += b;
            }
        }
    }

    pub fn row_sum(&self, predicted: usize) -> u64 {
        self.counts[predicted].iter().sum()
    }

    pub fn column_sum(&self, actual: usize) -> u64 {
        self.counts.iter().map(|r| r[actual]).sum()
    }

    /// Each row divided by its sum; all-zero rows stay zero.
    pub fn row_normalized(&self) -> [[f64; SIZE]; SIZE] {
        let mut out = [[0.0; SIZE]; SIZE];
        for (r, row) in self.counts.iter().enumerate() {
            let total = self.row_sum(r);
            if total > 0 {
                for (c, &v) in row.iter().enumerate() {
                    out[r][c] = v as f64 / total as f64;
                }
            }
        }
        out
    }
}

fn frame_matrix(frame: &EvalFrame, iou_threshold: f64, confidence_floor: f64) -> ConfusionMatrix {
    let preds: Vec<Detection> = frame
        .predictions
        .iter()
        .filter(|d| d.confidence >= confidence_floor)
        .copied()
        .collect();
    let gts = &frame.ground_truths;
    let m = match_detections(&preds, gts, iou_threshold, MatchMode::ClassAgnostic);
    let mut cm = ConfusionMatrix::default();
    for &(p, g, _) in &m.pairs {
        cm.counts[preds[p].class.id()][gts[g].class.id()] += 1;
    }
    for &p in &m.unmatched_predictions {
        cm.counts[preds[p].class.id()][BACKGROUND] += 1;
    }
    for &g in &m.unmatched_ground_truths {
        cm.counts[BACKGROUND][gts[g].class.id()] += 1;
    }
    cm
}

/// Class-agnostic greedy matching per frame over predictions with
/// confidence ≥ `confidence_floor`.
pub fn confusion_matrix(frames: &[EvalFrame], iou_threshold: f64, confidence_floor: f64) -> ConfusionMatrix {
    let mut total = ConfusionMatrix::default();
    for cm in per_frame(frames, |f| frame_matrix(f, iou_threshold, confidence_floor)) {
        total.add(&cm);
    }
    total
}

/// One-vs-rest figures for a class. Undefined ratios (0/0) are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
    pub accuracy: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Harmonic mean of precision and recall; `None` when both are zero.
pub fn f1_score(precision: f64, recall: f64) -> Option<f64> {
    (precision + recall > 0.0).then(|| 2.0 * precision * recall / (precision + recall))
}

impl ClassMetrics {
    pub fn from_counts(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        // 2PR/(P+R) written over the counts
        let f1 = match (precision, recall) {
            (Some(_), Some(_)) if tp > 0 => ratio(2 * tp, 2 * tp + fp + fn_),
            _ => None,
        };
        Self {
            tp,
            tn,
            fp,
            fn_,
            accuracy: ratio(tp + tn, tp + tn + fp + fn_),
            specificity: ratio(tn, tn + fp),
            precision,
            recall,
            f1,
        }
    }
}

/// Reduces the matrix to `class` vs the other beat classes, leaving out the
/// background row and column.
pub fn class_metrics(cm: &ConfusionMatrix, class: AamiClass) -> ClassMetrics {
    let c = class.id();
    let (mut tp, mut fp, mut fn_, mut total) = (0, 0, 0, 0);
    for p in 0..NUM_CLASSES {
        for a in 0..NUM_CLASSES {
            let v = cm.counts[p][a];
            total += v;
            match (p == c, a == c) {
                (true, true) => tp += v,
                (true, false) => fp += v,
                (false, true) => fn_ += v,
                (false, false) => {}
            }
        }
    }
    ClassMetrics::from_counts(tp, total - tp - fp - fn_, fp, fn_)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bbox::BoundingBox;
    use crate::detect::GroundTruth;
    use AamiClass::*;

    fn b(cx: f64) -> BoundingBox {
        BoundingBox::new(cx, 0.5, 0.06, 0.5)
    }

    fn frame(preds: Vec<(AamiClass, f64, f64)>, gts: Vec<(AamiClass, f64)>) -> EvalFrame {
        EvalFrame {
            id: String::new(),
            predictions: preds.into_iter().map(|(c, x, s)| Detection::new(c, b(x), s)).collect(),
            ground_truths: gts.into_iter().map(|(c, x)| GroundTruth::new(c, b(x))).collect(),
        }
    }

    #[test]
    fn accuracy_specificity_precision_recall_f1_arithmetic() {
        let m = ClassMetrics::from_counts(9, 90, 1, 0);
        assert_eq!(m.accuracy, Some(0.99));
        assert!((m.specificity.unwrap() - 90.0 / 91.0).abs() < 1e-15);
        assert_eq!(m.precision, Some(0.9));
        assert_eq!(m.recall, Some(1.0));
        assert!((m.f1.unwrap() - 18.0 / 19.0).abs() < 1e-15);
        assert!((m.f1.unwrap() - 0.947).abs() < 0.0005);

        let only_tn = ClassMetrics::from_counts(0, 10, 0, 0);
        assert_eq!(only_tn.accuracy, Some(1.0));
        assert_eq!(only_tn.precision, None);
        assert_eq!(only_tn.recall, None);
        assert_eq!(only_tn.f1, None);
    }

    #[test]
    fn perfect_detector_is_diagonal() {
        let frames = [frame(vec![(N, 0.2, 0.9), (V, 0.5, 0.8)], vec![(N, 0.2), (V, 0.5)])];
        let cm = confusion_matrix(&frames, 0.45, 0.25);
        for p in 0..SIZE {
            for a in 0..SIZE {
                let want = u64::from(p == a && (p == N.id() || p == V.id()));
                assert_eq!(cm.get(p, a), want, "({p},{a})");
            }
        }
    }

    #[test]
    fn spurious_detection_on_background() {
        let frames = [frame(vec![(S, 0.5, 0.9)], vec![])];
        let cm = confusion_matrix(&frames, 0.45, 0.25);
        assert_eq!(cm.get(S.id(), BACKGROUND), 1);
        assert_eq!(cm.counts.iter().flatten().sum::<u64>(), 1);
    }

    #[test]
    fn hand_enumerated_ten_frames() {
        let frames = [
            // 0: correct N
            frame(vec![(N, 0.2, 0.9)], vec![(N, 0.2)]),
            // 1: V called S
            frame(vec![(S, 0.5, 0.8)], vec![(V, 0.5)]),
            // 2: missed F
            frame(vec![], vec![(F, 0.4)]),
            // 3: below confidence floor, so the Q is missed
            frame(vec![(Q, 0.6, 0.2)], vec![(Q, 0.6)]),
            // 4: duplicate N, second goes to background
            frame(vec![(N, 0.3, 0.9), (N, 0.31, 0.7)], vec![(N, 0.3)]),
            // 5: boxes too far apart to match
            frame(vec![(V, 0.1, 0.9)], vec![(V, 0.9)]),
            // 6: correct S and V
            frame(vec![(S, 0.2, 0.6), (V, 0.7, 0.6)], vec![(S, 0.2), (V, 0.7)]),
            // 7: empty
            frame(vec![], vec![]),
            // 8: F called N
            frame(vec![(N, 0.5, 0.5)], vec![(F, 0.5)]),
            // 9: correct Q
            frame(vec![(Q, 0.8, 0.99)], vec![(Q, 0.8)]),
        ];
        let cm = confusion_matrix(&frames, 0.45, 0.25);
        let mut want = [[0u64; SIZE]; SIZE];
        want[N.id()][N.id()] = 2;
        want[S.id()][V.id()] = 1;
        want[BACKGROUND][F.id()] = 1;
        want[BACKGROUND][Q.id()] = 1;
        want[N.id()][BACKGROUND] = 1;
        want[V.id()][BACKGROUND] = 1;
        want[BACKGROUND][V.id()] = 1;
        want[S.id()][S.id()] = 1;
        want[V.id()][V.id()] = 1;
        want[N.id()][F.id()] = 1;
        want[Q.id()][Q.id()] = 1;
        assert_eq!(cm.counts, want);

        // mass: predictions above the floor, and all ground truths
        let n_pred = frames.iter().flat_map(|f| &f.predictions).filter(|d| d.confidence >= 0.25).count() as u64;
        let n_gt = frames.iter().map(|f| f.ground_truths.len()).sum::<usize>() as u64;
        assert_eq!((0..NUM_CLASSES).map(|r| cm.row_sum(r)).sum::<u64>(), n_pred);
        assert_eq!((0..NUM_CLASSES).map(|c| cm.column_sum(c)).sum::<u64>(), n_gt);

        let n = class_metrics(&cm, N);
        // 5x5 block: N/N 2, S/V 1, S/S 1, V/V 1, N/F 1, Q/Q 1 -> total 7
        assert_eq!((n.tp, n.fp, n.fn_, n.tn), (2, 1, 0, 4));
        let v = class_metrics(&cm, V);
        assert_eq!((v.tp, v.fp, v.fn_, v.tn), (1, 0, 1, 5));
    }

    #[test]
    fn row_normalization() {
        let mut cm = ConfusionMatrix::default();
        cm.counts[0][0] = 3;
        cm.counts[0][BACKGROUND] = 1;
        let r = cm.row_normalized();
        assert_eq!(r[0][0], 0.75);
        assert_eq!(r[1], [0.0; SIZE]);
    }
}
