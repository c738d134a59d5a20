//! Detection metrics: PR curves and AP, mAP over IoU thresholds, the
//! confusion matrix with a background class, and per-class
//! accuracy/specificity/precision/recall/F1.

mod confusion;
mod pr;
mod report;

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::detect::{Detection, FrameDetections, GroundTruth};

pub use confusion::{class_metrics, confusion_matrix, f1_score, ClassMetrics, ConfusionMatrix, BACKGROUND};
pub use pr::{
    average_precision, coco_thresholds, map_over_thresholds, mean_ap, pr_curve, MapSummary, PrCurve, PrPoint,
};
pub use report::{
    evaluate, mean_and_sd, parse_report_csv, render_cv_summary, render_report, ClassRow, CvFold, EvalConfig,
    EvalReport, ReportFormat, ReportProvenance,
};

/// Predictions and ground truth for one frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalFrame {
    pub id: String,
    pub predictions: Vec<Detection>,
    pub ground_truths: Vec<GroundTruth>,
}

/// Pairs detections with labels by frame id. Every labeled frame is
/// included; detections for unlabeled frames are kept with empty ground
/// truth so they count as false positives.
pub fn join_frames(predictions: &FrameDetections, labels: &BTreeMap<String, Vec<GroundTruth>>) -> Vec<EvalFrame> {
    let mut frames: BTreeMap<&str, EvalFrame> = labels
        .iter()
        .map(|(id, gts)| {
            (
                id.as_str(),
                EvalFrame {
                    id: id.clone(),
                    predictions: Vec::new(),
                    ground_truths: gts.clone(),
                },
            )
        })
        .collect();
    for (id, dets) in predictions {
        frames
            .entry(id.as_str())
            .or_insert_with(|| EvalFrame {
                id: id.clone(),
                ..Default::default()
            })
            .predictions
            .extend(dets.iter().copied());
    }
    frames.into_values().collect()
}

/// Runs `f` per frame in parallel and returns the results in frame order.
pub(crate) fn per_frame<T: Send>(frames: &[EvalFrame], f: impl Fn(&EvalFrame) -> T + Sync + Send) -> Vec<T> {
    frames.par_iter().map(f).collect()
}
