//! Box geometry and detector post-processing.

mod interchange;
mod matching;
mod nms;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::aami::AamiClass;
use crate::bbox::BoundingBox;

pub use interchange::{
    format_box_line, format_detection_line, format_label_line, parse_box_line, parse_detections, parse_labels,
    write_detections,
    FrameDetections,
};
pub use matching::{match_detections, MatchMode, MatchResult};
pub use nms::{nms, soft_nms, PostProcessor, DEFAULT_SCORE_FLOOR, DEFAULT_SIGMA};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class: AamiClass,
    pub bbox: BoundingBox,
    pub confidence: f64,
}

impl Detection {
    pub fn new(class: AamiClass, bbox: BoundingBox, confidence: f64) -> Self {
        Self { class, bbox, confidence }
    }
}

/// A labeled ground-truth box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub class: AamiClass,
    pub bbox: BoundingBox,
}

impl GroundTruth {
    pub fn new(class: AamiClass, bbox: BoundingBox) -> Self {
        Self { class, bbox }
    }
}

/// Intersection over union of two xywh boxes; 0 for disjoint or degenerate pairs.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (ax0, ay0, ax1, ay1) = a.corners();
    let (bx0, by0, bx1, by1) = b.corners();
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    // areas from the same corner arithmetic so that iou(a, a) is exactly 1
    let area_a = (ax1 - ax0).max(0.0) * (ay1 - ay0).max(0.0);
    let area_b = (bx1 - bx0).max(0.0) * (by1 - by0).max(0.0);
    let union = area_a + area_b - inter;
    if inter <= 0.0 || union <= 0.0 {
        return 0.0;
    }
    (inter / union).min(1.0)
}

/// Ranking used wherever detections compete: higher confidence first, then
/// smaller class id, then lexicographically smaller box.
pub fn rank_order(a: &Detection, b: &Detection) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then(a.class.cmp(&b.class))
        .then(a.bbox.lex_cmp(&b.bbox))
}
