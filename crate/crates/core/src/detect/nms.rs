use serde::{Deserialize, Serialize};

use super::{iou, rank_order, Detection};

pub const DEFAULT_SIGMA: f64 = 0.5;
pub const DEFAULT_SCORE_FLOOR: f64 = 0.001;

/// Greedy per-class non-maximum suppression. A detection is dropped when its
/// IoU with an already kept detection of the same class exceeds
/// `iou_threshold`. Output is in rank order.
pub fn nms(detections: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut sorted = detections.to_vec();
    sorted.sort_by(rank_order);
    let mut kept: Vec<Detection> = Vec::with_capacity(sorted.len());
    for det in sorted {
        let suppressed = kept
            .iter()
            .any(|k| k.class == det.class && iou(&k.bbox, &det.bbox) > iou_threshold);
        if !suppressed {
            kept.push(det);
        }
    }
    kept
}

/// Gaussian soft-NMS: after selecting the best remaining detection of a
/// class, every other detection of that class has its confidence multiplied
/// by `exp(-iou^2 / sigma)`; anything below `score_floor` is discarded.
/// Output is sorted by final confidence (rank order).
pub fn soft_nms(detections: &[Detection], sigma: f64, score_floor: f64) -> Vec<Detection> {
    let mut out = Vec::with_capacity(detections.len());
    let mut remaining: Vec<Detection> = detections
        .iter()
        .filter(|d| d.confidence >= score_floor)
        .copied()
        .collect();
    while !remaining.is_empty() {
        let best_idx = remaining
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| rank_order(a, b))
            .map(|(i, _)| i)
            .unwrap();
        let best = remaining.swap_remove(best_idx);
        for other in remaining.iter_mut().filter(|d| d.class == best.class) {
            let overlap = iou(&best.bbox, &other.bbox);
            other.confidence *= (-(overlap * overlap) / sigma).exp();
        }
        remaining.retain(|d| d.confidence >= score_floor);
        out.push(best);
    }
    out.sort_by(rank_order);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PostProcessor {
    None,
    Nms { iou_threshold: f64 },
    SoftNms { sigma: f64, score_floor: f64 },
}

impl PostProcessor {
    pub fn apply(&self, detections: &[Detection]) -> Vec<Detection> {
        match *self {
            PostProcessor::None => detections.to_vec(),
            PostProcessor::Nms { iou_threshold } => nms(detections, iou_threshold),
            PostProcessor::SoftNms { sigma, score_floor } => soft_nms(detections, sigma, score_floor),
        }
    }
}
