use serde::{Deserialize, Serialize};

/// Axis-aligned box in normalized YOLO xywh form (center + size, all as
/// fractions of the frame).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self { cx, cy, w, h }
    }

    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            cx: (x0 + x1) / 2.0,
            cy: (y0 + y1) / 2.0,
            w: x1 - x0,
            h: y1 - y0,
        }
    }

    /// `(x0, y0, x1, y1)`
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    /// Positive size and entirely inside the unit square (with `eps` slack for
    /// rounding in the corner arithmetic).
    pub fn is_valid(&self, eps: f64) -> bool {
        let (x0, y0, x1, y1) = self.corners();
        self.w > 0.0
            && self.h > 0.0
            && [self.cx, self.cy, self.w, self.h].iter().all(|v| (0.0..=1.0).contains(v))
            && x0 >= -eps
            && y0 >= -eps
            && x1 <= 1.0 + eps
            && y1 <= 1.0 + eps
    }

    pub fn clip_to_unit(&self) -> Self {
        let (x0, y0, x1, y1) = self.corners();
        Self::from_corners(x0.clamp(0.0, 1.0), y0.clamp(0.0, 1.0), x1.clamp(0.0, 1.0), y1.clamp(0.0, 1.0))
    }

    /// Lexicographic key over (cx, cy, w, h), used for deterministic tie breaks.
    pub(crate) fn lex_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.cx
            .total_cmp(&other.cx)
            .then(self.cy.total_cmp(&other.cy))
            .then(self.w.total_cmp(&other.w))
            .then(self.h.total_cmp(&other.h))
    }
}
