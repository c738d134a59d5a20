use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LabeledFrame, WHITE};
use crate::bbox::BoundingBox;
use crate::detect::GroundTruth;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentParams {
    pub grayscale_probability: f64,
    pub max_rotation_deg: f64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            grayscale_probability: 0.75,
            max_rotation_deg: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Augmentation {
    pub grayscale: bool,
    pub rotation_deg: f64,
}

/// Draws the augmentation decisions for one seed.
pub fn draw_augmentation(seed: u64, params: &AugmentParams) -> Augmentation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grayscale = rng.gen_bool(params.grayscale_probability.clamp(0.0, 1.0));
    let rotation_deg = if params.max_rotation_deg > 0.0 {
        rng.gen_range(-params.max_rotation_deg..=params.max_rotation_deg)
    } else {
        0.0
    };
    Augmentation { grayscale, rotation_deg }
}

pub fn augment(frame: &LabeledFrame, seed: u64, params: &AugmentParams) -> LabeledFrame {
    let mut out = apply_augmentation(frame, draw_augmentation(seed, params));
    out.provenance.seed = Some(seed);
    out
}

/// Applies the given decisions: optional grayscale, then rotation about the
/// frame center with white fill. Each box becomes the axis-aligned hull of
/// its rotated corners, clipped to the unit square.
pub fn apply_augmentation(frame: &LabeledFrame, aug: Augmentation) -> LabeledFrame {
    let mut image = if aug.grayscale {
        frame.image.to_grayscale()
    } else {
        frame.image.clone()
    };
    image = image.rotated(aug.rotation_deg, WHITE);

    let (w, h) = (frame.image.width() as f64, frame.image.height() as f64);
    let labels = if aug.rotation_deg == 0.0 {
        frame.labels.clone()
    } else {
        frame
            .labels
            .iter()
            .map(|gt| GroundTruth::new(gt.class, rotate_box(&gt.bbox, aug.rotation_deg, w, h).clip_to_unit()))
            .collect()
    };

    let mut provenance = frame.provenance.clone();
    provenance.grayscale_applied = aug.grayscale;
    provenance.rotation_deg = aug.rotation_deg;
    LabeledFrame {
        id: frame.id.clone(),
        image,
        labels,
        provenance,
    }
}

/// Unclipped hull of the box's corners rotated about the center of a
/// `w`x`h` pixel frame, in normalized coordinates.
pub(crate) fn rotate_box(b: &BoundingBox, angle_deg: f64, w: f64, h: f64) -> BoundingBox {
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let (x0, y0, x1, y1) = b.corners();
    let mut lo = (f64::INFINITY, f64::INFINITY);
    let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (x, y) in [(x0, y0), (x1, y0), (x0, y1), (x1, y1)] {
        let (px, py) = ((x - 0.5) * w, (y - 0.5) * h);
        let rx = (cos * px - sin * py) / w + 0.5;
        let ry = (sin * px + cos * py) / h + 0.5;
        lo = (lo.0.min(rx), lo.1.min(ry));
        hi = (hi.0.max(rx), hi.1.max(ry));
    }
    BoundingBox::from_corners(lo.0, lo.1, hi.0, hi.1)
}
