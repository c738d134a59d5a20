//! Line-oriented text formats for detections and YOLO labels.
//!
//! Detections file, one detection per line:
//!
//! ```text
//! <frame_id> <class_id> <cx> <cy> <w> <h> <confidence>
//! ```
//!
//! YOLO label file (`labels/<frame_id>.txt`), one box per line:
//!
//! ```text
//! <class_id> <cx> <cy> <w> <h>
//! ```
//!
//! Numbers are written with exactly six decimals; `#` starts a comment line.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{Detection, GroundTruth};
use crate::aami::AamiClass;
use crate::bbox::BoundingBox;
use crate::error::{Error, Result};

/// Detections grouped by frame id, frames in sorted order.
pub type FrameDetections = BTreeMap<String, Vec<Detection>>;

pub fn format_label_line(class: AamiClass, b: &BoundingBox) -> String {
    format!("{} {:.6} {:.6} {:.6} {:.6}\n", class.id(), b.cx, b.cy, b.w, b.h)
}

pub fn format_detection_line(frame_id: &str, d: &Detection) -> String {
    format!(
        "{} {} {:.6} {:.6} {:.6} {:.6} {:.6}\n",
        frame_id,
        d.class.id(),
        d.bbox.cx,
        d.bbox.cy,
        d.bbox.w,
        d.bbox.h,
        d.confidence
    )
}

/// `class cx cy w h conf`, the per-box line of the subprocess detector reply.
pub fn format_box_line(d: &Detection) -> String {
    format!(
        "{} {:.6} {:.6} {:.6} {:.6} {:.6}\n",
        d.class.id(),
        d.bbox.cx,
        d.bbox.cy,
        d.bbox.w,
        d.bbox.h,
        d.confidence
    )
}

pub fn parse_box_line(text: &str) -> Result<Detection> {
    const CTX: &str = "detection line";
    let toks: Vec<&str> = text.split_whitespace().collect();
    if toks.len() != 6 {
        return Err(Error::parse(CTX, 1, 1, format!("expected 6 fields, found {}", toks.len())));
    }
    let class = parse_class(toks[0], CTX, 1)?;
    let bbox = parse_box(&toks[1..5], CTX, 1)?;
    let confidence = parse_unit(toks[5], CTX, 1, "confidence")?;
    Ok(Detection::new(class, bbox, confidence))
}

pub fn write_detections(frames: &FrameDetections) -> String {
    let mut out = String::new();
    for (frame, dets) in frames {
        for d in dets {
            let _ = write!(out, "{}", format_detection_line(frame, d));
        }
    }
    out
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_class(tok: &str, ctx: &str, line: usize) -> Result<AamiClass> {
    tok.parse::<usize>()
        .ok()
        .and_then(AamiClass::from_id)
        .ok_or_else(|| Error::parse(ctx, line, 1, format!("invalid class id '{tok}'")))
}

fn parse_unit(tok: &str, ctx: &str, line: usize, what: &str) -> Result<f64> {
    match tok.parse::<f64>() {
        Ok(v) if (0.0..=1.0).contains(&v) => Ok(v),
        _ => Err(Error::parse(ctx, line, 1, format!("{what} '{tok}' is not a number in [0, 1]"))),
    }
}

fn parse_box(toks: &[&str], ctx: &str, line: usize) -> Result<BoundingBox> {
    let b = BoundingBox::new(
        parse_unit(toks[0], ctx, line, "cx")?,
        parse_unit(toks[1], ctx, line, "cy")?,
        parse_unit(toks[2], ctx, line, "w")?,
        parse_unit(toks[3], ctx, line, "h")?,
    );
    if b.w <= 0.0 || b.h <= 0.0 {
        return Err(Error::parse(ctx, line, 1, "box width and height must be positive"));
    }
    Ok(b)
}

pub fn parse_detections(text: &str) -> Result<FrameDetections> {
    const CTX: &str = "detections";
    let mut out = FrameDetections::new();
    for (line, content) in content_lines(text) {
        let toks: Vec<&str> = content.split_whitespace().collect();
        if toks.len() != 7 {
            return Err(Error::parse(CTX, line, 1, format!("expected 7 fields, found {}", toks.len())));
        }
        let class = parse_class(toks[1], CTX, line)?;
        let bbox = parse_box(&toks[2..6], CTX, line)?;
        let confidence = parse_unit(toks[6], CTX, line, "confidence")?;
        out.entry(toks[0].to_string())
            .or_default()
            .push(Detection::new(class, bbox, confidence));
    }
    Ok(out)
}

pub fn parse_labels(text: &str) -> Result<Vec<GroundTruth>> {
    const CTX: &str = "labels";
    content_lines(text)
        .map(|(line, content)| {
            let toks: Vec<&str> = content.split_whitespace().collect();
            if toks.len() != 5 {
                return Err(Error::parse(CTX, line, 1, format!("expected 5 fields, found {}", toks.len())));
            }
            Ok(GroundTruth::new(parse_class(toks[0], CTX, line)?, parse_box(&toks[1..], CTX, line)?))
        })
        .collect()
}
