//! From annotated signal to labeled 640x640 training frames.
//!
//! A frame is a fixed-length window of one channel, drawn as a black
//! polyline on white. Horizontal position is time: sample `i` of an
//! `n`-sample window sits at `x = i / n`. Vertical position is amplitude
//! normalized to the window's min-max range, inset by a margin. Each beat
//! in the window gets one box spanning a fixed time extent around its
//! R-peak and the signal's amplitude range within that span.

mod augment;
mod export;
mod font;
mod raster;

use serde::{Deserialize, Serialize};

use crate::aami::{AamiClass, MappedBeat};
use crate::bbox::BoundingBox;
use crate::detect::GroundTruth;
use crate::error::{Error, Result};
use crate::wfdb::SignalRecord;

pub use augment::{apply_augmentation, augment, draw_augmentation, AugmentParams, Augmentation};
pub use export::{export_yolo, frame_seed, read_label_dir, DatasetManifest, MANIFEST_FILE};
pub use raster::{RgbImage, BLACK, WHITE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub frame_s: f64,
    /// Windows whose center is closer than this to the previous window's
    /// center are skipped.
    pub dedup_spacing_s: f64,
    pub channel: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            frame_s: 10.0,
            dedup_spacing_s: 2.5,
            channel: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderStyle {
    pub width: u32,
    pub height: u32,
    /// Stroke width in pixels.
    pub line_width: f64,
    /// Fraction of the height left empty above and below the trace.
    pub vertical_margin: f64,
    pub box_half_width_s: f64,
    /// Total vertical padding added to a box, as a fraction of frame height.
    pub box_padding: f64,
    pub min_box_height: f64,
    pub debug_symbols: bool,
}

impl Default for RenderStyle {
    fn default() -> Self {
        Self {
            width: 640,
            height: 640,
            line_width: 2.0,
            vertical_margin: 0.05,
            box_half_width_s: 0.35,
            box_padding: 0.02,
            min_box_height: 0.02,
            debug_symbols: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowBeat {
    /// Index relative to the window start.
    pub index: usize,
    pub symbol: char,
    pub class: AamiClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameWindow {
    pub record_id: String,
    pub sampling_rate: f64,
    pub start_sample: usize,
    pub samples: Vec<i16>,
    pub beats: Vec<WindowBeat>,
}

impl FrameWindow {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Stable identifier `<record>_<start sample, 8 digits>`.
    pub fn frame_id(&self) -> String {
        frame_id(&self.record_id, self.start_sample)
    }
}

pub fn frame_id(record_id: &str, start_sample: usize) -> String {
    format!("{record_id}_{start_sample:08}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub record_id: String,
    pub start_sample: usize,
    pub seed: Option<u64>,
    pub grayscale_applied: bool,
    pub rotation_deg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFrame {
    pub id: String,
    pub image: RgbImage,
    pub labels: Vec<GroundTruth>,
    pub provenance: Provenance,
}

pub fn window_len(frame_s: f64, sampling_rate: f64) -> usize {
    (frame_s * sampling_rate).round() as usize
}

/// Cuts `[start, start + len)` out of one channel along with the beats it contains.
pub fn window_at(
    record: &SignalRecord,
    beats: &[MappedBeat],
    channel: usize,
    start: usize,
    len: usize,
) -> Result<FrameWindow> {
    let signal = record
        .samples
        .get(channel)
        .ok_or_else(|| Error::Config(format!("record {} has no channel {channel}", record.record_id)))?;
    if start + len > signal.len() {
        return Err(Error::RecordTooShort {
            needed: start + len,
            available: signal.len(),
        });
    }
    let lo = beats.partition_point(|b| b.sample_index < start as u64);
    let hi = beats.partition_point(|b| b.sample_index < (start + len) as u64);
    Ok(FrameWindow {
        record_id: record.record_id.clone(),
        sampling_rate: record.sampling_rate,
        start_sample: start,
        samples: signal[start..start + len].to_vec(),
        beats: beats[lo..hi]
            .iter()
            .map(|b| WindowBeat {
                index: b.sample_index as usize - start,
                symbol: b.symbol,
                class: b.class,
            })
            .collect(),
    })
}

/// One window per non-N beat, centered on it and shifted to fit inside the
/// record. A window is skipped when its center lies within the dedup
/// spacing of the previously emitted window, or when it repeats that
/// window's start. `beats` must be sorted by sample index.
pub fn extract_windows(record: &SignalRecord, beats: &[MappedBeat], config: &WindowConfig) -> Result<Vec<FrameWindow>> {
    let len = window_len(config.frame_s, record.sampling_rate);
    if record.num_samples < len || len == 0 {
        return Err(Error::RecordTooShort {
            needed: len,
            available: record.num_samples,
        });
    }
    let half = len / 2;
    let spacing = config.dedup_spacing_s * record.sampling_rate;
    let max_start = record.num_samples - len;

    let mut out = Vec::new();
    let mut last: Option<usize> = None;
    for beat in beats.iter().filter(|b| b.class != AamiClass::N) {
        let start = (beat.sample_index as usize).saturating_sub(half).min(max_start);
        if let Some(prev) = last {
            // centers differ by the same amount as starts
            if start == prev || ((start as f64) - (prev as f64)).abs() < spacing {
                continue;
            }
        }
        out.push(window_at(record, beats, config.channel, start, len)?);
        last = Some(start);
    }
    Ok(out)
}

fn amplitude_range(samples: &[i16]) -> (f64, f64) {
    let lo = samples.iter().copied().min().unwrap_or(0) as f64;
    let hi = samples.iter().copied().max().unwrap_or(0) as f64;
    (lo, hi)
}

/// Normalized vertical position of an amplitude (0 = top).
fn y_of(v: f64, lo: f64, hi: f64, margin: f64) -> f64 {
    if hi > lo {
        margin + (hi - v) / (hi - lo) * (1.0 - 2.0 * margin)
    } else {
        0.5
    }
}

/// Boxes for every beat of a window, in beat order.
pub fn compute_labels(window: &FrameWindow, style: &RenderStyle) -> Vec<GroundTruth> {
    let n = window.len();
    if n == 0 {
        return Vec::new();
    }
    let (lo, hi) = amplitude_range(&window.samples);
    let half = (style.box_half_width_s * window.sampling_rate).round() as usize;
    window
        .beats
        .iter()
        .map(|beat| {
            let r = beat.index;
            let x0 = (r.saturating_sub(half)) as f64 / n as f64;
            let x1 = ((r + half) as f64 / n as f64).min(1.0);
            let span = &window.samples[r.saturating_sub(half)..(r + half + 1).min(n)];
            let (s_lo, s_hi) = amplitude_range(span);
            let pad = style.box_padding / 2.0;
            let mut y0 = (y_of(s_hi, lo, hi, style.vertical_margin) - pad).max(0.0);
            let mut y1 = (y_of(s_lo, lo, hi, style.vertical_margin) + pad).min(1.0);
            if y1 - y0 < style.min_box_height {
                let c = (y0 + y1) / 2.0;
                let hh = style.min_box_height / 2.0;
                let c = c.clamp(hh, 1.0 - hh);
                y0 = c - hh;
                y1 = c + hh;
            }
            GroundTruth::new(beat.class, BoundingBox::from_corners(x0, y0, x1, y1))
        })
        .collect()
}

/// Rasterizes the window and computes its labels. Symbol glyphs are drawn
/// (in red) only when `style.debug_symbols` is set.
pub fn render_frame(window: &FrameWindow, style: &RenderStyle) -> LabeledFrame {
    let mut image = RgbImage::filled(style.width, style.height, WHITE);
    let n = window.len();
    let (lo, hi) = amplitude_range(&window.samples);
    let (w, h) = (style.width as f64, style.height as f64);
    let point = |i: usize| {
        (
            i as f64 / n as f64 * w,
            y_of(window.samples[i] as f64, lo, hi, style.vertical_margin) * h,
        )
    };
    let radius = style.line_width / 2.0;
    match n {
        0 => {}
        1 => image.stroke_segment(point(0), point(0), radius, BLACK),
        _ => {
            for i in 1..n {
                image.stroke_segment(point(i - 1), point(i), radius, BLACK);
            }
        }
    }

    let labels = compute_labels(window, style);
    if style.debug_symbols {
        draw_symbols(&mut image, window, &labels);
    }
    LabeledFrame {
        id: window.frame_id(),
        image,
        labels,
        provenance: Provenance {
            record_id: window.record_id.clone(),
            start_sample: window.start_sample,
            seed: None,
            grayscale_applied: false,
            rotation_deg: 0.0,
        },
    }
}

pub const DEBUG_SYMBOL_COLOR: [u8; 3] = [255, 0, 0];

fn draw_symbols(image: &mut RgbImage, window: &FrameWindow, labels: &[GroundTruth]) {
    const SCALE: u32 = 2;
    for (beat, label) in window.beats.iter().zip(labels) {
        let x = (beat.index as f64 / window.len() as f64 * image.width() as f64) as i64
            - (font::GLYPH_WIDTH * SCALE / 2) as i64;
        let (_, y_top, _, _) = label.bbox.corners();
        let y = (y_top * image.height() as f64) as i64 - ((font::GLYPH_HEIGHT + 2) * SCALE) as i64;
        for (dx, dy) in font::glyph_pixels(beat.symbol, SCALE) {
            let (px, py) = (x + dx as i64, y.max(0) + dy as i64);
            if px >= 0 && py >= 0 && (px as u32) < image.width() && (py as u32) < image.height() {
                image.put(px as u32, py as u32, DEBUG_SYMBOL_COLOR);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wfdb::ChannelInfo;

    fn record(samples: Vec<i16>) -> SignalRecord {
        SignalRecord {
            record_id: "r".into(),
            sampling_rate: 360.0,
            num_samples: samples.len(),
            channels: vec![ChannelInfo { name: "MLII".into(), adc_gain: 200.0, adc_baseline: 0 }],
            samples: vec![samples],
        }
    }

    fn beat(t_s: f64, class: AamiClass) -> MappedBeat {
        MappedBeat {
            sample_index: (t_s * 360.0).round() as u64,
            symbol: match class {
                AamiClass::N => 'N',
                AamiClass::S => 'A',
                AamiClass::V => 'V',
                AamiClass::F => 'F',
                AamiClass::Q => 'Q',
            },
            class,
        }
    }

    #[test]
    fn centered_window() {
        let rec = record(vec![0; 360 * 200]);
        let w = extract_windows(&rec, &[beat(100.0, AamiClass::V)], &WindowConfig::default()).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].start_sample, 95 * 360);
        assert_eq!(w[0].len(), 3600);
        assert_eq!(w[0].beats[0].index, 1800);
    }

    #[test]
    fn edge_windows_shift_inside() {
        let rec = record(vec![0; 360 * 30]);
        let w = extract_windows(&rec, &[beat(2.0, AamiClass::S)], &WindowConfig::default()).unwrap();
        assert_eq!(w[0].start_sample, 0);
        let w = extract_windows(&rec, &[beat(29.0, AamiClass::S)], &WindowConfig::default()).unwrap();
        assert_eq!(w[0].start_sample, 20 * 360);
    }

    #[test]
    fn dedup_spacing() {
        let rec = record(vec![0; 360 * 200]);
        let beats = [beat(100.0, AamiClass::V), beat(101.0, AamiClass::V)];
        assert_eq!(extract_windows(&rec, &beats, &WindowConfig::default()).unwrap().len(), 1);
        let beats = [beat(100.0, AamiClass::V), beat(103.0, AamiClass::V)];
        assert_eq!(extract_windows(&rec, &beats, &WindowConfig::default()).unwrap().len(), 2);
        let no_dedup = WindowConfig { dedup_spacing_s: 0.0, ..Default::default() };
        let beats = [beat(100.0, AamiClass::V), beat(101.0, AamiClass::V)];
        assert_eq!(extract_windows(&rec, &beats, &no_dedup).unwrap().len(), 2);
        // both shift to the same start at the record edge
        let beats = [beat(1.0, AamiClass::V), beat(2.0, AamiClass::V)];
        assert_eq!(extract_windows(&rec, &beats, &no_dedup).unwrap().len(), 1);
    }

    #[test]
    fn n_beats_do_not_open_windows_but_are_labeled() {
        let rec = record(vec![0; 360 * 60]);
        let beats = [beat(28.0, AamiClass::N), beat(30.0, AamiClass::V), beat(31.0, AamiClass::N), beat(50.0, AamiClass::N)];
        let w = extract_windows(&rec, &beats, &WindowConfig::default()).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].beats.iter().map(|b| b.class).collect::<Vec<_>>(), vec![AamiClass::N, AamiClass::V, AamiClass::N]);
    }

    #[test]
    fn short_record() {
        let rec = record(vec![0; 3599]);
        assert!(matches!(
            extract_windows(&rec, &[], &WindowConfig::default()),
            Err(Error::RecordTooShort { needed: 3600, available: 3599 })
        ));
    }

    #[test]
    fn flat_signal_minimum_height_box() {
        let rec = record(vec![0; 3600]);
        let win = window_at(&rec, &[beat(5.0, AamiClass::N)], 0, 0, 3600).unwrap();
        let labels = compute_labels(&win, &RenderStyle::default());
        assert_eq!(labels.len(), 1);
        let b = labels[0].bbox;
        assert_eq!(b.cx, 0.5);
        assert!((b.h - 0.02).abs() < 1e-12);
        assert!((b.cy - 0.5).abs() < 1e-12);
        assert!((b.w - 252.0 / 3600.0).abs() < 1e-12);
    }

    #[test]
    fn triangular_pulse_box_matches_brute_force() {
        // triangle of half-base 60 samples and height 1000 centered at 1800,
        // plus a negative dip far away that sets the window minimum
        let mut samples = vec![0i16; 3600];
        for k in 0..=60i32 {
            let v = (1000 - k * 1000 / 60) as i16;
            samples[(1800 + k) as usize] = v;
            samples[(1800 - k) as usize] = v;
        }
        samples[300] = -500;
        let rec = record(samples.clone());
        let win = window_at(&rec, &[beat(5.0, AamiClass::V)], 0, 0, 3600).unwrap();
        let style = RenderStyle::default();
        let b = compute_labels(&win, &style)[0].bbox;

        // brute-force oracle over the +-126 sample span
        let span: Vec<i16> = (1800 - 126..=1800 + 126).map(|i| samples[i]).collect();
        let (s_lo, s_hi) = (*span.iter().min().unwrap() as f64, *span.iter().max().unwrap() as f64);
        let (lo, hi) = (-500.0, 1000.0);
        let to_y = |v: f64| 0.05 + (hi - v) / (hi - lo) * 0.9;
        let expected_h = to_y(s_lo) - to_y(s_hi) + 0.02;
        assert!((b.h - expected_h).abs() < 1e-12, "{} vs {}", b.h, expected_h);
        assert!((b.w - 252.0 / 3600.0).abs() < 1e-12);
        assert_eq!((s_lo, s_hi), (0.0, 1000.0));
        assert!((b.h - (0.9 * 1000.0 / 1500.0 + 0.02)).abs() < 1e-12);
    }

    #[test]
    fn labels_clip_at_edges() {
        let mut samples = vec![0i16; 3600];
        samples[0] = 100;
        let rec = record(samples);
        let win = window_at(&rec, &[beat(0.0, AamiClass::V), beat(9.999, AamiClass::S)], 0, 0, 3600).unwrap();
        for l in compute_labels(&win, &RenderStyle::default()) {
            assert!(l.bbox.is_valid(1e-12), "{:?}", l.bbox);
        }
    }

    #[test]
    fn render_is_deterministic_and_glyph_free() {
        let samples: Vec<i16> = (0..3600).map(|i| ((i as f64 / 40.0).sin() * 300.0) as i16).collect();
        let rec = record(samples);
        let win = window_at(&rec, &[beat(2.0, AamiClass::N), beat(5.0, AamiClass::V)], 0, 0, 3600).unwrap();
        let style = RenderStyle::default();
        let a = render_frame(&win, &style);
        let b = render_frame(&win, &style);
        assert_eq!(a, b);
        assert_eq!(a.labels.len(), 2);
        assert_eq!((a.image.width(), a.image.height()), (640, 640));
        assert!(a.image.pixels().all(|p| p[0] == p[1] && p[1] == p[2]));
        assert!(a.image.pixels().any(|p| p == BLACK));
        assert!(a.image.pixels().all(|p| p != DEBUG_SYMBOL_COLOR));

        let debug = render_frame(&win, &RenderStyle { debug_symbols: true, ..style });
        assert!(debug.image.pixels().any(|p| p == DEBUG_SYMBOL_COLOR));
        assert_eq!(debug.labels, a.labels);
    }
}
