//! YOLO dataset layout on disk.
//!
//! ```text
//! <out>/images/<id>.png
//! <out>/labels/<id>.txt      one "class cx cy w h" line per box
//! <out>/provenance.csv       id,record_id,start_sample,seed,grayscale,rotation_deg
//! <out>/dataset.yaml         key: value manifest
//! ```

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use rayon::prelude::*;

use super::LabeledFrame;
use crate::aami::{AamiClass, NUM_CLASSES};
use crate::detect::{format_label_line, parse_labels, GroundTruth};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "dataset.yaml";

/// Contents of `dataset.yaml`. Written as flat `key: value` lines, which
/// YOLO trainers read as YAML. `path` is `.` for exported datasets: every
/// path in the manifest is relative to the directory holding it, so a
/// dataset can be moved without rewriting it. Split lists hold one frame id
/// per line; the image for id `x` is `images/x.png`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub path: String,
    pub train: String,
    pub val: String,
    pub test: String,
    pub names: Vec<String>,
    pub frames: usize,
    pub counts: [usize; NUM_CLASSES],
}

impl DatasetManifest {
    pub fn new(path: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            train: "splits/train.txt".into(),
            val: "splits/val.txt".into(),
            test: "splits/test.txt".into(),
            names: AamiClass::ALL.iter().map(|c| c.name().to_string()).collect(),
            frames: 0,
            counts: [0; NUM_CLASSES],
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s += &format!("path: {}\n", self.path);
        s += &format!("train: {}\n", self.train);
        s += &format!("val: {}\n", self.val);
        s += &format!("test: {}\n", self.test);
        s += &format!("nc: {}\n", self.names.len());
        s += &format!("names: [{}]\n", self.names.join(", "));
        s += &format!("frames: {}\n", self.frames);
        for (c, n) in AamiClass::ALL.iter().zip(self.counts) {
            s += &format!("count_{}: {}\n", c.name(), n);
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        const CTX: &str = "dataset manifest";
        let mut m = Self::new("");
        let mut nc = None;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once(':')
                .ok_or_else(|| Error::parse(CTX, i + 1, 1, "expected 'key: value'"))?;
            let value = value.trim();
            let col = key.len() + 2;
            let num = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| Error::parse(CTX, i + 1, col, format!("expected an integer, got '{v}'")))
            };
            match key.trim() {
                "path" => m.path = value.to_string(),
                "train" => m.train = value.to_string(),
                "val" => m.val = value.to_string(),
                "test" => m.test = value.to_string(),
                "nc" => nc = Some(num(value)?),
                "names" => {
                    let inner = value
                        .strip_prefix('[')
                        .and_then(|v| v.strip_suffix(']'))
                        .ok_or_else(|| Error::parse(CTX, i + 1, col, "expected [a, b, ...]"))?;
                    m.names = inner.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
                }
                "frames" => m.frames = num(value)?,
                k => {
                    if let Some(class) = k.strip_prefix("count_") {
                        let c: AamiClass = class.parse()?;
                        m.counts[c.id()] = num(value)?;
                    }
                }
            }
        }
        if let Some(nc) = nc {
            if nc != m.names.len() {
                return Err(Error::parse(CTX, 1, 1, format!("nc = {nc} but {} names listed", m.names.len())));
            }
        }
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Per-frame seed derived from the run seed and the frame's origin, so that
/// a frame's augmentation does not depend on which other frames exist.
pub fn frame_seed(global_seed: u64, record_id: &str, start_sample: usize) -> u64 {
    // FNV-1a over the identity, then a splitmix64 finalizer
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in record_id.bytes().chain((start_sample as u64).to_le_bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = h ^ global_seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn label_file_body(labels: &[GroundTruth]) -> String {
    labels.iter().map(|l| format_label_line(l.class, &l.bbox)).collect()
}

/// Writes images, label files, provenance and the manifest. Frames are
/// written in parallel; everything order-dependent is sorted by frame id.
pub fn export_yolo(frames: &[LabeledFrame], out_dir: &Path) -> Result<DatasetManifest> {
    let images = out_dir.join("images");
    let labels = out_dir.join("labels");
    create_dir(&images)?;
    create_dir(&labels)?;

    frames.par_iter().try_for_each(|f| -> Result<()> {
        let png_path = images.join(format!("{}.png", f.id));
        let file = fs::File::create(&png_path).map_err(|e| Error::io(&png_path, e))?;
        f.image.write_png(BufWriter::new(file)).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(&png_path, source),
            other => other,
        })?;
        write_file(&labels.join(format!("{}.txt", f.id)), label_file_body(&f.labels).as_bytes())
    })?;

    let mut order: Vec<&LabeledFrame> = frames.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));

    let mut prov = String::from("id,record_id,start_sample,seed,grayscale,rotation_deg\n");
    for f in &order {
        let p = &f.provenance;
        prov += &format!(
            "{},{},{},{},{},{:.6}\n",
            f.id,
            p.record_id,
            p.start_sample,
            p.seed.map(|s| s.to_string()).unwrap_or_default(),
            p.grayscale_applied,
            p.rotation_deg
        );
    }
    write_file(&out_dir.join("provenance.csv"), prov.as_bytes())?;

    let mut manifest = DatasetManifest::new(".");
    manifest.frames = frames.len();
    for f in frames {
        for l in &f.labels {
            manifest.counts[l.class.id()] += 1;
        }
    }
    write_file(&out_dir.join(MANIFEST_FILE), manifest.to_text().as_bytes())?;
    Ok(manifest)
}

/// Reads every `labels/<id>.txt` under a dataset directory (or a bare label
/// directory), sorted by id.
pub fn read_label_dir(dir: &Path) -> Result<Vec<(String, Vec<GroundTruth>)>> {
    let labels_dir = if dir.join("labels").is_dir() { dir.join("labels") } else { dir.to_path_buf() };
    let entries = fs::read_dir(&labels_dir).map_err(|e| Error::io(&labels_dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&labels_dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("txt") {
            continue;
        }
        let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let labels = parse_labels(&text).map_err(|e| match e {
            Error::Parse { line, column, message, .. } => Error::Parse {
                context: path.display().to_string(),
                line,
                column,
                message,
            },
            other => other,
        })?;
        out.push((id, labels));
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}
