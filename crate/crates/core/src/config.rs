//! Run configuration: one TOML file that fixes every knob of a run.
//!
//! Every section and key is optional; missing values take the defaults
//! below. Command-line flags are applied on top of the file, and the
//! fully resolved result is written next to a run's outputs as
//! [`RESOLVED_CONFIG_FILE`].
//!
//! ```toml
//! seed = 0
//!
//! [paths]
//! records = "data/synthetic"   # WFDB record directory
//! dataset = "out/dataset"      # build output, split input
//! # mapping_overrides = "mapping.csv"
//!
//! [exclusion]
//! excluded = ["102", "104", "107", "217"]
//!
//! [window]
//! frame_s = 10.0
//! dedup_spacing_s = 2.5
//! channel = 0
//!
//! [style]
//! width = 640
//! height = 640
//! line_width = 2.0
//! box_half_width_s = 0.35
//! debug_symbols = false
//!
//! [augment]
//! enabled = true
//! grayscale_probability = 0.75
//! max_rotation_deg = 1.0
//!
//! [split]
//! strategy = "image-stratified"
//! k = 10
//! ratios = { train = 0.82, val = 0.12, test = 0.06 }
//!
//! [eval]
//! iou_threshold = 0.45
//! confidence_floor = 0.25
//!
//! [stream]
//! frame_s = 10.0
//! hop_s = 1.0
//! speed = "max"                # "realtime", "max" or a multiple like "4x"
//! postprocess = { kind = "nms", iou_threshold = 0.7 }
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aami::ExclusionPolicy;
use crate::detect::PostProcessor;
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::render::{AugmentParams, RenderStyle, WindowConfig};
use crate::split::{HoldoutRatios, SplitStrategy};
use crate::stream::ReplayConfig;

pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    pub records: PathBuf,
    pub dataset: PathBuf,
    pub mapping_overrides: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            records: PathBuf::from("data/synthetic"),
            dataset: PathBuf::from("out/dataset"),
            mapping_overrides: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub enabled: bool,
    #[serde(flatten)]
    pub params: AugmentParams,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            params: AugmentParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub strategy: SplitStrategy,
    pub k: usize,
    pub ratios: HoldoutRatios,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            strategy: SplitStrategy::ImageStratified,
            k: 10,
            ratios: HoldoutRatios::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StreamConfig {
    #[serde(flatten)]
    pub replay: ReplayConfig,
    pub postprocess: PostProcessor,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            replay: ReplayConfig::default(),
            postprocess: PostProcessor::Nms { iou_threshold: 0.7 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub exclusion: ExclusionPolicy,
    pub window: WindowConfig,
    pub style: RenderStyle,
    pub augment: AugmentConfig,
    pub split: SplitConfig,
    pub eval: EvalConfig,
    pub stream: StreamConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let (line, column) = e
                .span()
                .map(|s| line_col(text, s.start))
                .unwrap_or((1, 1));
            Error::Parse {
                context: "config".into(),
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// The file at `path` if given, otherwise the defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(RESOLVED_CONFIG_FILE);
        fs::write(&path, self.to_toml()?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("window.frame_s", self.window.frame_s),
            ("style.line_width", self.style.line_width),
            ("style.box_half_width_s", self.style.box_half_width_s),
            ("stream.frame_s", self.stream.replay.frame_s),
            ("stream.hop_s", self.stream.replay.hop_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.window.dedup_spacing_s < 0.0 {
            return Err(Error::Config("window.dedup_spacing_s must not be negative".into()));
        }
        if self.style.width == 0 || self.style.height == 0 {
            return Err(Error::Config("style.width and style.height must be positive".into()));
        }
        let p = self.augment.params.grayscale_probability;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("augment.grayscale_probability {p} is outside [0, 1]")));
        }
        if self.split.k < 2 {
            return Err(Error::Config(format!("split.k must be at least 2, got {}", self.split.k)));
        }
        self.split.ratios.validate()?;
        for t in std::iter::once(self.eval.iou_threshold).chain(self.eval.map_thresholds.iter().copied()) {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::Config(format!("IoU threshold {t} is outside (0, 1]")));
            }
        }
        Ok(())
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}
