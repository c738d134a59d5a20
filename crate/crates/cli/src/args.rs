use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use ecgdet::aami::ExclusionPolicy;
use ecgdet::config::RunConfig;
use ecgdet::detect::{parse_box_line, Detection, PostProcessor, DEFAULT_SCORE_FLOOR, DEFAULT_SIGMA};
use ecgdet::eval::{coco_thresholds, ReportFormat};
use ecgdet::split::{HoldoutRatios, SplitStrategy};
use ecgdet::stream::Speed;

/// A problem with the command line that the core library cannot see.
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

#[derive(Parser, Debug)]
#[command(name = "ecgdet", version, about = "ECG beat detection datasets, evaluation and streaming replay")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Global seed for augmentation and splitting.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory. Written atomically: on failure nothing is left behind.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse a WFDB record directory and print beats per class.
    Ingest(IngestArgs),
    /// Render a YOLO dataset from a record directory.
    Build(BuildArgs),
    /// Write holdout and k-fold split lists for a built dataset.
    Split(SplitArgs),
    /// Score a detections file against dataset labels.
    Eval(EvalArgs),
    /// Replay a record (or a live feed) through a detector.
    Simulate(SimulateArgs),
    /// Re-render a saved report, or summarize several as cross-validation folds.
    Report(ReportArgs),
    /// Write synthetic WFDB records.
    Synth(SynthArgs),
}

fn exclusion_from(list: &str) -> ExclusionPolicy {
    if list.is_empty() || list == "none" {
        return ExclusionPolicy::none();
    }
    ExclusionPolicy {
        excluded: list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
    }
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// Directory holding `.hea`/`.dat`/`.atr` files.
    pub records: Option<PathBuf>,
    /// Comma-separated record ids to skip, or `none`.
    #[arg(long)]
    pub exclude: Option<String>,
    #[arg(long)]
    pub json: bool,
    /// Print per-class counts beside the reference build's.
    #[arg(long)]
    pub compare_reference: bool,
}

impl IngestArgs {
    pub fn apply(&self, cfg: &mut RunConfig) -> anyhow::Result<()> {
        if let Some(r) = &self.records {
            cfg.paths.records = r.clone();
        }
        if let Some(e) = &self.exclude {
            cfg.exclusion = exclusion_from(e);
        }
        Ok(())
    }
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[arg(long)]
    pub records: Option<PathBuf>,
    #[arg(long)]
    pub exclude: Option<String>,
    /// Minimum spacing between window starts, in seconds.
    #[arg(long)]
    pub dedup_spacing: Option<f64>,
    #[arg(long)]
    pub box_half_width_s: Option<f64>,
    /// Trace width in pixels.
    #[arg(long)]
    pub line_width: Option<f64>,
    /// Draw each beat's symbol above it (debug only; not for training).
    #[arg(long)]
    pub debug_symbols: bool,
    #[arg(long)]
    pub no_augment: bool,
    #[arg(long)]
    pub compare_reference: bool,
}

impl BuildArgs {
    pub fn apply(&self, cfg: &mut RunConfig) -> anyhow::Result<()> {
        if let Some(r) = &self.records {
            cfg.paths.records = r.clone();
        }
        if let Some(e) = &self.exclude {
            cfg.exclusion = exclusion_from(e);
        }
        if let Some(v) = self.dedup_spacing {
            cfg.window.dedup_spacing_s = v;
        }
        if let Some(v) = self.box_half_width_s {
            cfg.style.box_half_width_s = v;
        }
        if let Some(v) = self.line_width {
            cfg.style.line_width = v;
        }
        if self.debug_symbols {
            cfg.style.debug_symbols = true;
        }
        if self.no_augment {
            cfg.augment.enabled = false;
        }
        Ok(())
    }
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    /// Built dataset directory.
    pub dataset: Option<PathBuf>,
    /// Holdout ratios such as `82/12/6` or `0.8,0.1,0.1`.
    #[arg(long)]
    pub ratios: Option<HoldoutRatios>,
    #[arg(long)]
    pub k: Option<usize>,
    /// `image-stratified` or `patient-wise`.
    #[arg(long)]
    pub strategy: Option<SplitStrategy>,
}

impl SplitArgs {
    pub fn apply(&self, cfg: &mut RunConfig) -> anyhow::Result<()> {
        if let Some(r) = self.ratios {
            cfg.split.ratios = r;
        }
        if let Some(k) = self.k {
            cfg.split.k = k;
        }
        if let Some(s) = self.strategy {
            cfg.split.strategy = s;
        }
        Ok(())
    }
}

/// `0.5:0.05:0.95` (start:step:end, inclusive) or `0.5,0.75`.
pub fn parse_thresholds(s: &str) -> Result<Vec<f64>, InputError> {
    if s == "coco" {
        return Ok(coco_thresholds());
    }
    let bad = || InputError(format!("bad threshold list '{s}' (e.g. 0.5:0.05:0.95 or 0.5,0.75)"));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 3 {
        let v: Vec<f64> = parts.iter().map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
        let (start, step, end) = (v[0], v[1], v[2]);
        if !(step > 0.0) || end < start {
            return Err(bad());
        }
        let n = ((end - start) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|i| ((start + i as f64 * step) * 1e6).round() / 1e6).collect());
    }
    s.split(',').map(|p| p.trim().parse::<f64>().map_err(|_| bad())).collect()
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Dataset directory (or bare label directory).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Detections file: `<frame_id> <class> <cx> <cy> <w> <h> <conf>` per line.
    #[arg(long)]
    pub detections: PathBuf,
    /// `train`, `val`, `test`, or a path to a frame id list.
    #[arg(long)]
    pub split: Option<String>,
    /// IoU threshold for the confusion matrix.
    #[arg(long)]
    pub iou: Option<f64>,
    /// Confidence floor for the confusion matrix.
    #[arg(long)]
    pub conf: Option<f64>,
    /// IoU thresholds averaged for mAP@50-95.
    #[arg(long, value_parser = parse_thresholds)]
    pub thresholds: Option<Vec<f64>>,
    #[arg(long, default_value = "text")]
    pub format: ReportFormat,
}

impl EvalArgs {
    pub fn apply(&self, cfg: &mut RunConfig) -> anyhow::Result<()> {
        if let Some(v) = self.iou {
            cfg.eval.iou_threshold = v;
        }
        if let Some(v) = self.conf {
            cfg.eval.confidence_floor = v;
        }
        if let Some(t) = &self.thresholds {
            cfg.eval.map_thresholds = t.clone();
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum DetectorSpec {
    /// Echoes each frame's own labels.
    Oracle,
    /// The same boxes for every frame.
    Fixed(Vec<Detection>),
    /// External program speaking the FRAME/DET protocol.
    Subprocess(Vec<String>),
}

impl FromStr for DetectorSpec {
    type Err = InputError;

    /// `oracle`, `fixed`, `fixed:<class cx cy w h conf>;...`, or `subprocess:<command line>`.
    fn from_str(s: &str) -> Result<Self, InputError> {
        if s == "oracle" {
            return Ok(Self::Oracle);
        }
        if s == "fixed" {
            return Ok(Self::Fixed(Vec::new()));
        }
        if let Some(boxes) = s.strip_prefix("fixed:") {
            let dets = boxes
                .split(';')
                .filter(|b| !b.trim().is_empty())
                .map(|b| parse_box_line(b.trim()).map_err(|e| InputError(format!("fixed detector box '{b}': {e}"))))
                .collect::<Result<_, _>>()?;
            return Ok(Self::Fixed(dets));
        }
        if let Some(cmd) = s.strip_prefix("subprocess:") {
            let argv: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
            if argv.is_empty() {
                return Err(InputError("subprocess detector needs a command".into()));
            }
            return Ok(Self::Subprocess(argv));
        }
        Err(InputError(format!(
            "unknown detector '{s}' (oracle, fixed[:boxes], subprocess:<command>)"
        )))
    }
}

/// `none`, `nms[:iou]` or `soft-nms[:sigma]`.
pub fn parse_postprocess(s: &str) -> Result<PostProcessor, InputError> {
    let (kind, arg) = match s.split_once(':') {
        Some((k, a)) => (k, Some(a)),
        None => (s, None),
    };
    let num = |a: Option<&str>, default: f64| -> Result<f64, InputError> {
        a.map_or(Ok(default), |a| a.parse().map_err(|_| InputError(format!("bad number in '{s}'"))))
    };
    match kind {
        "none" => Ok(PostProcessor::None),
        "nms" => Ok(PostProcessor::Nms { iou_threshold: num(arg, 0.7)? }),
        "soft-nms" => Ok(PostProcessor::SoftNms {
            sigma: num(arg, DEFAULT_SIGMA)?,
            score_floor: DEFAULT_SCORE_FLOOR,
        }),
        _ => Err(InputError(format!("unknown post-processor '{s}' (none, nms[:iou], soft-nms[:sigma])"))),
    }
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Record id inside the records directory.
    #[arg(long)]
    pub record: Option<String>,
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Read `t_ms,adu` lines from this file (`-` for stdin) instead of a record.
    #[arg(long)]
    pub live: Option<PathBuf>,
    /// Sampling rate of a live feed.
    #[arg(long, default_value_t = 360.0)]
    pub fs: f64,
    #[arg(long, default_value = "oracle")]
    pub detector: DetectorSpec,
    /// `realtime`, `max`, or a multiple of real time such as `4x`.
    #[arg(long)]
    pub speed: Option<Speed>,
    /// Seconds between frame starts.
    #[arg(long)]
    pub hop: Option<f64>,
    #[arg(long, value_parser = parse_postprocess)]
    pub postprocess: Option<PostProcessor>,
    /// Print a line per frame.
    #[arg(long, short)]
    pub verbose: bool,
}

impl SimulateArgs {
    pub fn apply(&self, cfg: &mut RunConfig) -> anyhow::Result<()> {
        if let Some(r) = &self.records {
            cfg.paths.records = r.clone();
        }
        if let Some(s) = self.speed {
            cfg.stream.replay.speed = s;
        }
        if let Some(h) = self.hop {
            cfg.stream.replay.hop_s = h;
        }
        if let Some(p) = self.postprocess {
            cfg.stream.postprocess = p;
        }
        Ok(())
    }
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// JSON evaluation or session reports. More than one gives a fold summary.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value = "text")]
    pub format: ReportFormat,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 3)]
    pub count: usize,
    /// Seconds per record.
    #[arg(long, default_value_t = 60.0)]
    pub duration: f64,
}
