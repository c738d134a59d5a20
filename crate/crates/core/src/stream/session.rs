use std::io::{BufRead, Write};
use std::sync::Mutex;
use std::sync::mpsc::{sync_channel, TrySendError};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{replay, DetectorPort, LiveFrames, ReplayConfig};
use crate::aami::MappedBeat;
use crate::detect::{Detection, FrameDetections, PostProcessor};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalConfig, EvalFrame, EvalReport, ReportProvenance};
use crate::render::{render_frame, FrameWindow, RenderStyle};
use crate::wfdb::SignalRecord;

/// Wall-clock milliseconds spent on one frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub preprocess_ms: f64,
    pub inference_ms: f64,
    pub postprocess_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_id: String,
    pub start_sample: usize,
    pub detections: Vec<Detection>,
    pub latency: LatencyBreakdown,
    pub error: Option<String>,
}

pub trait SessionSink {
    fn frame(&mut self, record: &FrameRecord) -> Result<()>;
}

pub struct NullSink;

impl SessionSink for NullSink {
    fn frame(&mut self, _record: &FrameRecord) -> Result<()> {
        Ok(())
    }
}

/// One JSON object per frame.
pub struct JsonLinesSink<W: Write> {
    out: W,
}

impl<W: Write> JsonLinesSink<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }
}

impl<W: Write> SessionSink for JsonLinesSink<W> {
    fn frame(&mut self, record: &FrameRecord) -> Result<()> {
        let line = serde_json::to_string(record).map_err(|e| Error::Config(e.to_string()))?;
        writeln!(self.out, "{line}").map_err(|e| Error::io("<session sink>", e))
    }
}

/// A short human-readable line per frame.
pub struct ConsoleSink<W: Write> {
    out: W,
}

impl<W: Write> ConsoleSink<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }
}

impl<W: Write> SessionSink for ConsoleSink<W> {
    fn frame(&mut self, r: &FrameRecord) -> Result<()> {
        let classes: String = r.detections.iter().map(|d| d.class.name()).collect::<Vec<_>>().join(" ");
        let status = r.error.as_deref().map_or_else(String::new, |e| format!("  FAILED: {e}"));
        writeln!(
            self.out,
            "{}  {:>7.2} ms  [{}]{}",
            r.frame_id, r.latency.total_ms, classes, status
        )
        .map_err(|e| Error::io("<console>", e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
}

/// Nearest-rank percentile of a sorted slice.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

impl LatencyStats {
    fn from_values(values: impl Iterator<Item = f64>) -> Self {
        let mut v: Vec<f64> = values.collect();
        if v.is_empty() {
            return Self::default();
        }
        v.sort_by(f64::total_cmp);
        Self {
            mean: v.iter().sum::<f64>() / v.len() as f64,
            p50: percentile(&v, 50.0),
            p95: percentile(&v, 95.0),
            p99: percentile(&v, 99.0),
            max: v[v.len() - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub record_id: String,
    pub detector: String,
    pub postprocess: String,
    pub frames_emitted: usize,
    pub frames_processed: usize,
    pub frames_failed: usize,
    pub frames_dropped: usize,
    pub total: LatencyStats,
    pub preprocess: LatencyStats,
    pub inference: LatencyStats,
    pub postprocess_latency: LatencyStats,
    /// Mean of preprocess + post-process per frame, i.e. everything but the detector.
    pub pipeline_overhead_ms: f64,
    /// Largest lateness of a paced emission against its ideal time.
    pub max_pacing_drift_ms: Option<f64>,
    pub wall_time_s: f64,
    pub frames: Vec<FrameRecord>,
    pub eval: Option<EvalReport>,
}

impl SessionReport {
    pub fn detections(&self) -> FrameDetections {
        self.frames
            .iter()
            .map(|f| (f.frame_id.clone(), f.detections.clone()))
            .collect()
    }

    pub fn map50(&self) -> Option<f64> {
        self.eval.as_ref().and_then(|e| e.map50)
    }
}

pub struct StreamOptions<'a> {
    pub record_id: &'a str,
    pub style: &'a RenderStyle,
    pub post: &'a PostProcessor,
    pub eval: Option<&'a EvalConfig>,
    /// Drop windows the consumer is not ready for instead of waiting.
    pub drop_when_busy: bool,
}

struct Emitted {
    window: FrameWindow,
    drift: Option<Duration>,
}

/// Renders, detects and post-processes every window `source` yields, with
/// the source running on its own thread behind a one-slot channel.
pub fn run_stream<I>(
    source: I,
    ideal_offsets: Option<Vec<Duration>>,
    detector: &mut dyn DetectorPort,
    sink: &mut dyn SessionSink,
    opts: &StreamOptions<'_>,
) -> Result<SessionReport>
where
    I: Iterator<Item = FrameWindow> + Send,
{
    let started = Instant::now();
    let (tx, rx) = sync_channel::<Emitted>(1);
    let mut frames = Vec::new();
    let mut eval_frames = Vec::new();
    let mut failed = 0;

    let (emitted, dropped, max_drift) = std::thread::scope(|scope| -> Result<(usize, usize, Option<Duration>)> {
        // owned here so an early return hangs up on the producer
        let rx = rx;
        let drop_when_busy = opts.drop_when_busy;
        let producer = scope.spawn(move || {
            let (mut emitted, mut dropped) = (0usize, 0usize);
            for (k, window) in source.enumerate() {
                emitted += 1;
                let drift = ideal_offsets
                    .as_ref()
                    .and_then(|o| o.get(k))
                    .map(|ideal| started.elapsed().saturating_sub(*ideal));
                let item = Emitted { window, drift };
                if drop_when_busy {
                    match tx.try_send(item) {
                        Ok(()) => {}
                        Err(TrySendError::Full(_)) => dropped += 1,
                        Err(TrySendError::Disconnected(_)) => break,
                    }
                } else if tx.send(item).is_err() {
                    break;
                }
            }
            (emitted, dropped)
        });

        let mut max_drift: Option<Duration> = None;
        for Emitted { window, drift } in rx.iter() {
            if let Some(d) = drift {
                max_drift = Some(max_drift.map_or(d, |m| m.max(d)));
            }
            let t0 = Instant::now();
            let frame = render_frame(&window, opts.style);
            let t1 = Instant::now();
            let raw = detector.detect(&frame.id, &frame.image);
            let t2 = Instant::now();
            let (detections, error) = match raw {
                Ok(d) => (opts.post.apply(&d), None),
                Err(e) => {
                    failed += 1;
                    (Vec::new(), Some(e.to_string()))
                }
            };
            let t3 = Instant::now();
            let ms = |a: Instant, b: Instant| (b - a).as_secs_f64() * 1e3;
            let record = FrameRecord {
                frame_id: frame.id.clone(),
                start_sample: window.start_sample,
                detections,
                latency: LatencyBreakdown {
                    preprocess_ms: ms(t0, t1),
                    inference_ms: ms(t1, t2),
                    postprocess_ms: ms(t2, t3),
                    total_ms: ms(t0, t3),
                },
                error,
            };
            sink.frame(&record)?;
            if record.error.is_none() {
                eval_frames.push(EvalFrame {
                    id: frame.id,
                    predictions: record.detections.clone(),
                    ground_truths: frame.labels,
                });
            }
            frames.push(record);
        }
        let (emitted, dropped) = producer
            .join()
            .map_err(|_| Error::Config("stream producer panicked".into()))?;
        Ok((emitted, dropped, max_drift))
    })?;

    let eval = match opts.eval {
        Some(cfg) => Some(evaluate(
            &eval_frames,
            cfg,
            ReportProvenance {
                dataset: opts.record_id.to_string(),
                split: Some("stream".into()),
                seed: None,
                postprocess: Some(describe(opts.post)),
            },
        )?),
        None => None,
    };
    let ok: Vec<&FrameRecord> = frames.iter().filter(|f| f.error.is_none()).collect();
    Ok(SessionReport {
        record_id: opts.record_id.to_string(),
        detector: detector.name(),
        postprocess: describe(opts.post),
        frames_emitted: emitted,
        frames_processed: frames.len(),
        frames_failed: failed,
        frames_dropped: dropped,
        total: LatencyStats::from_values(ok.iter().map(|f| f.latency.total_ms)),
        preprocess: LatencyStats::from_values(ok.iter().map(|f| f.latency.preprocess_ms)),
        inference: LatencyStats::from_values(ok.iter().map(|f| f.latency.inference_ms)),
        postprocess_latency: LatencyStats::from_values(ok.iter().map(|f| f.latency.postprocess_ms)),
        pipeline_overhead_ms: if ok.is_empty() {
            0.0
        } else {
            ok.iter()
                .map(|f| f.latency.preprocess_ms + f.latency.postprocess_ms)
                .sum::<f64>()
                / ok.len() as f64
        },
        max_pacing_drift_ms: max_drift.map(|d| d.as_secs_f64() * 1e3),
        wall_time_s: started.elapsed().as_secs_f64(),
        frames,
        eval,
    })
}

fn describe(post: &PostProcessor) -> String {
    match post {
        PostProcessor::None => "none".into(),
        PostProcessor::Nms { iou_threshold } => format!("nms(iou={iou_threshold})"),
        PostProcessor::SoftNms { sigma, score_floor } => format!("soft-nms(sigma={sigma}, floor={score_floor})"),
    }
}

/// Replays `record` through `detector`. Ground-truth boxes come from
/// `beats`; pass `None` to skip evaluation.
#[allow(clippy::too_many_arguments)]
pub fn run_session(
    record: &SignalRecord,
    beats: Option<&[MappedBeat]>,
    config: &ReplayConfig,
    style: &RenderStyle,
    detector: &mut dyn DetectorPort,
    post: &PostProcessor,
    eval: &EvalConfig,
    sink: &mut dyn SessionSink,
) -> Result<SessionReport> {
    let source = replay(record, beats.unwrap_or(&[]), config)?;
    let len = crate::render::window_len(config.frame_s, record.sampling_rate);
    let ideal: Option<Vec<Duration>> = config.speed.is_paced().then(|| {
        super::frame_starts(record.num_samples, record.sampling_rate, config.frame_s, config.hop_s)
            .unwrap_or_default()
            .into_iter()
            .filter_map(|s| source.due_after(s + len))
            .collect()
    });
    let opts = StreamOptions {
        record_id: &record.record_id,
        style,
        post,
        eval: beats.map(|_| eval),
        drop_when_busy: config.speed.is_paced(),
    };
    run_stream(source, ideal, detector, sink, &opts)
}

/// Streams a live `t_ms,adu` feed. There is no ground truth, so the report
/// carries no evaluation. A malformed line ends the session with an error
/// after the frames before it have been processed.
#[allow(clippy::too_many_arguments)]
pub fn run_live<R: BufRead + Send>(
    reader: R,
    record_id: &str,
    sampling_rate: f64,
    config: &ReplayConfig,
    style: &RenderStyle,
    detector: &mut dyn DetectorPort,
    post: &PostProcessor,
    sink: &mut dyn SessionSink,
) -> Result<SessionReport> {
    let frames = LiveFrames::new(reader, record_id, sampling_rate, config.frame_s, config.hop_s)?;
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    let source = frames.map_while(|r| match r {
        Ok(w) => Some(w),
        Err(e) => {
            *failure.lock().unwrap_or_else(|p| p.into_inner()) = Some(e);
            None
        }
    });
    let opts = StreamOptions {
        record_id,
        style,
        post,
        eval: None,
        drop_when_busy: config.speed.is_paced(),
    };
    let report = run_stream(source, None, detector, sink, &opts)?;
    match failure.into_inner().unwrap_or_else(|p| p.into_inner()) {
        Some(e) => Err(e),
        None => Ok(report),
    }
}
