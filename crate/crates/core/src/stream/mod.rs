//! Real-time replay of a record through a detector.
//!
//! A producer walks the record in hops, emitting a fixed-length window each
//! time the stream has advanced far enough to fill it. A consumer renders
//! the window, runs the detector and post-processes the output. The two are
//! joined by a one-slot channel; in paced mode the producer drops a window
//! rather than wait for a busy consumer.

mod detector;
mod live;
mod session;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::aami::MappedBeat;
use crate::error::{Error, Result};
use crate::render::{window_at, window_len, FrameWindow};
use crate::wfdb::SignalRecord;

pub use detector::{DetectorPort, FixedBoxDetector, OracleDetector, SubprocessDetector};
pub use live::{parse_live_line, LiveFrames};
pub use session::{
    percentile, run_live, run_session, run_stream, ConsoleSink, FrameRecord, JsonLinesSink, LatencyBreakdown, LatencyStats,
    NullSink, SessionReport, SessionSink, StreamOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Speed {
    /// Paced by the wall clock at the record's sampling rate.
    Realtime,
    /// Paced at this multiple of real time.
    Scaled(f64),
    /// No pacing.
    Max,
}

impl Speed {
    fn factor(self) -> Option<f64> {
        match self {
            Speed::Realtime => Some(1.0),
            Speed::Scaled(f) => Some(f),
            Speed::Max => None,
        }
    }

    pub fn is_paced(self) -> bool {
        self.factor().is_some()
    }
}

impl fmt::Display for Speed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Speed::Realtime => f.write_str("realtime"),
            Speed::Scaled(x) => write!(f, "{x}x"),
            Speed::Max => f.write_str("max"),
        }
    }
}

impl From<Speed> for String {
    fn from(s: Speed) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for Speed {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for Speed {
    type Err = Error;

    /// `realtime`, `max`, or a multiple of real time such as `4x`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "realtime" | "1x" => Ok(Speed::Realtime),
            "max" => Ok(Speed::Max),
            other => other
                .strip_suffix('x')
                .and_then(|f| f.parse::<f64>().ok())
                .filter(|f| *f > 0.0)
                .map(Speed::Scaled)
                .ok_or_else(|| Error::Config(format!("unknown speed '{other}' (realtime, max, or e.g. 4x)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplayConfig {
    pub frame_s: f64,
    pub hop_s: f64,
    pub channel: usize,
    pub speed: Speed,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            frame_s: 10.0,
            hop_s: 1.0,
            channel: 0,
            speed: Speed::Max,
        }
    }
}

/// Start samples of every frame: `round(k · hop · fs)` for as long as the
/// frame still fits in the record.
pub fn frame_starts(num_samples: usize, sampling_rate: f64, frame_s: f64, hop_s: f64) -> Result<Vec<usize>> {
    if !(hop_s > 0.0) {
        return Err(Error::Config(format!("hop must be positive, got {hop_s}")));
    }
    let len = window_len(frame_s, sampling_rate);
    if len == 0 || num_samples < len {
        return Err(Error::RecordTooShort {
            needed: len,
            available: num_samples,
        });
    }
    let mut starts = Vec::new();
    for k in 0.. {
        let start = (k as f64 * hop_s * sampling_rate).round() as usize;
        if start + len > num_samples {
            break;
        }
        starts.push(start);
    }
    Ok(starts)
}

/// Windows of a record in stream order. In paced modes `next` blocks until
/// the window's last sample would have arrived.
pub struct Replay<'a> {
    record: &'a SignalRecord,
    beats: &'a [MappedBeat],
    channel: usize,
    len: usize,
    starts: std::vec::IntoIter<usize>,
    speed: Speed,
    origin: Option<Instant>,
}

pub fn replay<'a>(record: &'a SignalRecord, beats: &'a [MappedBeat], config: &ReplayConfig) -> Result<Replay<'a>> {
    if config.channel >= record.num_channels() {
        return Err(Error::Config(format!(
            "record {} has no channel {}",
            record.record_id, config.channel
        )));
    }
    let starts = frame_starts(record.num_samples, record.sampling_rate, config.frame_s, config.hop_s)?;
    Ok(Replay {
        record,
        beats,
        channel: config.channel,
        len: window_len(config.frame_s, record.sampling_rate),
        starts: starts.into_iter(),
        speed: config.speed,
        origin: None,
    })
}

impl Replay<'_> {
    /// Wall-clock offset from stream start at which a window ending at
    /// `end_sample` is due.
    pub fn due_after(&self, end_sample: usize) -> Option<Duration> {
        self.speed
            .factor()
            .map(|f| Duration::from_secs_f64(end_sample as f64 / self.record.sampling_rate / f))
    }

    pub fn remaining(&self) -> usize {
        self.starts.len()
    }
}

impl Iterator for Replay<'_> {
    type Item = FrameWindow;

    fn next(&mut self) -> Option<FrameWindow> {
        let start = self.starts.next()?;
        let origin = *self.origin.get_or_insert_with(Instant::now);
        if let Some(due) = self.due_after(start + self.len) {
            let now = origin.elapsed();
            if due > now {
                std::thread::sleep(due - now);
            }
        }
        // bounds were checked when the start list was built
        window_at(self.record, self.beats, self.channel, start, self.len).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wfdb::ChannelInfo;

    pub(crate) fn flat_record(seconds: usize) -> SignalRecord {
        let n = seconds * 360;
        SignalRecord {
            record_id: "s".into(),
            sampling_rate: 360.0,
            num_samples: n,
            channels: vec![ChannelInfo { name: "MLII".into(), adc_gain: 200.0, adc_baseline: 0 }],
            samples: vec![(0..n).map(|i| ((i % 300) as i16) - 150).collect()],
        }
    }

    #[test]
    fn frame_count_formula() {
        assert_eq!(frame_starts(30 * 360, 360.0, 10.0, 1.0).unwrap().len(), 21);
        assert_eq!(frame_starts(60 * 360, 360.0, 10.0, 1.0).unwrap().len(), 51);
        assert_eq!(frame_starts(60 * 360, 360.0, 10.0, 2.5).unwrap().len(), 21);
        // floor when the hop does not divide evenly
        assert_eq!(frame_starts(30 * 360, 360.0, 10.0, 3.0).unwrap().len(), 7);
        assert!(matches!(frame_starts(100, 360.0, 10.0, 0.0), Err(Error::Config(_))));
        assert!(matches!(frame_starts(3599, 360.0, 10.0, 1.0), Err(Error::RecordTooShort { .. })));
    }

    #[test]
    fn replay_yields_every_window() {
        let rec = flat_record(30);
        let frames: Vec<FrameWindow> = replay(&rec, &[], &ReplayConfig::default()).unwrap().collect();
        assert_eq!(frames.len(), 21);
        assert_eq!(frames[20].start_sample, 20 * 360);
        assert!(frames.iter().all(|f| f.len() == 3600));
    }

    #[test]
    fn scaled_replay_is_paced() {
        let rec = flat_record(12);
        let cfg = ReplayConfig { speed: Speed::Scaled(100.0), ..Default::default() };
        let t = Instant::now();
        let n = replay(&rec, &[], &cfg).unwrap().count();
        assert_eq!(n, 3);
        // last window ends at 12 s of signal, 0.12 s at 100x
        assert!(t.elapsed() >= Duration::from_millis(115));
    }

    #[test]
    fn speed_parsing() {
        assert_eq!("max".parse::<Speed>().unwrap(), Speed::Max);
        assert_eq!("realtime".parse::<Speed>().unwrap(), Speed::Realtime);
        assert_eq!("4x".parse::<Speed>().unwrap(), Speed::Scaled(4.0));
        assert!("fast".parse::<Speed>().is_err());
        assert!("0x".parse::<Speed>().is_err());
        for s in [Speed::Max, Speed::Realtime, Speed::Scaled(2.5)] {
            assert_eq!(s.to_string().parse::<Speed>().unwrap(), s);
        }
    }
}
