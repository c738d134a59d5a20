//! Live sample feed: newline-delimited `t_ms,adu` pairs on a byte stream,
//! one channel, arriving in time order.

use std::io::BufRead;

use crate::error::{Error, Result};
use crate::render::FrameWindow;

/// Parses one `t_ms,adu` line.
pub fn parse_live_line(line: &str, line_no: usize) -> Result<(f64, i16)> {
    const CTX: &str = "live feed";
    let (t, v) = line
        .trim()
        .split_once(',')
        .ok_or_else(|| Error::parse(CTX, line_no, 1, "expected 't_ms,adu'"))?;
    let t_ms = t
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::parse(CTX, line_no, 1, format!("bad timestamp '{t}'")))?;
    let adu = v
        .trim()
        .parse::<i16>()
        .map_err(|_| Error::parse(CTX, line_no, t.len() + 2, format!("bad sample '{v}'")))?;
    Ok((t_ms, adu))
}

/// Sliding windows over a live feed. A window is emitted every `hop`
/// samples once `len` samples have arrived. Timestamps are checked for
/// order but otherwise ignored; samples are taken to be evenly spaced.
pub struct LiveFrames<R> {
    reader: R,
    record_id: String,
    sampling_rate: f64,
    len: usize,
    hop: usize,
    buffer: Vec<i16>,
    consumed: usize,
    next_start: usize,
    line_no: usize,
    last_t: f64,
    failed: bool,
}

impl<R: BufRead> LiveFrames<R> {
    pub fn new(reader: R, record_id: &str, sampling_rate: f64, frame_s: f64, hop_s: f64) -> Result<Self> {
        let len = (frame_s * sampling_rate).round() as usize;
        let hop = (hop_s * sampling_rate).round() as usize;
        if len == 0 || hop == 0 {
            return Err(Error::Config("frame and hop must each span at least one sample".into()));
        }
        Ok(Self {
            reader,
            record_id: record_id.to_string(),
            sampling_rate,
            len,
            hop,
            buffer: Vec::new(),
            consumed: 0,
            next_start: 0,
            line_no: 0,
            last_t: f64::NEG_INFINITY,
            failed: false,
        })
    }

    fn read_sample(&mut self) -> Option<Result<i16>> {
        let mut line = String::new();
        loop {
            line.clear();
            self.line_no += 1;
            match self.reader.read_line(&mut line) {
                Ok(0) => return None,
                Ok(_) if line.trim().is_empty() => continue,
                Ok(_) => break,
                Err(e) => return Some(Err(Error::io("<live feed>", e))),
            }
        }
        Some(parse_live_line(&line, self.line_no).and_then(|(t, v)| {
            if t < self.last_t {
                return Err(Error::parse("live feed", self.line_no, 1, "timestamps go backwards"));
            }
            self.last_t = t;
            Ok(v)
        }))
    }
}

impl<R: BufRead> Iterator for LiveFrames<R> {
    type Item = Result<FrameWindow>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        while self.consumed + self.buffer.len() < self.next_start + self.len {
            match self.read_sample()? {
                Ok(v) => self.buffer.push(v),
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e));
                }
            }
        }
        let offset = self.next_start - self.consumed;
        let window = FrameWindow {
            record_id: self.record_id.clone(),
            sampling_rate: self.sampling_rate,
            start_sample: self.next_start,
            samples: self.buffer[offset..offset + self.len].to_vec(),
            beats: Vec::new(),
        };
        self.next_start += self.hop;
        // keep only what later windows still need
        let keep_from = (self.next_start - self.consumed).min(self.buffer.len());
        self.buffer.drain(..keep_from);
        self.consumed += keep_from;
        Some(Ok(window))
    }
}
