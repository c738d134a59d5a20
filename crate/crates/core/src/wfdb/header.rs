//! WFDB `.hea` header parsing and writing.
//!
//! Record line: `name nsig [fs[/counter[(base)]] [nsamp [time [date]]]]`.
//! Signal line: `file format[xN][:skew][+offset] [gain[(baseline)][/units]
//! [adcres [adczero [initval [checksum [blocksize [description]]]]]]]`.

use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLING_RATE: f64 = 250.0;
pub const DEFAULT_ADC_GAIN: f64 = 200.0;
pub const FORMAT_212: u16 = 212;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    pub file_name: String,
    pub format: u16,
    /// Byte offset into the signal file where samples begin.
    pub byte_offset: usize,
    pub adc_gain: f64,
    pub baseline: i32,
    pub units: Option<String>,
    pub adc_resolution: u32,
    pub adc_zero: i32,
    pub initial_value: i32,
    pub checksum: Option<i16>,
    pub block_size: u32,
    pub description: String,
}

impl ChannelSpec {
    /// A format-212 channel with WFDB defaults filled in.
    pub fn new_212(file_name: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            file_name: file_name.into(),
            format: FORMAT_212,
            byte_offset: 0,
            adc_gain: DEFAULT_ADC_GAIN,
            baseline: 0,
            units: None,
            adc_resolution: 12,
            adc_zero: 0,
            initial_value: 0,
            checksum: None,
            block_size: 0,
            description: description.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordHeader {
    pub record_id: String,
    pub sampling_rate: f64,
    /// `None` when the header leaves the length unspecified.
    pub num_samples: Option<usize>,
    pub channels: Vec<ChannelSpec>,
}

impl RecordHeader {
    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }
}

const CTX: &str = "header";

struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokens(line: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push(Token {
                    text: &line[s..i],
                    column: s + 1,
                });
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(Token {
            text: &line[s..],
            column: s + 1,
        });
    }
    out
}

fn parse_num<T: std::str::FromStr>(text: &str, line: usize, column: usize, what: &str) -> Result<T> {
    text.parse::<T>()
        .map_err(|_| Error::parse(CTX, line, column, format!("invalid {what} '{text}'")))
}

/// Splits a leading run of ASCII digits (with optional sign) from the rest.
fn leading_int(text: &str) -> (&str, &str) {
    let end = text
        .char_indices()
        .find(|&(i, c)| !(c.is_ascii_digit() || (i == 0 && (c == '-' || c == '+'))))
        .map(|(i, _)| i)
        .unwrap_or(text.len());
    text.split_at(end)
}

pub fn parse_header(text: &str) -> Result<RecordHeader> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| {
            let t = l.trim_start();
            !t.is_empty() && !t.starts_with('#')
        });

    let (line_no, record_line) = lines
        .next()
        .ok_or_else(|| Error::parse(CTX, 1, 1, "missing record line"))?;
    let toks = tokens(record_line);
    if toks.len() < 2 {
        return Err(Error::parse(
            CTX,
            line_no,
            toks.first().map_or(1, |t| t.column + t.text.len()),
            "record line needs at least a name and a signal count",
        ));
    }
    let name = &toks[0];
    if name.text.contains('/') {
        return Err(Error::parse(
            CTX,
            line_no,
            name.column,
            "multi-segment records are not supported",
        ));
    }
    let num_signals: usize = parse_num(toks[1].text, line_no, toks[1].column, "signal count")?;

    let sampling_rate = match toks.get(2) {
        Some(t) => {
            let freq = t.text.split('/').next().unwrap_or_default();
            let fs: f64 = parse_num(freq, line_no, t.column, "sampling frequency")?;
            if !(fs > 0.0) {
                return Err(Error::parse(CTX, line_no, t.column, "sampling frequency must be positive"));
            }
            fs
        }
        None => DEFAULT_SAMPLING_RATE,
    };
    let num_samples = match toks.get(3) {
        Some(t) => Some(parse_num::<usize>(t.text, line_no, t.column, "sample count")?),
        None => None,
    };

    let mut channels = Vec::with_capacity(num_signals);
    for _ in 0..num_signals {
        let (line_no, line) = lines.next().ok_or_else(|| {
            Error::parse(
                CTX,
                line_no,
                1,
                format!("expected {num_signals} signal lines, found {}", channels.len()),
            )
        })?;
        channels.push(parse_signal_line(line, line_no)?);
    }

    Ok(RecordHeader {
        record_id: name.text.to_string(),
        sampling_rate,
        num_samples: num_samples.filter(|&n| n > 0),
        channels,
    })
}

fn parse_signal_line(line: &str, line_no: usize) -> Result<ChannelSpec> {
    let toks = tokens(line);
    if toks.len() < 2 {
        return Err(Error::parse(CTX, line_no, 1, "signal line needs a file name and format"));
    }
    let file_name = toks[0].text.to_string();

    let fmt_tok = &toks[1];
    let (digits, mut rest) = leading_int(fmt_tok.text);
    let format: u16 = parse_num(digits, line_no, fmt_tok.column, "storage format")?;
    if format != FORMAT_212 {
        return Err(Error::UnsupportedFormat(format));
    }
    let mut byte_offset = 0usize;
    while !rest.is_empty() {
        let (tag, tail) = rest.split_at(1);
        let (value, tail) = leading_int(tail);
        match tag {
            // samples-per-frame and skew are accepted but only 1 and 0 are meaningful here
            "x" => {
                let spf: u32 = parse_num(value, line_no, fmt_tok.column, "samples per frame")?;
                if spf > 1 {
                    return Err(Error::parse(
                        CTX,
                        line_no,
                        fmt_tok.column,
                        "multi-frequency signals are not supported",
                    ));
                }
            }
            ":" => {
                let _skew: i64 = parse_num(value, line_no, fmt_tok.column, "skew")?;
            }
            "+" => byte_offset = parse_num(value, line_no, fmt_tok.column, "byte offset")?,
            _ => {
                return Err(Error::parse(
                    CTX,
                    line_no,
                    fmt_tok.column,
                    format!("unexpected format modifier '{tag}'"),
                ))
            }
        }
        rest = tail;
    }

    let mut spec = ChannelSpec::new_212(file_name, "");
    spec.byte_offset = byte_offset;

    let mut explicit_baseline = None;
    if let Some(t) = toks.get(2) {
        let (gain_part, units) = match t.text.split_once('/') {
            Some((g, u)) => (g, Some(u.to_string())),
            None => (t.text, None),
        };
        let (gain_text, baseline_text) = match gain_part.split_once('(') {
            Some((g, b)) => (g, Some(b.trim_end_matches(')'))),
            None => (gain_part, None),
        };
        let gain: f64 = parse_num(gain_text, line_no, t.column, "ADC gain")?;
        spec.adc_gain = if gain == 0.0 { DEFAULT_ADC_GAIN } else { gain };
        if let Some(b) = baseline_text {
            explicit_baseline = Some(parse_num::<i32>(b, line_no, t.column, "baseline")?);
        }
        spec.units = units;
    }
    if let Some(t) = toks.get(3) {
        let res: u32 = parse_num(t.text, line_no, t.column, "ADC resolution")?;
        spec.adc_resolution = if res == 0 { 12 } else { res };
    }
    if let Some(t) = toks.get(4) {
        spec.adc_zero = parse_num(t.text, line_no, t.column, "ADC zero")?;
    }
    spec.initial_value = match toks.get(5) {
        Some(t) => parse_num(t.text, line_no, t.column, "initial value")?,
        None => spec.adc_zero,
    };
    if let Some(t) = toks.get(6) {
        // checksums are 16-bit and stored as signed decimal
        let sum: i32 = parse_num(t.text, line_no, t.column, "checksum")?;
        spec.checksum = Some(sum as i16);
    }
    if let Some(t) = toks.get(7) {
        spec.block_size = parse_num(t.text, line_no, t.column, "block size")?;
    }
    if let Some(t) = toks.get(8) {
        spec.description = line[t.column - 1..].trim_end().to_string();
    }
    spec.baseline = explicit_baseline.unwrap_or(spec.adc_zero);
    Ok(spec)
}

/// Writes a header in the same layout PhysioBank uses for MIT-BIH records.
pub fn write_header(header: &RecordHeader) -> String {
    let mut out = String::new();
    let _ = write!(
        out,
        "{} {} {}",
        header.record_id,
        header.channels.len(),
        format_number(header.sampling_rate)
    );
    if let Some(n) = header.num_samples {
        let _ = write!(out, " {n}");
    }
    out.push('\n');
    for ch in &header.channels {
        let _ = write!(out, "{} {}", ch.file_name, ch.format);
        if ch.byte_offset > 0 {
            let _ = write!(out, "+{}", ch.byte_offset);
        }
        let _ = write!(out, " {}", format_number(ch.adc_gain));
        if ch.baseline != ch.adc_zero {
            let _ = write!(out, "({})", ch.baseline);
        }
        if let Some(units) = &ch.units {
            let _ = write!(out, "/{units}");
        }
        let _ = write!(
            out,
            " {} {} {} {} {}",
            ch.adc_resolution,
            ch.adc_zero,
            ch.initial_value,
            ch.checksum.unwrap_or(0),
            ch.block_size
        );
        if !ch.description.is_empty() {
            let _ = write!(out, " {}", ch.description);
        }
        out.push('\n');
    }
    out
}

fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}
