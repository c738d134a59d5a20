//! MIT annotation format (`.atr`).
//!
//! The stream is a sequence of little-endian 16-bit words. The top 6 bits
//! carry the annotation code `A`, the low 10 bits a value `I`. For ordinary
//! codes `I` is the time delta from the previous annotation. Codes 59..=63
//! are escapes modifying the next annotation:
//!
//! | code | name | payload |
//! |------|------|---------|
//! | 59 | SKIP | next 4 bytes: 32-bit interval, high word first |
//! | 60 | NUM  | `I` is the annotator number (sticky) |
//! | 61 | SUB  | `I` is the subtype (reset per annotation) |
//! | 62 | CHN  | `I` is the signal channel (sticky) |
//! | 63 | AUX  | `I` bytes of auxiliary data follow, padded to even length |
//!
//! A zero word ends the stream.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SKIP: u8 = 59;
const NUM: u8 = 60;
const SUB: u8 = 61;
const CHN: u8 = 62;
const AUX: u8 = 63;

/// Standard WFDB annotation mnemonics indexed by code.
const MNEMONICS: [char; 42] = [
    ' ', 'N', 'L', 'R', 'a', 'V', 'F', 'J', 'A', 'S', 'E', 'j', '/', 'Q', '~', '\u{FFFD}', '|',
    '\u{FFFD}', 's', 'T', '*', 'D', '"', '=', 'p', 'B', '^', 't', '+', 'u', '?', '!', '[', ']',
    'e', 'n', '@', 'x', 'f', '(', ')', 'r',
];

/// Codes that WFDB treats as QRS (beat) annotations.
const BEAT_CODES: [u8; 20] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 25, 30, 34, 35, 37, 38, 41];

pub fn symbol_for_code(code: u8) -> char {
    MNEMONICS.get(code as usize).copied().unwrap_or('\u{FFFD}')
}

pub fn code_for_symbol(symbol: char) -> Option<u8> {
    if symbol == '\u{FFFD}' {
        return None;
    }
    MNEMONICS.iter().position(|&c| c == symbol).map(|p| p as u8)
}

pub fn is_beat_code(code: u8) -> bool {
    BEAT_CODES.contains(&code)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatAnnotation {
    pub sample_index: u64,
    pub symbol: char,
    pub code: u8,
    pub subtype: i8,
    pub channel: u8,
    pub num: i8,
    pub time_s: f64,
}

impl BeatAnnotation {
    pub fn new(sample_index: u64, code: u8, sampling_rate: f64) -> Self {
        Self {
            sample_index,
            symbol: symbol_for_code(code),
            code,
            subtype: 0,
            channel: 0,
            num: 0,
            time_s: sample_index as f64 / sampling_rate,
        }
    }

    /// True for QRS annotations; rhythm, noise and comment marks are not beats.
    pub fn is_beat(&self) -> bool {
        is_beat_code(self.code)
    }
}

const CTX: &str = "annotation stream";

fn dangling(offset: usize, what: &str) -> Error {
    // the stream is binary; report the byte offset in the column slot
    Error::parse(CTX, 1, offset + 1, format!("dangling {what} at end of stream"))
}

/// Decodes an annotation stream. When `num_samples` is given, any annotation
/// at or beyond it is rejected.
pub fn parse_annotations(
    bytes: &[u8],
    sampling_rate: f64,
    num_samples: Option<usize>,
) -> Result<Vec<BeatAnnotation>> {
    let mut out = Vec::new();
    let mut pos = 0usize;
    let mut time: i64 = 0;
    let mut num: i8 = 0;
    let mut channel: u8 = 0;
    let mut subtype: i8 = 0;
    // an escape has been read and not yet consumed by an annotation
    let mut pending: Option<(usize, &'static str)> = None;

    loop {
        if pos >= bytes.len() {
            break;
        }
        if pos + 1 >= bytes.len() {
            return Err(Error::parse(CTX, 1, pos + 1, "odd trailing byte"));
        }
        let word = u16::from_le_bytes([bytes[pos], bytes[pos + 1]]);
        let word_pos = pos;
        pos += 2;
        let code = (word >> 10) as u8;
        let value = word & 0x03FF;
        if word == 0 {
            if let Some((at, what)) = pending {
                return Err(dangling(at, what));
            }
            return Ok(out);
        }
        match code {
            SKIP => {
                if pos + 4 > bytes.len() {
                    return Err(dangling(word_pos, "SKIP"));
                }
                let hi = u16::from_le_bytes([bytes[pos], bytes[pos + 1]]) as u32;
                let lo = u16::from_le_bytes([bytes[pos + 2], bytes[pos + 3]]) as u32;
                pos += 4;
                time += ((hi << 16) | lo) as i32 as i64;
                pending = Some((word_pos, "SKIP"));
            }
            NUM => {
                num = value as i8;
                pending = Some((word_pos, "NUM"));
            }
            SUB => {
                subtype = value as i8;
                pending = Some((word_pos, "SUB"));
            }
            CHN => {
                channel = value as u8;
                pending = Some((word_pos, "CHN"));
            }
            AUX => {
                let len = value as usize;
                let padded = len + (len & 1);
                if pos + padded > bytes.len() {
                    return Err(dangling(word_pos, "AUX"));
                }
                pos += padded;
                pending = Some((word_pos, "AUX"));
            }
            _ => {
                time += value as i64;
                if time < 0 {
                    return Err(Error::parse(CTX, 1, word_pos + 1, "negative annotation time"));
                }
                let index = time as u64;
                if let Some(n) = num_samples {
                    if index >= n as u64 {
                        return Err(Error::OutOfRangeAnnotation {
                            index,
                            num_samples: n,
                        });
                    }
                }
                let mut ann = BeatAnnotation::new(index, code, sampling_rate);
                ann.num = num;
                ann.channel = channel;
                ann.subtype = subtype;
                out.push(ann);
                subtype = 0;
                pending = None;
            }
        }
    }
    if let Some((at, what)) = pending {
        return Err(dangling(at, what));
    }
    Ok(out)
}

/// Encodes annotations in MIT format, emitting SKIP/SUB/CHN/NUM escapes as
/// needed. Annotations must be sorted by sample index.
pub fn encode_annotations(annotations: &[BeatAnnotation]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let push_word = |out: &mut Vec<u8>, code: u8, value: u16| {
        out.extend_from_slice(&(((code as u16) << 10) | (value & 0x03FF)).to_le_bytes());
    };
    let mut prev: u64 = 0;
    let mut num: i8 = 0;
    let mut channel: u8 = 0;
    for ann in annotations {
        if ann.sample_index < prev {
            return Err(Error::Config("annotations must be sorted by sample index".into()));
        }
        if !(1..SKIP).contains(&ann.code) {
            return Err(Error::Config(format!("annotation code {} cannot be stored", ann.code)));
        }
        let mut delta = ann.sample_index - prev;
        if delta > 0x03FF {
            let skip = i32::try_from(delta)
                .map_err(|_| Error::Config("annotation gap exceeds 32 bits".into()))?
                as u32;
            push_word(&mut out, SKIP, 0);
            out.extend_from_slice(&((skip >> 16) as u16).to_le_bytes());
            out.extend_from_slice(&((skip & 0xFFFF) as u16).to_le_bytes());
            delta = 0;
        }
        if ann.num != num {
            push_word(&mut out, NUM, ann.num as u8 as u16);
            num = ann.num;
        }
        if ann.subtype != 0 {
            push_word(&mut out, SUB, ann.subtype as u8 as u16);
        }
        if ann.channel != channel {
            push_word(&mut out, CHN, ann.channel as u16);
            channel = ann.channel;
        }
        push_word(&mut out, ann.code, delta as u16);
        prev = ann.sample_index;
    }
    out.extend_from_slice(&[0, 0]);
    Ok(out)
}

/// Reads the CSV fallback: a header row, then `sample_index,symbol` lines.
pub fn parse_annotation_csv<R: BufRead>(reader: R, sampling_rate: f64) -> Result<Vec<BeatAnnotation>> {
    const CTX: &str = "annotation csv";
    let mut lines = reader.lines().enumerate();
    match lines.next() {
        Some((_, Ok(h))) if h.trim().eq_ignore_ascii_case("sample_index,symbol") => {}
        Some((_, Ok(_))) | None => {
            return Err(Error::parse(CTX, 1, 1, "expected header 'sample_index,symbol'"))
        }
        Some((_, Err(e))) => return Err(Error::parse(CTX, 1, 1, e.to_string())),
    }
    let mut out: Vec<BeatAnnotation> = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::parse(CTX, line_no, 1, e.to_string()))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (idx, sym) = line
            .split_once(',')
            .ok_or_else(|| Error::parse(CTX, line_no, 1, "expected 'sample_index,symbol'"))?;
        let index: u64 = idx
            .trim()
            .parse()
            .map_err(|_| Error::parse(CTX, line_no, 1, format!("invalid sample index '{idx}'")))?;
        let mut chars = sym.trim().chars();
        let symbol = match (chars.next(), chars.next()) {
            (Some(c), None) => c,
            _ => {
                return Err(Error::parse(
                    CTX,
                    line_no,
                    idx.len() + 2,
                    format!("symbol must be a single character, got '{sym}'"),
                ))
            }
        };
        let code = code_for_symbol(symbol).ok_or_else(|| {
            Error::parse(CTX, line_no, idx.len() + 2, format!("unknown annotation symbol '{symbol}'"))
        })?;
        if out.last().is_some_and(|prev| prev.sample_index > index) {
            return Err(Error::parse(CTX, line_no, 1, "sample indices must be non-decreasing"));
        }
        out.push(BeatAnnotation::new(index, code, sampling_rate));
    }
    Ok(out)
}
