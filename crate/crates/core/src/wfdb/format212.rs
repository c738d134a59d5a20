//! Format 212: pairs of 12-bit two's-complement samples packed into 3 bytes.
//!
//! ```text
//! byte0 = A[7:0]
//! byte1 = B[11:8] << 4 | A[11:8]
//! byte2 = B[7:0]
//! ```
//! Channels are interleaved sample by sample, so for a two-channel record
//! each 3-byte group holds one frame.

use crate::error::{Error, Result};

pub const SAMPLE_MIN: i16 = -2048;
pub const SAMPLE_MAX: i16 = 2047;

/// Bytes needed to hold `total_samples` packed samples.
pub fn encoded_len(total_samples: usize) -> usize {
    (total_samples * 3).div_ceil(2)
}

#[inline]
fn sign_extend_12(v: u16) -> i16 {
    ((v << 4) as i16) >> 4
}

pub fn decode_format212(bytes: &[u8], n_samples: usize, n_channels: usize) -> Result<Vec<Vec<i16>>> {
    let total = n_samples * n_channels;
    let expected = encoded_len(total);
    if bytes.len() < expected {
        return Err(Error::TruncatedSignal {
            expected,
            actual: bytes.len(),
        });
    }
    let mut channels: Vec<Vec<i16>> = (0..n_channels).map(|_| Vec::with_capacity(n_samples)).collect();
    if n_channels == 0 {
        return Ok(channels);
    }

    let mut push = {
        let mut k = 0usize;
        move |channels: &mut Vec<Vec<i16>>, v: i16| {
            channels[k % n_channels].push(v);
            k += 1;
        }
    };
    let pairs = total / 2;
    for chunk in bytes[..pairs * 3].chunks_exact(3) {
        let (b0, b1, b2) = (chunk[0] as u16, chunk[1] as u16, chunk[2] as u16);
        push(&mut channels, sign_extend_12(((b1 & 0x0F) << 8) | b0));
        push(&mut channels, sign_extend_12(((b1 & 0xF0) << 4) | b2));
    }
    if total % 2 == 1 {
        let b0 = bytes[pairs * 3] as u16;
        let b1 = bytes[pairs * 3 + 1] as u16;
        push(&mut channels, sign_extend_12(((b1 & 0x0F) << 8) | b0));
    }
    Ok(channels)
}

/// Packs interleaved channels into format 212. All channels must share a
/// length and every sample must fit in 12 bits.
pub fn encode_format212(channels: &[Vec<i16>]) -> Result<Vec<u8>> {
    let n_samples = channels.first().map_or(0, Vec::len);
    if channels.iter().any(|c| c.len() != n_samples) {
        return Err(Error::Config("channels must have equal length".into()));
    }
    let mut interleaved = Vec::with_capacity(n_samples * channels.len());
    for i in 0..n_samples {
        for ch in channels {
            let v = ch[i];
            if !(SAMPLE_MIN..=SAMPLE_MAX).contains(&v) {
                return Err(Error::Config(format!("sample {v} does not fit in 12 bits")));
            }
            interleaved.push((v as u16) & 0x0FFF);
        }
    }
    let mut out = Vec::with_capacity(encoded_len(interleaved.len()));
    let mut it = interleaved.chunks(2);
    for pair in it.by_ref() {
        let a = pair[0];
        let b = pair.get(1).copied().unwrap_or(0);
        out.push((a & 0xFF) as u8);
        out.push((((b >> 8) & 0x0F) << 4 | ((a >> 8) & 0x0F)) as u8);
        if pair.len() == 2 {
            out.push((b & 0xFF) as u8);
        }
    }
    Ok(out)
}

/// The WFDB signal checksum: 16-bit wrapping sum of all samples.
pub fn checksum(samples: &[i16]) -> i16 {
    samples.iter().fold(0i16, |acc, &s| acc.wrapping_add(s))
}
