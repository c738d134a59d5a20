use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::annotation::{encode_annotations, parse_annotation_csv, parse_annotations, BeatAnnotation};
use super::format212::{checksum, decode_format212, encode_format212};
use super::header::{parse_header, write_header, ChannelSpec, RecordHeader};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelInfo {
    pub name: String,
    /// adu per mV
    pub adc_gain: f64,
    pub adc_baseline: i32,
}

/// One patient's sampled signal, kept in raw ADC units.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalRecord {
    pub record_id: String,
    pub sampling_rate: f64,
    pub num_samples: usize,
    pub channels: Vec<ChannelInfo>,
    pub samples: Vec<Vec<i16>>,
}

impl SignalRecord {
    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn duration_s(&self) -> f64 {
        self.num_samples as f64 / self.sampling_rate
    }

    /// Physical units for one channel: `(adu - baseline) / gain`.
    pub fn to_millivolts(&self, channel: usize) -> Vec<f64> {
        let info = &self.channels[channel];
        self.samples[channel]
            .iter()
            .map(|&s| (s as f64 - info.adc_baseline as f64) / info.adc_gain)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedRecord {
    pub signal: SignalRecord,
    pub annotations: Vec<BeatAnnotation>,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Loads `<dir>/<id>.hea`, its signal files and `<id>.atr`, falling back to
/// `<id>.csv` for annotations when no `.atr` exists.
pub fn load_record(dir: &Path, record_id: &str) -> Result<AnnotatedRecord> {
    let header_path = dir.join(format!("{record_id}.hea"));
    let header_text = fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
    let header = parse_header(&header_text).map_err(Error::in_file(&header_path))?;
    let signal = load_signal(dir, &header)?;

    let atr = dir.join(format!("{record_id}.atr"));
    let csv = dir.join(format!("{record_id}.csv"));
    let annotations = if atr.exists() {
        parse_annotations(&read(&atr)?, signal.sampling_rate, Some(signal.num_samples)).map_err(Error::in_file(&atr))?
    } else if csv.exists() {
        let file = fs::File::open(&csv).map_err(|e| Error::io(&csv, e))?;
        let anns = parse_annotation_csv(BufReader::new(file), signal.sampling_rate).map_err(Error::in_file(&csv))?;
        if let Some(a) = anns.iter().find(|a| a.sample_index >= signal.num_samples as u64) {
            return Err(Error::in_file(&csv)(Error::OutOfRangeAnnotation {
                index: a.sample_index,
                num_samples: signal.num_samples,
            }));
        }
        anns
    } else {
        return Err(Error::io(
            atr,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no .atr or .csv annotation file"),
        ));
    };
    Ok(AnnotatedRecord { signal, annotations })
}

fn load_signal(dir: &Path, header: &RecordHeader) -> Result<SignalRecord> {
    // signals sharing a file are interleaved within it; group them in header order
    let mut groups: Vec<(&ChannelSpec, Vec<usize>)> = Vec::new();
    for (i, ch) in header.channels.iter().enumerate() {
        match groups.iter_mut().find(|(first, _)| first.file_name == ch.file_name) {
            Some((_, members)) => members.push(i),
            None => groups.push((ch, vec![i])),
        }
    }

    let mut samples: Vec<Vec<i16>> = vec![Vec::new(); header.channels.len()];
    let mut num_samples = header.num_samples;
    for (first, members) in &groups {
        let path = dir.join(&first.file_name);
        let bytes = read(&path)?;
        let data = bytes.get(first.byte_offset..).unwrap_or_default();
        let n = match num_samples {
            Some(n) => n,
            None => {
                let n = data.len() * 2 / 3 / members.len();
                num_samples = Some(n);
                n
            }
        };
        let decoded = decode_format212(data, n, members.len()).map_err(Error::in_file(&path))?;
        for (&idx, values) in members.iter().zip(decoded) {
            samples[idx] = values;
        }
    }

    for (i, ch) in header.channels.iter().enumerate() {
        if let Some(expected) = ch.checksum {
            let actual = checksum(&samples[i]);
            if actual != expected {
                return Err(Error::in_file(dir.join(&ch.file_name))(Error::ChecksumMismatch {
                    channel: i,
                    expected,
                    actual,
                }));
            }
        }
    }

    Ok(SignalRecord {
        record_id: header.record_id.clone(),
        sampling_rate: header.sampling_rate,
        num_samples: num_samples.unwrap_or(0),
        channels: header
            .channels
            .iter()
            .map(|c| ChannelInfo {
                name: c.description.clone(),
                adc_gain: c.adc_gain,
                adc_baseline: c.baseline,
            })
            .collect(),
        samples,
    })
}

/// Writes a record as `.hea` + format-212 `.dat` + `.atr`. Used to produce
/// synthetic fixtures that go through the same parsing path as real data.
pub fn write_record(dir: &Path, signal: &SignalRecord, annotations: &[BeatAnnotation]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let id = &signal.record_id;
    let dat_name = format!("{id}.dat");
    let channels = signal
        .channels
        .iter()
        .zip(&signal.samples)
        .map(|(info, values)| {
            let mut spec = ChannelSpec::new_212(dat_name.clone(), info.name.clone());
            spec.adc_gain = info.adc_gain;
            spec.adc_zero = info.adc_baseline;
            spec.baseline = info.adc_baseline;
            spec.initial_value = values.first().copied().unwrap_or(0) as i32;
            spec.checksum = Some(checksum(values));
            spec
        })
        .collect();
    let header = RecordHeader {
        record_id: id.clone(),
        sampling_rate: signal.sampling_rate,
        num_samples: Some(signal.num_samples),
        channels,
    };

    let outputs = [
        (dir.join(format!("{id}.hea")), write_header(&header).into_bytes()),
        (dir.join(&dat_name), encode_format212(&signal.samples)?),
        (dir.join(format!("{id}.atr")), encode_annotations(annotations)?),
    ];
    let mut written = Vec::new();
    for (path, bytes) in outputs {
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Record ids (`.hea` stems) in a directory, numerically sorted where possible.
pub fn list_records(dir: &Path) -> Result<Vec<String>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut ids = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "hea") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                let key = (stem.parse::<u64>().unwrap_or(u64::MAX), stem.to_string());
                ids.insert(key, stem.to_string());
            }
        }
    }
    Ok(ids.into_values().collect())
}
