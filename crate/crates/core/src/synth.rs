//! Deterministic synthetic ECG records.
//!
//! Each beat is a sum of Gaussian bumps (P, Q, R, S, T) whose widths and
//! amplitudes depend on the beat's class, so the five classes look
//! different on a rendered frame. Ectopic beats arrive early and are
//! followed by a compensatory pause. The output goes through the same WFDB
//! writer and reader as real data.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aami::AamiClass;
use crate::error::{Error, Result};
use crate::wfdb::{code_for_symbol, write_record, AnnotatedRecord, BeatAnnotation, ChannelInfo, SignalRecord};

const GAIN: f64 = 200.0;
const BASELINE: i32 = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub record_id: String,
    pub duration_s: f64,
    pub sampling_rate: f64,
    pub heart_rate_bpm: f64,
    /// Relative weights of N, S, V, F, Q beats.
    pub class_weights: [f64; 5],
    /// Standard deviation of additive noise, in mV.
    pub noise_mv: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            record_id: "s100".into(),
            duration_s: 60.0,
            sampling_rate: 360.0,
            heart_rate_bpm: 72.0,
            class_weights: [0.60, 0.12, 0.14, 0.07, 0.07],
            noise_mv: 0.01,
            seed: 0,
        }
    }
}

struct Wave {
    offset_s: f64,
    width_s: f64,
    amplitude_mv: f64,
}

const fn w(offset_s: f64, width_s: f64, amplitude_mv: f64) -> Wave {
    Wave { offset_s, width_s, amplitude_mv }
}

const NORMAL: &[Wave] = &[w(-0.20, 0.025, 0.15), w(-0.03, 0.010, -0.10), w(0.0, 0.012, 1.2), w(0.03, 0.010, -0.25), w(0.25, 0.045, 0.30)];
// abnormal P, normal QRS
const SUPRA: &[Wave] = &[w(-0.16, 0.020, -0.12), w(-0.03, 0.010, -0.10), w(0.0, 0.012, 1.1), w(0.03, 0.010, -0.20), w(0.24, 0.045, 0.25)];
// no P, wide tall QRS, inverted T
const VENTRICULAR: &[Wave] = &[w(-0.04, 0.020, -0.30), w(0.0, 0.030, 1.8), w(0.06, 0.030, -0.60), w(0.30, 0.060, -0.45)];
// halfway between N and V
const FUSION: &[Wave] = &[w(-0.18, 0.025, 0.08), w(0.0, 0.020, 1.5), w(0.045, 0.020, -0.40), w(0.27, 0.050, -0.10)];
// pacing spike before a wide complex
const PACED: &[Wave] = &[w(-0.05, 0.002, 2.0), w(0.0, 0.035, 0.9), w(0.07, 0.030, -0.50), w(0.30, 0.060, 0.20)];

fn morphology(class: AamiClass) -> &'static [Wave] {
    match class {
        AamiClass::N => NORMAL,
        AamiClass::S => SUPRA,
        AamiClass::V => VENTRICULAR,
        AamiClass::F => FUSION,
        AamiClass::Q => PACED,
    }
}

fn symbol(class: AamiClass) -> char {
    match class {
        AamiClass::N => 'N',
        AamiClass::S => 'A',
        AamiClass::V => 'V',
        AamiClass::F => 'F',
        AamiClass::Q => 'Q',
    }
}

/// Beat classes and R-peak times in seconds.
fn beat_schedule(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<(f64, AamiClass)> {
    let rr = 60.0 / spec.heart_rate_bpm;
    let total: f64 = spec.class_weights.iter().sum();
    let mut beats = Vec::new();
    let mut t = 0.4 + rng.gen_range(0.0..0.3);
    let mut prev = AamiClass::N;
    while t < spec.duration_s - 0.4 {
        let mut class = AamiClass::N;
        // ectopy never comes twice in a row so the rhythm stays readable
        if prev == AamiClass::N {
            let mut u = rng.gen_range(0.0..total);
            for c in AamiClass::ALL {
                u -= spec.class_weights[c.id()];
                if u < 0.0 {
                    class = c;
                    break;
                }
            }
        }
        let interval = match class {
            AamiClass::N | AamiClass::Q => rr,
            AamiClass::S | AamiClass::V | AamiClass::F => rr * 0.7,
        };
        let jitter = rng.gen_range(-0.03..0.03) * rr;
        // an early beat shortens the interval before it
        if class != AamiClass::N && class != AamiClass::Q {
            if let Some(last) = beats.last().map(|&(lt, _): &(f64, AamiClass)| lt) {
                t = last + interval + jitter;
            }
        }
        if t >= spec.duration_s - 0.4 {
            break;
        }
        beats.push((t, class));
        let pause = if class == AamiClass::N || class == AamiClass::Q { 1.0 } else { 1.3 };
        t += rr * pause + rng.gen_range(-0.03..0.03) * rr;
        prev = class;
    }
    beats
}

pub fn synthesize(spec: &SynthSpec) -> Result<AnnotatedRecord> {
    if !(spec.duration_s > 1.0 && spec.sampling_rate > 0.0 && spec.heart_rate_bpm > 0.0) {
        return Err(Error::Config("synthetic record needs duration > 1 s and positive rates".into()));
    }
    if spec.class_weights.iter().any(|w| *w < 0.0) || spec.class_weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Config("class weights must be non-negative with a positive sum".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let fs = spec.sampling_rate;
    let n = (spec.duration_s * fs).round() as usize;
    let schedule = beat_schedule(spec, &mut rng);

    let mut mv = vec![0.0f64; n];
    for &(t, class) in &schedule {
        for wave in morphology(class) {
            let centre = t + wave.offset_s;
            let lo = ((centre - 4.0 * wave.width_s) * fs).floor().max(0.0) as usize;
            let hi = (((centre + 4.0 * wave.width_s) * fs).ceil() as usize).min(n);
            for (i, v) in mv.iter_mut().enumerate().take(hi).skip(lo) {
                let z = (i as f64 / fs - centre) / wave.width_s;
                *v += wave.amplitude_mv * (-0.5 * z * z).exp();
            }
        }
    }
    let wander_phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let samples: Vec<i16> = mv
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let t = i as f64 / fs;
            let wander = 0.05 * (std::f64::consts::TAU * 0.25 * t + wander_phase).sin();
            let noise = spec.noise_mv * (rng.gen::<f64>() + rng.gen::<f64>() + rng.gen::<f64>() - 1.5) * 2.0;
            let adu = BASELINE as f64 + (v + wander + noise) * GAIN;
            adu.round().clamp(-2048.0, 2047.0) as i16
        })
        .collect();

    let mut annotations = vec![BeatAnnotation::new(0, code_for_symbol('+').unwrap_or(28), fs)];
    annotations.extend(schedule.iter().map(|&(t, class)| {
        let code = code_for_symbol(symbol(class)).unwrap_or(1);
        BeatAnnotation::new((t * fs).round() as u64, code, fs)
    }));

    Ok(AnnotatedRecord {
        signal: SignalRecord {
            record_id: spec.record_id.clone(),
            sampling_rate: fs,
            num_samples: n,
            channels: vec![ChannelInfo {
                name: "MLII".into(),
                adc_gain: GAIN,
                adc_baseline: BASELINE,
            }],
            samples: vec![samples],
        },
        annotations,
    })
}

/// Specs for `count` records `s100`, `s101`, … with seeds derived from `seed`.
pub fn corpus_specs(count: usize, duration_s: f64, seed: u64) -> Vec<SynthSpec> {
    (0..count)
        .map(|i| SynthSpec {
            record_id: format!("s{}", 100 + i),
            duration_s,
            heart_rate_bpm: 60.0 + (i % 5) as f64 * 8.0,
            seed: seed.wrapping_mul(1000).wrapping_add(i as u64),
            ..SynthSpec::default()
        })
        .collect()
}

/// Writes each spec as a WFDB record in `dir`.
pub fn write_corpus(dir: &Path, specs: &[SynthSpec]) -> Result<Vec<String>> {
    let mut ids = Vec::with_capacity(specs.len());
    for spec in specs {
        let rec = synthesize(spec)?;
        write_record(dir, &rec.signal, &rec.annotations)?;
        ids.push(spec.record_id.clone());
    }
    Ok(ids)
}
