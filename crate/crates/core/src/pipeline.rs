//! Whole-run orchestration: ingest a record directory, build a dataset,
//! split it, evaluate detections against it, and set up replay sessions.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aami::{filter_records, map_beats, AamiClass, ExclusionPolicy, MappedBeat, MappingTable, NUM_CLASSES};
use crate::config::RunConfig;
use crate::detect::{parse_detections, GroundTruth};
use crate::error::{Error, Result};
use crate::eval::{evaluate, join_frames, EvalReport, ReportProvenance};
use crate::render::{augment, export_yolo, extract_windows, frame_seed, read_label_dir, render_frame, LabeledFrame};
use crate::split::{holdout, kfold_with, FoldAssignment, SplitAssignment, SplitFrame};
use crate::stream::{replay, OracleDetector, ReplayConfig};
use crate::wfdb::{list_records, load_record, AnnotatedRecord, SignalRecord};

/// Directory under a dataset that holds split lists.
pub const SPLITS_DIR: &str = "splits";

pub struct LoadedRecord {
    pub record: AnnotatedRecord,
    pub beats: Vec<MappedBeat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSummary {
    pub record_id: String,
    pub sampling_rate: f64,
    pub num_samples: usize,
    pub beats: [usize; NUM_CLASSES],
    /// Annotations that are not beats, or beat symbols outside the mapping.
    pub unmapped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub records: Vec<RecordSummary>,
    pub excluded: Vec<String>,
    pub totals: [usize; NUM_CLASSES],
}

impl IngestSummary {
    pub fn to_table(&self) -> String {
        let mut s = format!("{:<8} {:>9} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n", "record", "samples", "N", "S", "V", "F", "Q", "other");
        for r in &self.records {
            s += &format!("{:<8} {:>9}", r.record_id, r.num_samples);
            for n in r.beats {
                s += &format!(" {n:>8}");
            }
            s += &format!(" {:>8}\n", r.unmapped);
        }
        s += &format!("{:<8} {:>9}", "total", "");
        for n in self.totals {
            s += &format!(" {n:>8}");
        }
        s += &format!(" {:>8}\n", self.records.iter().map(|r| r.unmapped).sum::<usize>());
        if !self.excluded.is_empty() {
            s += &format!("excluded: {}\n", self.excluded.join(", "));
        }
        s
    }
}

pub fn mapping_table(overrides: Option<&Path>) -> Result<MappingTable> {
    match overrides {
        None => Ok(MappingTable::default()),
        Some(path) => {
            let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
            MappingTable::default().with_overrides(BufReader::new(file))
        }
    }
}

/// Loads every record in `dir` not excluded by `policy`, in record order.
pub fn ingest(dir: &Path, policy: &ExclusionPolicy, table: &MappingTable) -> Result<(Vec<LoadedRecord>, IngestSummary)> {
    let all = list_records(dir)?;
    if all.is_empty() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no .hea files"),
        ));
    }
    let kept = filter_records(&all, policy);
    let excluded = all.iter().filter(|id| !kept.contains(id)).cloned().collect();
    let loaded: Vec<LoadedRecord> = kept
        .par_iter()
        .map(|id| {
            let record = load_record(dir, id)?;
            let beats = map_beats(&record.annotations, table);
            Ok(LoadedRecord { record, beats })
        })
        .collect::<Result<_>>()?;

    let mut totals = [0; NUM_CLASSES];
    let records = loaded
        .iter()
        .map(|l| {
            let mut beats = [0; NUM_CLASSES];
            for b in &l.beats {
                beats[b.class.id()] += 1;
                totals[b.class.id()] += 1;
            }
            RecordSummary {
                record_id: l.record.signal.record_id.clone(),
                sampling_rate: l.record.signal.sampling_rate,
                num_samples: l.record.signal.num_samples,
                beats,
                unmapped: l.record.annotations.len() - l.beats.len(),
            }
        })
        .collect();
    Ok((loaded, IngestSummary { records, excluded, totals }))
}

/// Windows, renders and (optionally) augments every record. Frames come
/// back sorted by id; each frame's augmentation depends only on the run
/// seed and the frame's origin.
pub fn render_dataset(records: &[LoadedRecord], cfg: &RunConfig) -> Result<Vec<LabeledFrame>> {
    let mut windows = Vec::new();
    for r in records {
        windows.extend(extract_windows(&r.record.signal, &r.beats, &cfg.window)?);
    }
    let mut frames: Vec<LabeledFrame> = windows
        .par_iter()
        .map(|w| {
            let frame = render_frame(w, &cfg.style);
            if cfg.augment.enabled {
                let seed = frame_seed(cfg.seed, &w.record_id, w.start_sample);
                augment(&frame, seed, &cfg.augment.params)
            } else {
                frame
            }
        })
        .collect();
    frames.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(frames)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildSummary {
    pub records: usize,
    pub frames: usize,
    pub labels: [usize; NUM_CLASSES],
    pub grayscale_frames: usize,
}

/// Builds a YOLO dataset into `out_dir` (which should be empty) and writes
/// the resolved config beside it.
pub fn build_dataset(cfg: &RunConfig, out_dir: &Path) -> Result<BuildSummary> {
    let table = mapping_table(cfg.paths.mapping_overrides.as_deref())?;
    let (records, _) = ingest(&cfg.paths.records, &cfg.exclusion, &table)?;
    let frames = render_dataset(&records, cfg)?;
    let manifest = export_yolo(&frames, out_dir)?;
    cfg.write_resolved(out_dir)?;
    Ok(BuildSummary {
        records: records.len(),
        frames: manifest.frames,
        labels: manifest.counts,
        grayscale_frames: frames.iter().filter(|f| f.provenance.grayscale_applied).count(),
    })
}

/// Runs `f` against a fresh sibling of `out` and moves the result into
/// place only if `f` succeeds. An existing `out` is replaced; on failure
/// nothing at `out` changes and the partial directory is removed.
pub fn staged<T, E: From<Error>>(out: &Path, f: impl FnOnce(&Path) -> std::result::Result<T, E>) -> std::result::Result<T, E> {
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;
    let name = out.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = parent.join(format!(".{name}.partial-{}", std::process::id()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let result = f(&tmp).and_then(|v| {
        if out.exists() {
            fs::remove_dir_all(out).map_err(|e| Error::io(out, e))?;
        }
        fs::rename(&tmp, out).map_err(|e| Error::io(out, e))?;
        Ok(v)
    });
    if result.is_err() {
        let _ = fs::remove_dir_all(&tmp);
    }
    result
}

pub fn split_frames(dataset_dir: &Path) -> Result<Vec<SplitFrame>> {
    Ok(read_label_dir(dataset_dir)?
        .iter()
        .map(|(id, labels)| SplitFrame::from_labels(id, labels))
        .collect())
}

/// Writes holdout lists to `<dest>/{train,val,test}.txt` and fold lists to
/// `<dest>/folds/fold_XX/`. The usual `dest` is `<dataset>/splits`, which is
/// where the manifest points.
pub fn split_dataset(dataset_dir: &Path, dest: &Path, cfg: &RunConfig) -> Result<(SplitAssignment, FoldAssignment)> {
    let frames = split_frames(dataset_dir)?;
    let split = holdout(&frames, &cfg.split.ratios, cfg.seed, cfg.split.strategy)?;
    let folds = kfold_with(&frames, cfg.split.k, cfg.seed, cfg.split.strategy)?;
    staged(dest, |dir| {
        split.write_lists(dir)?;
        folds.write_lists(&dir.join("folds"))?;
        cfg.write_resolved(dir)?;
        Ok(())
    })?;
    Ok((split, folds))
}

pub fn read_id_list(path: &Path) -> Result<BTreeSet<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect())
}

/// Evaluates a detections file against a dataset's labels, optionally
/// restricted to the ids listed in `subset`.
pub fn evaluate_files(
    labels_dir: &Path,
    detections: &Path,
    subset: Option<&Path>,
    cfg: &RunConfig,
) -> Result<EvalReport> {
    let mut labels: BTreeMap<String, Vec<GroundTruth>> = read_label_dir(labels_dir)?.into_iter().collect();
    let text = fs::read_to_string(detections).map_err(|e| Error::io(detections, e))?;
    let mut preds = parse_detections(&text)?;
    if let Some(list) = subset {
        let keep = read_id_list(list)?;
        labels.retain(|id, _| keep.contains(id));
        preds.retain(|id, _| keep.contains(id));
    }
    let frames = join_frames(&preds, &labels);
    let provenance = ReportProvenance {
        dataset: labels_dir.display().to_string(),
        split: subset.map(|p| p.display().to_string()),
        seed: Some(cfg.seed),
        postprocess: None,
    };
    evaluate(&frames, &cfg.eval, provenance)
}

/// A detector that answers each replay frame with its own labels.
pub fn oracle_for_replay(
    record: &SignalRecord,
    beats: &[MappedBeat],
    replay_cfg: &ReplayConfig,
    cfg: &RunConfig,
) -> Result<OracleDetector> {
    let unpaced = ReplayConfig {
        speed: crate::stream::Speed::Max,
        ..*replay_cfg
    };
    let mut oracle = OracleDetector::default();
    for w in replay(record, beats, &unpaced)? {
        let f = render_frame(&w, &cfg.style);
        oracle.insert(f.id, f.labels);
    }
    Ok(oracle)
}

/// Per-class label counts of a reference build over the full MIT-BIH
/// database, in class order N, S, V, F, Q.
pub const REFERENCE_CLASS_COUNTS: [usize; NUM_CLASSES] = [6424, 2225, 2899, 711, 640];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountComparison {
    pub class: AamiClass,
    pub ours: usize,
    pub reference: usize,
    /// `(ours - reference) / reference` in percent.
    pub deviation_pct: f64,
}

pub fn compare_counts(ours: &[usize; NUM_CLASSES], reference: &[usize; NUM_CLASSES]) -> Vec<CountComparison> {
    AamiClass::ALL
        .iter()
        .map(|&class| {
            let (o, r) = (ours[class.id()], reference[class.id()]);
            CountComparison {
                class,
                ours: o,
                reference: r,
                deviation_pct: if r == 0 { f64::NAN } else { (o as f64 - r as f64) / r as f64 * 100.0 },
            }
        })
        .collect()
}

pub fn render_comparison(rows: &[CountComparison]) -> String {
    let mut s = format!("{:<6} {:>8} {:>10} {:>10}\n", "class", "ours", "reference", "deviation");
    for r in rows {
        s += &format!("{:<6} {:>8} {:>10} {:>+9.1}%\n", r.class.name(), r.ours, r.reference, r.deviation_pct);
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountKind {
    /// Mapped beats in the records.
    Beats,
    /// Boxes a dataset build would write (beats inside extracted windows).
    Labels,
}

/// Counts for the configured exclusion policy and, when it excludes
/// anything, for no exclusion at all; each set of counts rendered beside
/// the reference build's.
pub fn reference_count_report(cfg: &RunConfig, kind: CountKind) -> Result<String> {
    let table = mapping_table(cfg.paths.mapping_overrides.as_deref())?;
    let mut policies = vec![cfg.exclusion.clone()];
    if !cfg.exclusion.excluded.is_empty() {
        policies.push(ExclusionPolicy::none());
    }
    let mut out = String::new();
    for policy in policies {
        let (records, summary) = ingest(&cfg.paths.records, &policy, &table)?;
        let counts = match kind {
            CountKind::Beats => summary.totals,
            CountKind::Labels => {
                let mut counts = [0; NUM_CLASSES];
                for r in &records {
                    for w in extract_windows(&r.record.signal, &r.beats, &cfg.window)? {
                        for b in &w.beats {
                            counts[b.class.id()] += 1;
                        }
                    }
                }
                counts
            }
        };
        let heading = if policy.excluded.is_empty() {
            "no records excluded".to_string()
        } else {
            format!("excluding {}", policy.excluded.iter().cloned().collect::<Vec<_>>().join(", "))
        };
        out += &format!("{heading}:\n{}", render_comparison(&compare_counts(&counts, &REFERENCE_CLASS_COUNTS)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{corpus_specs, write_corpus};

    fn corpus(dir: &Path) -> RunConfig {
        write_corpus(&dir.join("records"), &corpus_specs(3, 60.0, 0)).unwrap();
        let mut cfg = RunConfig::default();
        cfg.paths.records = dir.join("records");
        cfg
    }

    #[test]
    fn reference_report_covers_both_policies() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = corpus(dir.path());
        cfg.exclusion = ExclusionPolicy { excluded: ["s101".to_string()].into() };
        let text = reference_count_report(&cfg, CountKind::Labels).unwrap();
        assert!(text.contains("excluding s101:") && text.contains("no records excluded:"), "{text}");
        cfg.exclusion = ExclusionPolicy::none();
        let text = reference_count_report(&cfg, CountKind::Beats).unwrap();
        assert_eq!(text.matches("reference").count(), 1, "{text}");
        let (_, summary) = ingest(&cfg.paths.records, &cfg.exclusion, &MappingTable::default()).unwrap();
        let first_row = format!("N      {:>8}", summary.totals[0]);
        assert!(text.contains(&first_row), "{text}");
    }

    #[test]
    fn ingest_counts_match_annotations() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = corpus(dir.path());
        let (records, summary) = ingest(&cfg.paths.records, &cfg.exclusion, &MappingTable::default()).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(summary.totals.iter().sum::<usize>(), records.iter().map(|r| r.beats.len()).sum::<usize>());
        // the rhythm mark at sample 0 of each record
        assert!(summary.records.iter().all(|r| r.unmapped == 1));
        assert!(summary.to_table().contains("total"));
    }

    #[test]
    fn exclusion_policy_is_applied() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = corpus(dir.path());
        let policy = ExclusionPolicy {
            excluded: ["s101".to_string()].into_iter().collect(),
        };
        let (records, summary) = ingest(&cfg.paths.records, &policy, &MappingTable::default()).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(summary.excluded, vec!["s101".to_string()]);
    }

    #[test]
    fn staged_output_is_all_or_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        staged(&out, |d| fs::write(d.join("a"), "1").map_err(|e| Error::io(d, e))).unwrap();
        assert!(out.join("a").is_file());

        let r: Result<()> = staged(&out, |d| {
            fs::write(d.join("b"), "2").unwrap();
            Err(Error::Config("boom".into()))
        });
        assert!(r.is_err());
        assert!(out.join("a").is_file() && !out.join("b").exists());
        let leftovers: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(leftovers.len(), 1);
    }

    #[test]
    fn comparison_rows() {
        let rows = compare_counts(&[6424, 0, 3000, 711, 320], &REFERENCE_CLASS_COUNTS);
        assert_eq!(rows[0].deviation_pct, 0.0);
        assert_eq!(rows[1].deviation_pct, -100.0);
        assert!((rows[2].deviation_pct - 101.0 / 2899.0 * 100.0).abs() < 1e-12);
        assert_eq!(rows[4].deviation_pct, -50.0);
        assert!(render_comparison(&rows).contains("-50.0%"));
    }
}
