//! Holdout and k-fold partitions of a labeled frame set.
//!
//! Frames are grouped by the rarest class they contain (rarity counted over
//! the whole dataset), then by their full class set, each group shuffled by
//! the seed. The groups are laid end to end, rarest first, and the
//! resulting sequence is dealt out to partitions. Because every contiguous
//! run of the sequence is dealt near-proportionally, every group ends up
//! near-proportionally represented in every partition.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aami::{AamiClass, NUM_CLASSES};
use crate::detect::GroundTruth;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitFrame {
    pub id: String,
    pub record_id: String,
    /// One entry per box.
    pub classes: Vec<AamiClass>,
}

impl SplitFrame {
    /// The record id is taken from a `<record>_<start>` frame id.
    pub fn from_labels(id: &str, labels: &[GroundTruth]) -> Self {
        let record_id = id.rsplit_once('_').map_or(id, |(r, _)| r).to_string();
        Self {
            id: id.to_string(),
            record_id,
            classes: labels.iter().map(|l| l.class).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Val,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Val, Partition::Test];

    pub fn name(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Val => "val",
            Partition::Test => "test",
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitStrategy {
    #[default]
    ImageStratified,
    PatientWise,
}

impl FromStr for SplitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "image-stratified" | "image" => Ok(Self::ImageStratified),
            "patient-wise" | "patient" => Ok(Self::PatientWise),
            other => Err(Error::Config(format!(
                "unknown split strategy '{other}' (expected image-stratified or patient-wise)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoldoutRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for HoldoutRatios {
    fn default() -> Self {
        Self {
            train: 0.82,
            val: 0.12,
            test: 0.06,
        }
    }
}

const RATIO_SCALE: f64 = 1e6;

impl HoldoutRatios {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("train", self.train), ("val", self.val), ("test", self.test)] {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::Config(format!("{name} ratio {r} is outside (0, 1)")));
            }
        }
        let sum = self.train + self.val + self.test;
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Config(format!("split ratios sum to {sum}, expected 1")));
        }
        Ok(())
    }

    /// Ratios as integer parts per million summing to exactly one million.
    fn scaled(&self) -> [i64; 3] {
        let t = (self.train * RATIO_SCALE).round() as i64;
        let v = (self.val * RATIO_SCALE).round() as i64;
        [t, v, RATIO_SCALE as i64 - t - v]
    }
}

impl FromStr for HoldoutRatios {
    type Err = Error;

    /// `"0.82,0.12,0.06"` or `"82/12/6"` (percentages).
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split([',', '/']).map(str::trim).collect();
        let vals = parts
            .iter()
            .map(|p| p.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Config(format!("cannot parse ratios '{s}'")))?;
        if vals.len() != 3 {
            return Err(Error::Config(format!("expected three ratios, got '{s}'")));
        }
        let scale = if vals.iter().sum::<f64>() > 1.5 { 100.0 } else { 1.0 };
        let r = Self {
            train: vals[0] / scale,
            val: vals[1] / scale,
            test: vals[2] / scale,
        };
        r.validate()?;
        Ok(r)
    }
}

/// Frame id → partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub strategy: SplitStrategy,
    pub assignment: BTreeMap<String, Partition>,
}

impl SplitAssignment {
    pub fn ids(&self, partition: Partition) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, p)| **p == partition)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn size(&self, partition: Partition) -> usize {
        self.assignment.values().filter(|p| **p == partition).count()
    }

    /// Writes `<partition>.txt` (one frame id per line) for every non-empty
    /// partition.
    pub fn write_lists(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for p in Partition::ALL {
            let ids = self.ids(p);
            if p == Partition::Test && ids.is_empty() {
                continue;
            }
            let path = dir.join(format!("{}.txt", p.name()));
            let body: String = ids.iter().map(|id| format!("{id}\n")).collect();
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Instances per class over the whole frame set.
pub fn class_totals(frames: &[SplitFrame]) -> [usize; NUM_CLASSES] {
    let mut totals = [0; NUM_CLASSES];
    for f in frames {
        for c in &f.classes {
            totals[c.id()] += 1;
        }
    }
    totals
}

/// The frame's rarest class by global instance count, ties to the higher
/// class id. `None` for frames without boxes.
fn rarest_class(frame: &SplitFrame, totals: &[usize; NUM_CLASSES]) -> Option<AamiClass> {
    frame
        .classes
        .iter()
        .copied()
        .min_by(|a, b| totals[a.id()].cmp(&totals[b.id()]).then(b.id().cmp(&a.id())))
}

/// Frame indices in dealing order: grouped, each group shuffled.
fn stratified_order(frames: &[SplitFrame], seed: u64) -> Vec<usize> {
    let totals = class_totals(frames);
    // key: (rarity rank, class-set signature); frames without boxes go last
    let mut groups: BTreeMap<(usize, usize, u8), Vec<usize>> = BTreeMap::new();
    for (i, f) in frames.iter().enumerate() {
        let signature = f.classes.iter().fold(0u8, |acc, c| acc | 1 << c.id());
        let key = match rarest_class(f, &totals) {
            Some(c) => (totals[c.id()], NUM_CLASSES - c.id(), signature),
            None => (usize::MAX, 0, 0),
        };
        groups.entry(key).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = Vec::with_capacity(frames.len());
    for mut members in groups.into_values() {
        members.sort_by(|&a, &b| frames[a].id.cmp(&frames[b].id));
        members.shuffle(&mut rng);
        order.extend(members);
    }
    order
}

/// Deals `weights.len()` items into partitions by largest remaining deficit
/// against `ratios` (parts per million), earliest partition on ties. After
/// any prefix of length `j`, partition `p` holds within one item of `j·ratio_p`.
fn deal(weights: &[usize], ratios: &[i64]) -> Vec<usize> {
    let scale = ratios.iter().sum::<i64>();
    let mut counts = vec![0i64; ratios.len()];
    let mut total = 0i64;
    weights
        .iter()
        .map(|&w| {
            total += w as i64;
            let best = (0..ratios.len())
                .max_by(|&a, &b| {
                    let da = total * ratios[a] - counts[a] * scale;
                    let db = total * ratios[b] - counts[b] * scale;
                    da.cmp(&db).then(b.cmp(&a))
                })
                .unwrap_or(0);
            counts[best] += w as i64;
            best
        })
        .collect()
}

fn shuffled_records(frames: &[SplitFrame], seed: u64) -> Vec<(String, Vec<usize>)> {
    let mut by_record: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, f) in frames.iter().enumerate() {
        by_record.entry(&f.record_id).or_default().push(i);
    }
    let mut records: Vec<(String, Vec<usize>)> = by_record.into_iter().map(|(r, v)| (r.to_string(), v)).collect();
    records.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    records
}

pub fn stratified_holdout(frames: &[SplitFrame], ratios: &HoldoutRatios, seed: u64) -> Result<SplitAssignment> {
    holdout(frames, ratios, seed, SplitStrategy::ImageStratified)
}

pub fn holdout(
    frames: &[SplitFrame],
    ratios: &HoldoutRatios,
    seed: u64,
    strategy: SplitStrategy,
) -> Result<SplitAssignment> {
    ratios.validate()?;
    let scaled = ratios.scaled();
    let mut assignment = BTreeMap::new();
    match strategy {
        SplitStrategy::ImageStratified => {
            let order = stratified_order(frames, seed);
            for (&i, p) in order.iter().zip(deal(&vec![1; order.len()], &scaled)) {
                assignment.insert(frames[i].id.clone(), Partition::ALL[p]);
            }
        }
        SplitStrategy::PatientWise => {
            let records = shuffled_records(frames, seed);
            let weights: Vec<usize> = records.iter().map(|(_, v)| v.len()).collect();
            for ((_, members), p) in records.iter().zip(deal(&weights, &scaled)) {
                for &i in members {
                    assignment.insert(frames[i].id.clone(), Partition::ALL[p]);
                }
            }
        }
    }
    Ok(SplitAssignment {
        seed,
        strategy,
        assignment,
    })
}

/// Frame id → fold index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub seed: u64,
    pub k: usize,
    pub strategy: SplitStrategy,
    pub folds: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn fold_ids(&self, fold: usize) -> Vec<&str> {
        self.folds
            .iter()
            .filter(|(_, f)| **f == fold)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    /// Fold `i` as validation, the rest as training.
    pub fn assignment_for(&self, fold: usize) -> SplitAssignment {
        SplitAssignment {
            seed: self.seed,
            strategy: self.strategy,
            assignment: self
                .folds
                .iter()
                .map(|(id, &f)| (id.clone(), if f == fold { Partition::Val } else { Partition::Train }))
                .collect(),
        }
    }

    pub fn assignments(&self) -> Vec<SplitAssignment> {
        (0..self.k).map(|i| self.assignment_for(i)).collect()
    }

    /// Writes `fold_<i>/train.txt` and `fold_<i>/val.txt` for every fold.
    pub fn write_lists(&self, dir: &Path) -> Result<()> {
        for i in 0..self.k {
            self.assignment_for(i).write_lists(&dir.join(format!("fold_{i:02}")))?;
        }
        Ok(())
    }
}

pub fn kfold(frames: &[SplitFrame], k: usize, seed: u64) -> Result<FoldAssignment> {
    kfold_with(frames, k, seed, SplitStrategy::ImageStratified)
}

pub fn kfold_with(frames: &[SplitFrame], k: usize, seed: u64, strategy: SplitStrategy) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::Config(format!("k must be at least 2, got {k}")));
    }
    let mut folds = BTreeMap::new();
    match strategy {
        SplitStrategy::ImageStratified => {
            if k > frames.len() {
                return Err(Error::Config(format!("k = {k} exceeds the {} available frames", frames.len())));
            }
            for (j, i) in stratified_order(frames, seed).into_iter().enumerate() {
                folds.insert(frames[i].id.clone(), j % k);
            }
        }
        SplitStrategy::PatientWise => {
            let records = shuffled_records(frames, seed);
            if k > records.len() {
                return Err(Error::Config(format!("k = {k} exceeds the {} available records", records.len())));
            }
            let weights: Vec<usize> = records.iter().map(|(_, v)| v.len()).collect();
            for ((_, members), f) in records.iter().zip(deal(&weights, &vec![1; k])) {
                for &i in members {
                    folds.insert(frames[i].id.clone(), f);
                }
            }
        }
    }
    Ok(FoldAssignment {
        seed,
        k,
        strategy,
        folds,
    })
}

/// Distinct record ids per partition; used to confirm patient-wise splits
/// don't share records.
pub fn records_by_partition(frames: &[SplitFrame], split: &SplitAssignment) -> BTreeMap<Partition, BTreeSet<String>> {
    let mut out: BTreeMap<Partition, BTreeSet<String>> = BTreeMap::new();
    for f in frames {
        if let Some(p) = split.assignment.get(&f.id) {
            out.entry(*p).or_default().insert(f.record_id.clone());
        }
    }
    out
}
