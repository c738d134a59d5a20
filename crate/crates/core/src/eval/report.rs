use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    average_precision, class_metrics, coco_thresholds, confusion_matrix, map_over_thresholds, pr_curve, ConfusionMatrix,
    EvalFrame, MapSummary, BACKGROUND,
};
use crate::aami::AamiClass;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// IoU threshold for confusion-matrix matching.
    pub iou_threshold: f64,
    pub confidence_floor: f64,
    /// IoU thresholds averaged for mAP@50-95.
    pub map_thresholds: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.45,
            confidence_floor: 0.25,
            map_thresholds: coco_thresholds(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportProvenance {
    pub dataset: String,
    pub split: Option<String>,
    pub seed: Option<u64>,
    pub postprocess: Option<String>,
}

/// One table row. `precision` and `recall` count confusions with the
/// background; accuracy, specificity, `ovr_precision`, `ovr_recall` and `f1`
/// are one-vs-rest over the beat classes only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub label: String,
    pub instances: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub ap50: Option<f64>,
    pub ap50_95: Option<f64>,
    pub accuracy: Option<f64>,
    pub specificity: Option<f64>,
    pub ovr_precision: Option<f64>,
    pub ovr_recall: Option<f64>,
    pub f1: Option<f64>,
}

impl ClassRow {
    fn values(&self) -> [Option<f64>; 9] {
        [
            self.precision,
            self.recall,
            self.ap50,
            self.ap50_95,
            self.accuracy,
            self.specificity,
            self.ovr_precision,
            self.ovr_recall,
            self.f1,
        ]
    }

    fn from_values(label: String, instances: usize, v: [Option<f64>; 9]) -> Self {
        Self {
            label,
            instances,
            precision: v[0],
            recall: v[1],
            ap50: v[2],
            ap50_95: v[3],
            accuracy: v[4],
            specificity: v[5],
            ovr_precision: v[6],
            ovr_recall: v[7],
            f1: v[8],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub provenance: ReportProvenance,
    pub config: EvalConfig,
    pub frames: usize,
    /// Classes with ground truth or predictions, in class order.
    pub classes: Vec<ClassRow>,
    /// Means over the defined per-class values, so `ap50` here is mAP@50.
    pub aggregate: ClassRow,
    pub map50: Option<f64>,
    pub map50_95: Option<f64>,
    pub map_summary: Option<MapSummary>,
    pub confusion: ConfusionMatrix,
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn div(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn evaluate(frames: &[EvalFrame], config: &EvalConfig, provenance: ReportProvenance) -> Result<EvalReport> {
    let confusion = confusion_matrix(frames, config.iou_threshold, config.confidence_floor);
    let any_gt = frames.iter().any(|f| !f.ground_truths.is_empty());
    let map_summary = if any_gt && !config.map_thresholds.is_empty() {
        Some(map_over_thresholds(frames, &config.map_thresholds)?)
    } else {
        None
    };

    let mut classes = Vec::new();
    for class in AamiClass::ALL {
        let c = class.id();
        let curve50 = pr_curve(frames, 0.5, class);
        let has_preds = frames.iter().any(|f| f.predictions.iter().any(|d| d.class == class));
        if curve50.num_ground_truths == 0 && !has_preds {
            continue;
        }
        let ovr = class_metrics(&confusion, class);
        classes.push(ClassRow {
            label: class.name().to_string(),
            instances: curve50.num_ground_truths,
            precision: div(confusion.get(c, c), confusion.row_sum(c)),
            recall: div(confusion.get(c, c), confusion.column_sum(c)),
            ap50: average_precision(&curve50),
            ap50_95: map_summary.as_ref().and_then(|m| m.class_mean(class)),
            accuracy: ovr.accuracy,
            specificity: ovr.specificity,
            ovr_precision: ovr.precision,
            ovr_recall: ovr.recall,
            f1: ovr.f1,
        });
    }

    let mut agg = [None; 9];
    for (i, slot) in agg.iter_mut().enumerate() {
        *slot = mean_defined(classes.iter().map(|r| r.values()[i]));
    }
    let aggregate = ClassRow::from_values("all".into(), classes.iter().map(|r| r.instances).sum(), agg);
    Ok(EvalReport {
        provenance,
        config: config.clone(),
        frames: frames.len(),
        map50: aggregate.ap50,
        map50_95: aggregate.ap50_95,
        classes,
        aggregate,
        map_summary,
        confusion,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" | "txt" => Ok(Self::Text),
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::Config(format!("unknown report format '{other}' (text, csv, json)"))),
        }
    }
}

fn fmt3(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.3}"))
}

const CSV_HEADER: &str =
    "class,instances,precision,recall,ap50,ap50_95,accuracy,specificity,ovr_precision,ovr_recall,f1";

pub fn render_report(report: &EvalReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(report)
            .map(|s| s + "\n")
            .map_err(|e| Error::Config(e.to_string())),
        ReportFormat::Csv => {
            let mut s = String::from(CSV_HEADER);
            s.push('\n');
            for row in report.classes.iter().chain([&report.aggregate]) {
                let _ = write!(s, "{},{}", row.label, row.instances);
                for v in row.values() {
                    // shortest representation that parses back to the same f64
                    let _ = write!(s, ",{}", v.map(|v| v.to_string()).unwrap_or_default());
                }
                s.push('\n');
            }
            Ok(s)
        }
        ReportFormat::Text => Ok(render_text(report)),
    }
}

fn render_text(report: &EvalReport) -> String {
    let mut s = String::new();
    let p = &report.provenance;
    let _ = writeln!(s, "dataset: {}", p.dataset);
    if let Some(split) = &p.split {
        let _ = writeln!(s, "split: {split}");
    }
    if let Some(seed) = p.seed {
        let _ = writeln!(s, "seed: {seed}");
    }
    if let Some(pp) = &p.postprocess {
        let _ = writeln!(s, "post-processing: {pp}");
    }
    let _ = writeln!(
        s,
        "frames: {}  confusion IoU: {}  confidence floor: {}",
        report.frames, report.config.iou_threshold, report.config.confidence_floor
    );
    s.push('\n');

    let _ = writeln!(s, "{:<6}{:>10}{:>8}{:>8}{:>8}{:>10}", "class", "instances", "P", "R", "mAP50", "mAP50-95");
    for row in report.classes.iter().chain([&report.aggregate]) {
        let _ = writeln!(
            s,
            "{:<6}{:>10}{:>8}{:>8}{:>8}{:>10}",
            row.label,
            row.instances,
            fmt3(row.precision),
            fmt3(row.recall),
            fmt3(row.ap50),
            fmt3(row.ap50_95)
        );
    }
    s.push('\n');

    let _ = writeln!(s, "per-class metrics without background");
    let _ = writeln!(
        s,
        "{:<6}{:>10}{:>13}{:>11}{:>8}{:>8}",
        "class", "accuracy", "specificity", "precision", "recall", "F1"
    );
    for row in report.classes.iter().chain([&report.aggregate]) {
        let _ = writeln!(
            s,
            "{:<6}{:>10}{:>13}{:>11}{:>8}{:>8}",
            row.label,
            fmt3(row.accuracy),
            fmt3(row.specificity),
            fmt3(row.ovr_precision),
            fmt3(row.ovr_recall),
            fmt3(row.f1)
        );
    }
    s.push('\n');

    let _ = writeln!(s, "confusion matrix (rows predicted, columns actual)");
    let names: Vec<&str> = AamiClass::ALL.iter().map(|c| c.name()).chain(["bg"]).collect();
    let _ = write!(s, "{:<6}", "");
    for n in &names {
        let _ = write!(s, "{n:>8}");
    }
    s.push('\n');
    for (r, name) in names.iter().enumerate() {
        let _ = write!(s, "{name:<6}");
        for c in 0..=BACKGROUND {
            if r == BACKGROUND && c == BACKGROUND {
                let _ = write!(s, "{:>8}", "-");
            } else {
                let _ = write!(s, "{:>8}", report.confusion.get(r, c));
            }
        }
        s.push('\n');
    }
    s
}

/// Reads back the CSV written by [`render_report`]; the last row is the aggregate.
pub fn parse_report_csv(text: &str) -> Result<Vec<ClassRow>> {
    const CTX: &str = "report csv";
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => return Err(Error::parse(CTX, 1, 1, "unexpected header")),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(Error::parse(CTX, i + 1, 1, format!("expected 11 fields, found {}", fields.len())));
        }
        let instances = fields[1]
            .parse()
            .map_err(|_| Error::parse(CTX, i + 1, 2, format!("bad instance count '{}'", fields[1])))?;
        let mut values = [None; 9];
        for (k, f) in fields[2..].iter().enumerate() {
            if !f.is_empty() {
                values[k] = Some(
                    f.parse::<f64>()
                        .map_err(|_| Error::parse(CTX, i + 1, k + 3, format!("bad number '{f}'")))?,
                );
            }
        }
        rows.push(ClassRow::from_values(fields[0].to_string(), instances, values));
    }
    Ok(rows)
}

/// Mean and population standard deviation.
pub fn mean_and_sd(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvFold {
    pub precision: f64,
    pub recall: f64,
    pub map50: f64,
    pub map50_95: f64,
}

impl CvFold {
    pub fn from_report(report: &EvalReport) -> Self {
        Self {
            precision: report.aggregate.precision.unwrap_or(0.0),
            recall: report.aggregate.recall.unwrap_or(0.0),
            map50: report.map50.unwrap_or(0.0),
            map50_95: report.map50_95.unwrap_or(0.0),
        }
    }

    fn values(&self) -> [f64; 4] {
        [self.precision, self.recall, self.map50, self.map50_95]
    }
}

/// Per-fold table with average and standard-deviation rows.
pub fn render_cv_summary(folds: &[CvFold], format: ReportFormat) -> Result<String> {
    let stats: Vec<(f64, f64)> = (0..4)
        .map(|i| mean_and_sd(&folds.iter().map(|f| f.values()[i]).collect::<Vec<_>>()).unwrap_or((0.0, 0.0)))
        .collect();
    match format {
        ReportFormat::Json => {
            #[derive(Serialize)]
            struct Summary<'a> {
                folds: &'a [CvFold],
                mean: [f64; 4],
                sd: [f64; 4],
            }
            let s = Summary {
                folds,
                mean: [stats[0].0, stats[1].0, stats[2].0, stats[3].0],
                sd: [stats[0].1, stats[1].1, stats[2].1, stats[3].1],
            };
            serde_json::to_string_pretty(&s)
                .map(|s| s + "\n")
                .map_err(|e| Error::Config(e.to_string()))
        }
        ReportFormat::Csv => {
            let mut s = String::from("fold,precision,recall,map50,map50_95\n");
            for (i, f) in folds.iter().enumerate() {
                let _ = writeln!(s, "{},{},{},{},{}", i + 1, f.precision, f.recall, f.map50, f.map50_95);
            }
            let _ = writeln!(s, "mean,{},{},{},{}", stats[0].0, stats[1].0, stats[2].0, stats[3].0);
            let _ = writeln!(s, "sd,{},{},{},{}", stats[0].1, stats[1].1, stats[2].1, stats[3].1);
            Ok(s)
        }
        ReportFormat::Text => {
            let mut s = format!("{:<20}{:>11}{:>8}{:>8}{:>10}\n", "fold", "precision", "recall", "mAP50", "mAP50-95");
            for (i, f) in folds.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{:<20}{:>11.3}{:>8.3}{:>8.3}{:>10.3}",
                    format!("fold {}", i + 1),
                    f.precision,
                    f.recall,
                    f.map50,
                    f.map50_95
                );
            }
            let _ = writeln!(
                s,
                "{:<20}{:>11.3}{:>8.3}{:>8.3}{:>10.3}",
                "average", stats[0].0, stats[1].0, stats[2].0, stats[3].0
            );
            let _ = writeln!(
                s,
                "{:<20}{:>11.3}{:>8.3}{:>8.3}{:>10.3}",
                "standard deviation", stats[0].1, stats[1].1, stats[2].1, stats[3].1
            );
            Ok(s)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bbox::BoundingBox;
    use crate::detect::{Detection, GroundTruth};

    fn one_class_frames() -> Vec<EvalFrame> {
        let b = BoundingBox::new(0.5, 0.5, 0.1, 0.3);
        vec![
            EvalFrame {
                id: "a".into(),
                predictions: vec![Detection::new(AamiClass::V, b, 0.9)],
                ground_truths: vec![GroundTruth::new(AamiClass::V, b)],
            },
            EvalFrame {
                id: "b".into(),
                predictions: vec![Detection::new(AamiClass::V, BoundingBox::new(0.2, 0.5, 0.1, 0.3), 0.4)],
                ground_truths: vec![GroundTruth::new(AamiClass::V, b)],
            },
        ]
    }

    #[test]
    fn one_class_report_has_one_row_plus_aggregate() {
        let r = evaluate(&one_class_frames(), &EvalConfig::default(), ReportProvenance::default()).unwrap();
        assert_eq!(r.classes.len(), 1);
        let text = render_report(&r, ReportFormat::Text).unwrap();
        assert!(text.lines().any(|l| l.starts_with("V ")));
        assert!(text.lines().any(|l| l.starts_with("all ")));
        let csv = render_report(&r, ReportFormat::Csv).unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert_eq!(r.map50, r.classes[0].ap50);
        assert_eq!(r.classes[0].precision, Some(0.5));
        assert_eq!(r.classes[0].recall, Some(0.5));
    }

    #[test]
    fn csv_round_trip() {
        let r = evaluate(&one_class_frames(), &EvalConfig::default(), ReportProvenance::default()).unwrap();
        let csv = render_report(&r, ReportFormat::Csv).unwrap();
        let rows = parse_report_csv(&csv).unwrap();
        let mut want = r.classes.clone();
        want.push(r.aggregate.clone());
        assert_eq!(rows, want);
    }

    #[test]
    fn json_is_parseable() {
        let r = evaluate(&one_class_frames(), &EvalConfig::default(), ReportProvenance::default()).unwrap();
        let json = render_report(&r, ReportFormat::Json).unwrap();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn cv_precision_column() {
        let precision = [0.959, 0.966, 0.965, 0.967, 0.939, 0.962, 0.962, 0.952, 0.953, 0.961];
        let (mean, sd) = mean_and_sd(&precision).unwrap();
        assert_eq!(format!("{mean:.3}"), "0.959");
        assert_eq!(format!("{sd:.3}"), "0.008");
        let folds: Vec<CvFold> = precision
            .iter()
            .map(|&p| CvFold { precision: p, recall: 0.9, map50: 0.9, map50_95: 0.8 })
            .collect();
        let text = render_cv_summary(&folds, ReportFormat::Text).unwrap();
        let avg = text.lines().find(|l| l.starts_with("average")).unwrap();
        assert!(avg.contains("0.959"));
        let sd_line = text.lines().find(|l| l.starts_with("standard deviation")).unwrap();
        assert!(sd_line.contains("0.008"));
    }

    #[test]
    fn f1_of_average_precision_and_recall() {
        let m = super::super::ClassMetrics::from_counts(0, 0, 0, 0);
        assert_eq!(m.f1, None);
        let (p, r) = (0.960f64, 0.957f64);
        let f1 = super::super::f1_score(p, r).unwrap();
        assert!((f1 - 0.958).abs() <= 0.001);
        assert!((1.0 / f1 - (1.0 / p + 1.0 / r) / 2.0).abs() < 1e-12);
    }
}
