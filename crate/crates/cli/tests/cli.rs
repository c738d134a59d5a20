use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ecgdet::detect::{write_detections, Detection, FrameDetections};
use ecgdet::render::read_label_dir;

fn ecgdet() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ecgdet"))
}

fn records() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic")
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn build(dir: &Path) -> PathBuf {
    let dataset = dir.join("dataset");
    ok(ecgdet()
        .args(["--seed", "3", "--out"])
        .arg(&dataset)
        .arg("build")
        .arg("--records")
        .arg(records())
        .output()
        .unwrap());
    dataset
}

fn oracle_detections(dataset: &Path, path: &Path) {
    let frames: FrameDetections = read_label_dir(dataset)
        .unwrap()
        .into_iter()
        .map(|(id, gts)| (id, gts.iter().map(|g| Detection::new(g.class, g.bbox, 1.0)).collect()))
        .collect();
    fs::write(path, write_detections(&frames)).unwrap();
}

fn no_partials(dir: &Path) {
    let leftovers: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.contains(".partial"))
        .collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
}

#[test]
fn missing_dat_file_is_an_input_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    for ext in ["hea", "atr"] {
        fs::copy(records().join(format!("s100.{ext}")), dir.path().join(format!("s100.{ext}"))).unwrap();
    }
    let out = ecgdet().arg("ingest").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("s100.dat"), "{stderr}");
}

#[test]
fn usage_errors_exit_2() {
    let out = ecgdet().args(["eval", "--thresholds", "x:y"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = ecgdet().args(["simulate", "--detector", "magic"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ingest_prints_class_table() {
    let stdout = ok(ecgdet().arg("ingest").arg(records()).output().unwrap());
    for id in ["s100", "s101", "s102"] {
        assert!(stdout.contains(id), "{stdout}");
    }
    let json = ok(ecgdet().arg("ingest").arg(records()).arg("--json").output().unwrap());
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["records"].as_array().unwrap().len(), 3);
}

#[test]
fn build_split_eval_with_oracle_detections() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = build(tmp.path());
    ok(ecgdet().arg("split").arg(&dataset).args(["--k", "5"]).output().unwrap());
    for p in ["train", "val", "test"] {
        assert!(dataset.join("splits").join(format!("{p}.txt")).is_file());
    }
    assert!(dataset.join("splits/folds/fold_04/val.txt").is_file());

    let dets = tmp.path().join("dets.txt");
    oracle_detections(&dataset, &dets);
    let report = tmp.path().join("report");
    let eval = |split: Option<&str>, out: &Path| {
        let mut cmd = ecgdet();
        cmd.arg("--out").arg(out).args(["eval", "--labels"]).arg(&dataset).arg("--detections").arg(&dets);
        if let Some(s) = split {
            cmd.args(["--split", s]);
        }
        ok(cmd.output().unwrap())
    };
    eval(None, &report);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(report.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["map50"].as_f64(), Some(1.0));
    assert_eq!(json["map50_95"].as_f64(), Some(1.0));
    assert!(report.join("report.csv").is_file() && report.join("report.txt").is_file());

    let val = tmp.path().join("val_report");
    eval(Some("val"), &val);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(val.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["map50"].as_f64(), Some(1.0));

    // the saved report renders again through `report`
    let stdout = ok(ecgdet().arg("report").arg(report.join("report.json")).output().unwrap());
    assert!(stdout.contains("mAP"), "{stdout}");
    no_partials(tmp.path());
}

#[test]
fn empty_detections_score_zero_without_failing() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = build(tmp.path());
    let dets = tmp.path().join("empty.txt");
    fs::write(&dets, "").unwrap();
    let out = tmp.path().join("report");
    ok(ecgdet()
        .arg("--out")
        .arg(&out)
        .args(["eval", "--labels"])
        .arg(&dataset)
        .arg("--detections")
        .arg(&dets)
        .output()
        .unwrap());
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["map50"].as_f64(), Some(0.0));
}

#[test]
fn split_and_eval_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = build(tmp.path());
    let dets = tmp.path().join("dets.txt");
    oracle_detections(&dataset, &dets);
    let run = |tag: &str| {
        let splits = tmp.path().join(format!("splits_{tag}"));
        ok(ecgdet().arg("--out").arg(&splits).arg("split").arg(&dataset).output().unwrap());
        let report = tmp.path().join(format!("report_{tag}"));
        ok(ecgdet()
            .arg("--out")
            .arg(&report)
            .args(["eval", "--labels"])
            .arg(&dataset)
            .arg("--detections")
            .arg(&dets)
            .output()
            .unwrap());
        let mut files = Vec::new();
        for dir in [&splits, &report] {
            let mut stack = vec![dir.clone()];
            while let Some(d) = stack.pop() {
                let mut entries: Vec<PathBuf> = fs::read_dir(&d).unwrap().map(|e| e.unwrap().path()).collect();
                entries.sort();
                for p in entries {
                    if p.is_dir() {
                        stack.push(p);
                    } else {
                        files.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
                    }
                }
            }
        }
        files
    };
    let (a, b) = (run("a"), run("b"));
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn simulate_writes_session_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("session");
    let stdout = ok(ecgdet()
        .arg("--out")
        .arg(&out)
        .args(["simulate", "--record", "s101", "--speed", "max", "--records"])
        .arg(records())
        .output()
        .unwrap());
    assert!(stdout.contains("51"), "{stdout}");
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("session.json")).unwrap()).unwrap();
    assert_eq!(json["frames_processed"].as_u64(), Some(51));
    assert_eq!(fs::read_to_string(out.join("frames.jsonl")).unwrap().lines().count(), 51);
    assert!(out.join("detections.txt").is_file());
}

#[test]
fn subprocess_detector_over_the_frame_protocol() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("session");
    let detector = format!(
        "subprocess:{} 2 0.5 0.5 0.05 0.4 0.8",
        env!("CARGO_BIN_EXE_fixed-box-detector")
    );
    ok(ecgdet()
        .arg("--out")
        .arg(&out)
        .args(["simulate", "--record", "s100", "--speed", "max", "--hop", "5", "--detector", &detector, "--records"])
        .arg(records())
        .output()
        .unwrap());
    let dets = fs::read_to_string(out.join("detections.txt")).unwrap();
    // 60 s record, 10 s frames every 5 s
    assert_eq!(dets.lines().count(), 11);
    assert!(dets.lines().all(|l| l.split_whitespace().nth(1) == Some("2")), "{dets}");
}

#[test]
fn detector_crash_marks_frames_failed() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("session");
    let stdout = ok(ecgdet()
        .arg("--out")
        .arg(&out)
        .args(["simulate", "--record", "s100", "--speed", "max", "--hop", "5", "--detector", "subprocess:false", "--records"])
        .arg(records())
        .output()
        .unwrap());
    assert!(stdout.contains("11 failed"), "{stdout}");
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("session.json")).unwrap()).unwrap();
    assert_eq!(json["frames_failed"].as_u64(), Some(11));
}

#[test]
fn failed_build_keeps_previous_output_and_leaves_no_partials() {
    let tmp = tempfile::tempdir().unwrap();
    let recs = tmp.path().join("records");
    fs::create_dir(&recs).unwrap();
    for ext in ["hea", "atr", "dat"] {
        fs::copy(records().join(format!("s100.{ext}")), recs.join(format!("s100.{ext}"))).unwrap();
    }
    let dat = fs::read(recs.join("s100.dat")).unwrap();
    fs::write(recs.join("s100.dat"), &dat[..dat.len() / 2]).unwrap();

    let out = tmp.path().join("dataset");
    fs::create_dir(&out).unwrap();
    fs::write(out.join("keep.txt"), "previous build").unwrap();
    let result = ecgdet().arg("--out").arg(&out).arg("build").arg("--records").arg(&recs).output().unwrap();
    assert_eq!(result.status.code(), Some(2), "{}", String::from_utf8_lossy(&result.stderr));
    assert!(String::from_utf8_lossy(&result.stderr).contains("s100.dat"));
    assert_eq!(fs::read_to_string(out.join("keep.txt")).unwrap(), "previous build");
    no_partials(tmp.path());
}

#[test]
fn live_feed_from_stdin() {
    use std::io::Write;
    use std::process::Stdio;
    let mut child = ecgdet()
        .args(["simulate", "--live", "-", "--fs", "100", "--detector", "fixed", "--hop", "2"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    {
        let stdin = child.stdin.as_mut().unwrap();
        // 20 s at 100 Hz
        for i in 0..2000 {
            writeln!(stdin, "{},{}", i * 10, (i % 50) * 4).unwrap();
        }
    }
    let stdout = ok(child.wait_with_output().unwrap());
    // frames start at 0, 2, ..., 10 s
    assert!(stdout.contains("6 frames") || stdout.contains("frames: 6") || stdout.contains("frames processed: 6"), "{stdout}");
}
