mod args;

use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;

use ecgdet::config::RunConfig;
use ecgdet::detect::{write_detections, PostProcessor};
use ecgdet::eval::{render_cv_summary, render_report, CvFold, EvalReport, ReportFormat};
use ecgdet::pipeline::{
    build_dataset, evaluate_files, ingest, mapping_table, oracle_for_replay, reference_count_report, split_dataset,
    staged, CountKind, SPLITS_DIR,
};
use ecgdet::split::Partition;
use ecgdet::stream::{
    run_live, run_session, ConsoleSink, DetectorPort, FrameRecord, JsonLinesSink, NullSink, SessionReport,
    SessionSink,
};
use ecgdet::synth::{corpus_specs, write_corpus};
use ecgdet::wfdb::load_record;

use args::{Cli, Command, DetectorSpec};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 for bad input (files, flags, config), 1 for everything else.
fn exit_code(e: &anyhow::Error) -> u8 {
    let input = e.chain().any(|cause| {
        cause
            .downcast_ref::<ecgdet::Error>()
            .is_some_and(ecgdet::Error::is_input_error)
            || cause.downcast_ref::<args::InputError>().is_some()
    });
    if input {
        2
    } else {
        1
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::load_or_default(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    let out = cli.out.clone();
    match cli.command {
        Command::Ingest(a) => {
            a.apply(&mut cfg)?;
            cfg.validate()?;
            let table = mapping_table(cfg.paths.mapping_overrides.as_deref())?;
            let (_, summary) = ingest(&cfg.paths.records, &cfg.exclusion, &table)?;
            if a.json {
                println!("{}", serde_json::to_string_pretty(&summary)?);
            } else {
                print!("{}", summary.to_table());
            }
            if a.compare_reference {
                println!("\nbeat counts beside the reference build");
                print!("{}", reference_count_report(&cfg, CountKind::Beats)?);
            }
            if let Some(out) = out {
                staged(&out, |dir| {
                    write(&dir.join("ingest.json"), serde_json::to_string_pretty(&summary).unwrap_or_default())?;
                    cfg.write_resolved(dir)?;
                    Ok::<_, ecgdet::Error>(())
                })?;
            }
        }
        Command::Build(a) => {
            a.apply(&mut cfg)?;
            cfg.validate()?;
            let out = out.unwrap_or_else(|| cfg.paths.dataset.clone());
            let summary = staged(&out, |dir| build_dataset(&cfg, dir))?;
            println!(
                "built {} frames from {} records into {}",
                summary.frames,
                summary.records,
                out.display()
            );
            println!(
                "labels  N {}  S {}  V {}  F {}  Q {}",
                summary.labels[0], summary.labels[1], summary.labels[2], summary.labels[3], summary.labels[4]
            );
            if cfg.augment.enabled && summary.frames > 0 {
                println!(
                    "grayscale applied to {} of {} frames ({:.1}%)",
                    summary.grayscale_frames,
                    summary.frames,
                    100.0 * summary.grayscale_frames as f64 / summary.frames as f64
                );
            }
            if a.compare_reference {
                println!("\nlabel counts beside the reference build");
                print!("{}", reference_count_report(&cfg, CountKind::Labels)?);
            }
        }
        Command::Split(a) => {
            a.apply(&mut cfg)?;
            cfg.validate()?;
            let dataset = a.dataset.clone().unwrap_or_else(|| cfg.paths.dataset.clone());
            let dest = out.unwrap_or_else(|| dataset.join(SPLITS_DIR));
            let (split, folds) = split_dataset(&dataset, &dest, &cfg)?;
            println!(
                "holdout: train {}  val {}  test {}",
                split.size(Partition::Train),
                split.size(Partition::Val),
                split.size(Partition::Test)
            );
            println!("{} folds of {} frames written to {}", folds.k, folds.folds.len(), dest.display());
        }
        Command::Eval(a) => {
            a.apply(&mut cfg)?;
            cfg.validate()?;
            let labels = a.labels.clone().unwrap_or_else(|| cfg.paths.dataset.clone());
            let subset = a.split.as_deref().map(|s| resolve_split(&labels, s));
            let report = evaluate_files(&labels, &a.detections, subset.as_deref(), &cfg)?;
            print!("{}", render_report(&report, a.format)?);
            if let Some(out) = out {
                staged(&out, |dir| write_report_files(dir, &report, &cfg))?;
            }
        }
        Command::Simulate(a) => {
            a.apply(&mut cfg)?;
            cfg.validate()?;
            let report = simulate(&a, &cfg, out.as_deref())?;
            print_session(&report);
        }
        Command::Report(a) => {
            let reports = a
                .inputs
                .iter()
                .map(|p| read_report(p))
                .collect::<Result<Vec<EvalReport>>>()?;
            let text = if reports.len() == 1 {
                render_report(&reports[0], a.format)?
            } else {
                let folds: Vec<CvFold> = reports.iter().map(CvFold::from_report).collect();
                render_cv_summary(&folds, a.format)?
            };
            print!("{text}");
            if let Some(out) = out {
                staged(&out, |dir| {
                    write(&dir.join(format!("summary.{}", extension(a.format))), text.clone())?;
                    cfg.write_resolved(dir)?;
                    Ok::<_, ecgdet::Error>(())
                })?;
            }
        }
        Command::Synth(a) => {
            let out = out.unwrap_or_else(|| PathBuf::from("data/synthetic"));
            let specs = corpus_specs(a.count, a.duration, cfg.seed);
            let ids = staged(&out, |dir| write_corpus(dir, &specs))?;
            println!("wrote {} synthetic records to {}: {}", ids.len(), out.display(), ids.join(" "));
        }
    }
    Ok(())
}

fn write(path: &Path, text: String) -> ecgdet::Result<()> {
    fs::write(path, text).map_err(|e| ecgdet::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn extension(format: ReportFormat) -> &'static str {
    match format {
        ReportFormat::Text => "txt",
        ReportFormat::Csv => "csv",
        ReportFormat::Json => "json",
    }
}

/// `train`, `val` and `test` name the dataset's own split lists; anything
/// else is a path to a list file.
fn resolve_split(dataset: &Path, split: &str) -> PathBuf {
    match split {
        "train" | "val" | "test" => dataset.join(SPLITS_DIR).join(format!("{split}.txt")),
        other => PathBuf::from(other),
    }
}

fn write_report_files(dir: &Path, report: &EvalReport, cfg: &RunConfig) -> ecgdet::Result<()> {
    for format in [ReportFormat::Text, ReportFormat::Csv, ReportFormat::Json] {
        write(&dir.join(format!("report.{}", extension(format))), render_report(report, format)?)?;
    }
    cfg.write_resolved(dir)?;
    Ok(())
}

/// Accepts an evaluation report or a session report (using its evaluation).
fn read_report(path: &Path) -> Result<EvalReport> {
    let text = fs::read_to_string(path)
        .map_err(|e| ecgdet::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
    if let Ok(r) = serde_json::from_str::<EvalReport>(&text) {
        return Ok(r);
    }
    let session: SessionReport = serde_json::from_str(&text)
        .map_err(|e| args::InputError(format!("{}: not an evaluation or session report: {e}", path.display())))?;
    session
        .eval
        .ok_or_else(|| args::InputError(format!("{}: session report has no evaluation", path.display())).into())
}

struct Tee<'a>(Vec<&'a mut dyn SessionSink>);

impl SessionSink for Tee<'_> {
    fn frame(&mut self, record: &FrameRecord) -> ecgdet::Result<()> {
        self.0.iter_mut().try_for_each(|s| s.frame(record))
    }
}

fn simulate(a: &args::SimulateArgs, cfg: &RunConfig, out: Option<&Path>) -> Result<SessionReport> {
    let replay_cfg = cfg.stream.replay;
    let post: PostProcessor = cfg.stream.postprocess;

    let run = |dir: Option<&Path>| -> Result<SessionReport> {
        let mut console = ConsoleSink::new(io::stdout());
        let mut jsonl = match dir {
            Some(d) => {
                let path = d.join("frames.jsonl");
                let file = fs::File::create(&path).map_err(|e| ecgdet::Error::Io { path, source: e })?;
                Some(JsonLinesSink::new(io::BufWriter::new(file)))
            }
            None => None,
        };
        let mut null = NullSink;
        let mut sinks: Vec<&mut dyn SessionSink> = Vec::new();
        if a.verbose {
            sinks.push(&mut console);
        }
        if let Some(j) = jsonl.as_mut() {
            sinks.push(j);
        }
        if sinks.is_empty() {
            sinks.push(&mut null);
        }
        let mut sink = Tee(sinks);

        let report = if let Some(live) = &a.live {
            let mut detector = make_detector(&a.detector, None)?;
            let id = a.record.clone().unwrap_or_else(|| "live".into());
            if live.as_os_str() == "-" {
                run_live(BufReader::new(io::stdin()), &id, a.fs, &replay_cfg, &cfg.style, detector.as_mut(), &post, &mut sink)?
            } else {
                let file = fs::File::open(live).map_err(|e| ecgdet::Error::Io {
                    path: live.clone(),
                    source: e,
                })?;
                run_live(BufReader::new(file), &id, a.fs, &replay_cfg, &cfg.style, detector.as_mut(), &post, &mut sink)?
            }
        } else {
            let id = a
                .record
                .as_deref()
                .ok_or_else(|| args::InputError("simulate needs --record <id> or --live <file>".into()))?;
            let loaded = load_record(&cfg.paths.records, id)?;
            let table = mapping_table(cfg.paths.mapping_overrides.as_deref())?;
            let beats = ecgdet::aami::map_beats(&loaded.annotations, &table);
            let oracle = match a.detector {
                DetectorSpec::Oracle => Some(oracle_for_replay(&loaded.signal, &beats, &replay_cfg, cfg)?),
                _ => None,
            };
            let mut detector = make_detector(&a.detector, oracle)?;
            run_session(
                &loaded.signal,
                Some(&beats),
                &replay_cfg,
                &cfg.style,
                detector.as_mut(),
                &post,
                &cfg.eval,
                &mut sink,
            )?
        };
        if let Some(d) = dir {
            write(&d.join("session.json"), serde_json::to_string_pretty(&report)?)?;
            write(&d.join("detections.txt"), write_detections(&report.detections()))?;
            cfg.write_resolved(d)?;
        }
        Ok(report)
    };

    match out {
        Some(out) => staged(out, |dir| run(Some(dir))),
        None => run(None),
    }
}

fn make_detector(
    spec: &DetectorSpec,
    oracle: Option<ecgdet::stream::OracleDetector>,
) -> Result<Box<dyn DetectorPort>> {
    Ok(match spec {
        DetectorSpec::Oracle => Box::new(
            oracle.ok_or_else(|| args::InputError("the oracle detector needs an annotated record".into()))?,
        ),
        DetectorSpec::Fixed(dets) => Box::new(ecgdet::stream::FixedBoxDetector { detections: dets.clone() }),
        DetectorSpec::Subprocess(argv) => Box::new(
            ecgdet::stream::SubprocessDetector::spawn(&argv[0], &argv[1..])
                .with_context(|| format!("starting detector '{}'", argv.join(" ")))?,
        ),
    })
}

fn print_session(r: &SessionReport) {
    let mut out = io::stdout().lock();
    let _ = writeln!(out, "record {}  detector {}  post {}", r.record_id, r.detector, r.postprocess);
    let _ = writeln!(
        out,
        "frames: {} emitted, {} processed, {} failed, {} dropped",
        r.frames_emitted, r.frames_processed, r.frames_failed, r.frames_dropped
    );
    let _ = writeln!(
        out,
        "latency ms: mean {:.2}  p50 {:.2}  p95 {:.2}  p99 {:.2}  max {:.2}",
        r.total.mean, r.total.p50, r.total.p95, r.total.p99, r.total.max
    );
    let _ = writeln!(
        out,
        "  preprocess {:.2}  inference {:.2}  postprocess {:.2}  overhead/frame {:.2}",
        r.preprocess.mean, r.inference.mean, r.postprocess_latency.mean, r.pipeline_overhead_ms
    );
    if let Some(d) = r.max_pacing_drift_ms {
        let _ = writeln!(out, "max pacing drift {d:.2} ms");
    }
    let _ = writeln!(out, "wall time {:.3} s", r.wall_time_s);
    match r.map50() {
        Some(m) => {
            let _ = writeln!(out, "session mAP@50 {m:.3}");
        }
        None => {
            let _ = writeln!(out, "session mAP@50 -");
        }
    }
}
