use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use crate::detect::{parse_box_line, Detection, GroundTruth};
use crate::error::{Error, Result};
use crate::render::RgbImage;

/// Something that turns a frame image into detections. Implementations are
/// called from one thread at a time.
pub trait DetectorPort {
    fn name(&self) -> String;

    fn detect(&mut self, frame_id: &str, image: &RgbImage) -> Result<Vec<Detection>>;
}

/// Returns the ground truth it was built with, at confidence 1.0. It never
/// looks at the image; frames it has no labels for get no detections.
#[derive(Debug, Clone, Default)]
pub struct OracleDetector {
    labels: BTreeMap<String, Vec<GroundTruth>>,
}

impl OracleDetector {
    pub fn new(labels: BTreeMap<String, Vec<GroundTruth>>) -> Self {
        Self { labels }
    }

    pub fn insert(&mut self, frame_id: impl Into<String>, labels: Vec<GroundTruth>) {
        self.labels.insert(frame_id.into(), labels);
    }
}

impl DetectorPort for OracleDetector {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn detect(&mut self, frame_id: &str, _image: &RgbImage) -> Result<Vec<Detection>> {
        Ok(self
            .labels
            .get(frame_id)
            .map(|gts| gts.iter().map(|g| Detection::new(g.class, g.bbox, 1.0)).collect())
            .unwrap_or_default())
    }
}

/// Returns the same boxes for every frame.
#[derive(Debug, Clone)]
pub struct FixedBoxDetector {
    pub detections: Vec<Detection>,
}

impl DetectorPort for FixedBoxDetector {
    fn name(&self) -> String {
        "fixed".into()
    }

    fn detect(&mut self, _frame_id: &str, _image: &RgbImage) -> Result<Vec<Detection>> {
        Ok(self.detections.clone())
    }
}

/// Talks to an external process over stdin/stdout.
///
/// ```text
/// -> FRAME <id> <png byte length>\n<png bytes>
/// <- DET <id> <n>\n
/// <- class cx cy w h conf\n    (n times)
/// ```
pub struct SubprocessDetector {
    command: String,
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl SubprocessDetector {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::io(program, e))?;
        let stdin = child.stdin.take().ok_or_else(|| Error::Detector("no stdin".into()))?;
        let stdout = child.stdout.take().ok_or_else(|| Error::Detector("no stdout".into()))?;
        let mut command = program.to_string();
        for a in args {
            command.push(' ');
            command.push_str(a);
        }
        Ok(Self {
            command,
            child,
            stdin,
            stdout: BufReader::new(stdout),
        })
    }

    fn read_line(&mut self) -> Result<String> {
        let mut line = String::new();
        let n = self
            .stdout
            .read_line(&mut line)
            .map_err(|e| Error::Detector(format!("reading from detector: {e}")))?;
        if n == 0 {
            return Err(Error::Detector("detector closed its output".into()));
        }
        Ok(line.trim_end_matches(['\n', '\r']).to_string())
    }
}

impl DetectorPort for SubprocessDetector {
    fn name(&self) -> String {
        format!("subprocess:{}", self.command)
    }

    fn detect(&mut self, frame_id: &str, image: &RgbImage) -> Result<Vec<Detection>> {
        let png = image.encode_png()?;
        let send = |stdin: &mut ChildStdin| -> std::io::Result<()> {
            writeln!(stdin, "FRAME {} {}", frame_id, png.len())?;
            stdin.write_all(&png)?;
            stdin.flush()
        };
        send(&mut self.stdin).map_err(|e| Error::Detector(format!("writing to detector: {e}")))?;

        let header = self.read_line()?;
        let toks: Vec<&str> = header.split_whitespace().collect();
        let n = match toks.as_slice() {
            ["DET", id, n] if *id == frame_id => n
                .parse::<usize>()
                .map_err(|_| Error::Detector(format!("bad detection count in '{header}'")))?,
            _ => return Err(Error::Detector(format!("expected 'DET {frame_id} <n>', got '{header}'"))),
        };
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let line = self.read_line()?;
            out.push(parse_box_line(&line).map_err(|e| Error::Detector(e.to_string()))?);
        }
        Ok(out)
    }
}

impl Drop for SubprocessDetector {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aami::AamiClass;
    use crate::bbox::BoundingBox;
    use crate::render::WHITE;

    #[test]
    fn oracle_echoes_labels() {
        let g = GroundTruth::new(AamiClass::V, BoundingBox::new(0.5, 0.5, 0.1, 0.2));
        let mut d = OracleDetector::default();
        d.insert("a", vec![g]);
        let img = RgbImage::filled(2, 2, WHITE);
        assert_eq!(d.detect("a", &img).unwrap(), vec![Detection::new(g.class, g.bbox, 1.0)]);
        assert!(d.detect("b", &img).unwrap().is_empty());
    }

    #[test]
    fn subprocess_protocol_with_shell_stub() {
        // reads the header, skips the PNG payload, replies with one box
        let script = r#"while read -r tag id len; do head -c "$len" >/dev/null; printf 'DET %s 1\n2 0.500000 0.500000 0.100000 0.200000 0.900000\n' "$id"; done"#;
        let mut d = match SubprocessDetector::spawn("sh", &["-c".into(), script.into()]) {
            Ok(d) => d,
            Err(_) => return,
        };
        let img = RgbImage::filled(4, 4, WHITE);
        for id in ["f1", "f2"] {
            let dets = d.detect(id, &img).unwrap();
            assert_eq!(dets, vec![Detection::new(AamiClass::V, BoundingBox::new(0.5, 0.5, 0.1, 0.2), 0.9)]);
        }
    }

    #[test]
    fn subprocess_failure_is_detector_error() {
        let mut d = match SubprocessDetector::spawn("sh", &["-c".into(), "read -r line; echo nonsense".into()]) {
            Ok(d) => d,
            Err(_) => return,
        };
        let img = RgbImage::filled(4, 4, WHITE);
        assert!(matches!(d.detect("x", &img), Err(Error::Detector(_))));
        assert!(matches!(d.detect("y", &img), Err(Error::Detector(_))));
    }
}
