//! Classifier backed by an external program speaking JSON lines.
//!
//! For each frame the program receives one line
//! `{"frame_path": "...", "boxes": [{"x":..,"y":..,"w":..,"h":..}, ...]}`
//! on stdin and answers with one line `{"scores": [[...], ...]}` on stdout:
//! one score vector per box over `background` followed by the hue classes.
//! Boxes are in the coordinates of the frame file on disk.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde::{Deserialize, Serialize};
use vidprop::classifier::OracleClassifier;
use vidprop::propagation::{Classifier, FrameRef};
use vidprop::{BBox, Error, Result};

#[derive(Serialize)]
struct Request<'a> {
    frame_path: &'a Path,
    boxes: &'a [BBox],
}

#[derive(Deserialize)]
struct Response {
    scores: Vec<Vec<f64>>,
}

pub struct CommandClassifier {
    program: PathBuf,
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
    classes: Vec<String>,
}

fn protocol(program: &Path, what: impl std::fmt::Display) -> Error {
    Error::Classifier(format!("{}: {what}", program.display()))
}

impl CommandClassifier {
    pub fn spawn(program: &Path) -> Result<Self> {
        let mut child = Command::new(program)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| protocol(program, format!("cannot start: {e}")))?;
        let stdin = child.stdin.take();
        let stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));
        Ok(CommandClassifier {
            program: program.to_path_buf(),
            child,
            stdin,
            stdout,
            classes: OracleClassifier::new().classes().to_vec(),
        })
    }
}

impl Classifier for CommandClassifier {
    fn classes(&self) -> &[String] {
        &self.classes
    }

    fn classify(&mut self, frame: FrameRef<'_>, boxes: &[BBox]) -> Result<Vec<Vec<f64>>> {
        let frame_path = frame
            .path
            .ok_or_else(|| protocol(&self.program, "frame has no file on disk"))?;
        let (w, h) = frame.image.dims();
        let (ow, oh) = frame.original_dims;
        let boxes: Vec<BBox> = boxes
            .iter()
            .map(|b| b.rescale(ow as f64 / w as f64, oh as f64 / h as f64))
            .collect();
        let mut line = serde_json::to_string(&Request {
            frame_path,
            boxes: &boxes,
        })?;
        line.push('\n');
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| protocol(&self.program, "stdin closed"))?;
        stdin
            .write_all(line.as_bytes())
            .and_then(|()| stdin.flush())
            .map_err(|e| protocol(&self.program, format!("write failed: {e}")))?;
        let mut reply = String::new();
        let n = self
            .stdout
            .read_line(&mut reply)
            .map_err(|e| protocol(&self.program, format!("read failed: {e}")))?;
        if n == 0 {
            return Err(protocol(&self.program, "exited before answering"));
        }
        let resp: Response = serde_json::from_str(reply.trim_end())
            .map_err(|e| protocol(&self.program, format!("malformed reply: {e}")))?;
        if resp.scores.len() != boxes.len()
            || resp.scores.iter().any(|s| s.len() != self.classes.len())
        {
            return Err(protocol(
                &self.program,
                format!(
                    "expected {} score vectors of length {}",
                    boxes.len(),
                    self.classes.len()
                ),
            ));
        }
        Ok(resp.scores)
    }
}

impl Drop for CommandClassifier {
    fn drop(&mut self) {
        // closing stdin lets a well-behaved program exit on its own
        drop(self.stdin.take());
        if matches!(self.child.try_wait(), Ok(None)) {
            let _ = self.child.kill();
        }
        let _ = self.child.wait();
    }
}
