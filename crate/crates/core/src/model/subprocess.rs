//! Line-delimited JSON protocol over a child process's stdin/stdout.
//!
//! ```text
//! -> {"op": "info"}
//! <- {"classes": ["a", "b"], "input_dim": 3}
//! -> {"id": 1, "op": "predict", "instances": [[0.0, 1.0, 0.0]]}
//! <- {"id": 1, "probs": [[0.2, 0.8]]}
//! ```
//!
//! A child that answers the handshake with `"input": "text"` receives raw
//! strings in `instances` instead of vectors.

use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::BlackBox;
use crate::distributions::{ClassDistribution, ClassLabels};
use crate::error::{Error, Result};

/// Output tolerance on the simplex constraint for values that went through
/// JSON text.
const WIRE_TOL: f64 = 1e-6;
const STDERR_KEEP: usize = 8 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    #[default]
    Vector,
    Text,
}

#[derive(Deserialize)]
struct InfoResponse {
    classes: Vec<String>,
    input_dim: usize,
    #[serde(default)]
    input: InputKind,
}

#[derive(Deserialize)]
struct PredictResponse {
    id: u64,
    #[serde(default)]
    probs: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    error: Option<String>,
}

struct Channel {
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
    next_id: u64,
}

/// A classifier served by an external process. Requests are serialized
/// over one channel.
pub struct SubprocessModel {
    command: Vec<String>,
    classes: ClassLabels,
    input_dim: usize,
    input: InputKind,
    channel: Mutex<Channel>,
    stderr: Arc<Mutex<String>>,
    stderr_thread: Option<JoinHandle<()>>,
}

impl std::fmt::Debug for SubprocessModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SubprocessModel")
            .field("command", &self.command)
            .field("classes", &self.classes)
            .field("input_dim", &self.input_dim)
            .field("input", &self.input)
            .finish()
    }
}

impl SubprocessModel {
    /// Spawns `program args..` and performs the handshake.
    pub fn spawn(command: &[String]) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::invalid("empty subprocess command"))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut stderr_pipe = child.stderr.take().expect("piped stderr");
        let stderr = Arc::new(Mutex::new(String::new()));
        let sink = Arc::clone(&stderr);
        let stderr_thread = std::thread::spawn(move || {
            let mut buf = [0u8; 1024];
            while let Ok(n) = stderr_pipe.read(&mut buf) {
                if n == 0 {
                    break;
                }
                let mut s = sink.lock().unwrap_or_else(|e| e.into_inner());
                s.push_str(&String::from_utf8_lossy(&buf[..n]));
                if s.len() > STDERR_KEEP {
                    let mut cut = s.len() - STDERR_KEEP;
                    while !s.is_char_boundary(cut) {
                        cut += 1;
                    }
                    s.drain(..cut);
                }
            }
        });
        let mut model = SubprocessModel {
            command: command.to_vec(),
            classes: ClassLabels::new(Vec::<String>::new()),
            input_dim: 0,
            input: InputKind::Vector,
            channel: Mutex::new(Channel {
                child,
                stdin: Some(stdin),
                stdout,
                next_id: 1,
            }),
            stderr,
            stderr_thread: Some(stderr_thread),
        };
        let line = model.round_trip(&json!({"op": "info"}))?;
        let info: InfoResponse = serde_json::from_str(&line)
            .map_err(|e| model.backend_error(format!("bad handshake response: {e}")))?;
        if info.classes.len() < 2 {
            return Err(model.backend_error("handshake reported fewer than two classes".into()));
        }
        model.classes = ClassLabels::new(info.classes);
        model.input_dim = info.input_dim;
        model.input = info.input;
        Ok(model)
    }

    pub fn command(&self) -> &[String] {
        &self.command
    }

    pub fn input_kind(&self) -> InputKind {
        self.input
    }

    fn backend_error(&self, message: String) -> Error {
        // give the stderr reader a moment to catch up with a dying child
        if let Ok(mut ch) = self.channel.lock() {
            if let Ok(Some(_)) | Err(_) = ch.child.try_wait() {
                std::thread::sleep(std::time::Duration::from_millis(20));
            }
        }
        let diagnostics = self.stderr.lock().map(|s| s.clone()).unwrap_or_default();
        Error::Backend {
            message,
            diagnostics,
        }
    }

    fn round_trip(&self, request: &serde_json::Value) -> Result<String> {
        let result = {
            let mut ch = self.channel.lock().unwrap_or_else(|e| e.into_inner());
            Self::exchange(&mut ch, request)
        };
        result.map_err(|msg| self.backend_error(msg))
    }

    fn exchange(
        ch: &mut Channel,
        request: &serde_json::Value,
    ) -> std::result::Result<String, String> {
        let stdin = ch.stdin.as_mut().ok_or("channel closed")?;
        let mut line = serde_json::to_string(request).map_err(|e| e.to_string())?;
        line.push('\n');
        stdin
            .write_all(line.as_bytes())
            .and_then(|_| stdin.flush())
            .map_err(|e| format!("write to child failed: {e}"))?;
        let mut reply = String::new();
        let n = ch
            .stdout
            .read_line(&mut reply)
            .map_err(|e| format!("read from child failed: {e}"))?;
        if n == 0 {
            let status = ch.child.wait().map(|s| s.to_string()).unwrap_or_default();
            return Err(format!("child closed its output ({status})"));
        }
        Ok(reply)
    }

    fn request(&self, instances: serde_json::Value, n: usize) -> Result<Vec<ClassDistribution>> {
        let id = {
            let mut ch = self.channel.lock().unwrap_or_else(|e| e.into_inner());
            let id = ch.next_id;
            ch.next_id += 1;
            id
        };
        let line = self.round_trip(&json!({"id": id, "op": "predict", "instances": instances}))?;
        let resp: PredictResponse = serde_json::from_str(&line)
            .map_err(|e| self.backend_error(format!("bad predict response: {e}")))?;
        if resp.id != id {
            return Err(self.backend_error(format!(
                "response id {} does not match request id {id}",
                resp.id
            )));
        }
        if let Some(err) = resp.error {
            return Err(self.backend_error(format!("child reported: {err}")));
        }
        let probs = resp
            .probs
            .ok_or_else(|| self.backend_error("response has no `probs`".into()))?;
        if probs.len() != n {
            return Err(
                self.backend_error(format!("asked for {n} predictions, got {}", probs.len()))
            );
        }
        probs
            .into_iter()
            .map(|p| {
                if p.len() != self.classes.len() {
                    return Err(self.backend_error(format!(
                        "row has {} probabilities for {} classes",
                        p.len(),
                        self.classes.len()
                    )));
                }
                ClassDistribution::normalized(p, self.classes.clone(), WIRE_TOL)
                    .map_err(|e| self.backend_error(e.to_string()))
            })
            .collect()
    }
}

impl BlackBox for SubprocessModel {
    fn class_labels(&self) -> &ClassLabels {
        &self.classes
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn predict(&self, batch: &[Vec<f64>]) -> Result<Vec<ClassDistribution>> {
        if self.input == InputKind::Text {
            return Err(Error::Unsupported(
                "subprocess model expects raw text".into(),
            ));
        }
        if let Some(row) = batch.iter().find(|r| r.len() != self.input_dim) {
            return Err(Error::dim(self.input_dim, row.len(), "model input"));
        }
        if batch.is_empty() {
            return Ok(Vec::new());
        }
        self.request(json!(batch), batch.len())
    }

    fn accepts_text(&self) -> bool {
        self.input == InputKind::Text
    }

    fn predict_text(&self, batch: &[String]) -> Result<Vec<ClassDistribution>> {
        if self.input != InputKind::Text {
            return Err(Error::Unsupported(
                "subprocess model expects vectors".into(),
            ));
        }
        if batch.is_empty() {
            return Ok(Vec::new());
        }
        self.request(json!(batch), batch.len())
    }
}

impl Drop for SubprocessModel {
    fn drop(&mut self) {
        if let Ok(mut ch) = self.channel.lock() {
            ch.stdin.take();
            let _ = ch.child.kill();
            let _ = ch.child.wait();
        }
        if let Some(t) = self.stderr_thread.take() {
            let _ = t.join();
        }
    }
}
