//! JSON-lines client for external models.
//!
//! ```text
//! → {"op":"handshake"}
//! ← {"num_classes":N,"class_names":[...],"model_name":"..."}
//! → {"op":"predict","texts":[{"a":"...","b":null}, ...]}
//! ← {"probs":[[...], ...]}
//! → {"op":"shutdown"}
//! ```
//!
//! One object per line over a spawned process's stdio or a TCP stream. The
//! handshake may carry an optional `"mask_token"`, in which case masked words
//! are replaced by that token instead of deleted.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{validate_rows, BackendError, PredictionBackend};
use crate::text::{MaskStyle, TextPair};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Handshake {
    pub num_classes: usize,
    pub class_names: Vec<String>,
    #[serde(default)]
    pub model_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_token: Option<String>,
}

#[derive(Serialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum Request<'a> {
    Handshake,
    Predict { texts: &'a [TextPair] },
    Shutdown,
}

#[derive(Deserialize)]
struct PredictReply {
    probs: Vec<Vec<f64>>,
}

struct Connection {
    writer: Box<dyn Write + Send>,
    lines: Receiver<io::Result<String>>,
    child: Option<Child>,
    broken: bool,
}

impl Connection {
    fn new<R: Read + Send + 'static>(
        reader: R,
        writer: Box<dyn Write + Send>,
        child: Option<Child>,
    ) -> Self {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(reader).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Self {
            writer,
            lines: rx,
            child,
            broken: false,
        }
    }

    fn send(&mut self, request: &Request<'_>) -> Result<(), BackendError> {
        let mut line = serde_json::to_string(request)
            .map_err(|e| BackendError::ProtocolViolation(e.to_string()))?;
        line.push('\n');
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.flush())
            .map_err(|e| {
                self.broken = true;
                BackendError::Unavailable(format!("write failed: {e}"))
            })
    }

    fn recv(&mut self, timeout: Duration) -> Result<String, BackendError> {
        let deadline = Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            match self.lines.recv_timeout(left) {
                Ok(Ok(line)) if line.trim().is_empty() => continue,
                Ok(Ok(line)) => return Ok(line),
                Ok(Err(e)) => {
                    self.broken = true;
                    return Err(BackendError::Unavailable(format!("read failed: {e}")));
                }
                Err(RecvTimeoutError::Timeout) => {
                    // a late reply would desynchronize every later request
                    self.broken = true;
                    return Err(BackendError::Timeout(timeout));
                }
                Err(RecvTimeoutError::Disconnected) => {
                    self.broken = true;
                    return Err(BackendError::Unavailable(
                        "backend closed the connection".into(),
                    ));
                }
            }
        }
    }

    fn call(&mut self, request: &Request<'_>, timeout: Duration) -> Result<String, BackendError> {
        if self.broken {
            return Err(BackendError::Unavailable(
                "connection is no longer usable".into(),
            ));
        }
        self.send(request)?;
        self.recv(timeout)
    }
}

/// A [`PredictionBackend`] proxying requests to an external model.
///
/// Requests from parallel workers are serialized over the single connection.
pub struct ProtocolClient {
    name: String,
    handshake: Handshake,
    timeout: Duration,
    conn: Mutex<Connection>,
}

impl ProtocolClient {
    /// Spawn `command` (program followed by arguments) and handshake over its stdio.
    pub fn spawn(
        name: impl Into<String>,
        command: &[String],
        timeout: Duration,
    ) -> Result<Self, BackendError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| BackendError::Unavailable("empty command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| BackendError::Unavailable(format!("cannot spawn {program:?}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let conn = Connection::new(stdout, Box::new(stdin), Some(child));
        Self::handshake(name.into(), conn, timeout)
    }

    pub fn connect(
        name: impl Into<String>,
        address: &str,
        timeout: Duration,
    ) -> Result<Self, BackendError> {
        let stream = TcpStream::connect(address)
            .map_err(|e| BackendError::Unavailable(format!("cannot connect to {address}: {e}")))?;
        let reader = stream
            .try_clone()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        let conn = Connection::new(reader, Box::new(stream), None);
        Self::handshake(name.into(), conn, timeout)
    }

    fn handshake(
        name: String,
        mut conn: Connection,
        timeout: Duration,
    ) -> Result<Self, BackendError> {
        let reply = conn.call(&Request::Handshake, timeout)?;
        let handshake: Handshake = serde_json::from_str(&reply)
            .map_err(|e| BackendError::Handshake(format!("{e}: {reply:?}")))?;
        if handshake.num_classes < 2 {
            return Err(BackendError::Handshake(format!(
                "num_classes must be at least 2, got {}",
                handshake.num_classes
            )));
        }
        if handshake.class_names.len() != handshake.num_classes {
            return Err(BackendError::Handshake(format!(
                "{} class names for {} classes",
                handshake.class_names.len(),
                handshake.num_classes
            )));
        }
        Ok(Self {
            name,
            handshake,
            timeout,
            conn: Mutex::new(conn),
        })
    }

    pub fn handshake_info(&self) -> &Handshake {
        &self.handshake
    }

    /// Send the shutdown op and wait for a spawned process to exit.
    pub fn shutdown(self) -> Result<(), BackendError> {
        let mut conn = self.conn.into_inner().unwrap_or_else(|p| p.into_inner());
        shutdown_connection(&mut conn)
    }
}

fn shutdown_connection(conn: &mut Connection) -> Result<(), BackendError> {
    if conn.broken && conn.child.is_none() {
        return Ok(());
    }
    let sent = if conn.broken {
        Ok(())
    } else {
        conn.send(&Request::Shutdown)
    };
    conn.broken = true;
    if let Some(mut child) = conn.child.take() {
        drop(std::mem::replace(&mut conn.writer, Box::new(io::sink())));
        let deadline = Instant::now() + Duration::from_secs(2);
        loop {
            match child.try_wait() {
                Ok(Some(_)) => break,
                Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(10)),
                _ => {
                    let _ = child.kill();
                    let _ = child.wait();
                    break;
                }
            }
        }
    }
    sent
}

impl Drop for Connection {
    fn drop(&mut self) {
        let _ = shutdown_connection(self);
    }
}

impl PredictionBackend for ProtocolClient {
    fn num_classes(&self) -> usize {
        self.handshake.num_classes
    }

    fn model_name(&self) -> &str {
        &self.name
    }

    fn mask_style(&self) -> MaskStyle {
        match &self.handshake.mask_token {
            Some(token) => MaskStyle::Token(token.clone()),
            None => MaskStyle::Delete,
        }
    }

    fn predict_proba(&self, texts: &[TextPair]) -> Result<Vec<Vec<f64>>, BackendError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let reply = {
            let mut conn = self.conn.lock().unwrap_or_else(|p| p.into_inner());
            conn.call(&Request::Predict { texts }, self.timeout)?
        };
        let parsed: PredictReply = serde_json::from_str(&reply)
            .map_err(|e| BackendError::ProtocolViolation(format!("{e}: {reply:?}")))?;
        if parsed.probs.len() != texts.len() {
            return Err(BackendError::ProtocolViolation(format!(
                "{} rows for a batch of {}",
                parsed.probs.len(),
                texts.len()
            )));
        }
        validate_rows(&parsed.probs, self.handshake.num_classes)?;
        Ok(parsed.probs)
    }
}
