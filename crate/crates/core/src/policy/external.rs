//! Out-of-process policies speaking newline-delimited JSON.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread;
use std::time::Duration;

use crate::reward::AgentResponse;

use super::{Policy, PolicyError, StepRequest, WireResponse};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// A line-oriented, synchronous message channel.
pub trait Transport: Send {
    fn send_line(&mut self, line: &str) -> Result<(), PolicyError>;
    fn recv_line(&mut self, timeout: Duration) -> Result<String, PolicyError>;
}

fn recv_with_timeout(rx: &Receiver<String>, timeout: Duration) -> Result<String, PolicyError> {
    match rx.recv_timeout(timeout) {
        Ok(line) => Ok(line),
        Err(RecvTimeoutError::Timeout) => Err(PolicyError::Timeout(timeout.as_millis())),
        Err(RecvTimeoutError::Disconnected) => Err(PolicyError::Transport("peer closed the stream".into())),
    }
}

/// Transport over the stdin/stdout of a spawned process.
pub struct ChildTransport {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
}

impl ChildTransport {
    pub fn spawn(program: &str, args: &[String]) -> Result<ChildTransport, PolicyError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| PolicyError::Transport(format!("cannot spawn `{program}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if line.trim().is_empty() {
                    continue;
                }
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(ChildTransport { child, stdin, lines: rx })
    }
}

impl Transport for ChildTransport {
    fn send_line(&mut self, line: &str) -> Result<(), PolicyError> {
        writeln!(self.stdin, "{line}")
            .and_then(|_| self.stdin.flush())
            .map_err(|e| PolicyError::Transport(e.to_string()))
    }

    fn recv_line(&mut self, timeout: Duration) -> Result<String, PolicyError> {
        recv_with_timeout(&self.lines, timeout)
    }
}

impl Drop for ChildTransport {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// In-memory transport, mostly for tests and in-process clients.
pub struct ChannelTransport {
    tx: Sender<String>,
    rx: Receiver<String>,
}

impl ChannelTransport {
    /// Two connected ends: what one sends the other receives.
    pub fn pair() -> (ChannelTransport, ChannelTransport) {
        let (a_tx, a_rx) = mpsc::channel();
        let (b_tx, b_rx) = mpsc::channel();
        (
            ChannelTransport { tx: a_tx, rx: b_rx },
            ChannelTransport { tx: b_tx, rx: a_rx },
        )
    }
}

impl Transport for ChannelTransport {
    fn send_line(&mut self, line: &str) -> Result<(), PolicyError> {
        self.tx
            .send(line.to_string())
            .map_err(|_| PolicyError::Transport("peer closed the stream".into()))
    }

    fn recv_line(&mut self, timeout: Duration) -> Result<String, PolicyError> {
        recv_with_timeout(&self.rx, timeout)
    }
}

pub struct ExternalPolicy {
    name: String,
    transport: Box<dyn Transport>,
    pub timeout: Duration,
}

impl ExternalPolicy {
    pub fn new(name: impl Into<String>, transport: Box<dyn Transport>) -> Self {
        ExternalPolicy {
            name: name.into(),
            transport,
            timeout: DEFAULT_TIMEOUT,
        }
    }

    pub fn spawn(program: &str, args: &[String]) -> Result<ExternalPolicy, PolicyError> {
        let t = ChildTransport::spawn(program, args)?;
        Ok(Self::new(format!("external({program})"), Box::new(t)))
    }
}

impl Policy for ExternalPolicy {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn decide(&mut self, req: &StepRequest) -> Result<AgentResponse, PolicyError> {
        self.transport.send_line(&req.to_line())?;
        let line = self.transport.recv_line(self.timeout)?;
        WireResponse::parse_line(&line)?.into_agent_response()
    }
}
