//! Adapter for executors that run as a subprocess and print a commit log.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use regex::Regex;
use serde::Deserialize;
use thiserror::Error;

use super::{ArchState, CommitRecord, CommitTrace, HaltCause, Limits, Writeback};

/// Backend description loaded from TOML.
///
/// ```toml
/// command = ["rvfuzz", "trace", "{testcase}"]
/// trace_pattern = '^commit step=(?P<step>\d+) pc=0x(?P<pc>[0-9a-f]+) instr=0x(?P<instr>[0-9a-f]+)(?: x(?P<reg>\d+)=0x(?P<value>[0-9a-f]+))?$'
/// halt_pattern = '^halt pc=0x(?P<pc>[0-9a-f]+) cause=(?P<cause>\S+)$'
/// timeout_secs = 10
/// ```
///
/// `pc`, `instr` and `value` are hexadecimal (an `0x` prefix is accepted);
/// `step` and `reg` are decimal (`reg` may carry an `x` prefix). Lines
/// matching neither pattern are ignored.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub command: Vec<String>,
    pub trace_pattern: String,
    #[serde(default)]
    pub halt_pattern: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(skip)]
    compiled: Option<(Regex, Option<Regex>)>,
}

fn default_timeout() -> f64 {
    10.0
}

pub const TESTCASE_PLACEHOLDER: &str = "{testcase}";

#[derive(Debug, Error)]
pub enum ExternalError {
    #[error("backend config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("failed to spawn `{command}`: {source}")]
    SpawnFailure {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("backend timed out after {secs} s")]
    Timeout { secs: f64 },
    #[error("backend exited with status {code:?}: {stderr}")]
    NonZeroExit { code: Option<i32>, stderr: String },
    #[error("unparseable trace line {line}: {text}")]
    ParseError { line: usize, text: String },
    #[error("writing test case: {0}")]
    Io(#[from] std::io::Error),
}

impl BackendConfig {
    pub fn new(
        command: Vec<String>,
        trace_pattern: &str,
        halt_pattern: Option<&str>,
        timeout_secs: f64,
    ) -> Result<Self, ExternalError> {
        let mut cfg = BackendConfig {
            command,
            trace_pattern: trace_pattern.to_string(),
            halt_pattern: halt_pattern.map(str::to_string),
            timeout_secs,
            compiled: None,
        };
        cfg.compile(Path::new("<inline>"))?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, ExternalError> {
        let config_err = |message: String| ExternalError::Config {
            path: origin.to_path_buf(),
            message,
        };
        let mut cfg: BackendConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.compile(origin)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExternalError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExternalError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text, path)
    }

    fn compile(&mut self, origin: &Path) -> Result<(), ExternalError> {
        let config_err = |message: String| ExternalError::Config {
            path: origin.to_path_buf(),
            message,
        };
        if self.command.is_empty() {
            return Err(config_err("command must not be empty".into()));
        }
        if !self
            .command
            .iter()
            .any(|a| a.contains(TESTCASE_PLACEHOLDER))
        {
            return Err(config_err(format!(
                "command must contain {TESTCASE_PLACEHOLDER}"
            )));
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(config_err("timeout_secs must be positive".into()));
        }
        let trace = Regex::new(&self.trace_pattern).map_err(|e| config_err(e.to_string()))?;
        for group in ["step", "pc", "instr"] {
            if !trace.capture_names().flatten().any(|n| n == group) {
                return Err(config_err(format!(
                    "trace_pattern lacks named group `{group}`"
                )));
            }
        }
        let halt = match &self.halt_pattern {
            Some(p) => Some(Regex::new(p).map_err(|e| config_err(e.to_string()))?),
            None => None,
        };
        self.compiled = Some((trace, halt));
        Ok(())
    }

    fn patterns(&self) -> (Regex, Option<Regex>) {
        match &self.compiled {
            Some((t, h)) => (t.clone(), h.clone()),
            None => (
                Regex::new(&self.trace_pattern).expect("validated pattern"),
                self.halt_pattern
                    .as_deref()
                    .map(|p| Regex::new(p).expect("validated pattern")),
            ),
        }
    }
}

fn parse_hex(s: &str) -> Option<u64> {
    let digits = s
        .strip_prefix("0x")
        .or_else(|| s.strip_prefix("0X"))
        .unwrap_or(s);
    u64::from_str_radix(digits, 16).ok()
}

/// Parses backend output into a trace. The final state is rebuilt from the
/// writebacks; pc and halt cause come from the halt line when one matches.
pub fn parse_trace(output: &str, config: &BackendConfig) -> Result<CommitTrace, ExternalError> {
    let (trace_re, halt_re) = config.patterns();
    let mut records: Vec<CommitRecord> = Vec::new();
    let mut halt: Option<(u64, Option<HaltCause>)> = None;
    for (idx, line) in output.lines().enumerate() {
        let bad = || ExternalError::ParseError {
            line: idx + 1,
            text: line.to_string(),
        };
        if let Some(caps) = trace_re.captures(line) {
            let field = |name: &str| caps.name(name).map(|m| m.as_str());
            let step: u64 = field("step").and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let pc = field("pc").and_then(parse_hex).ok_or_else(bad)?;
            let instr = field("instr")
                .and_then(parse_hex)
                .and_then(|v| u32::try_from(v).ok())
                .ok_or_else(bad)?;
            let writeback = match (field("reg"), field("value")) {
                (Some(reg), Some(value)) => {
                    let reg: u8 = reg.trim_start_matches('x').parse().map_err(|_| bad())?;
                    if reg >= 32 {
                        return Err(bad());
                    }
                    Some(Writeback {
                        reg,
                        value: parse_hex(value).ok_or_else(bad)?,
                    })
                }
                (None, None) => None,
                _ => return Err(bad()),
            };
            if records.last().is_some_and(|r| r.step >= step) {
                return Err(bad());
            }
            records.push(CommitRecord {
                step,
                pc,
                instr,
                writeback,
            });
        } else if let Some(caps) = halt_re.as_ref().and_then(|re| re.captures(line)) {
            let pc = caps
                .name("pc")
                .map(|m| m.as_str())
                .and_then(parse_hex)
                .ok_or_else(bad)?;
            let cause = match caps.name("cause").map(|m| m.as_str()) {
                Some("none") | None => None,
                Some(c) => Some(c.parse().map_err(|_| bad())?),
            };
            halt = Some((pc, cause));
        }
    }
    let mut trace = CommitTrace {
        records,
        final_state: ArchState::default(),
    };
    trace.final_state.xregs = trace.replay_xregs();
    match halt {
        Some((pc, cause)) => {
            trace.final_state.pc = pc;
            trace.final_state.halt_cause = cause;
            trace.final_state.halted = true;
        }
        None => {
            trace.final_state.pc = trace.records.last().map_or(0, |r| r.pc);
            trace.final_state.halted = true;
        }
    }
    Ok(trace)
}

fn spawn_reader<R: Read + Send + 'static>(mut pipe: R) -> std::sync::mpsc::Receiver<Vec<u8>> {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = pipe.read_to_end(&mut buf);
        let _ = tx.send(buf);
    });
    rx
}

/// Runs the backend on `bytes` and parses its commit log.
///
/// `limits` is not forwarded; backends enforce their own step budgets.
pub fn run_external(
    bytes: &[u8],
    config: &BackendConfig,
    _limits: &Limits,
) -> Result<CommitTrace, ExternalError> {
    let mut file = tempfile::Builder::new()
        .prefix("rvfuzz-")
        .suffix(".bin")
        .tempfile()?;
    file.write_all(bytes)?;
    file.flush()?;
    let testcase = file.path().to_string_lossy().into_owned();
    let argv: Vec<String> = config
        .command
        .iter()
        .map(|a| a.replace(TESTCASE_PLACEHOLDER, &testcase))
        .collect();

    let mut child = Command::new(&argv[0])
        .args(&argv[1..])
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|source| ExternalError::SpawnFailure {
            command: argv.join(" "),
            source,
        })?;
    let stdout = spawn_reader(child.stdout.take().expect("piped stdout"));
    let stderr = spawn_reader(child.stderr.take().expect("piped stderr"));

    let deadline = Instant::now() + Duration::from_secs_f64(config.timeout_secs);
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if Instant::now() >= deadline {
            let _ = child.kill();
            let _ = child.wait();
            return Err(ExternalError::Timeout {
                secs: config.timeout_secs,
            });
        }
        std::thread::sleep(Duration::from_millis(2));
    };
    // A grandchild may keep the pipes open; give up on them at the deadline.
    let remaining = deadline
        .saturating_duration_since(Instant::now())
        .max(Duration::from_millis(100));
    let out = stdout
        .recv_timeout(remaining)
        .map_err(|_| ExternalError::Timeout {
            secs: config.timeout_secs,
        })?;
    let err = stderr
        .recv_timeout(Duration::from_millis(100))
        .unwrap_or_default();
    if !status.success() {
        return Err(ExternalError::NonZeroExit {
            code: status.code(),
            stderr: String::from_utf8_lossy(&err).trim_end().to_string(),
        });
    }
    parse_trace(&String::from_utf8_lossy(&out), config)
}
