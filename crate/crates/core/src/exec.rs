//! Running one candidate program on one test input.
//!
//! A candidate is written to a temporary file and launched through a runner
//! command template such as `python3 {file}`. The test input is piped to
//! stdin and stdout is captured, bounded and normalized into the token that
//! consensus compares. stderr is kept only for diagnostics.
//!
//! Every child is started in its own process group. Once the leader exits
//! (or a limit is hit) the whole group is sent `SIGKILL` before the leader
//! is reaped, so background children cannot outlive the run.

use std::fmt;
use std::io::{self, Read, Write};
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Placeholder substituted with the path of the candidate's source file.
pub const FILE_PLACEHOLDER: &str = "{file}";

const POLL_INTERVAL: Duration = Duration::from_millis(2);
const STDERR_CAP: usize = 64 * 1024;

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("invalid runner command `{template}`: {reason}")]
    InvalidRunner { template: String, reason: String },
    #[error("invalid resource limits: {0}")]
    InvalidLimits(String),
    #[error("failed to spawn runner `{program}`: {source}")]
    Spawn {
        program: String,
        #[source]
        source: io::Error,
    },
    #[error("failed to stage candidate source: {0}")]
    Staging(#[source] io::Error),
    #[error("i/o failure while supervising candidate: {0}")]
    Io(#[from] io::Error),
}

/// Bounds applied to a single execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResourceLimits {
    wall_timeout_ms: u64,
    max_output_bytes: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_memory_bytes: Option<u64>,
}

impl ResourceLimits {
    pub const DEFAULT_WALL_TIMEOUT_MS: u64 = 6000;
    pub const DEFAULT_MAX_OUTPUT_BYTES: u64 = 1 << 20;

    pub fn new(
        wall_timeout_ms: u64,
        max_output_bytes: u64,
        max_memory_bytes: Option<u64>,
    ) -> Result<Self, ExecError> {
        if wall_timeout_ms == 0 {
            return Err(ExecError::InvalidLimits(
                "wall timeout must be positive".into(),
            ));
        }
        if max_output_bytes == 0 {
            return Err(ExecError::InvalidLimits(
                "output limit must be positive".into(),
            ));
        }
        if max_memory_bytes == Some(0) {
            return Err(ExecError::InvalidLimits(
                "memory limit must be positive".into(),
            ));
        }
        Ok(Self {
            wall_timeout_ms,
            max_output_bytes,
            max_memory_bytes,
        })
    }

    pub fn wall_timeout(&self) -> Duration {
        Duration::from_millis(self.wall_timeout_ms)
    }

    pub fn wall_timeout_ms(&self) -> u64 {
        self.wall_timeout_ms
    }

    pub fn max_output_bytes(&self) -> u64 {
        self.max_output_bytes
    }

    pub fn max_memory_bytes(&self) -> Option<u64> {
        self.max_memory_bytes
    }
}

impl Default for ResourceLimits {
    fn default() -> Self {
        Self {
            wall_timeout_ms: Self::DEFAULT_WALL_TIMEOUT_MS,
            max_output_bytes: Self::DEFAULT_MAX_OUTPUT_BYTES,
            max_memory_bytes: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExecStatus {
    Ok,
    RuntimeError,
    Timeout,
    InvalidFormat,
    OutputTooLarge,
}

impl ExecStatus {
    pub fn is_ok(self) -> bool {
        self == ExecStatus::Ok
    }
}

impl fmt::Display for ExecStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ExecStatus::Ok => "Ok",
            ExecStatus::RuntimeError => "RuntimeError",
            ExecStatus::Timeout => "Timeout",
            ExecStatus::InvalidFormat => "InvalidFormat",
            ExecStatus::OutputTooLarge => "OutputTooLarge",
        };
        f.write_str(s)
    }
}

/// Result of one (candidate, input) execution.
///
/// `output` is present exactly when `status` is [`ExecStatus::Ok`] and is
/// always in normalized form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawOutcome")]
pub struct ExecOutcome {
    status: ExecStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    output: Option<String>,
    duration_ms: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    exit_code: Option<i32>,
}

#[derive(Deserialize)]
struct RawOutcome {
    status: ExecStatus,
    #[serde(default)]
    output: Option<String>,
    #[serde(default)]
    duration_ms: u64,
    #[serde(default)]
    exit_code: Option<i32>,
}

impl TryFrom<RawOutcome> for ExecOutcome {
    type Error = String;

    fn try_from(raw: RawOutcome) -> Result<Self, Self::Error> {
        ExecOutcome::from_parts(raw.status, raw.output, raw.duration_ms, raw.exit_code)
    }
}

impl ExecOutcome {
    /// A successful run. `output` must already be normalized and nonempty.
    pub fn ok(output: impl Into<String>, duration_ms: u64, exit_code: Option<i32>) -> Self {
        let output = output.into();
        debug_assert_eq!(
            normalize_output(output.as_bytes()).as_deref(),
            Ok(output.as_str())
        );
        Self {
            status: ExecStatus::Ok,
            output: Some(output),
            duration_ms,
            exit_code,
        }
    }

    /// A failed run. Panics if `status` is `Ok`.
    pub fn failed(status: ExecStatus, duration_ms: u64, exit_code: Option<i32>) -> Self {
        assert!(!status.is_ok(), "failed outcome cannot carry Ok status");
        Self {
            status,
            output: None,
            duration_ms,
            exit_code,
        }
    }

    /// Validating constructor used when reading outcomes back from disk.
    pub fn from_parts(
        status: ExecStatus,
        output: Option<String>,
        duration_ms: u64,
        exit_code: Option<i32>,
    ) -> Result<Self, String> {
        match (status, output) {
            (ExecStatus::Ok, Some(out)) => match normalize_output(out.as_bytes()) {
                Ok(norm) if norm == out => Ok(Self::ok(out, duration_ms, exit_code)),
                _ => Err(format!("output {out:?} is not in normalized form")),
            },
            (ExecStatus::Ok, None) => Err("Ok outcome without output".into()),
            (status, None) => Ok(Self::failed(status, duration_ms, exit_code)),
            (status, Some(_)) => Err(format!("{status} outcome must not carry output")),
        }
    }

    pub fn status(&self) -> ExecStatus {
        self.status
    }

    pub fn output(&self) -> Option<&str> {
        self.output.as_deref()
    }

    pub fn duration_ms(&self) -> u64 {
        self.duration_ms
    }

    pub fn exit_code(&self) -> Option<i32> {
        self.exit_code
    }

    pub fn is_ok(&self) -> bool {
        self.status.is_ok()
    }

    pub fn with_duration_ms(mut self, duration_ms: u64) -> Self {
        self.duration_ms = duration_ms;
        self
    }
}

/// Output bytes rejected by [`normalize_output`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum InvalidFormat {
    #[error("output is not valid UTF-8")]
    NotUtf8,
    #[error("output is empty after normalization")]
    Empty,
}

/// Canonicalizes captured stdout so that outputs from different runtimes
/// compare equal when they differ only by formatting.
///
/// CRLF becomes LF, surrounding whitespace and blank lines are removed and
/// every line loses its trailing whitespace.
pub fn normalize_output(raw: &[u8]) -> Result<String, InvalidFormat> {
    let text = std::str::from_utf8(raw).map_err(|_| InvalidFormat::NotUtf8)?;
    let text = text.replace("\r\n", "\n");
    let mut out = String::with_capacity(text.len());
    for (i, line) in text.trim().split('\n').enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(line.trim_end());
    }
    if out.is_empty() {
        return Err(InvalidFormat::Empty);
    }
    Ok(out)
}

/// A parsed runner command template, e.g. `python3 -I {file}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunnerCommand {
    template: String,
    argv: Vec<String>,
    file_suffix: String,
}

impl RunnerCommand {
    pub fn parse(template: &str) -> Result<Self, ExecError> {
        let invalid = |reason: &str| ExecError::InvalidRunner {
            template: template.to_string(),
            reason: reason.to_string(),
        };
        let argv = shell_words::split(template).map_err(|e| invalid(&e.to_string()))?;
        if argv.is_empty() {
            return Err(invalid("empty command"));
        }
        if !argv.iter().any(|a| a.contains(FILE_PLACEHOLDER)) {
            return Err(invalid("missing {file} placeholder"));
        }
        Ok(Self {
            template: template.to_string(),
            argv,
            file_suffix: String::new(),
        })
    }

    /// Extension given to the staged source file, e.g. `.py`.
    pub fn with_file_suffix(mut self, suffix: impl Into<String>) -> Self {
        self.file_suffix = suffix.into();
        self
    }

    pub fn template(&self) -> &str {
        &self.template
    }

    pub fn file_suffix(&self) -> &str {
        &self.file_suffix
    }

    fn argv_for(&self, file: &Path) -> Vec<String> {
        let file = file.to_string_lossy();
        self.argv
            .iter()
            .map(|a| a.replace(FILE_PLACEHOLDER, &file))
            .collect()
    }
}

/// Everything observed about a run, including diagnostics that never take
/// part in consensus.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub outcome: ExecOutcome,
    pub stderr: String,
}

/// Runs `program_source` on `test_input` and classifies the result.
///
/// Failing to launch the runner itself is reported as [`ExecError`], never
/// as a [`ExecStatus::RuntimeError`] outcome.
pub fn run_candidate(
    program_source: &str,
    runner: &RunnerCommand,
    test_input: &str,
    limits: &ResourceLimits,
) -> Result<ExecOutcome, ExecError> {
    run_candidate_with_diagnostics(program_source, runner, test_input, limits).map(|r| r.outcome)
}

pub fn run_candidate_with_diagnostics(
    program_source: &str,
    runner: &RunnerCommand,
    test_input: &str,
    limits: &ResourceLimits,
) -> Result<RunReport, ExecError> {
    let mut staged = tempfile::Builder::new()
        .prefix("fmv-cand-")
        .suffix(runner.file_suffix())
        .tempfile()
        .map_err(ExecError::Staging)?;
    staged
        .write_all(program_source.as_bytes())
        .and_then(|_| staged.flush())
        .map_err(ExecError::Staging)?;
    // Close the write handle so the runner may exec the file directly.
    let staged = staged.into_temp_path();

    let argv = runner.argv_for(&staged);
    let mut cmd = Command::new(&argv[0]);
    cmd.args(&argv[1..])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);
    if let Some(bytes) = limits.max_memory_bytes() {
        // SAFETY: setrlimit is async-signal-safe and touches no shared state.
        unsafe {
            cmd.pre_exec(move || {
                let lim = libc::rlimit {
                    rlim_cur: bytes as libc::rlim_t,
                    rlim_max: bytes as libc::rlim_t,
                };
                if libc::setrlimit(libc::RLIMIT_AS, &lim) != 0 {
                    return Err(io::Error::last_os_error());
                }
                Ok(())
            });
        }
    }

    let started = Instant::now();
    let child = cmd.spawn().map_err(|source| ExecError::Spawn {
        program: argv[0].clone(),
        source,
    })?;
    let result = supervise(child, test_input, limits, started);
    drop(staged);
    result
}

struct GroupGuard {
    pgid: libc::pid_t,
}

impl GroupGuard {
    fn kill(&self) {
        // SAFETY: plain syscall; ESRCH when the group is already gone is fine.
        unsafe {
            libc::killpg(self.pgid, libc::SIGKILL);
        }
    }
}

fn leader_exited(pid: libc::pid_t) -> io::Result<bool> {
    // SAFETY: zeroed siginfo is a valid out-parameter for waitid.
    unsafe {
        let mut info: libc::siginfo_t = std::mem::zeroed();
        let rc = libc::waitid(
            libc::P_PID,
            pid as libc::id_t,
            &mut info,
            libc::WEXITED | libc::WNOHANG | libc::WNOWAIT,
        );
        if rc != 0 {
            return Err(io::Error::last_os_error());
        }
        Ok(info.si_pid() != 0)
    }
}

fn supervise(
    mut child: Child,
    test_input: &str,
    limits: &ResourceLimits,
    started: Instant,
) -> Result<RunReport, ExecError> {
    let group = GroupGuard {
        pgid: child.id() as libc::pid_t,
    };

    let mut stdin = child.stdin.take().expect("stdin piped");
    let input = test_input.as_bytes().to_vec();
    let writer = thread::spawn(move || {
        // A program that never reads its input closes the pipe early.
        let _ = stdin.write_all(&input);
    });

    let overflow = Arc::new(AtomicBool::new(false));
    let limit = limits.max_output_bytes();
    let mut stdout = child.stdout.take().expect("stdout piped");
    let stdout_flag = Arc::clone(&overflow);
    let stdout_reader = thread::spawn(move || -> io::Result<Vec<u8>> {
        let mut buf = Vec::new();
        (&mut stdout).take(limit + 1).read_to_end(&mut buf)?;
        if buf.len() as u64 > limit {
            stdout_flag.store(true, Ordering::SeqCst);
        }
        Ok(buf)
    });
    let mut stderr = child.stderr.take().expect("stderr piped");
    let stderr_reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = (&mut stderr).take(STDERR_CAP as u64).read_to_end(&mut buf);
        let _ = io::copy(&mut stderr, &mut io::sink());
        String::from_utf8_lossy(&buf).into_owned()
    });

    let timeout = limits.wall_timeout();
    let pid = child.id() as libc::pid_t;
    let mut timed_out = false;
    let supervision: io::Result<()> = loop {
        match leader_exited(pid) {
            Ok(true) => break Ok(()),
            Ok(false) => {}
            Err(e) => break Err(e),
        }
        if overflow.load(Ordering::SeqCst) {
            break Ok(());
        }
        let elapsed = started.elapsed();
        if elapsed >= timeout {
            timed_out = true;
            break Ok(());
        }
        thread::sleep(POLL_INTERVAL.min(timeout - elapsed));
    };
    let elapsed = started.elapsed();

    // The leader is not reaped yet, so its pid still names this group.
    group.kill();
    let status = child.wait();
    let _ = writer.join();
    let stdout = stdout_reader.join().expect("stdout reader panicked");
    let stderr = stderr_reader.join().expect("stderr reader panicked");
    supervision?;
    let status = status?;

    let duration_ms = elapsed.as_millis() as u64;
    let exit_code = status.code();
    // Processes we killed have no meaningful exit status, and whether our
    // signal or a broken pipe got there first is a race.
    let outcome = if timed_out {
        ExecOutcome::failed(ExecStatus::Timeout, duration_ms, None)
    } else if overflow.load(Ordering::SeqCst) {
        ExecOutcome::failed(ExecStatus::OutputTooLarge, duration_ms, None)
    } else if !status.success() {
        ExecOutcome::failed(ExecStatus::RuntimeError, duration_ms, exit_code)
    } else {
        match normalize_output(&stdout?) {
            Ok(out) => ExecOutcome::ok(out, duration_ms, exit_code),
            Err(_) => ExecOutcome::failed(ExecStatus::InvalidFormat, duration_ms, exit_code),
        }
    };
    Ok(RunReport { outcome, stderr })
}
