//! Runs untrusted generated programs: code extraction from model output,
//! blocklist sanitizing, and subprocess execution with a wall-clock timeout,
//! address-space cap, capped logs and GDSII artifact collection.
//!
//! This is process isolation only. Generated code runs with the caller's
//! privileges and network access; run the harness inside a disposable VM or
//! container when scoring models you do not trust.

mod extract;
mod sanitize;

pub use extract::{extract_code, ExtractError, ExtractWarning, Extracted};
pub use sanitize::{sanitize, Sanitized, DEFAULT_BLOCKLIST};

use std::fmt;
use std::fs;
use std::io;
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitStatus, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);
pub const DEFAULT_LOG_CAP: usize = 256 * 1024;
const POLL: Duration = Duration::from_millis(5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Ok,
    NonzeroExit,
    Timeout,
    NoArtifact,
    SpawnFailure,
}

impl fmt::Display for ExecStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExecStatus::Ok => "ok",
            ExecStatus::NonzeroExit => "nonzero_exit",
            ExecStatus::Timeout => "timeout",
            ExecStatus::NoArtifact => "no_artifact",
            ExecStatus::SpawnFailure => "spawn_failure",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub status: ExecStatus,
    pub exit_code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    pub duration_secs: f64,
    /// Relative paths of every artifact found, sorted by name.
    pub artifact_names: Vec<String>,
    #[serde(skip)]
    pub artifacts: Vec<Artifact>,
    /// Index into `artifacts` of the file handed to the evaluator.
    pub primary: Option<usize>,
    pub sanitizer_hits: Vec<String>,
    pub warnings: Vec<String>,
}

impl ExecutionOutcome {
    /// Outcome for a run that never produced output, e.g. no code to execute.
    pub fn failed(status: ExecStatus, stderr: impl Into<String>) -> Self {
        ExecutionOutcome {
            status,
            exit_code: None,
            stdout: String::new(),
            stderr: stderr.into(),
            duration_secs: 0.0,
            artifact_names: Vec::new(),
            artifacts: Vec::new(),
            primary: None,
            sanitizer_hits: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn primary_artifact(&self) -> Option<&Artifact> {
        self.primary.and_then(|i| self.artifacts.get(i))
    }

    /// Last `max_bytes` of stderr, starting on a line boundary when possible.
    pub fn stderr_tail(&self, max_bytes: usize) -> String {
        tail(self.stderr.as_bytes(), max_bytes).0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecLimits {
    /// Interpreter program and leading arguments; the source path is appended.
    pub interpreter: Vec<String>,
    #[serde(with = "secs")]
    pub timeout: Duration,
    pub memory_bytes: Option<u64>,
    pub log_cap: usize,
    pub source_extension: String,
    pub artifact_extensions: Vec<String>,
    pub blocklist: Vec<String>,
}

mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

impl Default for ExecLimits {
    fn default() -> Self {
        ExecLimits {
            interpreter: vec!["python3".into()],
            timeout: DEFAULT_TIMEOUT,
            memory_bytes: Some(4 << 30),
            log_cap: DEFAULT_LOG_CAP,
            source_extension: "py".into(),
            artifact_extensions: vec!["gds".into(), "gdsii".into()],
            blocklist: DEFAULT_BLOCKLIST.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Keeps the last `cap` bytes, dropping a partial leading line when the cut
/// falls mid-line and a later line exists. Returns the text and whether
/// anything was dropped.
fn tail(bytes: &[u8], cap: usize) -> (String, bool) {
    if bytes.len() <= cap {
        return (String::from_utf8_lossy(bytes).into_owned(), false);
    }
    let marker = format!("[... {} bytes truncated ...]\n", bytes.len() - cap);
    let budget = cap.saturating_sub(marker.len());
    let mut start = bytes.len() - budget;
    if start > 0 && bytes[start - 1] != b'\n' {
        if let Some(nl) = bytes[start..bytes.len().saturating_sub(1)].iter().position(|b| *b == b'\n') {
            start += nl + 1;
        }
    }
    // Do not start inside a UTF-8 sequence.
    while start < bytes.len() && (bytes[start] & 0xc0) == 0x80 {
        start += 1;
    }
    (format!("{marker}{}", String::from_utf8_lossy(&bytes[start..])), true)
}

fn read_log(path: &Path, cap: usize, name: &str, warnings: &mut Vec<String>) -> String {
    let bytes = fs::read(path).unwrap_or_default();
    let (text, cut) = tail(&bytes, cap);
    if cut {
        warnings.push(format!("{name} truncated to the last {cap} bytes"));
    }
    text
}

fn collect_artifacts(workdir: &Path, extensions: &[String]) -> io::Result<Vec<Artifact>> {
    let mut found = Vec::new();
    for entry in walkdir::WalkDir::new(workdir).sort_by_file_name() {
        let entry = entry.map_err(io::Error::other)?;
        if !entry.file_type().is_file() {
            continue;
        }
        let matches = entry
            .path()
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| extensions.iter().any(|x| x.eq_ignore_ascii_case(e)));
        if matches {
            let name = entry.path().strip_prefix(workdir).unwrap_or(entry.path()).to_string_lossy().into_owned();
            found.push(Artifact {
                name,
                bytes: fs::read(entry.path())?,
            });
        }
    }
    Ok(found)
}

fn kill_group(pid: u32) {
    // SAFETY: plain syscall on a process group we created; failure is harmless.
    unsafe {
        libc::kill(-(pid as libc::pid_t), libc::SIGKILL);
    }
}

fn wait_with_timeout(child: &mut std::process::Child, timeout: Duration) -> io::Result<Option<ExitStatus>> {
    let deadline = Instant::now() + timeout;
    loop {
        if let Some(status) = child.try_wait()? {
            return Ok(Some(status));
        }
        let now = Instant::now();
        if now >= deadline {
            return Ok(None);
        }
        std::thread::sleep(POLL.min(deadline - now));
    }
}

/// Writes `source` into `workdir`, runs the interpreter there and gathers logs
/// and GDSII files. The workdir should be fresh and empty.
pub fn execute(source: &str, limits: &ExecLimits, workdir: &Path) -> ExecutionOutcome {
    let started = Instant::now();
    let mut warnings = Vec::new();
    let src_name = format!("source.{}", limits.source_extension);
    let stdout_path = workdir.join("stdout.txt");
    let stderr_path = workdir.join("stderr.txt");
    let spawn_failure = |msg: String| ExecutionOutcome::failed(ExecStatus::SpawnFailure, msg);

    let Some((program, args)) = limits.interpreter.split_first() else {
        return spawn_failure("no interpreter configured".into());
    };
    let setup = (|| -> io::Result<(fs::File, fs::File)> {
        fs::create_dir_all(workdir)?;
        fs::write(workdir.join(&src_name), source)?;
        Ok((fs::File::create(&stdout_path)?, fs::File::create(&stderr_path)?))
    })();
    let (out_file, err_file) = match setup {
        Ok(f) => f,
        Err(e) => return spawn_failure(format!("cannot prepare workdir {}: {e}", workdir.display())),
    };

    let mut cmd = Command::new(program);
    cmd.args(args)
        .arg(&src_name)
        .current_dir(workdir)
        .stdin(Stdio::null())
        .stdout(out_file)
        .stderr(err_file)
        .env("MPLBACKEND", "Agg");
    let memory = limits.memory_bytes;
    // SAFETY: only async-signal-safe calls (setpgid, setrlimit) run between fork and exec.
    unsafe {
        cmd.pre_exec(move || {
            if libc::setpgid(0, 0) != 0 {
                return Err(io::Error::last_os_error());
            }
            if let Some(bytes) = memory {
                let lim = libc::rlimit {
                    rlim_cur: bytes as libc::rlim_t,
                    rlim_max: bytes as libc::rlim_t,
                };
                if libc::setrlimit(libc::RLIMIT_AS, &lim) != 0 {
                    return Err(io::Error::last_os_error());
                }
            }
            Ok(())
        });
    }
    let mut child = match cmd.spawn() {
        Ok(c) => c,
        Err(e) => return spawn_failure(format!("cannot start {program}: {e}")),
    };
    let pid = child.id();
    let waited = wait_with_timeout(&mut child, limits.timeout);
    // Reap stray grandchildren either way.
    kill_group(pid);
    let (status, exit_code) = match waited {
        Ok(Some(s)) => (if s.success() { ExecStatus::Ok } else { ExecStatus::NonzeroExit }, s.code()),
        Ok(None) => {
            let _ = child.wait();
            warnings.push(format!("killed after {:.1} s", limits.timeout.as_secs_f64()));
            (ExecStatus::Timeout, None)
        }
        Err(e) => {
            let _ = child.kill();
            let _ = child.wait();
            warnings.push(format!("wait failed: {e}"));
            (ExecStatus::NonzeroExit, None)
        }
    };
    let duration_secs = started.elapsed().as_secs_f64();
    let stdout = read_log(&stdout_path, limits.log_cap, "stdout", &mut warnings);
    let stderr = read_log(&stderr_path, limits.log_cap, "stderr", &mut warnings);
    let artifacts = collect_artifacts(workdir, &limits.artifact_extensions).unwrap_or_else(|e| {
        warnings.push(format!("artifact scan failed: {e}"));
        Vec::new()
    });
    let primary = artifacts
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.bytes.len().cmp(&b.bytes.len()).then(ib.cmp(ia)))
        .map(|(i, _)| i);
    if artifacts.len() > 1 {
        warnings.push(format!(
            "ambiguous artifact: {} files, using {}",
            artifacts.len(),
            artifacts[primary.unwrap_or(0)].name
        ));
    }
    let status = match status {
        ExecStatus::Ok if primary.is_none() => ExecStatus::NoArtifact,
        s => s,
    };
    ExecutionOutcome {
        status,
        exit_code,
        stdout,
        stderr,
        duration_secs,
        artifact_names: artifacts.iter().map(|a| a.name.clone()).collect(),
        artifacts,
        primary,
        sanitizer_hits: Vec::new(),
        warnings,
    }
}

/// Maps `f` over `items` on up to `workers` threads, keeping input order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<R>> = std::iter::repeat_with(|| None).take(items.len()).collect();
    let results: Vec<Vec<(usize, R)>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                s.spawn(|| {
                    let mut local = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= items.len() {
                            break local;
                        }
                        local.push((i, f(&items[i])));
                    }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    for (i, r) in results.into_iter().flatten() {
        slots[i] = Some(r);
    }
    slots.into_iter().map(|r| r.expect("every index visited")).collect()
}

/// Default worker count: available cores.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Fresh, uniquely named directory below `root`.
pub fn fresh_workdir(root: &Path, label: &str) -> io::Result<PathBuf> {
    fs::create_dir_all(root)?;
    let dir = tempfile::Builder::new().prefix(&format!("{label}-")).tempdir_in(root)?;
    Ok(dir.keep())
}
