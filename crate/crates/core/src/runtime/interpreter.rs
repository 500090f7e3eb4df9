//! Running subject-language programs in throwaway workspaces.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use super::RuntimeError;
use crate::digest::{json_digest, sha256_hex};
use crate::domain::ProbeTarget;

pub const INTERPRETER_ENV: &str = "DSCHECKER_INTERPRETER";
pub const SHIM_ENV: &str = "DSCHECKER_PROBE_SHIM";
pub const DEFAULT_INTERPRETER: &str = "python3";
pub const SNIPPET_FILE: &str = "snippet.py";
pub const PROBES_FILE: &str = "probes.json";
pub const CHECKER_FILE: &str = "checker.py";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ExecMode {
    /// Run the snippet as-is.
    Plain,
    /// Run the snippet under the probe shim.
    Probe { probes: Vec<ProbeTarget> },
    /// Run a checker program that receives `input` on standard input.
    Checker { input: String },
}

#[derive(Debug, Clone)]
pub struct ExecRequest {
    pub mode: ExecMode,
    /// Program text: the snippet, or the checker for [`ExecMode::Checker`].
    pub program: String,
    /// Files copied into the workspace under their own file names.
    pub data_files: Vec<PathBuf>,
    pub timeout: Duration,
}

#[derive(Serialize)]
struct KeyMaterial<'a> {
    mode: &'a ExecMode,
    program_sha256: String,
    data: Vec<(String, String)>,
}

impl ExecRequest {
    /// Content-addressed identity of the request; the timeout is excluded.
    pub fn key(&self) -> Result<String, RuntimeError> {
        let mut data = Vec::with_capacity(self.data_files.len());
        for path in &self.data_files {
            let bytes = fs::read(path).map_err(|e| RuntimeError::WorkspaceIo(format!(
                "cannot read data file {}: {e}",
                path.display()
            )))?;
            data.push((file_name(path)?, sha256_hex(bytes)));
        }
        Ok(json_digest(&KeyMaterial {
            mode: &self.mode,
            program_sha256: sha256_hex(&self.program),
            data,
        }))
    }
}

fn file_name(path: &Path) -> Result<String, RuntimeError> {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| RuntimeError::WorkspaceIo(format!("{} has no file name", path.display())))
}

/// What the process did, before any interpretation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawExecution {
    pub exit_code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    pub timed_out: bool,
    pub duration_ms: u64,
}

/// Something that can execute subject-language programs.
pub trait Interpreter: Send + Sync {
    fn execute(&self, request: &ExecRequest) -> Result<RawExecution, RuntimeError>;
}

/// Counting semaphore bounding concurrent child processes.
#[derive(Debug)]
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Slots {
    fn new(n: usize) -> Self {
        Slots {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().expect("slot lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("slot lock");
        }
        *free -= 1;
        SlotGuard { slots: self }
    }
}

struct SlotGuard<'a> {
    slots: &'a Slots,
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.slots.free.lock().expect("slot lock") += 1;
        self.slots.cv.notify_one();
    }
}

/// Runs programs with a real interpreter, one fresh temporary directory per run.
#[derive(Debug)]
pub struct SubprocessInterpreter {
    pub program: PathBuf,
    /// Arguments placed before `<snippet> <probes-spec>` when probing.
    pub shim_args: Vec<String>,
    pub keep_workspaces: bool,
    slots: Slots,
}

impl SubprocessInterpreter {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        let jobs = thread::available_parallelism().map_or(1, |n| n.get());
        SubprocessInterpreter {
            program: program.into(),
            shim_args: default_shim_args(),
            keep_workspaces: false,
            slots: Slots::new(jobs),
        }
    }

    /// Interpreter from an explicit flag, else `DSCHECKER_INTERPRETER`, else `python3`.
    pub fn from_env(flag: Option<&Path>) -> Self {
        let program = flag
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(INTERPRETER_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_INTERPRETER));
        Self::new(program)
    }

    pub fn with_max_concurrency(mut self, n: usize) -> Self {
        self.slots = Slots::new(n);
        self
    }

    pub fn with_shim_args(mut self, args: Vec<String>) -> Self {
        self.shim_args = args;
        self
    }

    pub fn keep_workspaces(mut self, keep: bool) -> Self {
        self.keep_workspaces = keep;
        self
    }

    fn prepare(&self, request: &ExecRequest, dir: &Path) -> Result<Command, RuntimeError> {
        let io = |what: &str, e: std::io::Error| RuntimeError::WorkspaceIo(format!("{what}: {e}"));
        for src in &request.data_files {
            let dest = dir.join(file_name(src)?);
            fs::copy(src, &dest).map_err(|e| io(&format!("copy {}", src.display()), e))?;
        }
        let mut cmd = Command::new(&self.program);
        match &request.mode {
            ExecMode::Plain => {
                fs::write(dir.join(SNIPPET_FILE), &request.program).map_err(|e| io("write snippet", e))?;
                cmd.arg(SNIPPET_FILE);
            }
            ExecMode::Probe { probes } => {
                fs::write(dir.join(SNIPPET_FILE), &request.program).map_err(|e| io("write snippet", e))?;
                let spec = super::protocol::ProbeRequest {
                    snippet_path: dir.join(SNIPPET_FILE),
                    probes: probes.clone(),
                    workspace: dir.to_path_buf(),
                };
                let spec = serde_json::to_vec_pretty(&spec).expect("probe request serializes");
                fs::write(dir.join(PROBES_FILE), spec).map_err(|e| io("write probe spec", e))?;
                cmd.args(&self.shim_args).arg(SNIPPET_FILE).arg(PROBES_FILE);
            }
            ExecMode::Checker { .. } => {
                fs::write(dir.join(CHECKER_FILE), &request.program).map_err(|e| io("write checker", e))?;
                cmd.arg(CHECKER_FILE);
            }
        }
        cmd.current_dir(dir)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        // Own process group, so a timeout also takes down anything the
        // snippet spawned (those would otherwise hold the pipes open).
        #[cfg(unix)]
        std::os::unix::process::CommandExt::process_group(&mut cmd, 0);
        Ok(cmd)
    }
}

/// `-m probe_shim`, overridable through `DSCHECKER_PROBE_SHIM` (a path to the shim script).
pub fn default_shim_args() -> Vec<String> {
    match std::env::var(SHIM_ENV) {
        Ok(path) if !path.is_empty() => vec![path],
        _ => vec!["-m".into(), "probe_shim".into()],
    }
}

fn drain<R: Read + Send + 'static>(mut pipe: R) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = pipe.read_to_end(&mut buf);
        buf
    })
}

#[cfg(unix)]
fn kill_group(child: &mut std::process::Child) {
    // The child leads its own group, so its pid is the group id.
    unsafe {
        libc::kill(-(child.id() as libc::pid_t), libc::SIGKILL);
    }
    let _ = child.kill();
}

#[cfg(not(unix))]
fn kill_group(child: &mut std::process::Child) {
    let _ = child.kill();
}

impl Interpreter for SubprocessInterpreter {
    fn execute(&self, request: &ExecRequest) -> Result<RawExecution, RuntimeError> {
        if request.timeout.is_zero() {
            return Err(RuntimeError::InvalidRequest("timeout must be positive".into()));
        }
        let _slot = self.slots.acquire();
        let workspace = tempfile::Builder::new()
            .prefix("dschecker-")
            .tempdir()
            .map_err(|e| RuntimeError::WorkspaceIo(format!("create workspace: {e}")))?;
        let mut cmd = self.prepare(request, workspace.path())?;

        let started = Instant::now();
        let mut child = cmd.spawn().map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                RuntimeError::InterpreterNotFound(self.program.display().to_string())
            } else {
                RuntimeError::WorkspaceIo(format!("spawn {}: {e}", self.program.display()))
            }
        })?;
        let stdin_data = match &request.mode {
            ExecMode::Checker { input } => input.clone(),
            _ => String::new(),
        };
        let stdin = child.stdin.take();
        let feeder = thread::spawn(move || {
            if let Some(mut stdin) = stdin {
                let _ = stdin.write_all(stdin_data.as_bytes());
            }
        });
        let out = drain(child.stdout.take().expect("piped stdout"));
        let err = drain(child.stderr.take().expect("piped stderr"));

        let status = child
            .wait_timeout(request.timeout)
            .map_err(|e| RuntimeError::WorkspaceIo(format!("wait: {e}")))?;
        let (exit_code, timed_out) = match status {
            Some(status) => (status.code(), false),
            None => {
                kill_group(&mut child);
                let _ = child.wait();
                (None, true)
            }
        };
        let duration_ms = started.elapsed().as_millis() as u64;
        let _ = feeder.join();
        let stdout = String::from_utf8_lossy(&out.join().unwrap_or_default()).into_owned();
        let stderr = String::from_utf8_lossy(&err.join().unwrap_or_default()).into_owned();

        if self.keep_workspaces {
            let kept = workspace.keep();
            log::info!("kept workspace {}", kept.display());
        }
        Ok(RawExecution {
            exit_code,
            stdout,
            stderr,
            timed_out,
            duration_ms,
        })
    }
}
