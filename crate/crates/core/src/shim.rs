//! Client side of the student-language shim: JSON-over-stdio messages and the
//! child-process plumbing (process groups, rlimits, wall-clock kill).

use std::io::{BufRead, BufReader, Read, Write};
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, ExitStatus, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShimRequest {
    RunTests { source: String, test_source: String },
    AstDump { source: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Pass,
    Fail,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTestsResponse {
    pub status: RunStatus,
    #[serde(default)]
    pub tests_passed: u32,
    #[serde(default)]
    pub tests_total: u32,
    #[serde(default)]
    pub stderr_tail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AstStatus {
    Ok,
    ParseError,
    /// Malformed request as reported by the shim.
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AstDumpResponse {
    pub status: AstStatus,
    #[serde(default)]
    pub canonical: Option<String>,
    #[serde(default)]
    pub error: Option<String>,
}

/// How to start the shim: `<runtime> <script>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShimCommand {
    pub runtime: String,
    pub script: PathBuf,
}

impl ShimCommand {
    pub fn new(runtime: impl Into<String>, script: impl Into<PathBuf>) -> Self {
        ShimCommand {
            runtime: runtime.into(),
            script: script.into(),
        }
    }

    pub(crate) fn command(&self, cwd: &Path, memory_cap: Option<u64>) -> Command {
        let script = self
            .script
            .canonicalize()
            .unwrap_or_else(|_| self.script.clone());
        let mut cmd = Command::new(&self.runtime);
        cmd.arg(script)
            .current_dir(cwd)
            .env_clear()
            .env("PATH", std::env::var_os("PATH").unwrap_or_default())
            .env("HOME", cwd)
            .env("PYTHONDONTWRITEBYTECODE", "1")
            .env("PYTHONIOENCODING", "utf-8")
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        // SAFETY: only async-signal-safe libc calls between fork and exec.
        unsafe {
            cmd.pre_exec(move || {
                libc::setpgid(0, 0);
                // Network namespace needs privileges; unprivileged runs keep the host network.
                libc::unshare(libc::CLONE_NEWNET);
                let zero = libc::rlimit {
                    rlim_cur: 0,
                    rlim_max: 0,
                };
                libc::setrlimit(libc::RLIMIT_CORE, &zero);
                if let Some(cap) = memory_cap {
                    let lim = libc::rlimit {
                        rlim_cur: cap as libc::rlim_t,
                        rlim_max: cap as libc::rlim_t,
                    };
                    libc::setrlimit(libc::RLIMIT_AS, &lim);
                }
                Ok(())
            });
        }
        cmd
    }
}

pub(crate) fn kill_group(child: &mut Child) {
    let pid = child.id() as libc::pid_t;
    // SAFETY: plain syscall on a pid we spawned.
    unsafe {
        libc::killpg(pid, libc::SIGKILL);
    }
    let _ = child.kill();
    let _ = child.wait();
}

/// Result of a single-shot shim process.
#[derive(Debug)]
pub(crate) struct OneShot {
    pub first_line: Option<String>,
    pub stderr_tail: String,
    pub status: Option<ExitStatus>,
    pub timed_out: bool,
    pub elapsed: Duration,
}

/// Spawns a fresh shim, sends one request line, and waits up to `timeout`.
pub(crate) fn run_one_shot(
    cmd: &ShimCommand,
    request: &ShimRequest,
    cwd: &Path,
    timeout: Duration,
    memory_cap: Option<u64>,
    output_cap: usize,
) -> Result<OneShot> {
    let start = Instant::now();
    let mut child = cmd
        .command(cwd, memory_cap)
        .spawn()
        .map_err(|e| Error::Environment(format!("cannot start {}: {e}", cmd.runtime)))?;

    let mut line = serde_json::to_string(request).expect("serializable request");
    line.push('\n');
    let mut stdin = child.stdin.take().expect("piped stdin");
    let writer = thread::spawn(move || {
        let _ = stdin.write_all(line.as_bytes());
    });

    let stdout = child.stdout.take().expect("piped stdout");
    let out_reader = thread::spawn(move || read_first_line(stdout, output_cap));
    let stderr = child.stderr.take().expect("piped stderr");
    let err_reader = thread::spawn(move || read_tail(stderr, output_cap));

    let mut timed_out = false;
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break Some(status),
            Ok(None) if start.elapsed() >= timeout => {
                timed_out = true;
                kill_group(&mut child);
                break None;
            }
            Ok(None) => thread::sleep(Duration::from_millis(5)),
            Err(_) => {
                kill_group(&mut child);
                break None;
            }
        }
    };
    if !timed_out {
        // Reap any grandchildren left holding the pipes open.
        // SAFETY: plain syscall on our own process group.
        unsafe {
            libc::killpg(child.id() as libc::pid_t, libc::SIGKILL);
        }
    }
    let elapsed = start.elapsed();
    let _ = writer.join();
    let first_line = out_reader.join().unwrap_or(None);
    let stderr_tail = err_reader.join().unwrap_or_default();
    Ok(OneShot {
        first_line,
        stderr_tail,
        status,
        timed_out,
        elapsed,
    })
}

fn read_first_line(stdout: impl Read, cap: usize) -> Option<String> {
    // A response line may legitimately carry up to `cap` bytes of stderr tail plus framing.
    let limit = (cap + 64 * 1024) as u64;
    let mut reader = BufReader::new(stdout.take(limit));
    let mut buf = Vec::new();
    match reader.read_until(b'\n', &mut buf) {
        Ok(0) | Err(_) => None,
        Ok(_) => {
            // Drain so the child never blocks on a full pipe.
            let mut sink = reader.into_inner().into_inner();
            let _ = std::io::copy(&mut sink, &mut std::io::sink());
            Some(String::from_utf8_lossy(&buf).trim_end().to_string())
        }
    }
}

fn read_tail(stream: impl Read, cap: usize) -> String {
    let mut reader = BufReader::new(stream);
    let mut tail: Vec<u8> = Vec::new();
    let mut chunk = [0u8; 8192];
    loop {
        match reader.read(&mut chunk) {
            Ok(0) | Err(_) => break,
            Ok(n) => {
                tail.extend_from_slice(&chunk[..n]);
                if tail.len() > 2 * cap {
                    tail.drain(..tail.len() - cap);
                }
            }
        }
    }
    truncate_tail(&String::from_utf8_lossy(&tail), cap)
}

/// Keeps at most `cap` trailing bytes, cut on a char boundary.
pub fn truncate_tail(text: &str, cap: usize) -> String {
    if text.len() <= cap {
        return text.to_string();
    }
    let mut start = text.len() - cap;
    while !text.is_char_boundary(start) {
        start += 1;
    }
    text[start..].to_string()
}

/// A long-lived shim process answering one request line per response line.
pub(crate) struct Worker {
    child: Child,
    stdin: ChildStdin,
    lines: mpsc::Receiver<String>,
}

impl Worker {
    pub fn spawn(cmd: &ShimCommand, cwd: &Path) -> Result<Worker> {
        let mut child = cmd
            .command(cwd, None)
            .spawn()
            .map_err(|e| Error::Environment(format!("cannot start {}: {e}", cmd.runtime)))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let stderr = child.stderr.take().expect("piped stderr");
        thread::spawn(move || {
            let _ = std::io::copy(&mut BufReader::new(stderr), &mut std::io::sink());
        });
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Worker {
            child,
            stdin,
            lines: rx,
        })
    }

    pub fn request(&mut self, req: &ShimRequest, timeout: Duration) -> Result<String> {
        let mut line = serde_json::to_string(req).expect("serializable request");
        line.push('\n');
        self.stdin
            .write_all(line.as_bytes())
            .and_then(|_| self.stdin.flush())
            .map_err(|e| Error::Protocol(format!("shim closed its input: {e}")))?;
        match self.lines.recv_timeout(timeout) {
            Ok(line) => Ok(line),
            Err(mpsc::RecvTimeoutError::Timeout) => Err(Error::Protocol(format!(
                "no shim response within {timeout:?}"
            ))),
            Err(mpsc::RecvTimeoutError::Disconnected) => {
                Err(Error::Protocol("shim exited without responding".into()))
            }
        }
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        kill_group(&mut self.child);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_wire_format() {
        let req = ShimRequest::RunTests {
            source: "x = 1".into(),
            test_source: "def run(ns): return []".into(),
        };
        assert_eq!(
            serde_json::to_string(&req).unwrap(),
            r#"{"kind":"run_tests","source":"x = 1","test_source":"def run(ns): return []"}"#
        );
        let req = ShimRequest::AstDump { source: "y".into() };
        assert_eq!(
            serde_json::to_string(&req).unwrap(),
            r#"{"kind":"ast_dump","source":"y"}"#
        );
    }

    #[test]
    fn response_parsing() {
        let r: RunTestsResponse = serde_json::from_str(
            r#"{"status":"fail","tests_passed":3,"tests_total":5,"stderr_tail":"boom"}"#,
        )
        .unwrap();
        assert_eq!(r.status, RunStatus::Fail);
        assert_eq!((r.tests_passed, r.tests_total), (3, 5));
        let a: AstDumpResponse = serde_json::from_str(r#"{"status":"parse_error"}"#).unwrap();
        assert_eq!(a.status, AstStatus::ParseError);
        assert!(a.canonical.is_none());
    }

    #[test]
    fn tail_truncation_respects_char_boundaries() {
        assert_eq!(truncate_tail("abcdef", 3), "def");
        assert_eq!(truncate_tail("ab", 3), "ab");
        let t = truncate_tail("xé", 1);
        assert!(t.len() <= 1);
    }
}
