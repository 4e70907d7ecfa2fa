//! Subprocess execution for external backends: a global concurrency cap,
//! wall-clock timeouts and stderr capture.

use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::{Condvar, Mutex, OnceLock};
use std::time::Duration;

use wait_timeout::ChildExt;

use crate::error::{Error, Result};

/// Timeout applied to external backends unless configured otherwise.
pub const DEFAULT_TIMEOUT_S: f64 = 300.0;

/// Counting semaphore bounding concurrently running backend processes.
pub struct ProcessCap {
    limit: Mutex<(usize, usize)>,
    cv: Condvar,
}

pub struct ProcessPermit<'a> {
    cap: &'a ProcessCap,
}

impl ProcessCap {
    pub fn new(limit: usize) -> Self {
        Self {
            limit: Mutex::new((limit.max(1), 0)),
            cv: Condvar::new(),
        }
    }

    /// Changes the limit; running processes are unaffected.
    pub fn set_limit(&self, limit: usize) {
        let mut g = self.limit.lock().unwrap_or_else(|e| e.into_inner());
        g.0 = limit.max(1);
        self.cv.notify_all();
    }

    pub fn acquire(&self) -> ProcessPermit<'_> {
        let mut g = self.limit.lock().unwrap_or_else(|e| e.into_inner());
        while g.1 >= g.0 {
            g = self.cv.wait(g).unwrap_or_else(|e| e.into_inner());
        }
        g.1 += 1;
        ProcessPermit { cap: self }
    }
}

impl Drop for ProcessPermit<'_> {
    fn drop(&mut self) {
        let mut g = self.cap.limit.lock().unwrap_or_else(|e| e.into_inner());
        g.1 -= 1;
        self.cap.cv.notify_one();
    }
}

/// The process-wide cap shared by metric, mask and SR backends.
pub fn global_cap() -> &'static ProcessCap {
    static CAP: OnceLock<ProcessCap> = OnceLock::new();
    CAP.get_or_init(|| {
        let n = std::thread::available_parallelism().map_or(4, |n| n.get());
        ProcessCap::new(n)
    })
}

/// Kills the child's whole process group so grandchildren spawned by the
/// shell do not outlive the timeout.
fn kill_tree(child: &mut std::process::Child) {
    #[cfg(unix)]
    // SAFETY: plain syscall on a process group id we created.
    unsafe {
        libc::kill(-(child.id() as libc::pid_t), libc::SIGKILL);
    }
    let _ = child.kill();
}

/// Captured result of a successful (exit 0) invocation.
#[derive(Debug)]
pub struct CommandOutput {
    pub stdout: String,
    pub stderr: String,
}

const STDERR_EXCERPT: usize = 2000;

fn excerpt(s: &str) -> String {
    let s = s.trim();
    if s.len() <= STDERR_EXCERPT {
        return s.to_string();
    }
    let mut end = STDERR_EXCERPT;
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    format!("{}...", &s[..end])
}

/// Runs `cmd` through `sh -c` with `args` appended as positional parameters.
///
/// The command string may contain its own arguments and shell quoting.
/// Nonzero exit maps to [`Error::BackendFailed`], expiry of `timeout` to
/// [`Error::BackendTimeout`] (the child is killed).
pub fn run_backend(cmd: &str, args: &[&Path], timeout: Option<Duration>) -> Result<CommandOutput> {
    let _permit = global_cap().acquire();
    let mut command = Command::new("sh");
    command
        .arg("-c")
        .arg(format!("{cmd} \"$@\""))
        .arg("sh")
        .args(args)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    #[cfg(unix)]
    {
        use std::os::unix::process::CommandExt;
        command.process_group(0);
    }
    let mut child = command.spawn().map_err(|e| Error::BackendFailed {
        code: None,
        stderr: format!("failed to spawn {cmd:?}: {e}"),
    })?;

    // Drain pipes on helper threads so a chatty child cannot block on a full pipe.
    let mut out_pipe = child.stdout.take().expect("piped stdout");
    let mut err_pipe = child.stderr.take().expect("piped stderr");
    let out_thread = std::thread::spawn(move || {
        let mut s = String::new();
        let _ = out_pipe.read_to_string(&mut s);
        s
    });
    let err_thread = std::thread::spawn(move || {
        let mut s = String::new();
        let _ = err_pipe.read_to_string(&mut s);
        s
    });

    let status = match timeout {
        Some(t) => match child.wait_timeout(t)? {
            Some(status) => status,
            None => {
                kill_tree(&mut child);
                let _ = child.wait();
                return Err(Error::BackendTimeout(t.as_secs_f64()));
            }
        },
        None => child.wait()?,
    };
    let stdout = out_thread.join().unwrap_or_default();
    let stderr = err_thread.join().unwrap_or_default();
    if !status.success() {
        return Err(Error::BackendFailed {
            code: status.code(),
            stderr: excerpt(&stderr),
        });
    }
    Ok(CommandOutput { stdout, stderr })
}
