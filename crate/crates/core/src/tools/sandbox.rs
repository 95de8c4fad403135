use std::io::Read;
use std::os::unix::process::CommandExt;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use super::{fmt_secs, render_observation, truncate_observation, ToolError, ToolHandler, ToolOutput};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecResult {
    pub stdout: String,
    pub stderr: String,
    pub exit_status: i32,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SandboxConfig {
    /// Interpreter command; `{file}` is replaced by the program path.
    pub command: String,
    pub file_name: String,
    #[serde(rename = "timeout_secs", with = "secs")]
    pub timeout: Duration,
    /// Per-stream cap on captured output, in characters.
    pub output_cap: usize,
    /// Run under `unshare --net --map-root-user` so the program has no
    /// network interfaces.
    pub isolate_network: bool,
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

impl Default for SandboxConfig {
    fn default() -> Self {
        Self {
            command: "python3 {file}".into(),
            file_name: "main.py".into(),
            timeout: Duration::from_secs(10),
            output_cap: 8000,
            isolate_network: false,
        }
    }
}

/// Runs programs as subprocesses in throwaway directories.
#[derive(Debug, Clone, Default)]
pub struct Sandbox {
    config: SandboxConfig,
}

fn drain<R: Read + Send + 'static>(mut r: R, cap: usize) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut kept = Vec::new();
        let mut buf = [0u8; 8192];
        // Keep reading past the cap so the child never blocks on a full pipe.
        while let Ok(n) = r.read(&mut buf) {
            if n == 0 {
                break;
            }
            if kept.len() < cap.saturating_mul(4) {
                kept.extend_from_slice(&buf[..n]);
            }
        }
        truncate_observation(&String::from_utf8_lossy(&kept), cap)
    })
}

impl Sandbox {
    pub fn new(config: SandboxConfig) -> Self {
        Self { config }
    }

    pub fn config(&self) -> &SandboxConfig {
        &self.config
    }

    pub fn execute_code(&self, program: &str) -> Result<ExecResult, ToolError> {
        let sandbox_err = |e: std::io::Error| ToolError::Sandbox(e.to_string());
        let workspace = tempfile::tempdir().map_err(sandbox_err)?;
        let file = workspace.path().join(&self.config.file_name);
        std::fs::write(&file, program).map_err(sandbox_err)?;

        let mut argv: Vec<String> = Vec::new();
        if self.config.isolate_network {
            argv.extend(["unshare", "--net", "--map-root-user"].map(String::from));
        }
        argv.extend(
            self.config
                .command
                .split_whitespace()
                .map(|a| a.replace("{file}", &file.to_string_lossy())),
        );
        let (prog, args) = argv
            .split_first()
            .ok_or_else(|| ToolError::Sandbox("empty sandbox command".into()))?;

        let start = Instant::now();
        let mut child = Command::new(prog)
            .args(args)
            .current_dir(workspace.path())
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .process_group(0)
            .spawn()
            .map_err(|e| ToolError::Sandbox(format!("cannot start {prog:?}: {e}")))?;
        let out = drain(child.stdout.take().expect("piped stdout"), self.config.output_cap);
        let err = drain(child.stderr.take().expect("piped stderr"), self.config.output_cap);

        let status = match child.wait_timeout(self.config.timeout).map_err(sandbox_err)? {
            Some(status) => status,
            None => {
                // Kill the whole group so grandchildren release the pipes.
                unsafe {
                    libc::kill(-(child.id() as i32), libc::SIGKILL);
                }
                let _ = child.wait();
                let _ = out.join();
                let _ = err.join();
                return Err(ToolError::Timeout(self.config.timeout));
            }
        };
        let wall_time = start.elapsed();
        let stdout = out.join().unwrap_or_default();
        let stderr = err.join().unwrap_or_default();
        let exit_status = status.code().unwrap_or(-1);
        if exit_status != 0 {
            let tail: Vec<char> = stderr.chars().collect();
            let from = tail.len().saturating_sub(2000);
            return Err(ToolError::NonzeroExit {
                status: exit_status,
                stderr_tail: tail[from..].iter().collect(),
            });
        }
        Ok(ExecResult {
            stdout,
            stderr,
            exit_status,
            wall_time,
        })
    }
}

/// Strips a surrounding Markdown code fence or quotes from agent input.
fn program_text(input: &str) -> &str {
    let t = input.trim();
    if let Some(rest) = t.strip_prefix("```") {
        let body = rest.split_once('\n').map_or("", |(_, b)| b);
        return body.trim_end().strip_suffix("```").unwrap_or(body).trim_end();
    }
    if t.len() >= 2 && t.starts_with('"') && t.ends_with('"') && !t[1..t.len() - 1].contains('"') {
        return &t[1..t.len() - 1];
    }
    t
}

/// The code-execution tool.
pub struct CodeTool {
    sandbox: Sandbox,
    budget: usize,
}

impl CodeTool {
    pub fn new(sandbox: Sandbox, budget: usize) -> Self {
        Self { sandbox, budget }
    }
}

impl ToolHandler for CodeTool {
    fn invoke(&self, input: &str) -> ToolOutput {
        let text = match self.sandbox.execute_code(program_text(input)) {
            Ok(r) => render_observation(&[r], self.budget),
            Err(ToolError::Timeout(d)) => format!("execution timed out after {}", fmt_secs(d)),
            Err(e) => truncate_observation(&e.to_string(), self.budget),
        };
        ToolOutput::text(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sandbox(timeout: Duration) -> Sandbox {
        Sandbox::new(SandboxConfig {
            timeout,
            ..SandboxConfig::default()
        })
    }

    #[test]
    fn prints_42() {
        let r = sandbox(Duration::from_secs(10)).execute_code("print(42)").unwrap();
        assert_eq!(r.stdout, "42\n");
        assert_eq!(r.exit_status, 0);
    }

    #[test]
    fn infinite_loop_times_out() {
        let start = Instant::now();
        let err = sandbox(Duration::from_secs(1)).execute_code("while True:\n    pass\n").unwrap_err();
        assert_eq!(err, ToolError::Timeout(Duration::from_secs(1)));
        assert!(start.elapsed() < Duration::from_secs(2));
        let tool = CodeTool::new(sandbox(Duration::from_secs(1)), 4000);
        assert_eq!(tool.invoke("while True: pass").observation, "execution timed out after 1s");
    }

    #[test]
    fn grandchildren_are_killed() {
        let sb = Sandbox::new(SandboxConfig {
            command: "sh {file}".into(),
            file_name: "main.sh".into(),
            timeout: Duration::from_millis(500),
            ..SandboxConfig::default()
        });
        let start = Instant::now();
        let err = sb.execute_code("sleep 30 &\nsleep 30\n").unwrap_err();
        assert!(matches!(err, ToolError::Timeout(_)));
        assert!(start.elapsed() < Duration::from_millis(1500));
    }

    #[test]
    fn failing_program_reports_stderr_tail() {
        let err = sandbox(Duration::from_secs(10))
            .execute_code("raise ValueError('bad input 17')")
            .unwrap_err();
        match &err {
            ToolError::NonzeroExit { status, stderr_tail } => {
                assert_eq!(*status, 1);
                assert!(stderr_tail.contains("ValueError: bad input 17"));
            }
            other => panic!("{other:?}"),
        }
        let tool = CodeTool::new(sandbox(Duration::from_secs(10)), 4000);
        assert!(tool.invoke("raise ValueError('bad input 17')").observation.contains("bad input 17"));
    }

    #[test]
    fn output_is_capped() {
        let sb = Sandbox::new(SandboxConfig {
            output_cap: 100,
            ..SandboxConfig::default()
        });
        let r = sb.execute_code("print('x' * 100000)").unwrap();
        assert!(r.stdout.chars().count() <= 100);
        assert!(r.stdout.ends_with("[truncated]"));
    }

    #[test]
    fn code_fences_are_stripped() {
        assert_eq!(program_text("```python\nprint(1)\n```"), "print(1)");
        assert_eq!(program_text("\"print(1)\""), "print(1)");
        assert_eq!(program_text("print(\"a\")"), "print(\"a\")");
    }
}
