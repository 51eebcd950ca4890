//! Subprocess runner for external plugin commands (refinement networks and
//! lighting estimators). Commands get the working directory as their final
//! argument and must exit 0 within the timeout.

use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PluginError {
    #[error("plugin command not found or failed to spawn: {0}")]
    NotFound(String),
    #[error("plugin timed out after {0:?}")]
    Timeout(Duration),
    #[error("plugin exited with status {0}")]
    Failed(i32),
    #[error("plugin produced bad output: {0}")]
    BadOutput(String),
    #[error("plugin workdir error on {0}: {1}")]
    Workdir(String, String),
}

/// Environment variable overriding plugin timeouts, in seconds.
pub const TIMEOUT_ENV: &str = "VCOMP_PLUGIN_TIMEOUT_SECS";

/// Effective timeout: the env override wins over the configured value.
pub fn effective_timeout(configured: Duration) -> Duration {
    std::env::var(TIMEOUT_ENV)
        .ok()
        .and_then(|v| v.parse::<f64>().ok())
        .map(Duration::from_secs_f64)
        .unwrap_or(configured)
}

/// Run `cmd` (whitespace-split program + args) with `workdir` appended as
/// the final argument, polling until exit or timeout.
pub fn run_command(cmd: &str, workdir: &Path, timeout: Duration) -> Result<(), PluginError> {
    let mut parts = cmd.split_whitespace();
    let program = parts
        .next()
        .ok_or_else(|| PluginError::NotFound("empty command".to_string()))?;
    let mut child = Command::new(program)
        .args(parts)
        .arg(workdir)
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| PluginError::NotFound(format!("{program}: {e}")))?;

    let deadline = Instant::now() + effective_timeout(timeout);
    loop {
        match child.try_wait() {
            Ok(Some(status)) => {
                return if status.success() {
                    Ok(())
                } else {
                    Err(PluginError::Failed(status.code().unwrap_or(-1)))
                };
            }
            Ok(None) => {
                if Instant::now() >= deadline {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(PluginError::Timeout(timeout));
                }
                std::thread::sleep(Duration::from_millis(10));
            }
            Err(e) => return Err(PluginError::NotFound(e.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_program_is_not_found() {
        let dir = tempfile::tempdir().unwrap();
        let err = run_command(
            "definitely-not-a-real-binary-xyz",
            dir.path(),
            Duration::from_secs(1),
        )
        .unwrap_err();
        assert!(matches!(err, PluginError::NotFound(_)));
    }

    #[test]
    fn true_command_succeeds() {
        let dir = tempfile::tempdir().unwrap();
        run_command("true", dir.path(), Duration::from_secs(5)).unwrap();
    }

    #[test]
    fn failing_command_reports_status() {
        let dir = tempfile::tempdir().unwrap();
        let err = run_command("false", dir.path(), Duration::from_secs(5)).unwrap_err();
        assert!(matches!(err, PluginError::Failed(_)));
    }

    #[test]
    fn slow_command_times_out() {
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("slow.sh");
        std::fs::write(&script, "#!/bin/sh\nsleep 5\n").unwrap();
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();
        }
        let started = Instant::now();
        let err = run_command(
            script.to_str().unwrap(),
            dir.path(),
            Duration::from_millis(200),
        )
        .unwrap_err();
        assert!(matches!(err, PluginError::Timeout(_)));
        assert!(started.elapsed() < Duration::from_secs(3));
    }
}
