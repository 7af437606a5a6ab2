use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, Result};

#[derive(Serialize)]
struct RunInfo<'a> {
    command: &'a str,
    version: &'a str,
    parallel: bool,
    threads: usize,
    seed: Option<u64>,
    config: &'a Value,
    started_unix_s: u64,
    wall_time_s: f64,
}

/// Start of a command, for the `run.json` written at its end.
pub struct Run {
    command: &'static str,
    started: Instant,
    started_unix: u64,
}

impl Run {
    pub fn start(command: &'static str) -> Self {
        Run {
            command,
            started: Instant::now(),
            started_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn write(&self, dir: &Path, seed: Option<u64>, config: &Value) -> Result<()> {
        let info = RunInfo {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            parallel: cfg!(feature = "parallel"),
            threads: rtf_core::exec::current_threads(),
            seed,
            config,
            started_unix_s: self.started_unix,
            wall_time_s: self.started.elapsed().as_secs_f64(),
        };
        let path = dir.join("run.json");
        let text = serde_json::to_string_pretty(&info).expect("serializable");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Creates `dir`, refusing a nonempty one unless `force`.
pub fn fresh_dir(dir: &Path, force: bool) -> Result<()> {
    if !force {
        if let Ok(mut entries) = std::fs::read_dir(dir) {
            if entries.next().is_some() {
                return Err(CliError::usage(format!(
                    "{} already exists and is not empty (use --force to overwrite)",
                    dir.display()
                )));
            }
        }
    }
    ensure_dir(dir)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}
