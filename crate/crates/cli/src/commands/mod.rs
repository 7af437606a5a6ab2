pub mod eval;
pub mod gen_dataset;
pub mod plots;
pub mod simulate;
pub mod train;

use std::path::PathBuf;

use crate::config::FlatConfig;
use crate::error::{CliError, Result};

/// Output directory from the flag or the `out` key.
fn out_dir(flag: Option<PathBuf>, cfg: &mut FlatConfig) -> Result<PathBuf> {
    cfg.pick_opt("out", flag)?
        .ok_or_else(|| CliError::usage("an output directory is required (--out or `out = ...`)"))
}

fn parse_damping(s: &str) -> Result<rtf_core::Damping> {
    Ok(s.parse()?)
}
