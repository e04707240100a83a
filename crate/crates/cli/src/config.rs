//! Layered run configuration: built-in defaults, then the `--config` file,
//! then command-line flags.
//!
//! A config file has top-level `seed` and `out` keys and one table per
//! subcommand:
//!
//! ```toml
//! seed = 7
//! out = "runs/pacnet"
//!
//! [train]
//! model = "pacnet"
//! warmup_steps = 32
//! ```
//!
//! Every run writes the fully resolved file as `resolved_config.toml` in its
//! output directory; passing it back with `--config` repeats the run.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::UsageError;

pub const RESOLVED_FILE: &str = "resolved_config.toml";

#[derive(Debug, Default, Deserialize)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    #[serde(flatten)]
    pub sections: toml::Table,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", path.display())).into())
    }
}

/// Overlay the explicitly given flags on the file's section for `command`
/// and fill the rest from `R::default()`.
pub fn resolve<R: DeserializeOwned>(file: &FileConfig, command: &str, flags: &impl Serialize) -> anyhow::Result<R> {
    let mut table = match file.sections.get(command) {
        Some(toml::Value::Table(t)) => t.clone(),
        Some(_) => return Err(UsageError(format!("config: [{command}] must be a table")).into()),
        None => toml::Table::new(),
    };
    let given = toml::Table::try_from(flags).context("serializing flags")?;
    table.extend(given);
    toml::Value::Table(table)
        .try_into()
        .map_err(|e| UsageError(format!("{command} options: {e}")).into())
}

#[derive(Serialize)]
struct Resolved<'a, R: Serialize> {
    command: &'a str,
    seed: u64,
    out: &'a Path,
    #[serde(flatten)]
    section: std::collections::BTreeMap<&'a str, &'a R>,
}

/// Write the resolved configuration of a run into its output directory.
pub fn write_resolved<R: Serialize>(out: &Path, command: &str, seed: u64, section: &R) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let doc = Resolved {
        command,
        seed,
        out,
        section: [(command, section)].into_iter().collect(),
    };
    let path = out.join(RESOLVED_FILE);
    std::fs::write(&path, toml::to_string(&doc)?).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// Absolute form of a path that may not exist yet.
pub fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}
