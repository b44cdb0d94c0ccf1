//! Shared command context: resolved config, output directory, seed, and
//! small output helpers.

use anyhow::{Context as _, Result};
use captalk_core::config::ToolConfig;
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

pub struct Ctx {
    pub config: ToolConfig,
    pub out_dir: PathBuf,
    pub seed: u64,
    warnings: usize,
}

impl Ctx {
    pub fn load(
        config_path: &Path,
        seed_override: Option<u64>,
        out_override: Option<PathBuf>,
    ) -> Result<Self> {
        let mut config = ToolConfig::load(config_path)
            .with_context(|| format!("loading config {}", config_path.display()))?;
        config.resolve_paths(config_path);
        let out_dir = out_override.unwrap_or_else(|| config.paths.out_dir.clone());
        std::fs::create_dir_all(&out_dir)
            .with_context(|| format!("creating output dir {}", out_dir.display()))?;
        let seed = seed_override.unwrap_or(config.seed);
        Ok(Self {
            config,
            out_dir,
            seed,
            warnings: 0,
        })
    }

    /// Warnings go to stderr and never change the exit code.
    pub fn warn(&mut self, message: impl AsRef<str>) {
        self.warnings += 1;
        eprintln!("warning: {}", message.as_ref());
    }

    pub fn finish(&self, command: &str) {
        if self.warnings > 0 {
            eprintln!("{command}: {} warning(s)", self.warnings);
        }
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

/// One JSON object per line, in input order.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut file = std::fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    for record in records {
        serde_json::to_writer(&mut file, record)?;
        file.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text.as_bytes())
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
