use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::Serialize;

use crate::GlobalArgs;

/// Written as `manifest.toml` into every output directory.
#[derive(Debug, Serialize)]
pub struct RunManifest<C: Serialize> {
    pub subcommand: String,
    pub config_path: String,
    pub seed: Option<u64>,
    pub out_dir: String,
    pub tool_version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub threads: usize,
    pub orientation: String,
    pub centered: bool,
    /// The effective configuration after command-line overrides.
    pub config: C,
}

impl<C: Serialize> RunManifest<C> {
    pub fn new(subcommand: &str, g: &GlobalArgs, seed: Option<u64>, config: C) -> Self {
        RunManifest {
            subcommand: subcommand.into(),
            config_path: g
                .config
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            seed,
            out_dir: g.out.display().to_string(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            threads: scoreplot_core::par::current_num_threads(),
            orientation: g.orientation.to_string(),
            centered: g.centered,
            config,
        }
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        let text = toml::to_string_pretty(self).context("serialising run manifest")?;
        std::fs::write(dir.join("manifest.toml"), text)
            .with_context(|| format!("writing manifest in {}", dir.display()))
    }
}
