//! Run directories and their manifests.
//!
//! Each invocation gets a fresh directory under the output root. The
//! manifest goes in first, results after, and the manifest is rewritten at
//! the end with the finish time and status.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::error::CliResult;

pub const OUT_ENV: &str = "QBAYES_OUT";
const DEFAULT_ROOT: &str = "runs";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Effective configuration, defaults included; `--config` accepts it back.
    pub config: Config,
    pub seed: u64,
    pub version: String,
    pub started_at: String,
    pub finished_at: Option<String>,
    /// "running", "ok" or "failed".
    pub status: String,
    /// SHA-256 over the subcommand, the configuration and any input data file.
    pub input_hash: String,
}

/// Hash of everything that determines a run's output.
pub fn input_hash(subcommand: &str, config: &Config) -> CliResult<String> {
    let mut h = Sha256::new();
    h.update(subcommand.as_bytes());
    h.update([0u8]);
    h.update(serde_json::to_vec(config)?);
    if let Some(path) = &config.model.data {
        h.update([0u8]);
        h.update(fs::read(path)?);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Output root: flag, then config, then `$QBAYES_OUT`, then `./runs`.
pub fn output_root(flag: Option<&Path>, config: &Config) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| config.out_dir.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_ROOT))
}

pub struct Run {
    dir: PathBuf,
    manifest: RunManifest,
}

impl Run {
    /// Create a new directory `<root>/<timestamp>-<subcommand>` (with a
    /// numeric suffix on collision) and write the manifest into it.
    pub fn start(root: &Path, subcommand: &str, config: Config, seed: u64) -> CliResult<Self> {
        let input_hash = input_hash(subcommand, &config)?;
        let now = chrono::Utc::now();
        fs::create_dir_all(root)?;
        let stem = format!("{}-{}", now.format("%Y%m%dT%H%M%S%.3fZ"), subcommand.replace(' ', "-"));
        let mut dir = root.join(&stem);
        let mut k = 1;
        loop {
            match fs::create_dir(&dir) {
                Ok(()) => break,
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                    k += 1;
                    dir = root.join(format!("{stem}-{k}"));
                }
                Err(e) => return Err(e.into()),
            }
        }
        let run = Self {
            dir,
            manifest: RunManifest {
                subcommand: subcommand.to_string(),
                config,
                seed,
                version: env!("CARGO_PKG_VERSION").to_string(),
                started_at: now.to_rfc3339(),
                finished_at: None,
                status: "running".into(),
                input_hash,
            },
        };
        run.write_manifest()?;
        Ok(run)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(self.path(name), text)?;
        Ok(())
    }

    /// Write a CSV with the given header and pre-formatted rows.
    pub fn write_csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
        let mut w = csv::Writer::from_path(self.path(name))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn finish(mut self, ok: bool) -> CliResult<PathBuf> {
        self.manifest.finished_at = Some(chrono::Utc::now().to_rfc3339());
        self.manifest.status = if ok { "ok" } else { "failed" }.into();
        self.write_manifest()?;
        Ok(self.dir)
    }

    fn write_manifest(&self) -> CliResult<()> {
        self.write_json("manifest.json", &self.manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_depends_on_inputs_only() {
        let mut a = Config::default();
        a.seed = Some(3);
        let h1 = input_hash("sample", &a).unwrap();
        assert_eq!(h1, input_hash("sample", &a.clone()).unwrap());
        assert_eq!(h1.len(), 64);
        assert_ne!(h1, input_hash("estimate", &a).unwrap());
        a.seed = Some(4);
        assert_ne!(h1, input_hash("sample", &a).unwrap());
    }

    #[test]
    fn runs_never_share_a_directory() {
        let root = tempfile::tempdir().unwrap();
        let r1 = Run::start(root.path(), "gen data", Config::default(), 1).unwrap();
        let r2 = Run::start(root.path(), "gen data", Config::default(), 1).unwrap();
        assert_ne!(r1.path("manifest.json"), r2.path("manifest.json"));
        let text = fs::read_to_string(r1.path("manifest.json")).unwrap();
        let m: RunManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(m.status, "running");
        let dir = r1.finish(true).unwrap();
        let m: RunManifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(m.status, "ok");
        assert!(m.finished_at.is_some());
    }
}
