//! Atomic output files and run manifests.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use tempfile::NamedTempFile;

/// Writes `path` through a temporary file in the same directory, renamed
/// into place only after `fill` succeeds.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let tmp = NamedTempFile::new_in(dir).with_context(|| format!("writing {}", path.display()))?;
    let mut w = BufWriter::new(tmp);
    fill(&mut w)?;
    let tmp = w
        .into_inner()
        .map_err(|e| e.into_error())
        .with_context(|| format!("writing {}", path.display()))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        // temp files are created owner-only
        fs::set_permissions(tmp.path(), fs::Permissions::from_mode(0o644))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    tmp.as_file().sync_all().ok();
    tmp.persist(path)
        .with_context(|| format!("moving output into place at {}", path.display()))?;
    Ok(())
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic(path, |w| Ok(w.write_all(bytes)?))
}

pub fn write_lines<I>(path: &Path, header: Option<&str>, rows: I) -> Result<()>
where
    I: IntoIterator<Item = String>,
{
    write_atomic(path, |w| {
        if let Some(h) = header {
            writeln!(w, "{h}")?;
        }
        for r in rows {
            writeln!(w, "{r}")?;
        }
        Ok(())
    })
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    write_atomic(path, |w| {
        retarget_core::formats::write_jsonl(w, items)?;
        Ok(())
    })
}

pub fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        return Err(retarget_core::Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        }
        .into());
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct FileRecord {
    pub path: PathBuf,
    pub bytes: u64,
}

#[derive(Debug, Serialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

/// Everything needed to rerun a command: its full flag set, inputs and
/// outputs, plus timings for information.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub code_version: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<FileRecord>,
    pub warnings: Vec<String>,
    pub timings: Vec<Timing>,
}

pub struct ManifestBuilder {
    manifest: RunManifest,
    started: Instant,
    stage: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: &impl Serialize, seeds: Vec<u64>) -> Self {
        let now = Instant::now();
        ManifestBuilder {
            manifest: RunManifest {
                command: command.to_string(),
                code_version: env!("CARGO_PKG_VERSION").to_string(),
                config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
                seeds,
                inputs: Vec::new(),
                outputs: Vec::new(),
                warnings: Vec::new(),
                timings: Vec::new(),
            },
            started: now,
            stage: now,
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.manifest.inputs.push(path.to_path_buf());
    }

    pub fn output(&mut self, path: &Path) {
        let bytes = fs::metadata(path).map(|m| m.len()).unwrap_or(0);
        self.manifest.outputs.push(FileRecord {
            path: path.to_path_buf(),
            bytes,
        });
    }

    pub fn warn(&mut self, message: String) {
        log::warn!("{message}");
        self.manifest.warnings.push(message);
    }

    /// Records the time since the previous stage ended.
    pub fn stage(&mut self, name: &str) {
        let now = Instant::now();
        self.manifest.timings.push(Timing {
            stage: name.to_string(),
            seconds: (now - self.stage).as_secs_f64(),
        });
        self.stage = now;
    }

    pub fn finish(mut self, path: &Path) -> Result<RunManifest> {
        self.manifest.timings.push(Timing {
            stage: "total".into(),
            seconds: self.started.elapsed().as_secs_f64(),
        });
        let text = serde_json::to_string_pretty(&self.manifest)?;
        write_bytes(path, text.as_bytes())?;
        Ok(self.manifest)
    }
}
