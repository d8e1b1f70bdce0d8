//! Output plumbing: atomic file writes and the run manifest.
//!
//! Every subcommand writes its files atomically (temp file + rename in the
//! same directory) and finishes by writing `manifest.json`, which records
//! the resolved configuration, the seed, and SHA-256 digests of every
//! input and output. Nothing time- or host-dependent goes into any output,
//! so rerunning the same command yields byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

/// Writes `contents` to `path` via a temp file in the same directory, so a
/// crash never leaves a half-written output. Creates parent directories.
pub fn atomic_write(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = path.file_name().context("output path has no file name")?;
    let tmp = dir.join(format!("{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path)
        .with_context(|| format!("renaming {} into place", tmp.display()))?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

/// Provenance of one run, written as `manifest.json` in the output
/// directory. A run is reproducible from the manifest alone: it names the
/// command, every flag, the seed, and the digests of all files read and
/// written.
#[derive(Debug, Serialize)]
pub struct Manifest {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    args: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
    #[serde(skip)]
    out_dir: PathBuf,
}

impl Manifest {
    pub fn new(
        command: &'static str,
        args: &impl Serialize,
        seed: Option<u64>,
        out_dir: &Path,
    ) -> Result<Manifest> {
        Ok(Manifest {
            tool: "marsim",
            version: env!("CARGO_PKG_VERSION"),
            command,
            args: serde_json::to_value(args).context("serializing arguments")?,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            out_dir: out_dir.to_path_buf(),
        })
    }

    /// Reads an input file, recording its digest under the path as given.
    pub fn read_input(&mut self, path: &Path) -> Result<String> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))
    }

    /// Atomically writes one output file under the run's output directory
    /// and records its digest under the relative name.
    pub fn write_output(&mut self, name: &str, contents: &str) -> Result<()> {
        atomic_write(&self.out_dir.join(name), contents.as_bytes())?;
        self.outputs.push(FileDigest { path: name.to_string(), sha256: sha256_hex(contents.as_bytes()) });
        Ok(())
    }

    /// Writes `manifest.json` itself. Call last.
    pub fn finish(self) -> Result<()> {
        let mut json = serde_json::to_string_pretty(&self).context("serializing manifest")?;
        json.push('\n');
        atomic_write(&self.out_dir.join("manifest.json"), json.as_bytes())
    }
}
