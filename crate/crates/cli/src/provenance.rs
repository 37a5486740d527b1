//! The `run.json` sidecar: tool version, resolved configuration and SHA-256
//! digests of every input and output file. It carries no timestamps, host
//! details or thread counts, so identical runs write identical records.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

#[derive(Debug, Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct RunRecord<'a> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    config: &'a Value,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Files under `path`, or `path` itself when it is a file, in a stable order.
fn expand(path: &Path) -> io::Result<Vec<PathBuf>> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in WalkDir::new(path).sort_by_file_name() {
        let entry = entry.map_err(io::Error::other)?;
        if entry.file_type().is_file() {
            files.push(entry.into_path());
        }
    }
    Ok(files)
}

fn digests(paths: &[PathBuf]) -> io::Result<Vec<FileDigest>> {
    let mut out = Vec::new();
    for p in paths {
        for file in expand(p)? {
            out.push(FileDigest {
                path: file.display().to_string(),
                sha256: sha256_hex(&fs::read(&file)?),
            });
        }
    }
    Ok(out)
}

pub fn write(
    target: &Path,
    subcommand: &str,
    config: &Value,
    inputs: &[PathBuf],
    outputs: &[PathBuf],
) -> io::Result<()> {
    let record = RunRecord {
        tool: "cfsim",
        version: env!("CARGO_PKG_VERSION"),
        subcommand,
        config,
        inputs: digests(inputs)?,
        outputs: digests(outputs)?,
    };
    let mut text = serde_json::to_string_pretty(&record).map_err(io::Error::other)?;
    text.push('\n');
    if let Some(parent) = target.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(target, text)
}
