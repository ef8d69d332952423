//! Run manifests: what was run, on which inputs, producing which bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// The parsed invocation; replaying deserializes this.
    pub args: Value,
    /// Effective configuration after defaults, config files and flags.
    pub config: Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<FileHash>,
    pub artifact_version: String,
    /// Output files relative to the output directory, excluding this
    /// manifest.
    pub outputs: Vec<FileHash>,
    pub status: String,
}

/// What a command reports back for its manifest.
#[derive(Debug, Default)]
pub struct RunInfo {
    pub config: Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<PathBuf>,
    /// Set when the command finished its outputs but rejected the input.
    pub rejected: Option<String>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Every file below `root`, sorted, as paths relative to `root`.
pub fn walk(root: &Path) -> Result<Vec<PathBuf>, CliError> {
    fn go(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
        let mut entries: Vec<PathBuf> = fs::read_dir(dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()?;
        entries.sort();
        for p in entries {
            if p.is_dir() {
                go(root, &p, out)?;
            } else {
                out.push(p.strip_prefix(root).expect("walk stays below root").to_path_buf());
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    go(root, root, &mut out).map_err(|e| CliError::Usage(format!("{}: {e}", root.display())))?;
    Ok(out)
}

fn slash(p: &Path) -> String {
    p.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// Hashes of input files; directories contribute each file below them.
pub fn hash_inputs(inputs: &[PathBuf]) -> Result<Vec<FileHash>, CliError> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            for rel in walk(p)? {
                out.push(FileHash {
                    path: format!("{}/{}", slash(p), slash(&rel)),
                    sha256: sha256_file(&p.join(&rel))?,
                });
            }
        } else {
            out.push(FileHash {
                path: slash(p),
                sha256: sha256_file(p)?,
            });
        }
    }
    Ok(out)
}

pub fn hash_outputs(out_dir: &Path) -> Result<Vec<FileHash>, CliError> {
    walk(out_dir)?
        .into_iter()
        .filter(|rel| rel != Path::new(MANIFEST))
        .map(|rel| {
            Ok(FileHash {
                path: slash(&rel),
                sha256: sha256_file(&out_dir.join(&rel))?,
            })
        })
        .collect()
}

pub fn write(out_dir: &Path, m: &RunManifest) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(m)?;
    text.push('\n');
    fs::write(out_dir.join(MANIFEST), text)?;
    Ok(())
}

pub fn read(path: &Path) -> Result<RunManifest, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}
