use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TOOL: &str = "okret";
pub const DEFAULT_SEED: u64 = 13;

/// Provenance attached to every output artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// SHA-256 of the resolved configuration (config file merged with flags).
    pub config_sha256: String,
    pub seed: u64,
}

impl Header {
    pub fn new<C: Serialize>(command: &str, resolved: &C, seed: u64) -> anyhow::Result<Self> {
        let canonical = serde_json::to_vec(resolved).context("serializing resolved config")?;
        Ok(Header {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_sha256: hex::encode(Sha256::digest(&canonical)),
            seed,
        })
    }

    /// One-line JSON form used in `#` comments of run files.
    pub fn comment(&self) -> String {
        serde_json::to_string(self).expect("header serializes")
    }
}

/// `<path>.<suffix>`, keeping the original extension.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

/// Creates the parent directory of an output path if needed.
pub fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
        }
        _ => Ok(()),
    }
}

#[derive(Serialize)]
struct Sidecar<'a, T: Serialize> {
    header: &'a Header,
    #[serde(flatten)]
    extra: &'a T,
}

/// Writes `{"header": …, …extra}` as pretty JSON.
pub fn write_json<T: Serialize>(path: &Path, header: &Header, extra: &T) -> anyhow::Result<()> {
    let mut body = serde_json::to_string_pretty(&Sidecar { header, extra })?;
    body.push('\n');
    ensure_parent(path)?;
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

/// Header for an artifact whose own format has no room for one.
pub fn write_sidecar<T: Serialize>(artifact: &Path, header: &Header, extra: &T) -> anyhow::Result<PathBuf> {
    let path = sibling(artifact, "header.json");
    write_json(&path, header, extra)?;
    Ok(path)
}
