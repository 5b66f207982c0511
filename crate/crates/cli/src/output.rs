//! Output directory handling and the run manifest.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable that overrides the default output directory.
pub const OUT_DIR_ENV: &str = "ALPHACL_OUT_DIR";
pub const MANIFEST_FILE: &str = "manifest.json";

/// `--out`, else the environment override, else `alphacl-out/<subcommand>`.
pub fn resolve_out_dir(flag: Option<&Path>, subcommand: &str) -> PathBuf {
    match flag {
        Some(p) => p.to_path_buf(),
        None => match std::env::var_os(OUT_DIR_ENV) {
            Some(base) => PathBuf::from(base).join(subcommand),
            None => PathBuf::from("alphacl-out").join(subcommand),
        },
    }
}

/// Tracks the files a run writes, all relative to one directory.
#[derive(Debug)]
pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: PathBuf) -> Result<Self, CliError> {
        std::fs::create_dir_all(&root).map_err(|e| CliError::Io(format!("create {}: {e}", root.display())))?;
        Ok(OutDir { root, written: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        write_atomic(&self.root.join(name), contents.as_bytes())?;
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        self.write(name, &text)
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}

/// Writes to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("write {}: {e}", path.display()));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    {
        let mut f = std::fs::File::create(&tmp).map_err(io)?;
        f.write_all(bytes).map_err(io)?;
        f.sync_all().map_err(io)?;
    }
    std::fs::rename(&tmp, path).map_err(io)
}

pub fn unix_millis() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Every configuration key with its resolved value.
    pub config: std::collections::BTreeMap<String, String>,
    pub seed: u64,
    pub tool_version: String,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    /// `pass`, `fail` or `error`.
    pub status: String,
    pub exit_code: i32,
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad manifest {}: {e}", path.display())))
    }
}
