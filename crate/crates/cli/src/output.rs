use std::fs;
use std::path::{Path, PathBuf};

use glpm_core::network::write_network_text;
use glpm_core::Network;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::CliError;

/// Output directory; created on first write so that validation failures
/// leave the filesystem untouched.
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(OutDir { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn write_json(&self, name: &str, value: &serde_json::Value) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("JSON values serialize");
        text.push('\n');
        self.write(name, text)
    }

    pub fn write_csv(&self, name: &str, table: &Table) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let io = |e: csv::Error| CliError::Runtime(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(&path).map_err(io)?;
        w.write_record(&table.header).map_err(io)?;
        for row in &table.rows {
            w.write_record(row).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

/// A header plus string rows, written as RFC 4180 CSV.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Shortest round-tripping decimal; empty for an undefined value.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// `sha256("blob <len>\0" ‖ content)`, as git hashes objects.
pub fn git_style_sha256(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of everything a run's results depend on: the network in canonical
/// text form and the resolved configuration minus where outputs go.
pub fn input_hash(network: &Network, config: &ExperimentConfig) -> String {
    let (edges, covs, mask) = write_network_text(network);
    let mut settings = config.clone();
    settings.out = PathBuf::new();
    settings.fit_dir = None;
    let content = [edges, covs, mask, settings.to_toml()].join("\n");
    git_style_sha256(content.as_bytes())
}
