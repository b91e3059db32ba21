//! Run directories: CSV tables with `.dat` plot mirrors, JSON files and the manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Collects the files written into one output directory.
pub struct RunDir {
    root: PathBuf,
    files: Vec<String>,
}

impl RunDir {
    pub fn create(root: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    fn write_file(&mut self, rel: &str, content: &[u8]) -> std::io::Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, content)?;
        if !self.files.iter().any(|f| f == rel) {
            self.files.push(rel.to_string());
        }
        Ok(())
    }

    pub fn write_bytes(&mut self, rel: &str, content: &[u8]) -> std::io::Result<()> {
        self.write_file(rel, content)
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
        text.push('\n');
        self.write_file(rel, text.as_bytes())
    }

    /// Writes `rel` as CSV and a whitespace-separated copy under `plots/`.
    pub fn write_table(&mut self, rel: &str, header: &[&str], rows: &[Vec<f64>]) -> std::io::Result<()> {
        let mut csv = header.join(",");
        csv.push('\n');
        let mut dat = format!("# {}\n", header.join(" "));
        for row in rows {
            let cells: Vec<String> = row.iter().map(|v| format_number(*v)).collect();
            csv.push_str(&cells.join(","));
            csv.push('\n');
            dat.push_str(&cells.join(" "));
            dat.push('\n');
        }
        self.write_file(rel, csv.as_bytes())?;
        let stem = rel.trim_end_matches(".csv").replace('/', "_");
        self.write_file(&format!("plots/{stem}.dat"), dat.as_bytes())
    }
}

/// Shortest round-trip representation; integers print without a fraction.
fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GridInfo {
    pub dimension: usize,
    pub h: f64,
    pub cells: usize,
    pub m: usize,
    pub dims: [usize; 2],
    pub origin: [f64; 2],
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: Value,
    pub config_sha256: String,
    pub seed: u64,
    pub grid: Option<GridInfo>,
    pub wall_clock_seconds: f64,
    pub termination: Value,
    pub files: Vec<String>,
}

impl Manifest {
    /// Writes the manifest last so its file index is complete.
    pub fn write(mut self, dir: &mut RunDir) -> std::io::Result<()> {
        self.files = dir.files().to_vec();
        self.files.push(MANIFEST.to_string());
        let mut text = serde_json::to_string_pretty(&self).map_err(std::io::Error::other)?;
        text.push('\n');
        fs::write(dir.root.join(MANIFEST), text)
    }
}

/// Checks that `dir/manifest.json` was produced by `command` from exactly `config_bytes`.
pub fn check_manifest(dir: &Path, command: &str, config_bytes: &[u8]) -> Result<(), String> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let recorded = value["config_sha256"].as_str().ok_or("manifest has no config hash")?;
    let actual = sha256_hex(config_bytes);
    if recorded != actual {
        return Err(format!("config hash {actual} does not match the manifest ({recorded})"));
    }
    match value["command"].as_str() {
        Some(c) if c == command => Ok(()),
        other => Err(format!("manifest was written by {other:?}, not {command:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn numbers_round_trip() {
        assert_eq!(format_number(3.0), "3");
        assert_eq!(format_number(-0.25), "-0.25");
        let x = 0.1 + 0.2;
        assert_eq!(format_number(x).parse::<f64>().unwrap(), x);
    }
}
