//! Artifact writing: provenance stamps and temp-then-rename.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(command: &str, config_hash: String, seed: u64) -> Self {
        Self { tool: "dirquant", version: env!("CARGO_PKG_VERSION"), command: command.into(), config_hash, seed }
    }

    /// Leading comment line for CSV artifacts.
    pub fn csv_line(&self) -> String {
        format!(
            "# {} {} command={} config_hash={} seed={}\n",
            self.tool, self.version, self.command, self.config_hash, self.seed
        )
    }
}

/// Collects artifacts under one directory.
pub struct ArtifactWriter {
    dir: PathBuf,
    provenance: Provenance,
    written: Vec<PathBuf>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path, provenance: Provenance) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), provenance, written: Vec::new() })
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn csv(&mut self, name: &str, body: &str) -> CliResult<()> {
        let text = format!("{}{body}", self.provenance.csv_line());
        self.write(name, text.as_bytes())
    }

    /// Writes `{"provenance": …, …fields of value}`; non-object values go
    /// under `"data"`.
    pub fn json(&mut self, name: &str, value: Value) -> CliResult<()> {
        let mut obj = serde_json::Map::new();
        obj.insert("provenance".into(), json!(self.provenance));
        match value {
            Value::Object(m) => obj.extend(m),
            other => {
                obj.insert("data".into(), other);
            }
        }
        let mut text = serde_json::to_string_pretty(&Value::Object(obj)).expect("json serializes");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        self.written.push(path);
        Ok(())
    }

    pub fn finish(self) -> Vec<PathBuf> {
        self.written
    }
}

/// Write to a sibling temporary file, sync, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(CliError::io(path, e));
    }
    Ok(())
}

/// Strip leading `#` lines from a CSV artifact.
pub fn strip_comments(text: &str) -> String {
    text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect()
}

/// Shortest round-trip decimal form, used in file names and tables.
pub fn fmt_num(v: f64) -> String {
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn failed_write_reports_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing").join("a.txt");
        let err = write_atomic(&path, b"x").unwrap_err();
        assert!(err.to_string().contains("a.txt"));
    }

    #[test]
    fn artifacts_carry_provenance() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ArtifactWriter::new(dir.path(), Provenance::new("fit", "abc".into(), 7)).unwrap();
        w.csv("t.csv", "a\n1\n").unwrap();
        w.json("t.json", json!({"x": 1})).unwrap();
        let csv = fs::read_to_string(dir.path().join("t.csv")).unwrap();
        assert!(csv.starts_with("# dirquant") && csv.contains("config_hash=abc seed=7"));
        assert_eq!(strip_comments(&csv), "a\n1\n");
        let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("t.json")).unwrap()).unwrap();
        assert_eq!(v["provenance"]["seed"], 7);
        assert_eq!(v["x"], 1);
    }

    #[test]
    fn shortest_round_trip() {
        for v in [0.1, 1.0 / 3.0, 1e-300, -2.5e17] {
            assert_eq!(fmt_num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_num(0.2), "0.2");
    }
}
