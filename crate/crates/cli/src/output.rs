//! Run directory, manifest and CSV helpers.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Map, Value};

/// Output directory of one run; records the files it writes.
pub struct Run {
    dir: PathBuf,
    outputs: Vec<String>,
    summary: Map<String, Value>,
}

impl Run {
    pub fn create(dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), outputs: Vec::new(), summary: Map::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> std::io::Result<()> {
        fs::write(self.dir.join(name), contents)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    /// Register a file or directory written by other code.
    pub fn record(&mut self, name: &str) {
        self.outputs.push(name.to_string());
    }

    pub fn summary(&mut self, key: &str, value: impl Serialize) {
        self.summary.insert(key.to_string(), serde_json::to_value(value).expect("summary value serializes"));
    }

    /// `manifest.json`: config echo, version, residual summary, outputs.
    pub fn finish(mut self, command: &str, config: &impl Serialize) -> std::io::Result<()> {
        self.outputs.sort();
        let manifest = json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": config,
            "summary": self.summary,
            "outputs": self.outputs,
        });
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(self.dir.join("manifest.json"), text + "\n")
    }
}

/// Full-precision CSV field.
pub fn num(x: f64) -> String {
    format!("{x:.17e}")
}

/// CSV table from a header and rows of numbers.
pub fn table(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.into_iter().map(num).collect::<Vec<_>>().join(","));
        s.push('\n');
    }
    s
}
