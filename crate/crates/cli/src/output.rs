//! CSV and JSON artifacts, each stamped with the version and resolved config.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct Artifacts {
    dir: PathBuf,
    config: Value,
    written: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    version: &'static str,
    config: &'a Value,
    result: &'a T,
}

/// Shortest round-trip form; exponent notation outside [1e-5, 1e16).
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) || !a.is_finite() {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

/// Blank for `None`.
pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

impl Artifacts {
    pub fn new(dir: &Path, config: &impl Serialize) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        let config = serde_json::to_value(config).map_err(std::io::Error::other)?;
        Ok(Artifacts { dir: dir.to_path_buf(), config, written: Vec::new() })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn json<T: Serialize>(&mut self, name: &str, result: &T) -> std::io::Result<()> {
        let path = self.dir.join(name);
        let mut out = BufWriter::new(File::create(&path)?);
        let env = Envelope { version: VERSION, config: &self.config, result };
        serde_json::to_writer_pretty(&mut out, &env).map_err(std::io::Error::other)?;
        writeln!(out)?;
        out.flush()?;
        self.written.push(path);
        Ok(())
    }

    /// Two `#` comment lines (version, compact config JSON), the header,
    /// then one line per row.
    pub fn csv<I>(&mut self, name: &str, columns: &[&str], rows: I) -> std::io::Result<()>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let path = self.dir.join(name);
        let mut out = BufWriter::new(File::create(&path)?);
        writeln!(out, "# degbeam {VERSION}")?;
        writeln!(out, "# config {}", self.config)?;
        writeln!(out, "{}", columns.join(","))?;
        for row in rows {
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()?;
        self.written.push(path);
        Ok(())
    }
}
