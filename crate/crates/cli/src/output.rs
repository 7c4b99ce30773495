//! Plain-text outputs: `#`-headed whitespace tables, `key = value`
//! summaries and the run manifest.

use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{Knobs, RunConfig};
use crate::CliError;

/// Ordered `key = value` lines.
#[derive(Debug, Default, Clone)]
pub struct Summary {
    pub entries: Vec<(String, String)>,
}

impl Summary {
    pub fn add(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn render(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

/// A table with named columns.
#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = format!("# {}\n", self.columns.join(" "));
        for r in &self.rows {
            out.push_str(&r.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Shortest round-trip decimal form, so outputs are byte-stable.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

/// Name of the manifest file in each run directory.
pub const MANIFEST: &str = "manifest.toml";

/// Collects the files of one run and writes them plus the manifest.
pub struct RunOutput<'a> {
    cfg: &'a RunConfig,
    dir: PathBuf,
    files: Vec<String>,
}

impl<'a> RunOutput<'a> {
    pub fn create(cfg: &'a RunConfig) -> Result<Self, CliError> {
        let dir = cfg.run_dir();
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        Ok(Self {
            cfg,
            dir,
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn table(&mut self, name: &str, t: &Table) -> Result<(), CliError> {
        self.write(name, &t.render())
    }

    /// Writes `summary.txt` and echoes it to stdout.
    pub fn summary(&mut self, s: &Summary) -> Result<(), CliError> {
        let text = s.render();
        print!("{text}");
        std::io::stdout().flush().ok();
        self.write("summary.txt", &text)
    }

    /// Writes `manifest.toml`: run metadata plus the resolved knobs, which
    /// `--config` accepts to repeat the run. Call last so the file list is
    /// complete.
    pub fn finish(self, status: &str, resolved: &Knobs) -> Result<(), CliError> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            artifact: &'a str,
            version: &'a str,
            subcommand: &'a str,
            status: &'a str,
            config_file: String,
            output_dir: String,
            files: &'a [String],
            timestamp_unix: u64,
            knobs: &'a Knobs,
        }
        let m = Manifest {
            artifact: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand: self.cfg.subcommand,
            status,
            config_file: self
                .cfg
                .config_file
                .as_ref()
                .map_or("none".into(), |p| p.display().to_string()),
            output_dir: self.dir.display().to_string(),
            files: &self.files,
            timestamp_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            knobs: resolved,
        };
        let text = toml::to_string(&m).map_err(|e| CliError::Config(format!("manifest: {e}")))?;
        let path = self.dir.join(MANIFEST);
        fs::write(&path, text).map_err(|e| io_err(&path, e))
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Config(format!("cannot write {}: {e}", path.display()))
}
