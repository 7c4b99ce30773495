//! Run configuration: command-line flags, an optional TOML file that
//! overrides them, and defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

/// Every numeric knob a subcommand may read. `None` means "not given".
#[derive(Debug, Clone, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Knobs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dx: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicas: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_tail: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratios: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshots: Option<Vec<f64>>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f.clone(); } )*
    };
}

impl Knobs {
    /// Values in `top` replace those in `self`.
    pub fn overlay(mut self, top: &Knobs) -> Knobs {
        overlay!(self, top; mu, beta, n_max, tol, dx, dt, horizon, replicas, epsilon,
                 seed, threads, x0, s, x_max, n_tail, ratios, snapshots);
        self
    }

    /// Read knobs from a TOML file: either a flat table of knobs or a run
    /// manifest, whose `[knobs]` table is used.
    pub fn from_file(path: &Path) -> Result<Knobs, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))
    }

    pub fn from_toml(text: &str) -> Result<Knobs, toml::de::Error> {
        #[derive(Deserialize)]
        struct Manifest {
            knobs: Knobs,
        }
        let table: toml::Table = toml::from_str(text)?;
        if table.contains_key("knobs") {
            toml::from_str::<Manifest>(text).map(|m| m.knobs)
        } else {
            toml::from_str(text)
        }
    }
}

/// Resolved settings for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub subcommand: &'static str,
    pub knobs: Knobs,
    pub output_dir: PathBuf,
    pub config_file: Option<PathBuf>,
}

impl RunConfig {
    pub fn mu(&self) -> Result<f64, CliError> {
        self.knobs
            .mu
            .ok_or_else(|| CliError::Config("--mu is required (flag or config file)".into()))
    }

    pub fn beta(&self) -> f64 {
        self.knobs.beta.unwrap_or(1.0)
    }

    /// Directory for this subcommand's files.
    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(self.subcommand)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_override_flags() {
        let flags = Knobs {
            mu: Some(2.0),
            seed: Some(1),
            ..Knobs::default()
        };
        let file = Knobs::from_toml("seed = 9\nratios = [1.5, 2.0]\n").unwrap();
        let k = flags.overlay(&file);
        assert_eq!(k.mu, Some(2.0));
        assert_eq!(k.seed, Some(9));
        assert_eq!(k.ratios, Some(vec![1.5, 2.0]));
    }

    #[test]
    fn manifest_round_trips() {
        let k = Knobs {
            mu: Some(1.5),
            replicas: Some(10),
            snapshots: Some(vec![1.0, 2.5]),
            ..Knobs::default()
        };
        #[derive(Serialize)]
        struct M<'a> {
            status: &'a str,
            knobs: &'a Knobs,
        }
        let text = toml::to_string(&M { status: "success", knobs: &k }).unwrap();
        assert_eq!(Knobs::from_toml(&text).unwrap(), k);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Knobs::from_toml("mu = 2\nspeed = 3\n").is_err());
    }
}
