use std::fs::File;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use zhsnacs::targets::Lexicons;
use zhsnacs::Hierarchy;

pub const DEFAULT_LISTEN: &str = "127.0.0.1:7341";
pub const DEFAULT_ANNOTATOR: &str = "gold";

/// Settings for `serve`. Loaded from a JSON file, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Hierarchy TSV; the built-in inventory when absent.
    #[serde(default)]
    pub hierarchy_path: Option<PathBuf>,
    /// Coverb/localizer lexicon; the built-in one when absent.
    #[serde(default)]
    pub lexicon_path: Option<PathBuf>,
    #[serde(default = "default_listen")]
    pub listen_address: SocketAddr,
    #[serde(default = "default_annotator")]
    pub default_annotator: String,
    /// Directory of `<doc id>.tsv` files served and written back.
    pub data_dir: PathBuf,
}

fn default_listen() -> SocketAddr {
    DEFAULT_LISTEN.parse().unwrap()
}

fn default_annotator() -> String {
    DEFAULT_ANNOTATOR.to_string()
}

impl Config {
    pub fn new(data_dir: impl Into<PathBuf>) -> Config {
        Config {
            hierarchy_path: None,
            lexicon_path: None,
            listen_address: default_listen(),
            default_annotator: default_annotator(),
            data_dir: data_dir.into(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Every configured path must exist before the service starts.
    pub fn check(&self) -> Result<()> {
        for path in [&self.hierarchy_path, &self.lexicon_path].into_iter().flatten() {
            if !path.is_file() {
                bail!("{} does not exist", path.display());
            }
        }
        if !self.data_dir.is_dir() {
            bail!("data directory {} does not exist", self.data_dir.display());
        }
        if self.default_annotator.is_empty() || self.default_annotator == "_" {
            bail!("invalid default annotator '{}'", self.default_annotator);
        }
        Ok(())
    }
}

pub fn load_hierarchy(path: Option<&Path>) -> Result<Hierarchy> {
    match path {
        None => Ok(Hierarchy::builtin()),
        Some(p) => {
            let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            Hierarchy::from_reader(f).with_context(|| format!("loading hierarchy {}", p.display()))
        }
    }
}

pub fn load_lexicons(path: Option<&Path>) -> Result<Lexicons> {
    match path {
        None => Ok(Lexicons::builtin()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading lexicon {}", p.display()))?;
            Lexicons::parse(&text).with_context(|| format!("parsing lexicon {}", p.display()))
        }
    }
}
