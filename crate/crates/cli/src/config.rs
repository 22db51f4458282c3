//! Declarative run configuration: built-in defaults, overridden by a TOML
//! file, overridden by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::Args;
use featboot_core::bootstrap::{BootstrapConfig, Method};
use featboot_core::Error;
use featboot_rcf::RcfConfig;
use featboot_sim::{LowRankConfig, SimulationConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImagesConfig {
    pub count: usize,
    /// Also write an 8-bit PNG per image.
    pub png: bool,
    pub simulation: SimulationConfig,
}

impl Default for ImagesConfig {
    fn default() -> Self {
        Self { count: 100, png: false, simulation: SimulationConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractConfig {
    /// Fraction of images used to learn the extractor when no split file is
    /// given.
    pub learn_fraction: f64,
    /// Number of extractors to train.
    pub replicates: usize,
    /// Train each extractor on a with-replacement resample of the learning
    /// set. When off, every replicate is an exact retrain.
    pub resample: bool,
    pub save_models: bool,
    pub model: RcfConfig,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self { learn_fraction: 0.5, replicates: 1, resample: true, save_models: false, model: RcfConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmitConfig {
    pub csv: bool,
    pub json: bool,
    pub svg: bool,
}

impl Default for EmitConfig {
    fn default() -> Self {
        Self { csv: true, json: true, svg: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seeds every random component unless a section sets its own.
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub lowrank: LowRankConfig,
    pub images: ImagesConfig,
    pub extract: ExtractConfig,
    pub bootstrap: BootstrapConfig,
    pub emit: EmitConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            out: PathBuf::from("out"),
            lowrank: LowRankConfig::default(),
            images: ImagesConfig::default(),
            extract: ExtractConfig::default(),
            bootstrap: BootstrapConfig::default(),
            emit: EmitConfig::default(),
        }
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Global seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Bootstrap method: parametric, nonparametric or compromise
    #[arg(long)]
    pub method: Option<Method>,
    /// Bootstrap replicates.
    #[arg(long = "B")]
    pub replicates: Option<usize>,
    /// Compromise extractors.
    #[arg(long = "S")]
    pub extractors: Option<usize>,
    /// Projection rank.
    #[arg(long = "K")]
    pub rank: Option<usize>,
    /// Miscoverage level; ellipses have level 1 - alpha
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str, source: &Path) -> anyhow::Result<Self> {
        toml::from_str(text).map_err(|e| anyhow!("invalid config {}: {e}", source.display()))
    }

    /// Defaults, then the config file, then flags.
    pub fn resolve(args: &CommonArgs) -> anyhow::Result<(Self, Option<String>)> {
        let (mut cfg, text) = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                (Self::parse(&text, path)?, Some(text))
            }
            None => (Self::default(), None),
        };
        if args.seed.is_some() {
            cfg.seed = args.seed;
        }
        if let Some(seed) = cfg.seed {
            cfg.lowrank.seed = seed;
            cfg.bootstrap.seed = seed;
        }
        if let Some(m) = args.method {
            cfg.bootstrap.method = m;
        }
        if let Some(b) = args.replicates {
            cfg.bootstrap.replicates = b;
        }
        if let Some(s) = args.extractors {
            cfg.bootstrap.extractors = s;
        }
        if let Some(k) = args.rank {
            cfg.bootstrap.rank = k;
        }
        if let Some(a) = args.alpha {
            cfg.bootstrap.alpha = a;
        }
        if let Some(out) = &args.out {
            cfg.out = out.clone();
        }
        Ok((cfg, text))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

/// Config key behind a validation error's field name. Dotted names refer to
/// a nested table.
fn config_key<'a>(section: &str, name: &'a str) -> (String, &'a str) {
    match name {
        "B" => (section.to_string(), "replicates"),
        "S" => (section.to_string(), "extractors"),
        "K" => (section.to_string(), "rank"),
        other => match other.rsplit_once('.') {
            Some((table, key)) => (format!("{section}.{table}"), key),
            None => (section.to_string(), other),
        },
    }
}

/// Adds the line within `[section]` that sets the offending field, when
/// the config file has one.
pub fn locate(err: Error, section: &str, config_text: Option<&str>) -> anyhow::Error {
    let field = match &err {
        Error::InvalidArgument { name, .. } => Some(config_key(section, name)),
        _ => None,
    };
    let line = field.zip(config_text).and_then(|((table, key), text)| find_key(text, &table, key));
    match line {
        Some(i) => anyhow!("{err} (config line {i})"),
        None => anyhow!(err),
    }
}

/// One-based line of `key = ...` inside `[section]` (`""` for the top level).
fn find_key(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, line) in text.lines().enumerate() {
        let l = line.trim();
        if let Some(header) = l.strip_prefix('[').and_then(|h| h.strip_suffix(']')) {
            current = header.trim().to_string();
        } else if current == section
            && l.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
        {
            return Some(i + 1);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_overrides_defaults_and_flags_override_file() {
        let text = "seed = 5\n[bootstrap]\nreplicates = 40\nalpha = 0.1\n";
        let dir = std::env::temp_dir().join(format!("featboot-config-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.toml");
        std::fs::write(&path, text).unwrap();
        let args = CommonArgs { config: Some(path), replicates: Some(60), ..Default::default() };
        let (cfg, _) = RunConfig::resolve(&args).unwrap();
        assert_eq!(cfg.bootstrap.replicates, 60);
        assert_eq!(cfg.bootstrap.alpha, 0.1);
        assert_eq!(cfg.lowrank.seed, 5);
        assert_eq!(cfg.bootstrap.seed, 5);
        assert_eq!(cfg.bootstrap.rank, 2);
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = RunConfig::parse("seed = 1\n\n[bootstrap]\nreplicatez = 3\n", Path::new("x.toml")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 4") && msg.contains("replicatez"), "{msg}");
    }

    #[test]
    fn validation_error_points_at_line() {
        let text = "[extract]\nreplicates = 4\n[bootstrap]\nalpha = 0.05\nreplicates = 1\n";
        let err = locate(Error::invalid("B", "need B >= 2"), "bootstrap", Some(text));
        assert!(err.to_string().contains("config line 5"), "{err}");
        let err = locate(Error::invalid("count", "need one"), "images", Some(text));
        assert!(!err.to_string().contains("config line"), "{err}");
    }
}
