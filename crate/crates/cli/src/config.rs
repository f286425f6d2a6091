//! The shared TOML configuration file.
//!
//! Relative paths are resolved against the directory holding the config
//! file, so a config can be moved together with its data.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lexanalogy::annotation::VerdictPolicy;
use lexanalogy::evaluation::EvalConfig;
use lexanalogy::extraction::ExtractionConfig;
use lexanalogy::retrofit::RetrofitConfig;
use lexanalogy::ConceptId;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub paths: Paths,
    pub extraction: ExtractionSection,
    pub evaluation: EvalConfig,
    pub retrofit: RetrofitConfig,
    pub annotation: AnnotationSection,
    pub server: ServerSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub lexicon: Option<PathBuf>,
    pub taxonomy: Option<PathBuf>,
    pub freq: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub benchmark: Option<PathBuf>,
    pub kg: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub session_dir: Option<PathBuf>,
    pub ui_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionSection {
    /// Empty string disables the concrete filter.
    pub concrete_root: String,
    pub min_freq: u64,
    pub expansion_depth_limit: usize,
    pub unordered_function_args: bool,
}

impl Default for ExtractionSection {
    fn default() -> Self {
        let d = ExtractionConfig::default();
        ExtractionSection {
            concrete_root: d.concrete_root.map(|c| c.to_string()).unwrap_or_default(),
            min_freq: d.min_freq,
            expansion_depth_limit: d.expansion_depth_limit,
            unordered_function_args: d.unordered_function_args,
        }
    }
}

impl ExtractionSection {
    pub fn to_config(&self) -> Result<ExtractionConfig> {
        let concrete_root = match self.concrete_root.trim() {
            "" => None,
            s => Some(
                s.parse::<ConceptId>()
                    .with_context(|| format!("extraction.concrete_root {s:?}"))?,
            ),
        };
        Ok(ExtractionConfig {
            concrete_root,
            min_freq: self.min_freq,
            expansion_depth_limit: self.expansion_depth_limit,
            unordered_function_args: self.unordered_function_args,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotationSection {
    pub annotators: Vec<String>,
    pub policy: VerdictPolicy,
    /// Gate `extract` on the verdicts stored in the session directory.
    pub apply_verdicts: bool,
    pub snapshot_every: usize,
}

impl Default for AnnotationSection {
    fn default() -> Self {
        AnnotationSection {
            annotators: Vec::new(),
            policy: VerdictPolicy::default(),
            apply_verdicts: false,
            snapshot_every: lexanalogy::annotation::SessionStore::DEFAULT_SNAPSHOT_EVERY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerSection {
    pub host: String,
    pub port: u16,
}

impl Default for ServerSection {
    fn default() -> Self {
        ServerSection {
            host: "127.0.0.1".to_string(),
            port: 8080,
        }
    }
}

impl Config {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: Config = toml::from_str(text)?;
        cfg.paths.resolve(base);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Config::parse(&text, base).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.paths.output_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn session_dir(&self) -> PathBuf {
        self.paths
            .session_dir
            .clone()
            .unwrap_or_else(|| self.output_dir().join("session"))
    }
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.lexicon,
            &mut self.taxonomy,
            &mut self.freq,
            &mut self.embeddings,
            &mut self.benchmark,
            &mut self.kg,
            &mut self.output_dir,
            &mut self.session_dir,
            &mut self.ui_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

/// Returns the path, or an error naming the missing setting.
pub fn require<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    match path {
        Some(p) => Ok(p),
        None => bail!("no {what} path given (set paths.{what} or pass a flag)"),
    }
}

/// Fails unless every path exists.
pub fn check_exist<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<()> {
    for p in paths {
        if !p.exists() {
            bail!("{}: no such file or directory", p.display());
        }
    }
    Ok(())
}
