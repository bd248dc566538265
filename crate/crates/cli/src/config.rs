//! TOML run configuration shared by all subcommands.
//!
//! ```toml
//! seed = 7
//!
//! [paths]
//! dataset = "data/train.jsonl"
//! map = "preset:isic"          # or a path to a map JSON file
//! model_dir = "models"
//! verdicts = "out/verdicts.jsonl"
//!
//! [input]
//! sum_validation = "renormalize"
//!
//! [detector]
//! threshold = "precision_floor:0.6"
//! gbdt = { n_trees = 200, max_depth = 3 }
//!
//! [typer]
//! threshold = "fixed:0.5"
//!
//! [bench]
//! base_latency_ms = 6.25
//! budget_ms = 1.0
//! ```
//!
//! Relative paths are resolved against the config file's directory.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use flipguard::synth::SynthConfig;
use flipguard::{presets, StageConfig, SumValidation, SuperclassMap};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides the seeds of both gates and of the generator when set.
    pub seed: Option<u64>,
    pub paths: PathsConfig,
    pub input: InputConfig,
    pub detector: StageConfig,
    pub typer: StageConfig,
    pub synth: SynthConfig,
    pub bench: BenchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            paths: PathsConfig::default(),
            input: InputConfig::default(),
            detector: StageConfig::detector_default(),
            typer: StageConfig::typer_default(),
            synth: SynthConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub dataset: Option<PathBuf>,
    pub map: Option<String>,
    pub model_dir: Option<PathBuf>,
    pub verdicts: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub sum_validation: SumValidation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Per-sample latency of the base classifier, for the overhead ratio.
    pub base_latency_ms: f64,
    pub budget_ms: f64,
    pub repetitions: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            base_latency_ms: 6.25,
            budget_ms: 1.0,
            repetitions: flipguard::policy::MIN_REPETITIONS,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.paths.rebase(base);
        Ok(config)
    }

    /// Pushes the global seed into every seeded section.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.detector.gbdt.seed = seed;
        self.typer.gbdt.seed = seed;
        self.synth.seed = seed;
    }

    pub fn validate(&self) -> CliResult<()> {
        self.detector
            .validate()
            .map_err(|e| CliError::Usage(format!("[detector] {e}")))?;
        self.typer
            .validate()
            .map_err(|e| CliError::Usage(format!("[typer] {e}")))?;
        self.synth
            .validate()
            .map_err(|e| CliError::Usage(format!("[synth] {e}")))?;
        let b = &self.bench;
        if !(b.base_latency_ms > 0.0 && b.base_latency_ms.is_finite()) {
            return Err(CliError::Usage(format!(
                "[bench] base_latency_ms must be positive, got {}",
                b.base_latency_ms
            )));
        }
        if !(b.budget_ms > 0.0 && b.budget_ms.is_finite()) {
            return Err(CliError::Usage(format!(
                "[bench] budget_ms must be positive, got {}",
                b.budget_ms
            )));
        }
        Ok(())
    }
}

impl PathsConfig {
    fn rebase(&mut self, base: &Path) {
        for p in [&mut self.dataset, &mut self.model_dir, &mut self.verdicts]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(map) = &mut self.map {
            if let MapSource::File(p) = MapSource::parse(map) {
                if p.is_relative() {
                    *map = base.join(p).to_string_lossy().into_owned();
                }
            }
        }
    }
}

/// Where the superclass map comes from: `preset:<name>` or a JSON file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MapSource {
    Preset(String),
    File(PathBuf),
}

impl MapSource {
    pub fn parse(s: &str) -> Self {
        match s.strip_prefix("preset:") {
            Some(name) => MapSource::Preset(name.to_string()),
            None => MapSource::File(PathBuf::from(s)),
        }
    }

    pub fn load(&self) -> CliResult<SuperclassMap> {
        match self {
            MapSource::Preset(name) => {
                presets::by_name(name).map_err(|e| CliError::Usage(e.to_string()))
            }
            MapSource::File(path) => {
                let file = open_input(path, "superclass map")?;
                SuperclassMap::from_reader(BufReader::new(file))
                    .map_err(|e| CliError::Usage(format!("superclass map {}: {e}", path.display())))
            }
        }
    }
}

/// Opens an input file; a missing file is a usage error naming the path.
pub fn open_input(path: &Path, what: &str) -> CliResult<File> {
    File::open(path)
        .map_err(|e| CliError::Usage(format!("cannot open {what} {}: {e}", path.display())))
}

/// Flag value if given, else the config value, else a usage error.
pub fn require<T: Clone>(flag: Option<T>, config: &Option<T>, what: &str) -> CliResult<T> {
    flag.or_else(|| config.clone())
        .ok_or_else(|| CliError::Usage(format!("no {what} given (flag or config)")))
}
