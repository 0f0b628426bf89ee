//! Experiment configuration: JSON schema, dotted-path overrides, and
//! validation.
//!
//! Configs are JSON; every key can be overridden on the command line with
//! `--set key=value` (dotted paths, values parsed as JSON with a plain-
//! string fallback). Paths inside the config resolve relative to the config
//! file's directory, except `output_dir`, which resolves against the
//! working directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::DataFormat;
use crate::error::{Error, Result};
use crate::infer::{Strategy, TieRule};
use crate::kg::{RoleWeights, ScoreWeights};
use crate::metrics::DEFAULT_ELBOW_EPSILON;
use crate::sustain::{ClockMode, EcoScoreMode, MeterSource, DEFAULT_CARBON_INTENSITY, DEFAULT_POWER_WATTS};
use crate::vsr::DEFAULT_DIMENSION;

/// Which retrieval pipeline a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PipelineKind {
    #[serde(rename = "kgr")]
    Kgr,
    #[serde(rename = "kgr-weighted")]
    KgrWeighted,
    #[serde(rename = "vsr-flat")]
    VsrFlat,
    #[serde(rename = "vsr-ivf")]
    VsrIvf,
}

impl PipelineKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PipelineKind::Kgr => "kgr",
            PipelineKind::KgrWeighted => "kgr-weighted",
            PipelineKind::VsrFlat => "vsr-flat",
            PipelineKind::VsrIvf => "vsr-ivf",
        }
    }

    pub fn is_vector(&self) -> bool {
        matches!(self, PipelineKind::VsrFlat | PipelineKind::VsrIvf)
    }
}

/// Retrieval depth: a fixed K or elbow selection on the recall curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KSetting {
    Elbow,
    Fixed(usize),
}

impl Serialize for KSetting {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            KSetting::Elbow => ser.serialize_str("elbow"),
            KSetting::Fixed(k) => ser.serialize_u64(*k as u64),
        }
    }
}

impl<'de> Deserialize<'de> for KSetting {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(de)?;
        match value {
            serde_json::Value::String(s) if s == "elbow" => Ok(KSetting::Elbow),
            serde_json::Value::Number(n) => n
                .as_u64()
                .filter(|&k| k >= 1)
                .map(|k| KSetting::Fixed(k as usize))
                .ok_or_else(|| serde::de::Error::custom("k must be an integer >= 1")),
            other => Err(serde::de::Error::custom(format!(
                "k must be an integer >= 1 or \"elbow\", got {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    pub requirements: PathBuf,
    #[serde(default = "default_format")]
    pub format: DataFormat,
    pub pairs: PathBuf,
}

fn default_format() -> DataFormat {
    DataFormat::Csv
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DedupConfig {
    pub cross_source: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractionConfig {
    pub stopwords: Option<PathBuf>,
    pub irregular_lemmas: Option<PathBuf>,
}

/// How the single-versus-multi-label recall formulation is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecallModeSetting {
    /// Multi-label when any query has more than one relevant candidate.
    Auto,
    Single,
    Multi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrievalConfig {
    pub pipeline: PipelineKind,
    pub k: KSetting,
    /// Curve depth for elbow selection.
    pub k_max: usize,
    pub elbow_epsilon: f64,
    pub weights: ScoreWeights,
    pub role_weights: RoleWeights,
    pub nlist: Option<usize>,
    pub nprobe: Option<usize>,
    pub recall_mode: RecallModeSetting,
}

impl Default for RetrievalConfig {
    fn default() -> RetrievalConfig {
        RetrievalConfig {
            pipeline: PipelineKind::Kgr,
            k: KSetting::Elbow,
            k_max: 20,
            elbow_epsilon: DEFAULT_ELBOW_EPSILON,
            weights: ScoreWeights::default(),
            role_weights: RoleWeights::default(),
            nlist: None,
            nprobe: None,
            recall_mode: RecallModeSetting::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Hashed,
    Precomputed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingConfig {
    pub provider: ProviderKind,
    pub dimension: usize,
    /// Embeddings file for the precomputed provider.
    pub file: Option<PathBuf>,
}

impl Default for EmbeddingConfig {
    fn default() -> EmbeddingConfig {
        EmbeddingConfig {
            provider: ProviderKind::Hashed,
            dimension: DEFAULT_DIMENSION,
            file: None,
        }
    }
}

/// Inference backend selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BackendConfig {
    /// Deterministic scripted backend.
    Replay { script: PathBuf },
    /// Chat-completion endpoint; credentials come from the environment
    /// only.
    Http { endpoint: String, model: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceConfig {
    pub backend: BackendConfig,
    pub strategy: Strategy,
    /// Shots file; the bundled defaults apply when absent.
    pub shots: Option<PathBuf>,
    /// Number of shots sampled from the file (seeded) when it holds more.
    pub shots_count: usize,
    pub runs: usize,
    pub tie_rule: TieRule,
    pub retry_budget: u32,
    pub max_in_flight: usize,
}

impl Default for InferenceConfig {
    fn default() -> InferenceConfig {
        InferenceConfig {
            backend: BackendConfig::Http {
                endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
                model: "mistral-7b-instruct".into(),
            },
            strategy: Strategy::ZeroShot,
            shots: None,
            shots_count: 3,
            runs: crate::infer::DEFAULT_RUNS,
            tie_rule: TieRule::default(),
            retry_budget: 3,
            max_in_flight: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SustainabilityConfig {
    pub power_watts: f64,
    pub carbon_intensity_g_per_kwh: f64,
    pub meter_source: MeterSource,
    pub clock: ClockMode,
    pub include_warmup: bool,
    pub ecoscore_mode: EcoScoreMode,
}

impl Default for SustainabilityConfig {
    fn default() -> SustainabilityConfig {
        SustainabilityConfig {
            power_watts: DEFAULT_POWER_WATTS,
            carbon_intensity_g_per_kwh: DEFAULT_CARBON_INTENSITY,
            meter_source: MeterSource::Modeled,
            clock: ClockMode::Wall,
            include_warmup: false,
            ecoscore_mode: EcoScoreMode::MeanF1,
        }
    }
}

/// One experiment run, end to end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_run_id")]
    pub run_id: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub output_dir: PathBuf,
    pub datasets: Vec<DatasetConfig>,
    #[serde(default)]
    pub dedup: DedupConfig,
    #[serde(default)]
    pub extraction: ExtractionConfig,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub inference: InferenceConfig,
    #[serde(default)]
    pub sustainability: SustainabilityConfig,
}

fn default_run_id() -> String {
    "run".to_string()
}

fn default_seed() -> u64 {
    42
}

impl ExperimentConfig {
    /// Load a config, apply `--set` overrides, resolve paths, validate.
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut value: serde_json::Value = serde_json::from_str(&raw)
            .map_err(|e| Error::Config(format!("{} is not valid JSON: {e}", path.display())))?;
        for (key, val) in overrides {
            apply_override(&mut value, key, val)?;
        }
        let mut config: ExperimentConfig = serde_json::from_value(value)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        for ds in &mut self.datasets {
            resolve(&mut ds.requirements);
            resolve(&mut ds.pairs);
        }
        if let Some(p) = &mut self.extraction.stopwords {
            resolve(p);
        }
        if let Some(p) = &mut self.extraction.irregular_lemmas {
            resolve(p);
        }
        if let Some(p) = &mut self.embedding.file {
            resolve(p);
        }
        if let Some(p) = &mut self.inference.shots {
            resolve(p);
        }
        if let BackendConfig::Replay { script } = &mut self.inference.backend {
            resolve(script);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.run_id.is_empty() || self.run_id.contains(std::path::is_separator) {
            return Err(Error::Config(format!(
                "run_id must be a plain directory name, got '{}'",
                self.run_id
            )));
        }
        if self.datasets.is_empty() {
            return Err(Error::Config("at least one dataset is required".into()));
        }
        for ds in &self.datasets {
            for (what, p) in [("requirements", &ds.requirements), ("pairs", &ds.pairs)] {
                if !p.exists() {
                    return Err(Error::Config(format!(
                        "dataset '{}': {what} file {} does not exist",
                        ds.name,
                        p.display()
                    )));
                }
            }
        }
        if let KSetting::Fixed(k) = self.retrieval.k {
            if k == 0 {
                return Err(Error::Config("k must be >= 1".into()));
            }
        }
        if self.retrieval.k_max == 0 {
            return Err(Error::Config("k_max must be >= 1".into()));
        }
        self.retrieval.weights.validate()?;
        self.retrieval.role_weights.validate()?;
        if let Some(nlist) = self.retrieval.nlist {
            if nlist == 0 {
                return Err(Error::Config("nlist must be >= 1".into()));
            }
        }
        if let Some(nprobe) = self.retrieval.nprobe {
            if nprobe == 0 {
                return Err(Error::Config("nprobe must be >= 1".into()));
            }
        }
        if self.embedding.dimension == 0 {
            return Err(Error::Config("embedding dimension must be >= 1".into()));
        }
        if self.embedding.provider == ProviderKind::Precomputed && self.embedding.file.is_none() {
            return Err(Error::Config(
                "precomputed embedding provider requires embedding.file".into(),
            ));
        }
        if let Some(file) = &self.embedding.file {
            if !file.exists() {
                return Err(Error::Config(format!(
                    "embeddings file {} does not exist",
                    file.display()
                )));
            }
        }
        if self.inference.runs == 0 || self.inference.runs.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "inference.runs must be odd and >= 1, got {}",
                self.inference.runs
            )));
        }
        if self.inference.retry_budget == 0 {
            return Err(Error::Config("retry_budget must be >= 1".into()));
        }
        if self.inference.max_in_flight == 0 {
            return Err(Error::Config("max_in_flight must be >= 1".into()));
        }
        if let Some(shots) = &self.inference.shots {
            if !shots.exists() {
                return Err(Error::Config(format!(
                    "shots file {} does not exist",
                    shots.display()
                )));
            }
        }
        if let BackendConfig::Replay { script } = &self.inference.backend {
            if !script.exists() {
                return Err(Error::Config(format!(
                    "replay script {} does not exist",
                    script.display()
                )));
            }
        }
        if self.sustainability.power_watts < 0.0 {
            return Err(Error::Config("power_watts must be >= 0".into()));
        }
        if self.sustainability.carbon_intensity_g_per_kwh < 0.0 {
            return Err(Error::Config(
                "carbon_intensity_g_per_kwh must be >= 0".into(),
            ));
        }
        Ok(())
    }

    /// The run directory `<output_dir>/<run_id>`.
    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(&self.run_id)
    }

    /// Model name for section labels and summaries.
    pub fn model_name(&self) -> String {
        match &self.inference.backend {
            BackendConfig::Replay { .. } => "replay".to_string(),
            BackendConfig::Http { model, .. } => model.clone(),
        }
    }
}

/// Apply one `--set key=value` override to the raw JSON document.
fn apply_override(root: &mut serde_json::Value, key: &str, raw_value: &str) -> Result<()> {
    let parsed: serde_json::Value = serde_json::from_str(raw_value)
        .unwrap_or_else(|_| serde_json::Value::String(raw_value.to_string()));
    let mut current = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if !current.is_object() {
            return Err(Error::Config(format!(
                "--set {key}: '{}' is not an object",
                parts[..i].join(".")
            )));
        }
        let map = current.as_object_mut().unwrap();
        if i + 1 == parts.len() {
            map.insert(part.to_string(), parsed);
            return Ok(());
        }
        current = map
            .entry(part.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    Err(Error::Config(format!("--set requires a key, got '{key}'")))
}
