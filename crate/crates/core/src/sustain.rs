//! Energy and latency metering, carbon conversion, EcoScore, and workload
//! projections.
//!
//! The default meter is *modeled*: a span's energy is the configured device
//! power times its wall-clock duration (`E = P * t / 3.6e6` kWh), which
//! keeps results reproducible on any machine. A hardware-counter source
//! reads the Linux powercap (RAPL) energy counters when available and falls
//! back to the model with a warning when not. A fixed-step clock replaces
//! wall time for fully deterministic runs.
//!
//! At most one metered span is active at a time so energy attribution stays
//! unambiguous. Warm-up spans (index loading and the like) are recorded but
//! excluded from totals unless explicitly included.

use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default carbon intensity in grams CO2e per kWh.
pub const DEFAULT_CARBON_INTENSITY: f64 = 475.0;
/// Default modeled device power in watts.
pub const DEFAULT_POWER_WATTS: f64 = 30.0;

/// Where a reading's energy figure came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeterSource {
    Modeled,
    HardwareCounter,
}

/// Time source for spans. Serializes as the string `"wall"` or as
/// `{"fixed_step_s": <seconds>}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClockMode {
    /// Wall-clock duration (default).
    Wall,
    /// Every span reports exactly this duration; makes runs byte-for-byte
    /// reproducible.
    FixedStep { fixed_step_s: f64 },
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ClockModeRepr {
    Name(String),
    Fixed { fixed_step_s: f64 },
}

impl Serialize for ClockMode {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = match *self {
            ClockMode::Wall => ClockModeRepr::Name("wall".into()),
            ClockMode::FixedStep { fixed_step_s } => ClockModeRepr::Fixed { fixed_step_s },
        };
        repr.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for ClockMode {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        match ClockModeRepr::deserialize(de)? {
            ClockModeRepr::Name(name) if name == "wall" => Ok(ClockMode::Wall),
            ClockModeRepr::Name(name) => Err(serde::de::Error::custom(format!(
                "unknown clock mode '{name}', expected \"wall\" or {{\"fixed_step_s\": <s>}}"
            ))),
            ClockModeRepr::Fixed { fixed_step_s } => Ok(ClockMode::FixedStep { fixed_step_s }),
        }
    }
}

/// One metered span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeterReading {
    pub section: String,
    pub duration_s: f64,
    pub energy_kwh: f64,
    pub source: MeterSource,
    #[serde(default)]
    pub warmup: bool,
}

impl MeterReading {
    /// Modeled reading: `energy_kwh = power_w * duration_s / 3.6e6` exactly.
    pub fn modeled(section: impl Into<String>, duration_s: f64, power_w: f64) -> MeterReading {
        MeterReading {
            section: section.into(),
            duration_s,
            energy_kwh: power_w * duration_s / 3.6e6,
            source: MeterSource::Modeled,
            warmup: false,
        }
    }
}

/// Meter configuration; see the config keys `power_watts`,
/// `carbon_intensity_g_per_kwh`, and `meter_source`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeterConfig {
    pub power_watts: f64,
    pub source: MeterSource,
    pub clock: ClockMode,
}

impl Default for MeterConfig {
    fn default() -> MeterConfig {
        MeterConfig {
            power_watts: DEFAULT_POWER_WATTS,
            source: MeterSource::Modeled,
            clock: ClockMode::Wall,
        }
    }
}

/// Serializes spans one at a time and produces [`MeterReading`]s.
pub struct Meter {
    config: MeterConfig,
    span_lock: Mutex<()>,
    rapl: Option<Vec<PathBuf>>,
    warned_fallback: AtomicBool,
}

impl Meter {
    pub fn new(config: MeterConfig) -> Result<Meter> {
        if !config.power_watts.is_finite() || config.power_watts < 0.0 {
            return Err(Error::Config(format!(
                "power_watts must be >= 0, got {}",
                config.power_watts
            )));
        }
        if let ClockMode::FixedStep { fixed_step_s } = config.clock {
            if !fixed_step_s.is_finite() || fixed_step_s < 0.0 {
                return Err(Error::Config(format!(
                    "fixed_step_s must be >= 0, got {fixed_step_s}"
                )));
            }
        }
        let rapl = if config.source == MeterSource::HardwareCounter {
            rapl_domains()
        } else {
            None
        };
        Ok(Meter {
            config,
            span_lock: Mutex::new(()),
            rapl,
            warned_fallback: AtomicBool::new(false),
        })
    }

    pub fn config(&self) -> &MeterConfig {
        &self.config
    }

    /// Run `work` inside a metered span.
    pub fn section<T>(&self, label: &str, work: impl FnOnce() -> T) -> (T, MeterReading) {
        self.section_inner(label, false, work)
    }

    /// Run `work` inside a span flagged as warm-up; recorded but excluded
    /// from report totals by default.
    pub fn warmup_section<T>(&self, label: &str, work: impl FnOnce() -> T) -> (T, MeterReading) {
        self.section_inner(label, true, work)
    }

    fn section_inner<T>(&self, label: &str, warmup: bool, work: impl FnOnce() -> T) -> (T, MeterReading) {
        let _guard = self.span_lock.lock().expect("meter lock poisoned");
        let counter_before = self.read_rapl_uj();
        let start = Instant::now();
        let value = work();
        let wall = start.elapsed().as_secs_f64();
        let duration_s = match self.config.clock {
            ClockMode::Wall => wall,
            ClockMode::FixedStep { fixed_step_s } => fixed_step_s,
        };
        let mut reading = match (self.config.source, counter_before) {
            (MeterSource::HardwareCounter, Some(before)) => {
                match self.read_rapl_uj() {
                    Some(after) if after >= before => MeterReading {
                        section: label.to_string(),
                        duration_s,
                        energy_kwh: (after - before) as f64 / 3.6e12,
                        source: MeterSource::HardwareCounter,
                        warmup: false,
                    },
                    // Counter wrapped or vanished mid-span.
                    _ => self.modeled_fallback(label, duration_s),
                }
            }
            (MeterSource::HardwareCounter, None) => {
                if !self.warned_fallback.swap(true, Ordering::Relaxed) {
                    eprintln!(
                        "reqdep: hardware energy counters unavailable, falling back to modeled metering"
                    );
                }
                self.modeled_fallback(label, duration_s)
            }
            (MeterSource::Modeled, _) => MeterReading::modeled(label, duration_s, self.config.power_watts),
        };
        reading.warmup = warmup;
        (value, reading)
    }

    fn modeled_fallback(&self, label: &str, duration_s: f64) -> MeterReading {
        MeterReading::modeled(label, duration_s, self.config.power_watts)
    }

    fn read_rapl_uj(&self) -> Option<u64> {
        let domains = self.rapl.as_ref()?;
        let mut total = 0u64;
        for path in domains {
            let raw = fs::read_to_string(path).ok()?;
            total = total.checked_add(raw.trim().parse::<u64>().ok()?)?;
        }
        Some(total)
    }
}

fn rapl_domains() -> Option<Vec<PathBuf>> {
    let base = PathBuf::from("/sys/class/powercap");
    let entries = fs::read_dir(&base).ok()?;
    let mut domains = Vec::new();
    for entry in entries.flatten() {
        let name = entry.file_name();
        let name = name.to_string_lossy();
        // Top-level package domains only; subdomains would double-count.
        if name.starts_with("intel-rapl:") && !name[11..].contains(':') {
            let counter = entry.path().join("energy_uj");
            if fs::read_to_string(&counter)
                .ok()
                .and_then(|raw| raw.trim().parse::<u64>().ok())
                .is_some()
            {
                domains.push(counter);
            }
        }
    }
    if domains.is_empty() {
        None
    } else {
        Some(domains)
    }
}

/// Carbon mass for an energy amount at a grid intensity.
pub fn carbon_of(energy_kwh: f64, intensity_g_per_kwh: f64) -> f64 {
    energy_kwh * intensity_g_per_kwh / 1000.0
}

/// The two EcoScore conventions; see [`ecoscore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EcoScoreMode {
    /// `sum(F1) / sum(carbon)`.
    SumF1,
    /// `mean(F1) / sum(carbon)`; the sum variant equals this times the
    /// number of datasets.
    MeanF1,
}

/// Predictive performance per unit carbon across datasets.
pub fn ecoscore(
    f1_per_dataset: &[f64],
    carbon_per_dataset: &[f64],
    mode: EcoScoreMode,
) -> Result<f64> {
    if f1_per_dataset.is_empty() || f1_per_dataset.len() != carbon_per_dataset.len() {
        return Err(Error::Validation(format!(
            "need equal-length non-empty inputs, got {} F1 values and {} carbon values",
            f1_per_dataset.len(),
            carbon_per_dataset.len()
        )));
    }
    let total_carbon: f64 = carbon_per_dataset.iter().sum();
    if total_carbon <= 0.0 {
        return Err(Error::Validation(
            "total carbon must be positive for EcoScore".into(),
        ));
    }
    let numerator = match mode {
        EcoScoreMode::SumF1 => f1_per_dataset.iter().sum::<f64>(),
        EcoScoreMode::MeanF1 => {
            f1_per_dataset.iter().sum::<f64>() / f1_per_dataset.len() as f64
        }
    };
    Ok(numerator / total_carbon)
}

/// Exhaustive-versus-pruned inference workload arithmetic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadProjection {
    pub n_all: u64,
    pub n_pruned: u64,
    pub e_per_kwh: f64,
    pub e_vanilla_kwh: f64,
    pub e_pruned_kwh: f64,
    /// `1 - n_pruned / n_all`.
    pub reduction: f64,
    pub carbon_vanilla_kg: f64,
    pub carbon_pruned_kg: f64,
}

/// Project total energy and carbon for classifying all `n_all` pairs versus
/// only the `n_pruned` retrieval-shortlisted ones, at `e_per_kwh` per
/// inference.
pub fn project_workload(
    n_all: u64,
    n_pruned: u64,
    e_per_kwh: f64,
    intensity_g_per_kwh: f64,
) -> Result<WorkloadProjection> {
    if n_pruned > n_all {
        return Err(Error::Validation(format!(
            "n_pruned ({n_pruned}) exceeds n_all ({n_all})"
        )));
    }
    if n_all == 0 {
        return Err(Error::Validation("n_all must be >= 1".into()));
    }
    if !e_per_kwh.is_finite() || e_per_kwh < 0.0 {
        return Err(Error::Validation(format!(
            "e_per_kwh must be >= 0, got {e_per_kwh}"
        )));
    }
    let e_vanilla_kwh = n_all as f64 * e_per_kwh;
    let e_pruned_kwh = n_pruned as f64 * e_per_kwh;
    Ok(WorkloadProjection {
        n_all,
        n_pruned,
        e_per_kwh,
        e_vanilla_kwh,
        e_pruned_kwh,
        reduction: 1.0 - n_pruned as f64 / n_all as f64,
        carbon_vanilla_kg: carbon_of(e_vanilla_kwh, intensity_g_per_kwh),
        carbon_pruned_kg: carbon_of(e_pruned_kwh, intensity_g_per_kwh),
    })
}

/// One reading attributed to a dataset and pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub section: String,
    pub dataset: String,
    pub pipeline: String,
    pub duration_s: f64,
    pub energy_kwh: f64,
    pub carbon_kg: f64,
    pub source: MeterSource,
    #[serde(default)]
    pub warmup: bool,
}

impl ReportRow {
    pub fn from_reading(
        dataset: &str,
        pipeline: &str,
        reading: &MeterReading,
        intensity_g_per_kwh: f64,
    ) -> ReportRow {
        ReportRow {
            section: reading.section.clone(),
            dataset: dataset.to_string(),
            pipeline: pipeline.to_string(),
            duration_s: reading.duration_s,
            energy_kwh: reading.energy_kwh,
            carbon_kg: carbon_of(reading.energy_kwh, intensity_g_per_kwh),
            source: reading.source,
            warmup: reading.warmup,
        }
    }

    /// Stage prefix of the section label (`retrieval:kgr:toy` ->
    /// `retrieval`).
    pub fn stage(&self) -> &str {
        self.section.split(':').next().unwrap_or(&self.section)
    }
}

/// Aggregates for one (dataset, pipeline) key over every stage of the
/// run. `retrieval_queries` counts the retrieval-stage readings alone:
/// each retrieval operation is one metered span, so this is the number of
/// queries the carbon sum runs over.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SectionTotals {
    pub energy_kwh: f64,
    pub carbon_kg: f64,
    pub latency_s: f64,
    pub readings: usize,
    #[serde(default)]
    pub retrieval_queries: usize,
}

/// Per-model summary line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub mean_f1: f64,
    pub total_carbon_kg: f64,
    pub ecoscore: Option<f64>,
    pub ecoscore_mode: EcoScoreMode,
}

/// The emitted sustainability document: raw readings, per-(dataset,
/// pipeline) totals, per-model summaries, and the workload projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SustainabilityReport {
    pub carbon_intensity_g_per_kwh: f64,
    #[serde(default)]
    pub include_warmup: bool,
    pub runs: Vec<ReportRow>,
    pub per_dataset: std::collections::BTreeMap<String, SectionTotals>,
    pub per_model: std::collections::BTreeMap<String, ModelSummary>,
    pub projection: Option<WorkloadProjection>,
}

impl SustainabilityReport {
    pub fn new(carbon_intensity_g_per_kwh: f64, include_warmup: bool) -> SustainabilityReport {
        SustainabilityReport {
            carbon_intensity_g_per_kwh,
            include_warmup,
            runs: Vec::new(),
            per_dataset: Default::default(),
            per_model: Default::default(),
            projection: None,
        }
    }

    pub fn add_reading(&mut self, dataset: &str, pipeline: &str, reading: &MeterReading) {
        let row = ReportRow {
            section: reading.section.clone(),
            dataset: dataset.to_string(),
            pipeline: pipeline.to_string(),
            duration_s: reading.duration_s,
            energy_kwh: reading.energy_kwh,
            carbon_kg: carbon_of(reading.energy_kwh, self.carbon_intensity_g_per_kwh),
            source: reading.source,
            warmup: reading.warmup,
        };
        self.runs.push(row);
        self.rebuild_totals();
    }

    /// Drop rows whose stage is in `stages`, then append `rows`; used by
    /// resumable stage commands to replace their own readings.
    pub fn replace_stage_rows(&mut self, stages: &[&str], rows: Vec<ReportRow>) {
        self.runs.retain(|r| !stages.contains(&r.stage()));
        self.runs.extend(rows);
        self.rebuild_totals();
    }

    pub fn rebuild_totals(&mut self) {
        self.per_dataset.clear();
        for row in &self.runs {
            if row.warmup && !self.include_warmup {
                continue;
            }
            let key = format!("{}/{}", row.dataset, row.pipeline);
            let stage_is_retrieval = row.stage() == "retrieval";
            let totals = self.per_dataset.entry(key).or_default();
            totals.energy_kwh += row.energy_kwh;
            totals.carbon_kg += row.carbon_kg;
            totals.latency_s += row.duration_s;
            totals.readings += 1;
            if stage_is_retrieval {
                totals.retrieval_queries += 1;
            }
        }
    }

    /// Total energy over non-warm-up rows of one stage.
    pub fn stage_energy_kwh(&self, dataset: &str, stage: &str) -> f64 {
        self.stage_rows(dataset, stage).map(|r| r.energy_kwh).sum()
    }

    pub fn stage_carbon_kg(&self, dataset: &str, stage: &str) -> f64 {
        self.stage_rows(dataset, stage).map(|r| r.carbon_kg).sum()
    }

    pub fn stage_latency_s(&self, dataset: &str, stage: &str) -> f64 {
        self.stage_rows(dataset, stage).map(|r| r.duration_s).sum()
    }

    pub fn stage_reading_count(&self, dataset: &str, stage: &str) -> usize {
        self.stage_rows(dataset, stage).count()
    }

    fn stage_rows<'a>(
        &'a self,
        dataset: &'a str,
        stage: &'a str,
    ) -> impl Iterator<Item = &'a ReportRow> + 'a {
        self.runs.iter().filter(move |r| {
            r.dataset == dataset && r.stage() == stage && (self.include_warmup || !r.warmup)
        })
    }

    pub fn set_model_summary(
        &mut self,
        model: &str,
        f1_per_dataset: &[f64],
        total_carbon_kg: f64,
        mode: EcoScoreMode,
    ) {
        let sum: f64 = f1_per_dataset.iter().sum();
        let mean_f1 = if f1_per_dataset.is_empty() {
            0.0
        } else {
            sum / f1_per_dataset.len() as f64
        };
        let numerator = match mode {
            EcoScoreMode::SumF1 => sum,
            EcoScoreMode::MeanF1 => mean_f1,
        };
        let score = if total_carbon_kg > 0.0 && !f1_per_dataset.is_empty() {
            Some(numerator / total_carbon_kg)
        } else {
            None
        };
        self.per_model.insert(
            model.to_string(),
            ModelSummary {
                mean_f1,
                total_carbon_kg,
                ecoscore: score,
                ecoscore_mode: mode,
            },
        );
    }

    /// Flat CSV of the raw readings.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("section,dataset,pipeline,duration_s,energy_kwh,carbon_kg,source,warmup\n");
        for r in &self.runs {
            let source = match r.source {
                MeterSource::Modeled => "modeled",
                MeterSource::HardwareCounter => "hardware_counter",
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.section, r.dataset, r.pipeline, r.duration_s, r.energy_kwh, r.carbon_kg, source, r.warmup
            ));
        }
        out
    }
}
