//! Config-driven experiment runs: ingest, extract, index, retrieve,
//! classify, evaluate, report.
//!
//! Each stage is a standalone command over the run directory
//! `<output_dir>/<run_id>/`, which holds `retrieval.jsonl`,
//! `classifications.jsonl`, `metrics.json`, `sustainability.json`, and
//! `report.md`. `run` executes the stages in sequence through the same
//! code paths, so a pipeline split across invocations produces identical
//! final artifacts. Classification progress journals to
//! `classifications.jsonl` and is resumed on rerun; sustainability readings
//! are replaced per stage, keeping reruns idempotent.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{
    BackendConfig, ExperimentConfig, KSetting, PipelineKind, ProviderKind, RecallModeSetting,
};
use crate::corpus::{deduplicate_cross_source, Dataset, PairLabel};
use crate::error::{Error, Result};
use crate::extract::{EntitySet, Extractor};
use crate::infer::{
    classify_batch, load_shots, BatchOptions, HttpChatClient, ModelClient, PairTask, ReplayClient,
    Shot, Strategy,
};
use crate::kg::{KnowledgeGraph, ScoreWeights};
use crate::metrics::{
    compute_recall_curve, recall_at_k, select_k_elbow, ConfusionMatrix, RecallCurve, RecallMode,
};
use crate::report::{load_run_artifacts, render_markdown, DatasetMetrics, MetricsDoc};
use crate::sustain::{
    project_workload, Meter, MeterConfig, ReportRow, SustainabilityReport,
};
use crate::vsr::{
    embed_corpus, EmbeddingProvider, HashedProvider, IndexKind, PrecomputedProvider, VectorIndex,
};

/// File names inside a run directory.
pub struct RunPaths {
    pub dir: PathBuf,
    pub retrieval: PathBuf,
    pub classifications: PathBuf,
    pub metrics: PathBuf,
    pub sustainability: PathBuf,
    pub report: PathBuf,
}

impl RunPaths {
    pub fn new(config: &ExperimentConfig) -> RunPaths {
        let dir = config.run_dir();
        RunPaths {
            retrieval: dir.join("retrieval.jsonl"),
            classifications: dir.join("classifications.jsonl"),
            metrics: dir.join("metrics.json"),
            sustainability: dir.join("sustainability.json"),
            report: dir.join("report.md"),
            dir,
        }
    }
}

/// One ranked candidate in the unified retrieval record; graph runs carry
/// the score decomposition, vector runs only the cosine score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub id: String,
    pub score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_e: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_t: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weighted_overlap: Option<f64>,
}

/// Ranked retrieval output for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidates {
    pub dataset: String,
    pub query_id: String,
    pub candidates: Vec<RankedCandidate>,
}

/// Lines of `retrieval.jsonl`: one meta record per dataset followed by its
/// query records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RetrievalRecord {
    Meta {
        dataset: String,
        pipeline: String,
        k: usize,
        k_mode: String,
        recall_mode: RecallMode,
        #[serde(skip_serializing_if = "Option::is_none")]
        curve: Option<Vec<(usize, f64)>>,
    },
    Query(RankedCandidates),
}

/// Summary returned by [`run_experiment`].
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub run_dir: PathBuf,
    pub metrics: MetricsDoc,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn to_pretty_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Internal(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Load, validate, and deduplicate every configured dataset.
pub fn load_datasets(config: &ExperimentConfig) -> Result<Vec<Dataset>> {
    let mut datasets = Vec::new();
    for ds_cfg in &config.datasets {
        let mut ds = Dataset::load_requirements(&ds_cfg.requirements, ds_cfg.format, &ds_cfg.name)
            .map_err(|e| e.with_context("ingest"))?;
        ds.load_pairs(&ds_cfg.pairs)
            .map_err(|e| e.with_context("ingest"))?;
        datasets.push(ds.deduplicate());
    }
    if config.dedup.cross_source {
        datasets = deduplicate_cross_source(datasets);
    }
    Ok(datasets)
}

fn build_extractor(config: &ExperimentConfig) -> Result<Extractor> {
    Extractor::from_files(
        config.extraction.stopwords.as_deref(),
        config.extraction.irregular_lemmas.as_deref(),
    )
}

fn build_meter(config: &ExperimentConfig) -> Result<Meter> {
    Meter::new(MeterConfig {
        power_watts: config.sustainability.power_watts,
        source: config.sustainability.meter_source,
        clock: config.sustainability.clock,
    })
}

fn write_sustainability(paths: &RunPaths, report: &SustainabilityReport) -> Result<()> {
    write_atomic(&paths.sustainability, to_pretty_json(report)?.as_bytes())?;
    write_atomic(
        &paths.dir.join("sustainability.csv"),
        report.to_csv().as_bytes(),
    )
}

fn load_or_new_sustainability(
    path: &Path,
    config: &ExperimentConfig,
) -> Result<SustainabilityReport> {
    if path.exists() {
        let raw = fs::read_to_string(path)?;
        serde_json::from_str(&raw).map_err(|e| Error::Integrity(format!(
            "{} is not a valid sustainability report: {e}",
            path.display()
        )))
    } else {
        Ok(SustainabilityReport::new(
            config.sustainability.carbon_intensity_g_per_kwh,
            config.sustainability.include_warmup,
        ))
    }
}

fn resolve_recall_mode(setting: RecallModeSetting, dataset: &Dataset) -> RecallMode {
    match setting {
        RecallModeSetting::Single => RecallMode::SingleConflict,
        RecallModeSetting::Multi => RecallMode::MultiLabel,
        RecallModeSetting::Auto => {
            if dataset.ground_truth.values().any(|g| g.len() > 1) {
                RecallMode::MultiLabel
            } else {
                RecallMode::SingleConflict
            }
        }
    }
}

fn build_provider(config: &ExperimentConfig) -> Result<Box<dyn EmbeddingProvider>> {
    match config.embedding.provider {
        ProviderKind::Hashed => Ok(Box::new(HashedProvider::new(config.embedding.dimension)?)),
        ProviderKind::Precomputed => {
            let file = config.embedding.file.as_ref().ok_or_else(|| {
                Error::Config("precomputed provider requires embedding.file".into())
            })?;
            let provider = PrecomputedProvider::load(file)?;
            if provider.dimension() != config.embedding.dimension {
                return Err(Error::Config(format!(
                    "embeddings file dimension {} does not match configured dimension {}",
                    provider.dimension(),
                    config.embedding.dimension
                )));
            }
            Ok(Box::new(provider))
        }
    }
}

/// Ranked lists for every ground-truth anchor of one dataset, at depth
/// `k_eval`, one metered span per query.
fn rank_queries(
    config: &ExperimentConfig,
    dataset: &Dataset,
    entity_sets: &[EntitySet],
    k_eval: usize,
    meter: &Meter,
    rows: &mut Vec<ReportRow>,
) -> Result<BTreeMap<String, Vec<RankedCandidate>>> {
    let pipeline = config.retrieval.pipeline;
    let section = format!("retrieval:{}:{}", pipeline.as_str(), dataset.source);
    let intensity = config.sustainability.carbon_intensity_g_per_kwh;
    let queries: Vec<&String> = dataset.ground_truth.keys().collect();
    let mut ranked: BTreeMap<String, Vec<RankedCandidate>> = BTreeMap::new();

    match pipeline {
        PipelineKind::Kgr | PipelineKind::KgrWeighted => {
            let (graph, warm) = meter.warmup_section(&format!("index:kg:{}", dataset.source), || {
                KnowledgeGraph::from_dataset(dataset, entity_sets)
            });
            let graph = graph?;
            rows.push(ReportRow::from_reading(
                &dataset.source,
                pipeline.as_str(),
                &warm,
                intensity,
            ));
            let weights: &ScoreWeights = &config.retrieval.weights;
            for q in queries {
                let (result, reading) = meter.section(&section, || match pipeline {
                    PipelineKind::Kgr => graph.retrieve(&dataset.source, q, k_eval, weights),
                    PipelineKind::KgrWeighted => graph.retrieve_weighted(
                        &dataset.source,
                        q,
                        k_eval,
                        weights,
                        &config.retrieval.role_weights,
                    ),
                    _ => unreachable!(),
                });
                rows.push(ReportRow::from_reading(
                    &dataset.source,
                    pipeline.as_str(),
                    &reading,
                    intensity,
                ));
                let candidates = result?
                    .into_iter()
                    .map(|c| RankedCandidate {
                        id: c.candidate_id,
                        score: c.score,
                        s_e: Some(c.s_e),
                        s_t: Some(c.s_t),
                        d: Some(c.d),
                        s_d: Some(c.s_d),
                        weighted_overlap: c.weighted_overlap,
                    })
                    .collect();
                ranked.insert(q.clone(), candidates);
            }
        }
        PipelineKind::VsrFlat | PipelineKind::VsrIvf => {
            let provider = build_provider(config)?;
            let kind = if pipeline == PipelineKind::VsrFlat {
                IndexKind::Flat
            } else {
                IndexKind::Ivf
            };
            let (index, warm) = meter.warmup_section(
                &format!("index:{}:{}", pipeline.as_str(), dataset.source),
                || -> Result<VectorIndex> {
                    let vectors = embed_corpus(provider.as_ref(), &dataset.requirements)?;
                    VectorIndex::build(vectors, kind, config.retrieval.nlist, config.seed)
                },
            );
            let index = index?;
            rows.push(ReportRow::from_reading(
                &dataset.source,
                pipeline.as_str(),
                &warm,
                intensity,
            ));
            for q in queries {
                let requirement = dataset
                    .requirement(q)
                    .ok_or_else(|| Error::Lookup(format!("unknown query '{q}'")))?;
                let (result, reading) = meter.section(&section, || {
                    let query_vec = provider.embed(requirement)?;
                    index.search(&query_vec, k_eval, config.retrieval.nprobe)
                });
                rows.push(ReportRow::from_reading(
                    &dataset.source,
                    pipeline.as_str(),
                    &reading,
                    intensity,
                ));
                let candidates = result?
                    .into_iter()
                    .map(|hit| RankedCandidate {
                        id: hit.id,
                        score: hit.cosine,
                        s_e: None,
                        s_t: None,
                        d: None,
                        s_d: None,
                        weighted_overlap: None,
                    })
                    .collect();
                ranked.insert(q.clone(), candidates);
            }
        }
    }
    Ok(ranked)
}

/// The retrieve stage: rank candidates for every ground-truth anchor, pick
/// K (fixed or elbow), write `retrieval.jsonl`, and replace the ingest /
/// extract / index / retrieval readings in `sustainability.json`.
pub fn cmd_retrieve(config: &ExperimentConfig) -> Result<Vec<RetrievalRecord>> {
    let paths = RunPaths::new(config);
    fs::create_dir_all(&paths.dir)?;
    let meter = build_meter(config)?;
    let intensity = config.sustainability.carbon_intensity_g_per_kwh;
    let mut rows: Vec<ReportRow> = Vec::new();

    let mut datasets = Vec::new();
    for ds_cfg in &config.datasets {
        let (loaded, reading) = meter.section(&format!("ingest:{}", ds_cfg.name), || {
            let mut ds =
                Dataset::load_requirements(&ds_cfg.requirements, ds_cfg.format, &ds_cfg.name)?;
            ds.load_pairs(&ds_cfg.pairs)?;
            Ok::<Dataset, Error>(ds.deduplicate())
        });
        let ds = loaded.map_err(|e| e.with_context("ingest"))?;
        rows.push(ReportRow::from_reading(
            &ds_cfg.name,
            config.retrieval.pipeline.as_str(),
            &reading,
            intensity,
        ));
        datasets.push(ds);
    }
    if config.dedup.cross_source {
        datasets = deduplicate_cross_source(datasets);
    }

    let needs_entities = !config.retrieval.pipeline.is_vector();
    let extractor = build_extractor(config)?;
    let mut records: Vec<RetrievalRecord> = Vec::new();

    for dataset in &datasets {
        let entity_sets: Vec<EntitySet> = if needs_entities {
            let (sets, reading) = meter.section(&format!("extract:{}", dataset.source), || {
                dataset
                    .requirements
                    .iter()
                    .map(|r| extractor.extract(r))
                    .collect::<Vec<_>>()
            });
            rows.push(ReportRow::from_reading(
                &dataset.source,
                config.retrieval.pipeline.as_str(),
                &reading,
                intensity,
            ));
            sets
        } else {
            Vec::new()
        };

        let recall_mode = resolve_recall_mode(config.retrieval.recall_mode, dataset);
        let k_eval = match config.retrieval.k {
            KSetting::Fixed(k) => k,
            KSetting::Elbow => config.retrieval.k_max,
        };
        let ranked = rank_queries(config, dataset, &entity_sets, k_eval, &meter, &mut rows)
            .map_err(|e| e.with_context("retrieve"))?;

        let id_lists: BTreeMap<String, Vec<String>> = ranked
            .iter()
            .map(|(q, cs)| (q.clone(), cs.iter().map(|c| c.id.clone()).collect()))
            .collect();
        let (k, k_mode, curve) = match config.retrieval.k {
            KSetting::Fixed(k) => (k, "fixed", None),
            KSetting::Elbow => {
                let curve: RecallCurve = compute_recall_curve(
                    &id_lists,
                    &dataset.ground_truth,
                    config.retrieval.k_max,
                    recall_mode,
                )
                .map_err(|e| e.with_context("retrieve"))?;
                let k = select_k_elbow(&curve, config.retrieval.elbow_epsilon)?;
                (k, "elbow", Some(curve.points))
            }
        };

        records.push(RetrievalRecord::Meta {
            dataset: dataset.source.clone(),
            pipeline: config.retrieval.pipeline.as_str().to_string(),
            k,
            k_mode: k_mode.to_string(),
            recall_mode,
            curve,
        });
        for (query_id, mut candidates) in ranked {
            candidates.truncate(k);
            records.push(RetrievalRecord::Query(RankedCandidates {
                dataset: dataset.source.clone(),
                query_id,
                candidates,
            }));
        }
    }

    let mut jsonl = String::new();
    for record in &records {
        jsonl.push_str(&serde_json::to_string(record).map_err(|e| Error::Internal(e.to_string()))?);
        jsonl.push('\n');
    }
    write_atomic(&paths.retrieval, jsonl.as_bytes())?;

    let mut sustainability = load_or_new_sustainability(&paths.sustainability, config)?;
    sustainability.replace_stage_rows(&["ingest", "extract", "index", "retrieval"], rows);
    write_sustainability(&paths, &sustainability)?;
    Ok(records)
}

pub fn read_retrieval_records(path: &Path) -> Result<Vec<RetrievalRecord>> {
    if !path.exists() {
        return Err(Error::Validation(format!(
            "{} not found; run the retrieve stage first",
            path.display()
        )));
    }
    let raw = fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(line).map_err(|e| Error::Parse {
            location: format!("{}:line {}", path.display(), i + 1),
            message: e.to_string(),
        })?);
    }
    Ok(records)
}

fn resolve_shots(config: &ExperimentConfig) -> Result<Vec<Shot>> {
    if config.inference.strategy != Strategy::FewShot {
        return Ok(Vec::new());
    }
    let mut shots = match &config.inference.shots {
        Some(path) => load_shots(path)?,
        None => crate::infer::default_shots(),
    };
    let want = config.inference.shots_count.max(1);
    if shots.len() > want {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut picked: Vec<usize> = sample(&mut rng, shots.len(), want).into_iter().collect();
        picked.sort_unstable();
        shots = picked.into_iter().map(|i| shots[i].clone()).collect();
    }
    Ok(shots)
}

fn build_client(config: &ExperimentConfig) -> Result<Box<dyn ModelClient>> {
    match &config.inference.backend {
        BackendConfig::Replay { script } => Ok(Box::new(ReplayClient::load(script)?)),
        BackendConfig::Http { endpoint, model } => Ok(Box::new(HttpChatClient::new(
            endpoint,
            model,
            config.inference.retry_budget,
        )?)),
    }
}

/// Pair tasks for every retrieved candidate, in record order.
fn tasks_from_records(
    records: &[RetrievalRecord],
    datasets: &[Dataset],
) -> Result<Vec<PairTask>> {
    let by_source: BTreeMap<&str, &Dataset> =
        datasets.iter().map(|d| (d.source.as_str(), d)).collect();
    let mut tasks = Vec::new();
    for record in records {
        let RetrievalRecord::Query(ranked) = record else {
            continue;
        };
        let dataset = by_source.get(ranked.dataset.as_str()).ok_or_else(|| {
            Error::Integrity(format!(
                "retrieval output references unknown dataset '{}'",
                ranked.dataset
            ))
        })?;
        let anchor_text = dataset.text_of(&ranked.query_id)?.to_string();
        for candidate in &ranked.candidates {
            tasks.push(PairTask {
                dataset: ranked.dataset.clone(),
                anchor_id: ranked.query_id.clone(),
                candidate_id: candidate.id.clone(),
                anchor_text: anchor_text.clone(),
                candidate_text: dataset.text_of(&candidate.id)?.to_string(),
            });
        }
    }
    Ok(tasks)
}

/// The classify stage: read `retrieval.jsonl`, classify every retrieved
/// pair with majority voting (journaled to `classifications.jsonl`), and
/// replace the inference readings in `sustainability.json`.
pub fn cmd_classify(config: &ExperimentConfig) -> Result<usize> {
    let paths = RunPaths::new(config);
    fs::create_dir_all(&paths.dir)?;
    let records = read_retrieval_records(&paths.retrieval)?;
    let datasets = load_datasets(config)?;
    let tasks = tasks_from_records(&records, &datasets)?;

    let client = build_client(config)?;
    let meter = build_meter(config)?;
    let mut options = BatchOptions::new(
        config.inference.strategy,
        format!(
            "inference:{}:{}",
            config.model_name(),
            config.inference.strategy.as_str()
        ),
    );
    options.shots = resolve_shots(config)?;
    options.runs = config.inference.runs;
    options.tie_rule = config.inference.tie_rule;
    options.journal = Some(paths.classifications.clone());
    options.max_in_flight = config.inference.max_in_flight;

    let batch = classify_batch(client.as_ref(), &tasks, &options, &meter)
        .map_err(|e| e.with_context("classify"))?;

    let intensity = config.sustainability.carbon_intensity_g_per_kwh;
    let rows: Vec<ReportRow> = tasks
        .iter()
        .zip(&batch.readings)
        .map(|(task, reading)| {
            ReportRow::from_reading(
                &task.dataset,
                config.retrieval.pipeline.as_str(),
                reading,
                intensity,
            )
        })
        .collect();
    let mut sustainability = load_or_new_sustainability(&paths.sustainability, config)?;
    sustainability.replace_stage_rows(&["inference"], rows);
    write_sustainability(&paths, &sustainability)?;
    Ok(batch.outcomes.len())
}

fn truth_label(dataset: &Dataset, anchor: &str, candidate: &str) -> PairLabel {
    dataset
        .pairs
        .iter()
        .find(|p| p.anchor_id == anchor && p.candidate_id == candidate)
        .or_else(|| {
            dataset
                .pairs
                .iter()
                .find(|p| p.anchor_id == candidate && p.candidate_id == anchor)
        })
        .map(|p| p.label)
        // Retrieved pairs without a labeled counterpart count as Neutral.
        .unwrap_or(PairLabel::Neutral)
}

/// The evaluate stage: Recall@K from `retrieval.jsonl`, macro P/R/F1 from
/// the classification journal, per-model summary and workload projection
/// into `sustainability.json`, everything into `metrics.json` plus
/// `confusion-<dataset>.csv` and `recall-curve-<dataset>.csv` exports.
pub fn cmd_evaluate(config: &ExperimentConfig) -> Result<MetricsDoc> {
    let paths = RunPaths::new(config);
    let records = read_retrieval_records(&paths.retrieval)?;
    if !paths.classifications.exists() {
        return Err(Error::Validation(format!(
            "{} not found; run the classify stage first",
            paths.classifications.display()
        )));
    }
    let journal = crate::infer::read_journal(&paths.classifications)?;
    let datasets = load_datasets(config)?;
    let by_source: BTreeMap<&str, &Dataset> =
        datasets.iter().map(|d| (d.source.as_str(), d)).collect();

    let classes = vec![PairLabel::Conflict.to_string(), PairLabel::Neutral.to_string()];
    let mut per_dataset: BTreeMap<String, DatasetMetrics> = BTreeMap::new();
    let mut confusion_files: Vec<(String, String)> = Vec::new();
    let mut curve_files: Vec<(String, String)> = Vec::new();

    for record in &records {
        let RetrievalRecord::Meta {
            dataset: name,
            k,
            k_mode,
            recall_mode,
            curve,
            ..
        } = record
        else {
            continue;
        };
        let dataset = by_source.get(name.as_str()).ok_or_else(|| {
            Error::Integrity(format!("retrieval output references unknown dataset '{name}'"))
        })?;
        let id_lists: BTreeMap<String, Vec<String>> = records
            .iter()
            .filter_map(|r| match r {
                RetrievalRecord::Query(ranked) if ranked.dataset == *name => Some((
                    ranked.query_id.clone(),
                    ranked.candidates.iter().map(|c| c.id.clone()).collect(),
                )),
                _ => None,
            })
            .collect();
        let recall = recall_at_k(&id_lists, &dataset.ground_truth, *k, *recall_mode)
            .map_err(|e| e.with_context("evaluate"))?;

        let mut pred = Vec::new();
        let mut truth = Vec::new();
        let mut classified_pairs = 0usize;
        let mut failed_pairs = 0usize;
        for (query, ids) in &id_lists {
            for id in ids {
                let key = crate::infer::journal_key(name, query, id);
                match journal.get(&key) {
                    Some(result) => {
                        classified_pairs += 1;
                        pred.push(result.final_label.to_string());
                        truth.push(truth_label(dataset, query, id).to_string());
                    }
                    None => failed_pairs += 1,
                }
            }
        }
        let (classification, confusion) = if pred.is_empty() {
            (None, None)
        } else {
            let matrix = ConfusionMatrix::from_labels(&pred, &truth, &classes)?;
            (
                Some(crate::metrics::MacroMetrics::from_confusion(&matrix)),
                Some(matrix),
            )
        };
        if let Some(matrix) = &confusion {
            confusion_files.push((name.clone(), matrix.to_csv()));
        }
        if let Some(points) = curve {
            let rc = RecallCurve {
                points: points.clone(),
                mode: *recall_mode,
            };
            curve_files.push((name.clone(), rc.to_csv()));
        }
        per_dataset.insert(
            name.clone(),
            DatasetMetrics {
                k: *k,
                k_mode: k_mode.clone(),
                recall_mode: *recall_mode,
                recall_at_k: recall,
                recall_curve: curve.clone(),
                queries: dataset.ground_truth.len(),
                classified_pairs,
                failed_pairs,
                labeled_pairs: dataset.pairs.len(),
                classification,
            },
        );
    }

    let doc = MetricsDoc {
        run_id: config.run_id.clone(),
        pipeline: config.retrieval.pipeline.as_str().to_string(),
        model: config.model_name(),
        strategy: config.inference.strategy.as_str().to_string(),
        per_dataset,
    };
    write_atomic(&paths.metrics, to_pretty_json(&doc)?.as_bytes())?;
    for (name, csv) in confusion_files {
        write_atomic(&paths.dir.join(format!("confusion-{name}.csv")), csv.as_bytes())?;
    }
    for (name, csv) in curve_files {
        write_atomic(
            &paths.dir.join(format!("recall-curve-{name}.csv")),
            csv.as_bytes(),
        )?;
    }

    // Per-model summary and the exhaustive-versus-pruned projection.
    let mut sustainability = load_or_new_sustainability(&paths.sustainability, config)?;
    let f1s: Vec<f64> = doc
        .per_dataset
        .values()
        .filter_map(|m| m.classification.as_ref().map(|c| c.macro_f1))
        .collect();
    let total_inference_carbon: f64 = doc
        .per_dataset
        .keys()
        .map(|ds| sustainability.stage_carbon_kg(ds, "inference"))
        .sum();
    sustainability.set_model_summary(
        &doc.model,
        &f1s,
        total_inference_carbon,
        config.sustainability.ecoscore_mode,
    );

    let n_all: u64 = doc.per_dataset.values().map(|m| m.labeled_pairs as u64).sum();
    let n_pruned: u64 = doc
        .per_dataset
        .values()
        .map(|m| (m.classified_pairs + m.failed_pairs) as u64)
        .sum();
    let total_inference_energy: f64 = doc
        .per_dataset
        .keys()
        .map(|ds| sustainability.stage_energy_kwh(ds, "inference"))
        .sum();
    sustainability.projection = if n_pruned > 0 && n_pruned <= n_all {
        let e_per = total_inference_energy / n_pruned as f64;
        Some(project_workload(
            n_all,
            n_pruned,
            e_per,
            config.sustainability.carbon_intensity_g_per_kwh,
        )?)
    } else {
        None
    };
    write_sustainability(&paths, &sustainability)?;
    Ok(doc)
}

/// The report stage: render `report.md` over this run plus any comparison
/// runs under the same output directory.
pub fn cmd_report(config: &ExperimentConfig, compare: &[String]) -> Result<String> {
    let paths = RunPaths::new(config);
    let mut artifacts = vec![load_run_artifacts(&paths.dir)?];
    for run_id in compare {
        artifacts.push(load_run_artifacts(&config.output_dir.join(run_id))?);
    }
    let markdown = render_markdown(&artifacts)?;
    write_atomic(&paths.report, markdown.as_bytes())?;
    Ok(markdown)
}

/// All stages in sequence over the shared run directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunSummary> {
    cmd_retrieve(config)?;
    cmd_classify(config)?;
    let metrics = cmd_evaluate(config)?;
    cmd_report(config, &[])?;
    Ok(RunSummary {
        run_dir: config.run_dir(),
        metrics,
    })
}

/// The ingest stage as a standalone command: loads, deduplicates, writes
/// canonical CSVs, and returns the per-dataset statistics.
pub fn cmd_ingest(config: &ExperimentConfig) -> Result<BTreeMap<String, crate::corpus::StatsRecord>> {
    let paths = RunPaths::new(config);
    let dir = paths.dir.join("ingested");
    fs::create_dir_all(&dir)?;
    let datasets = load_datasets(config)?;
    let mut stats = BTreeMap::new();
    for ds in &datasets {
        ds.write_requirements_csv(&dir.join(format!("{}-requirements.csv", ds.source)))?;
        ds.write_pairs_csv(&dir.join(format!("{}-pairs.csv", ds.source)))?;
        stats.insert(ds.source.clone(), ds.stats());
    }
    Ok(stats)
}

/// The extract stage as a standalone command: entity sets per requirement
/// to `entities.jsonl`.
pub fn cmd_extract(config: &ExperimentConfig) -> Result<usize> {
    let paths = RunPaths::new(config);
    fs::create_dir_all(&paths.dir)?;
    let datasets = load_datasets(config)?;
    let extractor = build_extractor(config)?;
    let mut out = String::new();
    let mut count = 0usize;
    for ds in &datasets {
        for req in &ds.requirements {
            let set = extractor.extract(req);
            count += set.entities.len();
            out.push_str(
                &serde_json::to_string(&set).map_err(|e| Error::Internal(e.to_string()))?,
            );
            out.push('\n');
        }
    }
    write_atomic(&paths.dir.join("entities.jsonl"), out.as_bytes())?;
    Ok(count)
}

/// Build and export the knowledge graph over all configured datasets.
pub fn cmd_index_kg(config: &ExperimentConfig) -> Result<PathBuf> {
    let paths = RunPaths::new(config);
    fs::create_dir_all(&paths.dir)?;
    let datasets = load_datasets(config)?;
    let extractor = build_extractor(config)?;
    let mut builder = crate::kg::GraphBuilder::new();
    for ds in &datasets {
        let sets: Vec<EntitySet> = ds.requirements.iter().map(|r| extractor.extract(r)).collect();
        builder.add_dataset(ds, &sets)?;
    }
    let graph = builder.build();
    let path = paths.dir.join("kg.txt");
    write_atomic(&path, graph.export().as_bytes())?;
    Ok(path)
}

/// Build and persist a vector index per dataset.
pub fn cmd_index_vsr(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let paths = RunPaths::new(config);
    fs::create_dir_all(&paths.dir)?;
    let datasets = load_datasets(config)?;
    let provider = build_provider(config)?;
    let kind = if config.retrieval.pipeline == PipelineKind::VsrIvf {
        IndexKind::Ivf
    } else {
        IndexKind::Flat
    };
    let mut written = Vec::new();
    for ds in &datasets {
        let vectors = embed_corpus(provider.as_ref(), &ds.requirements)?;
        let index = VectorIndex::build(vectors, kind, config.retrieval.nlist, config.seed)?;
        let path = paths.dir.join(format!("vsr-{}.txt", ds.source));
        write_atomic(&path, index.save_to_string().as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

/// One grid point of a weight sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub dataset: String,
    pub k: usize,
    pub recall_at_k: f64,
}

/// Grid-sweep the scoring weights over the graph pipeline and report
/// Recall@K per combination and dataset.
pub fn sweep_weights(
    config: &ExperimentConfig,
    alphas: &[f64],
    betas: &[f64],
    gammas: &[f64],
) -> Result<Vec<SweepRow>> {
    if alphas.is_empty() || betas.is_empty() || gammas.is_empty() {
        return Err(Error::Config("sweep requires at least one value per weight".into()));
    }
    let datasets = load_datasets(config)?;
    let extractor = build_extractor(config)?;
    let mut prepared = Vec::new();
    for ds in &datasets {
        let sets: Vec<EntitySet> = ds.requirements.iter().map(|r| extractor.extract(r)).collect();
        let graph = KnowledgeGraph::from_dataset(ds, &sets)?;
        prepared.push((ds, graph));
    }
    let mut out = Vec::new();
    for &alpha in alphas {
        for &beta in betas {
            for &gamma in gammas {
                let weights = ScoreWeights::new(alpha, beta, gamma);
                weights.validate()?;
                for (ds, graph) in &prepared {
                    let recall_mode = resolve_recall_mode(config.retrieval.recall_mode, ds);
                    let k_eval = match config.retrieval.k {
                        KSetting::Fixed(k) => k,
                        KSetting::Elbow => config.retrieval.k_max,
                    };
                    let mut id_lists: BTreeMap<String, Vec<String>> = BTreeMap::new();
                    for q in ds.ground_truth.keys() {
                        let ranked = match config.retrieval.pipeline {
                            PipelineKind::KgrWeighted => graph.retrieve_weighted(
                                &ds.source,
                                q,
                                k_eval,
                                &weights,
                                &config.retrieval.role_weights,
                            )?,
                            _ => graph.retrieve(&ds.source, q, k_eval, &weights)?,
                        };
                        id_lists.insert(
                            q.clone(),
                            ranked.into_iter().map(|c| c.candidate_id).collect(),
                        );
                    }
                    let k = match config.retrieval.k {
                        KSetting::Fixed(k) => k,
                        KSetting::Elbow => {
                            let curve = compute_recall_curve(
                                &id_lists,
                                &ds.ground_truth,
                                config.retrieval.k_max,
                                recall_mode,
                            )?;
                            select_k_elbow(&curve, config.retrieval.elbow_epsilon)?
                        }
                    };
                    let recall = recall_at_k(&id_lists, &ds.ground_truth, k, recall_mode)?;
                    out.push(SweepRow {
                        alpha,
                        beta,
                        gamma,
                        dataset: ds.source.clone(),
                        k,
                        recall_at_k: recall,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// CSV rendering of a sweep.
pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("alpha,beta,gamma,dataset,k,recall_at_k\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.alpha, r.beta, r.gamma, r.dataset, r.k, r.recall_at_k
        ));
    }
    out
}
