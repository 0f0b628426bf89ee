//! Acceptance suite: one test per top-level criterion, each printing a
//! PASS line and checking its runtime budget. Everything runs against the
//! deterministic replay backend; no live model or hardware counter is
//! required.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use reqdep::config::ExperimentConfig;
use reqdep::corpus::{Dataset, PairLabel, Requirement};
use reqdep::error::Error;
use reqdep::extract::{Entity, EntityKind, EntitySet, Extractor};
use reqdep::infer::{
    classify_batch, classify_pair_voted, default_shots, BatchOptions, ModelClient, PairTask,
    ReplayClient, Strategy,
};
use reqdep::kg::{KnowledgeGraph, ScoreWeights};
use reqdep::metrics::{macro_prf_with_classes, recall_at_k, RecallMode};
use reqdep::pipeline::{run_experiment, RunPaths};
use reqdep::report::percent_overhead;
use reqdep::report::percent_reduction;
use reqdep::sustain::{
    ecoscore, project_workload, ClockMode, EcoScoreMode, Meter, MeterConfig, MeterReading,
    MeterSource, SustainabilityReport,
};
use reqdep::vsr::{cosine, EmbeddingVector, IndexKind, VectorIndex};

fn budget(name: &str, elapsed: Duration, limit: Duration) {
    assert!(
        elapsed <= limit,
        "{name} exceeded its runtime budget: {elapsed:?} > {limit:?}"
    );
}

#[test]
fn criterion_01_workload_projection_exactness() {
    let start = Instant::now();
    let p = project_workload(35_498, 17_123, 7.25e-5, 475.0).unwrap();
    let elapsed = start.elapsed();

    assert!(
        (p.e_vanilla_kwh - 2.5736).abs() / 2.5736 <= 5e-4,
        "e_vanilla {}",
        p.e_vanilla_kwh
    );
    assert!(
        (p.e_pruned_kwh - 1.2414).abs() / 1.2414 <= 5e-4,
        "e_pruned {}",
        p.e_pruned_kwh
    );
    // 51.8% within 0.05 percentage points.
    assert!((p.reduction - 0.518).abs() <= 5e-4, "reduction {}", p.reduction);
    budget("criterion 1", elapsed, Duration::from_millis(1));
    println!("acceptance 01 workload-projection-exactness: PASS");
}

#[test]
fn criterion_02_ecoscore_reproduction() {
    let start = Instant::now();
    let mean_mode = ecoscore(&[0.539], &[0.363], EcoScoreMode::MeanF1).unwrap();
    let five_f1 = [0.539; 5];
    let five_carbon = [0.363 / 5.0; 5];
    let mean_five = ecoscore(&five_f1, &five_carbon, EcoScoreMode::MeanF1).unwrap();
    let sum_five = ecoscore(&five_f1, &five_carbon, EcoScoreMode::SumF1).unwrap();
    let elapsed = start.elapsed();

    assert!((mean_mode - 1.485).abs() <= 0.01, "mean mode {mean_mode}");
    assert!((mean_five - mean_mode).abs() <= 1e-9);
    assert!(
        (sum_five - 5.0 * mean_five).abs() <= 1e-9,
        "sum mode must be 5x the mean mode for 5 equal datasets"
    );

    // The two-convention note must reach the emitted report.
    let mut sustainability = SustainabilityReport::new(475.0, false);
    sustainability.add_reading(
        "toy",
        "kgr",
        &MeterReading::modeled("inference:replay:zeroshot", 1.0, 30.0),
    );
    sustainability.set_model_summary("replay", &[0.539], 0.363, EcoScoreMode::MeanF1);
    let artifacts = reqdep::report::RunArtifacts {
        metrics: reqdep::report::MetricsDoc {
            run_id: "eco".into(),
            pipeline: "kgr".into(),
            model: "replay".into(),
            strategy: "zeroshot".into(),
            per_dataset: BTreeMap::new(),
        },
        sustainability,
    };
    let md = reqdep::report::render_markdown(&[artifacts]).unwrap();
    assert!(md.contains("EcoScore mode"), "report documents the convention");
    assert!(
        md.contains("D times the value"),
        "report documents the sum-versus-mean discrepancy"
    );
    budget("criterion 2", elapsed, Duration::from_millis(1));
    println!("acceptance 02 ecoscore-reproduction: PASS");
}

#[test]
fn criterion_03_percentage_delta_arithmetic() {
    let start = Instant::now();
    let energy = percent_reduction(0.000002, 0.000008);
    let carbon = percent_reduction(0.000001, 0.000005);
    let latency = percent_overhead(555.49, 380.06);
    let elapsed = start.elapsed();

    assert!((energy - 75.0).abs() <= 1.0, "energy delta {energy}");
    assert!((carbon - 80.0).abs() <= 1.0, "carbon delta {carbon}");
    assert!((latency - 46.0).abs() <= 1.0, "latency overhead {latency}");
    budget("criterion 3", elapsed, Duration::from_millis(1));
    println!("acceptance 03 percentage-delta-arithmetic: PASS");
}

fn toy_dataset(ids: &[&str]) -> Dataset {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/toy/requirements.csv");
    let full = Dataset::load_requirements(&path, reqdep::corpus::DataFormat::Csv, "toy").unwrap();
    let keep: BTreeSet<&str> = ids.iter().copied().collect();
    let requirements: Vec<Requirement> = full
        .requirements
        .into_iter()
        .filter(|r| keep.contains(r.id.as_str()))
        .collect();
    assert_eq!(requirements.len(), ids.len());
    Dataset {
        source: "toy".into(),
        requirements,
        pairs: Vec::new(),
        ground_truth: BTreeMap::new(),
    }
}

#[test]
fn criterion_04_planted_near_duplicate_retrieval() {
    let start = Instant::now();
    // The near-duplicate pair plus three entity-disjoint distractors from
    // the bundled corpus.
    let dataset = toy_dataset(&["r1", "r2", "r3", "r4", "r5"]);
    let extractor = Extractor::new();
    let sets: Vec<EntitySet> = dataset.requirements.iter().map(|r| extractor.extract(r)).collect();
    let graph = KnowledgeGraph::from_dataset(&dataset, &sets).unwrap();
    let ranked = graph
        .retrieve("toy", "r1", 1, &ScoreWeights::default())
        .unwrap();
    assert_eq!(ranked.len(), 1);
    assert_eq!(ranked[0].candidate_id, "r2", "near duplicate must rank first");
    assert!(ranked[0].s_e >= 2, "shared entities: {}", ranked[0].s_e);

    let retrieved: BTreeMap<String, Vec<String>> =
        [("r1".to_string(), vec![ranked[0].candidate_id.clone()])].into();
    let truth: BTreeMap<String, BTreeSet<String>> =
        [("r1".to_string(), ["r2".to_string()].into())].into();
    let recall = recall_at_k(&retrieved, &truth, 1, RecallMode::SingleConflict).unwrap();
    assert_eq!(recall, 1.0);
    budget("criterion 4", start.elapsed(), Duration::from_secs(1));
    println!("acceptance 04 planted-near-duplicate-retrieval: PASS");
}

/// Test-local ranking oracle: scores every other requirement directly from
/// the entity sets (sorted-set intersection, distinct kinds, its own BFS)
/// and keeps those sharing at least one entity.
mod kgr_oracle {
    use super::*;

    pub struct Corpus {
        pub ids: Vec<String>,
        pub sets: Vec<BTreeSet<Entity>>,
    }

    pub fn random_corpus(rng: &mut ChaCha8Rng) -> Corpus {
        let n = rng.random_range(5..=200);
        let value_pool = rng.random_range(8..=40usize);
        let ids: Vec<String> = (0..n).map(|i| format!("r{i:03}")).collect();
        let sets: Vec<BTreeSet<Entity>> = (0..n)
            .map(|_| {
                let count = rng.random_range(0..=6usize);
                (0..count)
                    .map(|_| {
                        let kind = EntityKind::ALL[rng.random_range(0..5)];
                        Entity::new(kind, format!("v{}", rng.random_range(0..value_pool)))
                    })
                    .collect()
            })
            .collect();
        Corpus { ids, sets }
    }

    fn bfs_distance(corpus: &Corpus, from: usize, to: usize) -> Option<usize> {
        // Node space: requirements then entity values.
        let mut entity_ids: BTreeMap<&Entity, usize> = BTreeMap::new();
        for set in &corpus.sets {
            for e in set {
                let next = corpus.ids.len() + entity_ids.len();
                entity_ids.entry(e).or_insert(next);
            }
        }
        let total = corpus.ids.len() + entity_ids.len();
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); total];
        for (req, set) in corpus.sets.iter().enumerate() {
            for e in set {
                let ent = entity_ids[e];
                adjacency[req].push(ent);
                adjacency[ent].push(req);
            }
        }
        let mut dist = vec![None; total];
        let mut queue = VecDeque::from([from]);
        dist[from] = Some(0usize);
        while let Some(u) = queue.pop_front() {
            for &v in &adjacency[u] {
                if dist[v].is_none() {
                    dist[v] = Some(dist[u].unwrap() + 1);
                    queue.push_back(v);
                }
            }
        }
        dist[to]
    }

    pub fn rank(corpus: &Corpus, q: usize, k: usize, w: &ScoreWeights) -> Vec<(String, f64)> {
        if corpus.sets[q].is_empty() {
            return Vec::new();
        }
        let mut scored: Vec<(String, f64)> = Vec::new();
        for j in 0..corpus.ids.len() {
            if j == q {
                continue;
            }
            let shared: Vec<&Entity> = corpus.sets[q].intersection(&corpus.sets[j]).collect();
            if shared.is_empty() {
                continue;
            }
            let s_e = shared.len() as f64;
            let kinds: BTreeSet<EntityKind> = shared.iter().map(|e| e.kind).collect();
            let s_t = kinds.len() as f64;
            let s_d = match bfs_distance(corpus, q, j) {
                Some(d) if d > 0 => 1.0 / d as f64,
                _ => 0.0,
            };
            scored.push((corpus.ids[j].clone(), w.alpha * s_e + w.beta * s_t + w.gamma * s_d));
        }
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored.truncate(k);
        scored
    }
}

#[test]
fn criterion_05_kgr_matches_brute_force_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let corpus = kgr_oracle::random_corpus(&mut rng);
        let dataset = Dataset {
            source: "synth".into(),
            requirements: corpus
                .ids
                .iter()
                .map(|id| Requirement {
                    id: id.clone(),
                    source: "synth".into(),
                    text: format!("requirement {id}"),
                })
                .collect(),
            pairs: Vec::new(),
            ground_truth: BTreeMap::new(),
        };
        let sets: Vec<EntitySet> = corpus
            .ids
            .iter()
            .zip(&corpus.sets)
            .map(|(id, entities)| EntitySet {
                requirement_id: id.clone(),
                entities: entities.clone(),
            })
            .collect();
        let graph = KnowledgeGraph::from_dataset(&dataset, &sets).unwrap();
        let weights = ScoreWeights::new(
            rng.random_range(0.0..2.0),
            rng.random_range(0.0..1.0),
            rng.random_range(0.01..0.5),
        );
        for probe in 0..3 {
            let q = rng.random_range(0..corpus.ids.len());
            // One full-depth query per corpus checks candidate completeness.
            let k = if probe == 0 {
                corpus.ids.len()
            } else {
                rng.random_range(1..=corpus.ids.len())
            };
            let got = graph
                .retrieve("synth", &corpus.ids[q], k, &weights)
                .unwrap();
            let expected = kgr_oracle::rank(&corpus, q, k, &weights);
            assert_eq!(got.len(), expected.len());
            for (g, e) in got.iter().zip(&expected) {
                assert_eq!(g.candidate_id, e.0, "rank order diverged");
                assert!(
                    (g.score - e.1).abs() <= 1e-9,
                    "score diverged: {} vs {}",
                    g.score,
                    e.1
                );
            }
        }
    }
    budget("criterion 5", start.elapsed(), Duration::from_secs(30));
    println!("acceptance 05 kgr-oracle-equivalence: PASS");
}

fn random_unit_vectors(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<EmbeddingVector> {
    (0..n)
        .map(|i| {
            let values: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            EmbeddingVector::normalized(format!("r{i:04}"), values).unwrap()
        })
        .collect()
}

#[test]
fn criterion_06_vsr_matches_exhaustive_sort() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for trial in 0..100 {
        let n = rng.random_range(5..=500);
        let vectors = random_unit_vectors(&mut rng, n, 32);
        let flat = VectorIndex::build(vectors.clone(), IndexKind::Flat, None, 42).unwrap();
        let query = vectors[rng.random_range(0..n)].clone();
        let k = rng.random_range(1..=15);

        // Exhaustive oracle through the public cosine routine.
        let mut oracle: Vec<(String, f64)> = vectors
            .iter()
            .filter(|v| v.requirement_id != query.requirement_id)
            .map(|v| {
                (
                    v.requirement_id.clone(),
                    cosine(&query.values, &v.values).unwrap(),
                )
            })
            .collect();
        oracle.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        oracle.truncate(k);

        let got = flat.search(&query, k, None).unwrap();
        assert_eq!(got.len(), oracle.len());
        for (g, e) in got.iter().zip(&oracle) {
            assert_eq!(g.id, e.0);
            assert_eq!(g.cosine, e.1, "flat search must equal the exhaustive sort");
        }

        // IVF with full probing degenerates to flat, every trial.
        let nlist = rng.random_range(1..=n.min(24));
        let ivf = VectorIndex::build(vectors.clone(), IndexKind::Ivf, Some(nlist), 42).unwrap();
        assert_eq!(ivf.search(&query, k, Some(nlist)).unwrap(), got);

        // Recall against the flat top-k is non-decreasing in nprobe.
        if trial % 10 == 0 {
            let exact_ids: BTreeSet<String> = got.iter().map(|h| h.id.clone()).collect();
            let mut prev = 0usize;
            for nprobe in 1..=nlist {
                let hits = ivf.search(&query, k, Some(nprobe)).unwrap();
                let overlap = hits.iter().filter(|h| exact_ids.contains(&h.id)).count();
                assert!(overlap >= prev, "recall regressed at nprobe {nprobe}");
                prev = overlap;
            }
            assert_eq!(prev, got.len());
        }
    }
    budget("criterion 6", start.elapsed(), Duration::from_secs(60));
    println!("acceptance 06 vsr-oracle-equivalence: PASS");
}

#[test]
fn criterion_07_recall_at_k_properties() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let n_queries = rng.random_range(1..=5);
        let pool: Vec<String> = (0..12).map(|c| format!("c{c}")).collect();
        let mut retrieved = BTreeMap::new();
        let mut truth_single = BTreeMap::new();
        let mut truth_multi = BTreeMap::new();
        for q in 0..n_queries {
            let qid = format!("q{q}");
            let mut ids = pool.clone();
            for i in (1..ids.len()).rev() {
                ids.swap(i, rng.random_range(0..=i));
            }
            ids.truncate(rng.random_range(0..=10));
            retrieved.insert(qid.clone(), ids);
            let singleton: BTreeSet<String> =
                [pool[rng.random_range(0..pool.len())].clone()].into();
            truth_single.insert(qid.clone(), singleton);
            let multi: BTreeSet<String> = (0..rng.random_range(1..=4))
                .map(|_| pool[rng.random_range(0..pool.len())].clone())
                .collect();
            truth_multi.insert(qid, multi);
        }
        let mut prev_single = 0.0;
        let mut prev_multi = 0.0;
        for k in 1..=10 {
            let single =
                recall_at_k(&retrieved, &truth_single, k, RecallMode::SingleConflict).unwrap();
            let single_as_multi =
                recall_at_k(&retrieved, &truth_single, k, RecallMode::MultiLabel).unwrap();
            let multi = recall_at_k(&retrieved, &truth_multi, k, RecallMode::MultiLabel).unwrap();
            assert!(
                (single - single_as_multi).abs() < 1e-12,
                "modes must coincide on singleton truth sets"
            );
            assert!(single >= prev_single - 1e-12);
            assert!(multi >= prev_multi - 1e-12);
            prev_single = single;
            prev_multi = multi;
        }
    }

    // Hand case: 3 of 4 relevant retrieved for a single query.
    let retrieved: BTreeMap<String, Vec<String>> = [(
        "q".to_string(),
        vec!["a".into(), "b".into(), "c".into(), "x".into()],
    )]
    .into();
    let truth: BTreeMap<String, BTreeSet<String>> = [(
        "q".to_string(),
        ["a".to_string(), "b".to_string(), "c".to_string(), "d".to_string()].into(),
    )]
    .into();
    assert_eq!(
        recall_at_k(&retrieved, &truth, 4, RecallMode::MultiLabel).unwrap(),
        0.75
    );
    budget("criterion 7", start.elapsed(), Duration::from_secs(10));
    println!("acceptance 07 recall-at-k-properties: PASS");
}

#[test]
fn criterion_08_macro_prf_matches_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..1000 {
        let n_classes = rng.random_range(2..=4usize);
        let classes: Vec<String> = (0..n_classes).map(|c| format!("k{c}")).collect();
        let n = rng.random_range(1..=50usize);
        let pred: Vec<String> = (0..n)
            .map(|_| classes[rng.random_range(0..n_classes)].clone())
            .collect();
        let truth: Vec<String> = (0..n)
            .map(|_| classes[rng.random_range(0..n_classes)].clone())
            .collect();
        let got = macro_prf_with_classes(&pred, &truth, &classes).unwrap();

        // Independent confusion-matrix oracle from raw pair counts.
        let mut f1s = Vec::new();
        let mut ps = Vec::new();
        let mut rs = Vec::new();
        for c in &classes {
            let tp = pred.iter().zip(&truth).filter(|(p, t)| *p == c && *t == c).count() as f64;
            let fp = pred.iter().zip(&truth).filter(|(p, t)| *p == c && *t != c).count() as f64;
            let fn_ = pred.iter().zip(&truth).filter(|(p, t)| *p != c && *t == c).count() as f64;
            let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let r = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
            ps.push(p);
            rs.push(r);
            f1s.push(if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 });
        }
        let k = classes.len() as f64;
        assert!((got.macro_precision - ps.iter().sum::<f64>() / k).abs() <= 1e-12);
        assert!((got.macro_recall - rs.iter().sum::<f64>() / k).abs() <= 1e-12);
        assert!((got.macro_f1 - f1s.iter().sum::<f64>() / k).abs() <= 1e-12);
    }

    // Hand cases.
    let classes = vec!["C".to_string(), "N".to_string()];
    let m = macro_prf_with_classes(
        &["C", "N", "N", "N"].map(String::from),
        &["C", "C", "N", "N"].map(String::from),
        &classes,
    )
    .unwrap();
    assert!((m.per_class["C"].f1 - 2.0 / 3.0).abs() <= 1e-9);
    assert!((m.per_class["N"].f1 - 4.0 / 5.0).abs() <= 1e-9);
    assert!((m.macro_f1 - 11.0 / 15.0).abs() <= 1e-9);
    let degenerate = macro_prf_with_classes(
        &["N", "N", "N", "N"].map(String::from),
        &["C", "C", "N", "N"].map(String::from),
        &classes,
    )
    .unwrap();
    assert!((degenerate.macro_f1 - 1.0 / 3.0).abs() <= 1e-9);
    budget("criterion 8", start.elapsed(), Duration::from_secs(10));
    println!("acceptance 08 macro-prf-oracle: PASS");
}

#[test]
fn criterion_09_meter_exactness_and_additivity() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..500 {
        let duration = rng.random_range(0.0..1e4);
        let power = rng.random_range(0.0..500.0);
        let reading = MeterReading::modeled("x", duration, power);
        let expected = power * duration / 3.6e6;
        let err = (reading.energy_kwh - expected).abs();
        let bound = 1e-12 * expected.max(f64::MIN_POSITIVE);
        assert!(err <= bound, "modeled energy off by {err}");
    }

    let meter = Meter::new(MeterConfig {
        power_watts: 50.0,
        source: MeterSource::Modeled,
        clock: ClockMode::Wall,
    })
    .unwrap();
    let mut report = SustainabilityReport::new(475.0, false);
    let mut sum = 0.0;
    for i in 0..20 {
        let (_, reading) = meter.section("work", || {
            std::thread::sleep(Duration::from_millis(1));
        });
        sum += reading.energy_kwh;
        report.add_reading("ds", "p", &reading);
        let expected = 50.0 * reading.duration_s / 3.6e6;
        assert!(
            (reading.energy_kwh - expected).abs() <= 1e-12 * expected,
            "section {i} violates the model"
        );
    }
    let totals = report.per_dataset["ds/p"];
    assert!(
        (totals.energy_kwh - sum).abs() <= 1e-12 * sum,
        "totals must equal the sum of readings"
    );
    assert_eq!(totals.readings, 20);

    let two_s = MeterReading::modeled("x", 2.0, 50.0);
    assert!((two_s.energy_kwh - 2.7778e-5).abs() <= 1e-9);
    budget("criterion 9", start.elapsed(), Duration::from_secs(5));
    println!("acceptance 09 meter-exactness-additivity: PASS");
}

fn toy_config(out_dir: &Path, run_id: &str, sets: &[(&str, &str)]) -> ExperimentConfig {
    let config_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/toy/config.json");
    let mut overrides: Vec<(String, String)> = vec![
        ("run_id".into(), format!("\"{run_id}\"")),
        (
            "output_dir".into(),
            serde_json::to_string(&out_dir.to_string_lossy()).unwrap(),
        ),
    ];
    for (k, v) in sets {
        overrides.push((k.to_string(), v.to_string()));
    }
    ExperimentConfig::load(&config_path, &overrides).unwrap()
}

#[test]
fn criterion_10_inference_contract() {
    let start = Instant::now();
    let meter = Meter::new(MeterConfig {
        power_watts: 30.0,
        source: MeterSource::Modeled,
        clock: ClockMode::FixedStep { fixed_step_s: 0.001 },
    })
    .unwrap();
    let task = PairTask {
        dataset: "toy".into(),
        anchor_id: "a".into(),
        candidate_id: "b".into(),
        anchor_text: "the uav shall land".into(),
        candidate_text: "the uav shall hover".into(),
    };

    // Majority over (Conflict, Conflict, Neutral).
    let client = ReplayClient::from_responses([
        "{\"label\": \"Conflict\", \"confidence\": 0.9}",
        "{\"label\": \"Conflict\", \"confidence\": 0.8}",
        "{\"label\": \"Neutral\", \"confidence\": 0.6}",
    ]);
    let options = BatchOptions::new(Strategy::ZeroShot, "inference:replay:zeroshot");
    let voted = classify_pair_voted(&client, &task, &options, &meter).unwrap();
    assert_eq!(voted.final_label, PairLabel::Conflict);

    // All-parse-failure is recorded per pair, not fatal to the batch.
    let garbage = ReplayClient::constant("no json here");
    let batch = classify_batch(&garbage, std::slice::from_ref(&task), &options, &meter).unwrap();
    assert_eq!(batch.failed_count(), 1);
    assert!(batch.outcomes[0].result().is_none());

    // Few-shot prompts must cost more prompt tokens than zero-shot on every
    // pair.
    let pairs: Vec<PairTask> = (0..4)
        .map(|i| PairTask {
            dataset: "toy".into(),
            anchor_id: format!("a{i}"),
            candidate_id: "b".into(),
            anchor_text: format!("anchor text number {i}"),
            candidate_text: "candidate text".into(),
        })
        .collect();
    let mut few_options = BatchOptions::new(Strategy::FewShot, "inference:replay:fewshot");
    few_options.shots = default_shots();
    for pair in &pairs {
        let zero = classify_pair_voted(
            &ReplayClient::constant("{\"label\": \"Neutral\", \"confidence\": 0.5}"),
            pair,
            &options,
            &meter,
        )
        .unwrap();
        let few = classify_pair_voted(
            &ReplayClient::constant("{\"label\": \"Neutral\", \"confidence\": 0.5}"),
            pair,
            &few_options,
            &meter,
        )
        .unwrap();
        for (z, f) in zero.votes.iter().zip(&few.votes) {
            assert!(f.prompt_tokens > z.prompt_tokens);
        }
    }

    // Two identical end-to-end runs emit byte-identical JSON reports.
    let dir = tempfile::tempdir().unwrap();
    let first = toy_config(&dir.path().join("one"), "determinism", &[]);
    let second = toy_config(&dir.path().join("two"), "determinism", &[]);
    run_experiment(&first).unwrap();
    run_experiment(&second).unwrap();
    for name in [
        "metrics.json",
        "sustainability.json",
        "retrieval.jsonl",
        "classifications.jsonl",
        "report.md",
    ] {
        let a = std::fs::read(first.run_dir().join(name)).unwrap();
        let b = std::fs::read(second.run_dir().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    budget("criterion 10", start.elapsed(), Duration::from_secs(10));
    println!("acceptance 10 inference-contract: PASS");
}

#[test]
fn criterion_11_workload_reduction_integration() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let config = toy_config(dir.path(), "workload", &[]);
    run_experiment(&config).unwrap();

    let paths = RunPaths::new(&config);
    let sustainability: SustainabilityReport =
        serde_json::from_str(&std::fs::read_to_string(&paths.sustainability).unwrap()).unwrap();
    let projection = sustainability.projection.expect("projection emitted");

    // Pruned count = sum over anchors of min(k, |candidates|): three
    // ground-truth anchors with one candidate each at k = 1.
    let records = reqdep::pipeline::read_retrieval_records(&paths.retrieval).unwrap();
    let pruned_expected: u64 = records
        .iter()
        .filter_map(|r| match r {
            reqdep::pipeline::RetrievalRecord::Query(q) => Some(q.candidates.len() as u64),
            _ => None,
        })
        .sum();
    assert_eq!(projection.n_pruned, pruned_expected);
    assert_eq!(projection.n_pruned, 3);

    // Exhaustive workload = all ordered labeled pairs of the corpus.
    let pairs_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/toy/pairs.csv");
    let exhaustive = reqdep::corpus::read_pairs_csv(&pairs_path).unwrap().len() as u64;
    assert_eq!(projection.n_all, exhaustive);

    // Reduction agrees with the closed-form arithmetic of criterion 1.
    let reference = project_workload(
        projection.n_all,
        projection.n_pruned,
        projection.e_per_kwh,
        475.0,
    )
    .unwrap();
    assert!((projection.reduction - reference.reduction).abs() <= 1e-12);
    assert!(
        (projection.reduction - (1.0 - pruned_expected as f64 / exhaustive as f64)).abs() <= 1e-12
    );
    budget("criterion 11", start.elapsed(), Duration::from_secs(1));
    println!("acceptance 11 workload-reduction-integration: PASS");
}

#[test]
fn transport_errors_carry_the_exit_category() {
    // Companion check: exhausted replay scripts surface as transport
    // errors, the category mapped to exit code 4 by the CLI.
    let client = ReplayClient::from_responses(Vec::<String>::new());
    let err = client.complete("prompt").unwrap_err();
    assert!(matches!(err, Error::Transport { .. }));
}
