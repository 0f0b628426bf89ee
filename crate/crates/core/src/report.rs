//! Run artifacts and the markdown experiment report.
//!
//! A run directory holds `metrics.json` and `sustainability.json`; the
//! report renderer turns one or more runs into a comparison table with the
//! retrieval-side energy/carbon/latency per dataset, percentage deltas when
//! exactly two pipelines cover the same dataset, the per-model summary, and
//! the exhaustive-versus-pruned workload projection.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{MacroMetrics, RecallMode};
use crate::sustain::SustainabilityReport;

/// Percentage reduction of `value` relative to `baseline`:
/// `(1 - value / baseline) * 100`.
pub fn percent_reduction(value: f64, baseline: f64) -> f64 {
    (1.0 - value / baseline) * 100.0
}

/// Percentage overhead of `value` relative to `baseline`:
/// `(value / baseline - 1) * 100`.
pub fn percent_overhead(value: f64, baseline: f64) -> f64 {
    (value / baseline - 1.0) * 100.0
}

/// Per-dataset evaluation numbers stored in `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetrics {
    pub k: usize,
    /// `fixed` or `elbow`.
    pub k_mode: String,
    pub recall_mode: RecallMode,
    pub recall_at_k: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall_curve: Option<Vec<(usize, f64)>>,
    pub queries: usize,
    /// Retrieved pairs actually classified.
    pub classified_pairs: usize,
    /// Pairs whose votes all failed to parse.
    pub failed_pairs: usize,
    /// Labeled pairs in the dataset (the exhaustive workload).
    pub labeled_pairs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<MacroMetrics>,
}

/// The `metrics.json` document of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsDoc {
    pub run_id: String,
    pub pipeline: String,
    pub model: String,
    pub strategy: String,
    pub per_dataset: BTreeMap<String, DatasetMetrics>,
}

/// Everything the report renderer needs about one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub metrics: MetricsDoc,
    pub sustainability: SustainabilityReport,
}

/// Load `metrics.json` and `sustainability.json` from a run directory,
/// naming whichever stage artifacts are missing.
pub fn load_run_artifacts(dir: &Path) -> Result<RunArtifacts> {
    let mut missing = Vec::new();
    for name in ["metrics.json", "sustainability.json"] {
        if !dir.join(name).exists() {
            missing.push(name);
        }
    }
    if !missing.is_empty() {
        return Err(Error::Validation(format!(
            "run directory {} is missing {:?}; run the evaluate stage first",
            dir.display(),
            missing
        )));
    }
    let metrics: MetricsDoc = read_json(&dir.join("metrics.json"))?;
    let sustainability: SustainabilityReport = read_json(&dir.join("sustainability.json"))?;
    Ok(RunArtifacts {
        metrics,
        sustainability,
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let raw = fs::read_to_string(path)?;
    serde_json::from_str(&raw).map_err(|e| Error::Parse {
        location: path.display().to_string(),
        message: e.to_string(),
    })
}

fn fmt_energy(kwh: f64) -> String {
    if kwh != 0.0 && kwh.abs() < 1e-6 {
        format!("{kwh:.3e}")
    } else {
        format!("{kwh:.6}")
    }
}

fn fmt_pct(p: f64) -> String {
    format!("{p:.0}%")
}

/// Render the markdown report over one or more runs.
pub fn render_markdown(runs: &[RunArtifacts]) -> Result<String> {
    if runs.is_empty() {
        return Err(Error::Validation("no run artifacts to report".into()));
    }
    let mut out = String::new();
    let _ = writeln!(out, "# Experiment report\n");

    let _ = writeln!(
        out,
        "| run | dataset | pipeline | K | Recall@K | macro F1 | retrieval kWh | retrieval kgCO2e | retrieval s | s/query | inference kWh |"
    );
    let _ = writeln!(
        out,
        "|-----|---------|----------|---|----------|----------|---------------|------------------|-------------|---------|---------------|"
    );
    for run in runs {
        for (dataset, dm) in &run.metrics.per_dataset {
            let f1 = dm
                .classification
                .as_ref()
                .map(|c| format!("{:.3}", c.macro_f1))
                .unwrap_or_else(|| "-".into());
            let latency = run.sustainability.stage_latency_s(dataset, "retrieval");
            let queries = run.sustainability.stage_reading_count(dataset, "retrieval");
            let per_query = if queries > 0 {
                format!("{:.4}", latency / queries as f64)
            } else {
                "-".into()
            };
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {:.3} | {} | {} | {} | {:.3} | {} | {} |",
                run.metrics.run_id,
                dataset,
                run.metrics.pipeline,
                dm.k,
                dm.recall_at_k,
                f1,
                fmt_energy(run.sustainability.stage_energy_kwh(dataset, "retrieval")),
                fmt_energy(run.sustainability.stage_carbon_kg(dataset, "retrieval")),
                latency,
                per_query,
                fmt_energy(run.sustainability.stage_energy_kwh(dataset, "inference")),
            );
        }
    }
    let _ = writeln!(out);

    for run in runs {
        for (dataset, dm) in &run.metrics.per_dataset {
            if dm.k_mode == "elbow" {
                let _ = writeln!(
                    out,
                    "K for {dataset} ({}) was selected at the recall-curve elbow: K = {}.",
                    run.metrics.run_id, dm.k
                );
            }
        }
    }

    render_pairwise_deltas(&mut out, runs);
    render_model_summaries(&mut out, runs);
    render_projection(&mut out, runs);
    Ok(out)
}

/// When exactly two runs cover a dataset, print energy/carbon reductions of
/// the cheaper retrieval pipeline against the other, plus its latency
/// overhead.
fn render_pairwise_deltas(out: &mut String, runs: &[RunArtifacts]) {
    let mut datasets: BTreeMap<&str, Vec<&RunArtifacts>> = BTreeMap::new();
    for run in runs {
        for dataset in run.metrics.per_dataset.keys() {
            datasets.entry(dataset).or_default().push(run);
        }
    }
    for (dataset, covering) in datasets {
        if covering.len() != 2 {
            continue;
        }
        let energy =
            |r: &RunArtifacts| r.sustainability.stage_energy_kwh(dataset, "retrieval");
        let (cheap, dear) = if energy(covering[0]) <= energy(covering[1]) {
            (covering[0], covering[1])
        } else {
            (covering[1], covering[0])
        };
        let e_cheap = energy(cheap);
        let e_dear = energy(dear);
        if e_dear <= 0.0 {
            continue;
        }
        let c_cheap = cheap.sustainability.stage_carbon_kg(dataset, "retrieval");
        let c_dear = dear.sustainability.stage_carbon_kg(dataset, "retrieval");
        let l_cheap = cheap.sustainability.stage_latency_s(dataset, "retrieval");
        let l_dear = dear.sustainability.stage_latency_s(dataset, "retrieval");
        let _ = writeln!(
            out,
            "\n## {dataset}: {} vs {}\n",
            cheap.metrics.pipeline, dear.metrics.pipeline
        );
        let _ = writeln!(
            out,
            "- energy: {} vs {} kWh, a {} reduction",
            fmt_energy(e_cheap),
            fmt_energy(e_dear),
            fmt_pct(percent_reduction(e_cheap, e_dear)),
        );
        if c_dear > 0.0 {
            let _ = writeln!(
                out,
                "- carbon: {} vs {} kgCO2e, a {} reduction",
                fmt_energy(c_cheap),
                fmt_energy(c_dear),
                fmt_pct(percent_reduction(c_cheap, c_dear)),
            );
        }
        if l_dear > 0.0 && l_cheap > l_dear {
            let _ = writeln!(
                out,
                "- latency: {l_cheap:.2} vs {l_dear:.2} s, a {} overhead",
                fmt_pct(percent_overhead(l_cheap, l_dear)),
            );
        } else if l_cheap > 0.0 && l_dear > l_cheap {
            let _ = writeln!(
                out,
                "- latency: {l_dear:.2} vs {l_cheap:.2} s, a {} overhead for {}",
                fmt_pct(percent_overhead(l_dear, l_cheap)),
                dear.metrics.pipeline,
            );
        }
    }
}

fn render_model_summaries(out: &mut String, runs: &[RunArtifacts]) {
    let mut any = false;
    for run in runs {
        for (model, summary) in &run.sustainability.per_model {
            if !any {
                let _ = writeln!(out, "\n## Model summary\n");
                let _ = writeln!(out, "| model | mean F1 | total kgCO2e | EcoScore |");
                let _ = writeln!(out, "|-------|---------|--------------|----------|");
                any = true;
            }
            let score = summary
                .ecoscore
                .map(|s| format!("{s:.3}"))
                .unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "| {model} | {:.3} | {} | {score} |",
                summary.mean_f1,
                fmt_energy(summary.total_carbon_kg)
            );
        }
    }
    if any {
        let _ = writeln!(
            out,
            "\nEcoScore mode: mean-F1 over datasets divided by total carbon. An \
             alternative convention sums the per-dataset F1 instead of averaging; \
             for D equally weighted datasets it yields exactly D times the value \
             reported here, so the two rankings coincide."
        );
    }
}

fn render_projection(out: &mut String, runs: &[RunArtifacts]) {
    for run in runs {
        if let Some(p) = &run.sustainability.projection {
            let _ = writeln!(out, "\n## Workload projection ({})\n", run.metrics.run_id);
            let _ = writeln!(out, "| pipeline | inferences | total kWh | reduction |");
            let _ = writeln!(out, "|----------|------------|-----------|-----------|");
            let _ = writeln!(
                out,
                "| exhaustive | {} | {} | - |",
                p.n_all,
                fmt_energy(p.e_vanilla_kwh)
            );
            let _ = writeln!(
                out,
                "| retrieval-pruned | {} | {} | {:.1}% |",
                p.n_pruned,
                fmt_energy(p.e_pruned_kwh),
                p.reduction * 100.0
            );
            let _ = writeln!(
                out,
                "\nCarbon scales linearly with energy, so emissions drop by the \
                 same {:.1}% under the pruned pipeline.",
                p.reduction * 100.0
            );
        }
    }
}
