//! `reqdep`: config-driven requirements dependency experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use reqdep::config::ExperimentConfig;
use reqdep::error::Error;
use reqdep::pipeline;

#[derive(Debug, Parser)]
#[command(
    name = "reqdep",
    version,
    about = "Retrieval-pruned, energy-accounted requirement dependency classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Experiment config (JSON).
    #[arg(long, short)]
    config: PathBuf,

    /// Override a config key, e.g. --set retrieval.k=5 or
    /// --set inference.strategy='"fewshot"'. Values parse as JSON, falling
    /// back to a plain string.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut overrides = Vec::new();
        for raw in &self.sets {
            let (key, value) = raw.split_once('=').ok_or_else(|| {
                Error::Config(format!("--set expects KEY=VALUE, got '{raw}'"))
            })?;
            overrides.push((key.to_string(), value.to_string()));
        }
        ExperimentConfig::load(&self.config, &overrides)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load, validate, deduplicate, and summarize the datasets.
    Ingest(ConfigArgs),
    /// Extract structured entities to entities.jsonl.
    Extract(ConfigArgs),
    /// Build and export the knowledge graph.
    IndexKg(ConfigArgs),
    /// Build and persist the vector index per dataset.
    IndexVsr(ConfigArgs),
    /// Rank candidates per anchor and write retrieval.jsonl.
    Retrieve(ConfigArgs),
    /// Classify retrieved pairs (resumable; journals to
    /// classifications.jsonl).
    Classify(ConfigArgs),
    /// Compute Recall@K and macro P/R/F1, write metrics.json.
    Evaluate(ConfigArgs),
    /// Render report.md, optionally comparing other runs.
    Report {
        #[command(flatten)]
        config: ConfigArgs,
        /// Additional run ids under the same output_dir to compare against.
        #[arg(long)]
        compare: Vec<String>,
    },
    /// All stages in sequence.
    Run(ConfigArgs),
    /// Grid-sweep the retrieval scoring weights.
    SweepWeights {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated candidate values.
        #[arg(long, value_delimiter = ',', default_value = "0.5,1.0,2.0")]
        alpha: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.0,0.5,1.0")]
        beta: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.0,0.25,0.5")]
        gamma: Vec<f64>,
    },
}

fn exit_code_for(error: &Error) -> u8 {
    match error {
        Error::Config(_) => 2,
        Error::Parse { .. }
        | Error::Integrity(_)
        | Error::Lookup(_)
        | Error::Validation(_) => 3,
        Error::Transport { .. } => 4,
        Error::Classification { .. } | Error::Io(_) | Error::Internal(_) => 5,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Ingest(args) => {
            let config = args.load()?;
            let stats = pipeline::cmd_ingest(&config)?;
            println!("{}", serde_json::to_string_pretty(&stats).map_err(|e| Error::Internal(e.to_string()))?);
        }
        Command::Extract(args) => {
            let config = args.load()?;
            let entities = pipeline::cmd_extract(&config)?;
            println!(
                "extracted {entities} entities -> {}",
                config.run_dir().join("entities.jsonl").display()
            );
        }
        Command::IndexKg(args) => {
            let config = args.load()?;
            let path = pipeline::cmd_index_kg(&config)?;
            println!("knowledge graph -> {}", path.display());
        }
        Command::IndexVsr(args) => {
            let config = args.load()?;
            for path in pipeline::cmd_index_vsr(&config)? {
                println!("vector index -> {}", path.display());
            }
        }
        Command::Retrieve(args) => {
            let config = args.load()?;
            let records = pipeline::cmd_retrieve(&config)?;
            let queries = records
                .iter()
                .filter(|r| matches!(r, pipeline::RetrievalRecord::Query(_)))
                .count();
            println!(
                "retrieved candidates for {queries} queries -> {}",
                pipeline::RunPaths::new(&config).retrieval.display()
            );
        }
        Command::Classify(args) => {
            let config = args.load()?;
            let pairs = pipeline::cmd_classify(&config)?;
            println!(
                "classified {pairs} pairs -> {}",
                pipeline::RunPaths::new(&config).classifications.display()
            );
        }
        Command::Evaluate(args) => {
            let config = args.load()?;
            let doc = pipeline::cmd_evaluate(&config)?;
            println!("{}", serde_json::to_string_pretty(&doc).map_err(|e| Error::Internal(e.to_string()))?);
        }
        Command::Report { config, compare } => {
            let config = config.load()?;
            let markdown = pipeline::cmd_report(&config, &compare)?;
            print!("{markdown}");
        }
        Command::Run(args) => {
            let config = args.load()?;
            let summary = pipeline::run_experiment(&config)?;
            println!(
                "run complete -> {}",
                summary.run_dir.display()
            );
            for (dataset, m) in &summary.metrics.per_dataset {
                let f1 = m
                    .classification
                    .as_ref()
                    .map(|c| format!("{:.3}", c.macro_f1))
                    .unwrap_or_else(|| "-".into());
                println!(
                    "  {dataset}: K={} Recall@K={:.3} macroF1={f1} ({} classified, {} failed)",
                    m.k, m.recall_at_k, m.classified_pairs, m.failed_pairs
                );
            }
        }
        Command::SweepWeights {
            config,
            alpha,
            beta,
            gamma,
        } => {
            let config = config.load()?;
            let rows = pipeline::sweep_weights(&config, &alpha, &beta, &gamma)?;
            let csv = pipeline::sweep_to_csv(&rows);
            let path = config.run_dir().join("sweep.csv");
            std::fs::create_dir_all(config.run_dir())?;
            std::fs::write(&path, &csv)?;
            print!("{csv}");
            eprintln!("sweep -> {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("reqdep: {error}");
            ExitCode::from(exit_code_for(&error))
        }
    }
}
