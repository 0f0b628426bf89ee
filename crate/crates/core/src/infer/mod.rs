//! Pair classification: prompt rendering, the model wire protocol, strict
//! response parsing, majority voting, and resumable batches.
//!
//! Every pair is classified by issuing `runs` (odd, default 3) independent
//! temperature-0 requests and taking the strict majority of the replies
//! that parse. Parse failures are excluded from the tally; a tie among the
//! surviving votes resolves by the configured tie rule and is flagged on
//! the result. A pair whose votes all fail to parse is recorded as a
//! classification error without aborting the batch.
//!
//! Batches journal every finished pair to an append-only JSON-lines file;
//! rerunning a batch replays finished pairs from the journal and only
//! executes the remainder.

pub mod client;
pub mod prompt;

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use client::{
    HttpChatClient, ModelClient, ModelResponse, ReplayClient, ReplayRule, ReplayScript, Usage,
    API_KEY_ENV,
};
pub use prompt::{
    default_shots, load_shots, parse_response, render_prompt, ParseFailure, ParsedReply,
    PromptSpec, Shot, Strategy, DEFAULT_SHOTS,
};

use crate::corpus::PairLabel;
use crate::error::{Error, Result};
use crate::sustain::{Meter, MeterReading};

/// Default number of votes per pair.
pub const DEFAULT_RUNS: usize = 3;

/// How a tie among parsed votes resolves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieRule {
    #[default]
    Neutral,
    Conflict,
}


impl TieRule {
    fn label(&self) -> PairLabel {
        match self {
            TieRule::Neutral => PairLabel::Neutral,
            TieRule::Conflict => PairLabel::Conflict,
        }
    }
}

/// One vote. `label` is `None` when the reply failed to parse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub label: Option<PairLabel>,
    pub confidence: Option<f64>,
    pub raw_text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// The voted classification of one pair, with the metered inference span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub dataset: String,
    pub anchor_id: String,
    pub candidate_id: String,
    pub final_label: PairLabel,
    pub votes: Vec<VoteRecord>,
    pub vote_counts: BTreeMap<String, usize>,
    /// True when the tie rule decided the label.
    pub tie: bool,
    pub meter: MeterReading,
}

/// A pair queued for classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTask {
    pub dataset: String,
    pub anchor_id: String,
    pub candidate_id: String,
    pub anchor_text: String,
    pub candidate_text: String,
}

/// Per-pair outcome of a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum PairOutcome {
    Classified(ClassificationResult),
    Failed {
        dataset: String,
        anchor_id: String,
        candidate_id: String,
        message: String,
    },
}

impl PairOutcome {
    pub fn result(&self) -> Option<&ClassificationResult> {
        match self {
            PairOutcome::Classified(r) => Some(r),
            PairOutcome::Failed { .. } => None,
        }
    }
}

/// Batch configuration.
#[derive(Debug, Clone)]
pub struct BatchOptions {
    pub strategy: Strategy,
    pub shots: Vec<Shot>,
    pub runs: usize,
    pub tie_rule: TieRule,
    /// Append-only JSON-lines journal; finished pairs are replayed from it.
    pub journal: Option<PathBuf>,
    /// Section label for metered spans, e.g. `inference:replay:zeroshot`.
    pub section: String,
    /// Votes of one pair issued concurrently in waves of this size. Pairs
    /// themselves stay sequential: each pair's votes run inside one metered
    /// span and spans are serialized. Keep at 1 for byte-stable journals
    /// with queue-based replay scripts.
    pub max_in_flight: usize,
}

impl BatchOptions {
    pub fn new(strategy: Strategy, section: impl Into<String>) -> BatchOptions {
        BatchOptions {
            strategy,
            shots: Vec::new(),
            runs: DEFAULT_RUNS,
            tie_rule: TieRule::default(),
            journal: None,
            section: section.into(),
            max_in_flight: 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.runs == 0 || self.runs.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "runs must be odd and >= 1, got {}",
                self.runs
            )));
        }
        if self.max_in_flight == 0 {
            return Err(Error::Config("max_in_flight must be >= 1".into()));
        }
        Ok(())
    }

    fn spec_for(&self, task: &PairTask) -> PromptSpec {
        let mut spec = PromptSpec::new(self.strategy, &task.anchor_text, &task.candidate_text);
        if self.strategy == Strategy::FewShot {
            spec = spec.with_shots(self.shots.clone());
        }
        spec
    }
}

/// Results of a batch: per-pair outcomes in input order plus every metered
/// span (failed pairs included, so their energy is still accounted).
#[derive(Debug)]
pub struct BatchResult {
    pub outcomes: Vec<PairOutcome>,
    pub readings: Vec<MeterReading>,
}

impl BatchResult {
    pub fn classified(&self) -> impl Iterator<Item = &ClassificationResult> {
        self.outcomes.iter().filter_map(PairOutcome::result)
    }

    pub fn failed_count(&self) -> usize {
        self.outcomes.iter().filter(|o| o.result().is_none()).count()
    }
}

fn tally(
    votes: &[VoteRecord],
    tie_rule: TieRule,
) -> std::result::Result<(PairLabel, BTreeMap<String, usize>, bool), String> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    counts.insert(PairLabel::Conflict.to_string(), 0);
    counts.insert(PairLabel::Neutral.to_string(), 0);
    let mut parsed = 0usize;
    for v in votes {
        if let Some(label) = v.label {
            *counts.get_mut(label.as_str()).unwrap() += 1;
            parsed += 1;
        }
    }
    if parsed == 0 {
        return Err("all votes failed to parse".into());
    }
    let conflict = counts["Conflict"];
    let neutral = counts["Neutral"];
    let (label, tie) = match conflict.cmp(&neutral) {
        std::cmp::Ordering::Greater => (PairLabel::Conflict, false),
        std::cmp::Ordering::Less => (PairLabel::Neutral, false),
        std::cmp::Ordering::Equal => (tie_rule.label(), true),
    };
    Ok((label, counts, tie))
}

fn run_votes(
    client: &dyn ModelClient,
    spec: &PromptSpec,
    runs: usize,
    max_in_flight: usize,
) -> Result<Vec<VoteRecord>> {
    let rendered = render_prompt(spec)?;
    let mut responses: Vec<Result<ModelResponse>> = Vec::with_capacity(runs);
    if max_in_flight <= 1 {
        for _ in 0..runs {
            responses.push(client.complete(&rendered));
        }
    } else {
        let mut remaining = runs;
        while remaining > 0 {
            let wave = remaining.min(max_in_flight);
            let wave_results: Vec<Result<ModelResponse>> = std::thread::scope(|scope| {
                    let handles: Vec<_> = (0..wave)
                        .map(|_| scope.spawn(|| client.complete(&rendered)))
                        .collect();
                    handles
                        .into_iter()
                        .map(|h| h.join().expect("vote worker panicked"))
                        .collect()
                });
            responses.extend(wave_results);
            remaining -= wave;
        }
    }
    let mut votes = Vec::with_capacity(runs);
    for response in responses {
        let response = response?;
        let vote = match parse_response(&response.content) {
            Ok(reply) => VoteRecord {
                label: Some(reply.label),
                confidence: Some(reply.confidence),
                raw_text: response.content,
                prompt_tokens: response.usage.prompt_tokens,
                completion_tokens: response.usage.completion_tokens,
            },
            Err(failure) => VoteRecord {
                label: None,
                confidence: None,
                raw_text: failure.raw_text,
                prompt_tokens: response.usage.prompt_tokens,
                completion_tokens: response.usage.completion_tokens,
            },
        };
        votes.push(vote);
    }
    Ok(votes)
}

/// Classify one pair by majority voting; the whole vote loop runs inside a
/// single metered span. Transport failures abort; an all-parse-failure pair
/// yields a classification error.
pub fn classify_pair_voted(
    client: &dyn ModelClient,
    task: &PairTask,
    options: &BatchOptions,
    meter: &Meter,
) -> Result<ClassificationResult> {
    options.validate()?;
    let spec = options.spec_for(task);
    let (votes, reading) = meter.section(&options.section, || {
        run_votes(client, &spec, options.runs, options.max_in_flight)
    });
    let votes = votes?;
    match tally(&votes, options.tie_rule) {
        Ok((final_label, vote_counts, tie)) => Ok(ClassificationResult {
            dataset: task.dataset.clone(),
            anchor_id: task.anchor_id.clone(),
            candidate_id: task.candidate_id.clone(),
            final_label,
            votes,
            vote_counts,
            tie,
            meter: reading,
        }),
        Err(message) => Err(Error::Classification {
            anchor_id: task.anchor_id.clone(),
            candidate_id: task.candidate_id.clone(),
            message,
        }),
    }
}

/// Classify a batch of pairs in input order, journaling every finished pair
/// and replaying journaled pairs on rerun. Per-pair classification errors
/// are collected; transport and config errors abort.
pub fn classify_batch(
    client: &dyn ModelClient,
    tasks: &[PairTask],
    options: &BatchOptions,
    meter: &Meter,
) -> Result<BatchResult> {
    options.validate()?;
    let journaled = match &options.journal {
        Some(path) if path.exists() => read_journal(path)?,
        _ => BTreeMap::new(),
    };
    let mut outcomes = Vec::with_capacity(tasks.len());
    let mut readings = Vec::new();
    for task in tasks {
        let key = journal_key(&task.dataset, &task.anchor_id, &task.candidate_id);
        if let Some(done) = journaled.get(&key) {
            readings.push(done.meter.clone());
            outcomes.push(PairOutcome::Classified(done.clone()));
            continue;
        }
        let spec = options.spec_for(task);
        let (votes, reading) = meter.section(&options.section, || {
            run_votes(client, &spec, options.runs, options.max_in_flight)
        });
        let votes = votes?;
        readings.push(reading.clone());
        match tally(&votes, options.tie_rule) {
            Ok((final_label, vote_counts, tie)) => {
                let result = ClassificationResult {
                    dataset: task.dataset.clone(),
                    anchor_id: task.anchor_id.clone(),
                    candidate_id: task.candidate_id.clone(),
                    final_label,
                    votes,
                    vote_counts,
                    tie,
                    meter: reading,
                };
                if let Some(path) = &options.journal {
                    append_journal(path, &result)?;
                }
                outcomes.push(PairOutcome::Classified(result));
            }
            Err(message) => outcomes.push(PairOutcome::Failed {
                dataset: task.dataset.clone(),
                anchor_id: task.anchor_id.clone(),
                candidate_id: task.candidate_id.clone(),
                message,
            }),
        }
    }
    Ok(BatchResult { outcomes, readings })
}

/// Key identifying a pair in journal maps.
pub fn journal_key(dataset: &str, anchor: &str, candidate: &str) -> String {
    format!("{dataset}\u{1f}{anchor}\u{1f}{candidate}")
}

/// Load a journal into a pair-keyed map.
pub fn read_journal(path: &Path) -> Result<BTreeMap<String, ClassificationResult>> {
    let raw = std::fs::read_to_string(path)?;
    let mut map = BTreeMap::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let result: ClassificationResult =
            serde_json::from_str(line).map_err(|e| Error::Parse {
                location: format!("{}:line {}", path.display(), i + 1),
                message: e.to_string(),
            })?;
        map.insert(
            journal_key(&result.dataset, &result.anchor_id, &result.candidate_id),
            result,
        );
    }
    Ok(map)
}

fn append_journal(path: &Path, result: &ClassificationResult) -> Result<()> {
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    let line = serde_json::to_string(result).map_err(|e| Error::Internal(e.to_string()))?;
    writeln!(file, "{line}")?;
    file.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sustain::{ClockMode, Meter, MeterConfig, MeterSource};

    fn meter() -> Meter {
        Meter::new(MeterConfig {
            power_watts: 30.0,
            source: MeterSource::Modeled,
            clock: ClockMode::FixedStep { fixed_step_s: 0.001 },
        })
        .unwrap()
    }

    fn task(anchor: &str, candidate: &str) -> PairTask {
        PairTask {
            dataset: "toy".into(),
            anchor_id: anchor.into(),
            candidate_id: candidate.into(),
            anchor_text: format!("text of {anchor}"),
            candidate_text: format!("text of {candidate}"),
        }
    }

    const CONFLICT: &str = "{\"label\": \"Conflict\", \"confidence\": 0.9}";
    const NEUTRAL: &str = "{\"label\": \"Neutral\", \"confidence\": 0.8}";
    const GARBAGE: &str = "I cannot decide.";

    #[test]
    fn majority_two_conflict_one_neutral() {
        let client = ReplayClient::from_responses([CONFLICT, CONFLICT, NEUTRAL]);
        let options = BatchOptions::new(Strategy::ZeroShot, "inference:replay:zeroshot");
        let result = classify_pair_voted(&client, &task("a", "b"), &options, &meter()).unwrap();
        assert_eq!(result.final_label, PairLabel::Conflict);
        assert!(!result.tie);
        assert_eq!(result.vote_counts["Conflict"], 2);
        assert_eq!(result.vote_counts["Neutral"], 1);
    }

    #[test]
    fn parse_failure_tie_resolves_by_rule() {
        let client = ReplayClient::from_responses([CONFLICT, GARBAGE, NEUTRAL]);
        let options = BatchOptions::new(Strategy::ZeroShot, "inference:replay:zeroshot");
        let result = classify_pair_voted(&client, &task("a", "b"), &options, &meter()).unwrap();
        assert_eq!(result.final_label, PairLabel::Neutral, "default tie rule");
        assert!(result.tie);
    }

    #[test]
    fn conflict_tie_rule_flips_the_tie() {
        let client = ReplayClient::from_responses([CONFLICT, GARBAGE, NEUTRAL]);
        let mut options = BatchOptions::new(Strategy::ZeroShot, "s");
        options.tie_rule = TieRule::Conflict;
        let result = classify_pair_voted(&client, &task("a", "b"), &options, &meter()).unwrap();
        assert_eq!(result.final_label, PairLabel::Conflict);
        assert!(result.tie);
    }

    #[test]
    fn all_parse_failures_become_classification_error() {
        let client = ReplayClient::constant(GARBAGE);
        let options = BatchOptions::new(Strategy::ZeroShot, "s");
        match classify_pair_voted(&client, &task("a", "b"), &options, &meter()) {
            Err(Error::Classification { anchor_id, .. }) => assert_eq!(anchor_id, "a"),
            other => panic!("expected classification error, got {other:?}"),
        }
    }

    #[test]
    fn deterministic_given_identical_replies() {
        let options = BatchOptions::new(Strategy::ZeroShot, "s");
        let m = meter();
        let one = classify_pair_voted(
            &ReplayClient::constant(CONFLICT),
            &task("a", "b"),
            &options,
            &m,
        )
        .unwrap();
        let two = classify_pair_voted(
            &ReplayClient::constant(CONFLICT),
            &task("a", "b"),
            &options,
            &m,
        )
        .unwrap();
        assert_eq!(one, two);
    }

    #[test]
    fn even_runs_rejected() {
        let mut options = BatchOptions::new(Strategy::ZeroShot, "s");
        options.runs = 2;
        let client = ReplayClient::constant(CONFLICT);
        assert!(matches!(
            classify_pair_voted(&client, &task("a", "b"), &options, &meter()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn majority_invariant_holds_or_tie_is_flagged() {
        let scripts: Vec<Vec<&str>> = vec![
            vec![CONFLICT, CONFLICT, CONFLICT],
            vec![CONFLICT, NEUTRAL, NEUTRAL],
            vec![GARBAGE, NEUTRAL, CONFLICT],
            vec![GARBAGE, GARBAGE, CONFLICT],
        ];
        for script in scripts {
            let client = ReplayClient::from_responses(script);
            let options = BatchOptions::new(Strategy::ZeroShot, "s");
            let r = classify_pair_voted(&client, &task("a", "b"), &options, &meter()).unwrap();
            let winner = r.vote_counts[r.final_label.as_str()];
            let loser: usize = r
                .vote_counts
                .iter()
                .filter(|(k, _)| k.as_str() != r.final_label.as_str())
                .map(|(_, v)| *v)
                .sum();
            assert!(winner > loser || r.tie);
        }
    }

    #[test]
    fn empty_batch_yields_empty_results() {
        let client = ReplayClient::constant(CONFLICT);
        let options = BatchOptions::new(Strategy::ZeroShot, "s");
        let batch = classify_batch(&client, &[], &options, &meter()).unwrap();
        assert!(batch.outcomes.is_empty());
    }

    #[test]
    fn four_pairs_cost_twelve_requests() {
        let client = ReplayClient::constant(CONFLICT);
        let options = BatchOptions::new(Strategy::ZeroShot, "s");
        let tasks: Vec<PairTask> = (0..4).map(|i| task(&format!("a{i}"), "b")).collect();
        let batch = classify_batch(&client, &tasks, &options, &meter()).unwrap();
        assert_eq!(batch.outcomes.len(), 4);
        assert_eq!(client.requests_served(), 12);
        assert_eq!(batch.readings.len(), 4);
    }

    #[test]
    fn journal_resume_skips_finished_pairs() {
        let dir = tempfile::tempdir().unwrap();
        let journal = dir.path().join("journal.jsonl");
        let tasks: Vec<PairTask> = (0..4).map(|i| task(&format!("a{i}"), "b")).collect();
        let mut options = BatchOptions::new(Strategy::ZeroShot, "s");
        options.journal = Some(journal.clone());

        // First invocation sees only the first two pairs (interrupt model).
        let client1 = ReplayClient::constant(CONFLICT);
        let first = classify_batch(&client1, &tasks[..2], &options, &meter()).unwrap();
        assert_eq!(first.outcomes.len(), 2);
        assert_eq!(client1.requests_served(), 6);

        // Second invocation runs the full list; pairs 1-2 come from the
        // journal, only 3-4 hit the client.
        let client2 = ReplayClient::constant(CONFLICT);
        let second = classify_batch(&client2, &tasks, &options, &meter()).unwrap();
        assert_eq!(second.outcomes.len(), 4);
        assert_eq!(client2.requests_served(), 6);
        let journaled = read_journal(&journal).unwrap();
        assert_eq!(journaled.len(), 4);
    }

    #[test]
    fn failed_pairs_are_collected_not_fatal() {
        let client = ReplayClient::from_responses([
            GARBAGE, GARBAGE, GARBAGE, // pair 1 fails
            CONFLICT, CONFLICT, CONFLICT, // pair 2 succeeds
        ]);
        let options = BatchOptions::new(Strategy::ZeroShot, "s");
        let tasks = vec![task("a", "b"), task("c", "d")];
        let batch = classify_batch(&client, &tasks, &options, &meter()).unwrap();
        assert_eq!(batch.failed_count(), 1);
        assert!(matches!(batch.outcomes[0], PairOutcome::Failed { .. }));
        assert!(batch.outcomes[1].result().is_some());
        // Energy of the failed pair is still accounted.
        assert_eq!(batch.readings.len(), 2);
    }

    #[test]
    fn concurrent_votes_match_sequential_tally() {
        let t = task("a", "b");
        let m = meter();
        let sequential = classify_pair_voted(
            &ReplayClient::constant(CONFLICT),
            &t,
            &BatchOptions::new(Strategy::ZeroShot, "s"),
            &m,
        )
        .unwrap();
        let mut options = BatchOptions::new(Strategy::ZeroShot, "s");
        options.max_in_flight = 3;
        let concurrent =
            classify_pair_voted(&ReplayClient::constant(CONFLICT), &t, &options, &m).unwrap();
        assert_eq!(concurrent.final_label, sequential.final_label);
        assert_eq!(concurrent.vote_counts, sequential.vote_counts);
        assert_eq!(concurrent.votes.len(), 3);
    }

    #[test]
    fn few_shot_prompts_cost_more_prompt_tokens() {
        let m = meter();
        let t = task("a", "b");
        let zero_options = BatchOptions::new(Strategy::ZeroShot, "s");
        let zero = classify_pair_voted(&ReplayClient::constant(CONFLICT), &t, &zero_options, &m)
            .unwrap();
        let mut few_options = BatchOptions::new(Strategy::FewShot, "s");
        few_options.shots = default_shots();
        let few =
            classify_pair_voted(&ReplayClient::constant(CONFLICT), &t, &few_options, &m).unwrap();
        for (z, f) in zero.votes.iter().zip(&few.votes) {
            assert!(f.prompt_tokens > z.prompt_tokens);
        }
    }
}
