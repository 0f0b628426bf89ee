//! Dataset ingestion, deduplication, pair management, and descriptive
//! statistics.
//!
//! A [`Dataset`] holds the requirements of one source corpus together with
//! its labeled pairs and the ground-truth map derived from them (anchor id to
//! the set of candidates labeled Conflict). Requirements arrive as CSV
//! (`id,text` header, RFC 4180 quoting) or as a JSON array of
//! `{"id": ..., "text": ...}` objects; pairs as CSV with header
//! `anchor_id,candidate_id,label`.
//!
//! Text normalization for deduplication and token statistics is deliberately
//! weak: lowercase, trim, collapse internal whitespace runs, strip terminal
//! punctuation. It catches formatting duplicates without attempting any
//! linguistic equivalence.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dependency label of a requirement pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PairLabel {
    Conflict,
    Neutral,
}

impl PairLabel {
    /// Case-insensitive parse; returns `None` for unknown labels.
    pub fn parse(s: &str) -> Option<PairLabel> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("conflict") {
            Some(PairLabel::Conflict)
        } else if t.eq_ignore_ascii_case("neutral") {
            Some(PairLabel::Neutral)
        } else {
            None
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            PairLabel::Conflict => "Conflict",
            PairLabel::Neutral => "Neutral",
        }
    }
}

impl fmt::Display for PairLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A single natural-language requirement with a stable id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Requirement {
    pub id: String,
    pub source: String,
    pub text: String,
}

/// A labeled (anchor, candidate) pair within one source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequirementPair {
    pub anchor_id: String,
    pub candidate_id: String,
    pub label: PairLabel,
}

/// Input file format for requirement files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Csv,
    Json,
}

/// One source corpus: requirements, labeled pairs, and the ground-truth map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub source: String,
    pub requirements: Vec<Requirement>,
    pub pairs: Vec<RequirementPair>,
    /// anchor id -> set of candidate ids labeled Conflict.
    pub ground_truth: BTreeMap<String, BTreeSet<String>>,
}

/// Class distribution and token statistics of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRecord {
    pub conflict_count: usize,
    pub neutral_count: usize,
    /// Mean whitespace-token counts of (anchor texts, candidate texts) over
    /// all pairs.
    pub avg_tokens_pair: (f64, f64),
    /// Number of distinct normalized whitespace tokens across all
    /// requirement texts.
    pub vocabulary_size: usize,
}

/// Normalize text for deduplication and token statistics: lowercase, trim,
/// collapse whitespace runs, strip terminal punctuation.
pub fn normalize_text(text: &str) -> String {
    let lowered = text.to_lowercase();
    let collapsed: String = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_end_matches(|c: char| c.is_ascii_punctuation())
        .trim_end()
        .to_string()
}

/// The module's whitespace tokenizer: [`normalize_text`] then split on
/// whitespace.
pub fn whitespace_tokens(text: &str) -> Vec<String> {
    normalize_text(text)
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Deserialize)]
struct RequirementRow {
    id: String,
    text: String,
}

impl Dataset {
    /// Load requirements from `path` in the given format. `source` is the
    /// dataset identifier stored on every requirement.
    pub fn load_requirements(path: &Path, format: DataFormat, source: &str) -> Result<Dataset> {
        let rows = match format {
            DataFormat::Csv => read_requirement_csv(path)?,
            DataFormat::Json => read_requirement_json(path)?,
        };
        let mut seen: HashMap<String, ()> = HashMap::new();
        let mut requirements = Vec::with_capacity(rows.len());
        for (location, row) in rows {
            if row.id.trim().is_empty() {
                return Err(Error::Parse {
                    location,
                    message: "empty requirement id".into(),
                });
            }
            if row.text.trim().is_empty() {
                return Err(Error::Parse {
                    location,
                    message: format!("requirement '{}' has empty text", row.id),
                });
            }
            if seen.insert(row.id.clone(), ()).is_some() {
                return Err(Error::Integrity(format!(
                    "duplicate requirement id '{}' in {}",
                    row.id,
                    path.display()
                )));
            }
            requirements.push(Requirement {
                id: row.id,
                source: source.to_string(),
                text: row.text,
            });
        }
        Ok(Dataset {
            source: source.to_string(),
            requirements,
            pairs: Vec::new(),
            ground_truth: BTreeMap::new(),
        })
    }

    /// Load labeled pairs from a CSV file and rebuild the ground-truth map.
    /// Every referenced id must resolve within this dataset.
    pub fn load_pairs(&mut self, path: &Path) -> Result<()> {
        let pairs = read_pairs_csv(path)?;
        let ids: BTreeSet<&str> = self.requirements.iter().map(|r| r.id.as_str()).collect();
        for p in &pairs {
            for id in [&p.anchor_id, &p.candidate_id] {
                if !ids.contains(id.as_str()) {
                    return Err(Error::Integrity(format!(
                        "pair references unknown requirement id '{}' in {}",
                        id,
                        path.display()
                    )));
                }
            }
            if p.anchor_id == p.candidate_id {
                return Err(Error::Integrity(format!(
                    "self-pair ({0}, {0}) in {1}",
                    p.anchor_id,
                    path.display()
                )));
            }
        }
        self.ground_truth = build_ground_truth(&pairs);
        self.pairs = pairs;
        Ok(())
    }

    pub fn requirement(&self, id: &str) -> Option<&Requirement> {
        self.requirements.iter().find(|r| r.id == id)
    }

    pub fn text_of(&self, id: &str) -> Result<&str> {
        self.requirement(id)
            .map(|r| r.text.as_str())
            .ok_or_else(|| Error::Lookup(format!("unknown requirement id '{id}'")))
    }

    /// Collapse requirements with identical normalized text onto the
    /// first-seen id, remap pairs and ground truth to the surviving ids, drop
    /// self-pairs produced by remapping, and drop duplicate pairs keeping the
    /// first occurrence. Idempotent.
    pub fn deduplicate(&self) -> Dataset {
        let mut survivor_by_norm: HashMap<String, String> = HashMap::new();
        let mut remap: HashMap<String, String> = HashMap::new();
        let mut requirements = Vec::new();
        for r in &self.requirements {
            let norm = normalize_text(&r.text);
            match survivor_by_norm.get(&norm) {
                Some(survivor) => {
                    remap.insert(r.id.clone(), survivor.clone());
                }
                None => {
                    survivor_by_norm.insert(norm, r.id.clone());
                    remap.insert(r.id.clone(), r.id.clone());
                    requirements.push(r.clone());
                }
            }
        }
        let mut seen_pairs: BTreeSet<(String, String)> = BTreeSet::new();
        let mut pairs = Vec::new();
        for p in &self.pairs {
            let anchor = remap[&p.anchor_id].clone();
            let candidate = remap[&p.candidate_id].clone();
            if anchor == candidate {
                continue;
            }
            if !seen_pairs.insert((anchor.clone(), candidate.clone())) {
                continue;
            }
            pairs.push(RequirementPair {
                anchor_id: anchor,
                candidate_id: candidate,
                label: p.label,
            });
        }
        let ground_truth = build_ground_truth(&pairs);
        Dataset {
            source: self.source.clone(),
            requirements,
            pairs,
            ground_truth,
        }
    }

    /// Class counts, mean token counts per pair side, and vocabulary size.
    pub fn stats(&self) -> StatsRecord {
        let conflict_count = self
            .pairs
            .iter()
            .filter(|p| p.label == PairLabel::Conflict)
            .count();
        let neutral_count = self.pairs.len() - conflict_count;

        let token_count = |id: &str| -> f64 {
            self.requirement(id)
                .map(|r| whitespace_tokens(&r.text).len() as f64)
                .unwrap_or(0.0)
        };
        let avg_tokens_pair = if self.pairs.is_empty() {
            (0.0, 0.0)
        } else {
            let n = self.pairs.len() as f64;
            let anchor_sum: f64 = self.pairs.iter().map(|p| token_count(&p.anchor_id)).sum();
            let cand_sum: f64 = self
                .pairs
                .iter()
                .map(|p| token_count(&p.candidate_id))
                .sum();
            (anchor_sum / n, cand_sum / n)
        };

        let mut vocabulary: BTreeSet<String> = BTreeSet::new();
        for r in &self.requirements {
            vocabulary.extend(whitespace_tokens(&r.text));
        }
        StatsRecord {
            conflict_count,
            neutral_count,
            avg_tokens_pair,
            vocabulary_size: vocabulary.len(),
        }
    }

    /// Write requirements back to the documented CSV schema.
    pub fn write_requirements_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Internal(e.to_string()))?;
        w.write_record(["id", "text"])
            .map_err(|e| Error::Internal(e.to_string()))?;
        for r in &self.requirements {
            w.write_record([r.id.as_str(), r.text.as_str()])
                .map_err(|e| Error::Internal(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Write pairs back to the documented CSV schema with canonical label
    /// case.
    pub fn write_pairs_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Internal(e.to_string()))?;
        w.write_record(["anchor_id", "candidate_id", "label"])
            .map_err(|e| Error::Internal(e.to_string()))?;
        for p in &self.pairs {
            w.write_record([p.anchor_id.as_str(), p.candidate_id.as_str(), p.label.as_str()])
                .map_err(|e| Error::Internal(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// ground truth: for each anchor, the set of candidates labeled Conflict.
pub fn build_ground_truth(pairs: &[RequirementPair]) -> BTreeMap<String, BTreeSet<String>> {
    let mut truth: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for p in pairs {
        if p.label == PairLabel::Conflict {
            truth
                .entry(p.anchor_id.clone())
                .or_default()
                .insert(p.candidate_id.clone());
        }
    }
    truth
}

/// Remove, from every dataset after the first occurrence, requirements whose
/// normalized text already appeared in an earlier dataset. Pairs referencing
/// a removed requirement are dropped (ids cannot be remapped across
/// sources). Within-source duplicates are left to [`Dataset::deduplicate`].
pub fn deduplicate_cross_source(datasets: Vec<Dataset>) -> Vec<Dataset> {
    let mut seen_earlier: HashMap<String, ()> = HashMap::new();
    let mut out = Vec::with_capacity(datasets.len());
    for ds in datasets {
        let mut kept_ids: BTreeSet<String> = BTreeSet::new();
        let mut requirements = Vec::new();
        let mut seen_here: Vec<String> = Vec::new();
        for r in ds.requirements {
            let norm = normalize_text(&r.text);
            if seen_earlier.contains_key(&norm) {
                continue;
            }
            seen_here.push(norm);
            kept_ids.insert(r.id.clone());
            requirements.push(r);
        }
        for norm in seen_here {
            seen_earlier.insert(norm, ());
        }
        let pairs: Vec<RequirementPair> = ds
            .pairs
            .into_iter()
            .filter(|p| kept_ids.contains(&p.anchor_id) && kept_ids.contains(&p.candidate_id))
            .collect();
        let ground_truth = build_ground_truth(&pairs);
        out.push(Dataset {
            source: ds.source,
            requirements,
            pairs,
            ground_truth,
        });
    }
    out
}

fn read_requirement_csv(path: &Path) -> Result<Vec<(String, RequirementRow)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Parse {
            location: path.display().to_string(),
            message: e.to_string(),
        })?;
    check_headers(&mut reader, &["id", "text"], path)?;
    let mut rows = Vec::new();
    for (i, record) in reader.deserialize::<RequirementRow>().enumerate() {
        // +2: one for the header line, one for 1-based numbering.
        let location = format!("{}:row {}", path.display(), i + 2);
        let row = record.map_err(|e| Error::Parse {
            location: location.clone(),
            message: e.to_string(),
        })?;
        rows.push((location, row));
    }
    Ok(rows)
}

fn read_requirement_json(path: &Path) -> Result<Vec<(String, RequirementRow)>> {
    let raw = fs::read_to_string(path)?;
    let rows: Vec<RequirementRow> = serde_json::from_str(&raw).map_err(|e| Error::Parse {
        location: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(rows
        .into_iter()
        .enumerate()
        .map(|(i, row)| (format!("{}:item {}", path.display(), i), row))
        .collect())
}

/// Read a pairs CSV (`anchor_id,candidate_id,label`); labels parse
/// case-insensitively.
pub fn read_pairs_csv(path: &Path) -> Result<Vec<RequirementPair>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Parse {
            location: path.display().to_string(),
            message: e.to_string(),
        })?;
    check_headers(&mut reader, &["anchor_id", "candidate_id", "label"], path)?;
    let mut pairs = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let location = format!("{}:row {}", path.display(), i + 2);
        let record = record.map_err(|e| Error::Parse {
            location: location.clone(),
            message: e.to_string(),
        })?;
        if record.len() != 3 {
            return Err(Error::Parse {
                location,
                message: format!("expected 3 fields, found {}", record.len()),
            });
        }
        let label = PairLabel::parse(&record[2]).ok_or_else(|| Error::Parse {
            location: location.clone(),
            message: format!("unknown label '{}'", &record[2]),
        })?;
        pairs.push(RequirementPair {
            anchor_id: record[0].to_string(),
            candidate_id: record[1].to_string(),
            label,
        });
    }
    Ok(pairs)
}

fn check_headers(reader: &mut csv::Reader<fs::File>, expected: &[&str], path: &Path) -> Result<()> {
    let headers = reader.headers().map_err(|e| Error::Parse {
        location: path.display().to_string(),
        message: e.to_string(),
    })?;
    let actual: Vec<&str> = headers.iter().map(str::trim).collect();
    if actual != expected {
        return Err(Error::Parse {
            location: format!("{}:row 1", path.display()),
            message: format!("expected header {:?}, found {:?}", expected, actual),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(contents: &str, ext: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(ext).tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn dataset(reqs: &[(&str, &str)], pairs: &[(&str, &str, PairLabel)]) -> Dataset {
        let requirements = reqs
            .iter()
            .map(|(id, text)| Requirement {
                id: id.to_string(),
                source: "test".into(),
                text: text.to_string(),
            })
            .collect();
        let pairs: Vec<RequirementPair> = pairs
            .iter()
            .map(|(a, c, l)| RequirementPair {
                anchor_id: a.to_string(),
                candidate_id: c.to_string(),
                label: *l,
            })
            .collect();
        let ground_truth = build_ground_truth(&pairs);
        Dataset {
            source: "test".into(),
            requirements,
            pairs,
            ground_truth,
        }
    }

    #[test]
    fn loads_three_row_csv() {
        let f = write_temp("id,text\nr1,The UAV shall land\nr2,The UAV shall hover\nr3,other\n", ".csv");
        let ds = Dataset::load_requirements(f.path(), DataFormat::Csv, "t").unwrap();
        assert_eq!(ds.requirements.len(), 3);
        assert_eq!(ds.requirements[0].id, "r1");
        assert_eq!(ds.requirements[2].text, "other");
    }

    #[test]
    fn empty_text_row_is_parse_error_naming_row() {
        let f = write_temp("id,text\nr1,The UAV shall land\nr2,\n", ".csv");
        let err = Dataset::load_requirements(f.path(), DataFormat::Csv, "t").unwrap_err();
        match err {
            Error::Parse { location, .. } => assert!(location.ends_with("row 3"), "{location}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_id_is_integrity_error() {
        let f = write_temp("id,text\nr1,a requirement\nr1,another\n", ".csv");
        let err = Dataset::load_requirements(f.path(), DataFormat::Csv, "t").unwrap_err();
        assert!(matches!(err, Error::Integrity(_)));
    }

    #[test]
    fn loads_json_array_in_input_order() {
        let items: Vec<String> = (0..10)
            .map(|i| format!("{{\"id\": \"r{i}\", \"text\": \"requirement number {i}\"}}"))
            .collect();
        let f = write_temp(&format!("[{}]", items.join(",")), ".json");
        let ds = Dataset::load_requirements(f.path(), DataFormat::Json, "t").unwrap();
        assert_eq!(ds.requirements.len(), 10);
        for (i, r) in ds.requirements.iter().enumerate() {
            assert_eq!(r.id, format!("r{i}"));
        }
    }

    #[test]
    fn ground_truth_collects_conflict_candidates() {
        let mut ds = dataset(
            &[("r1", "alpha one"), ("r2", "beta two"), ("r3", "gamma three")],
            &[],
        );
        let f = write_temp(
            "anchor_id,candidate_id,label\nr1,r2,Conflict\nr1,r3,Neutral\n",
            ".csv",
        );
        ds.load_pairs(f.path()).unwrap();
        assert_eq!(ds.pairs.len(), 2);
        let g1 = ds.ground_truth.get("r1").unwrap();
        assert_eq!(g1.iter().collect::<Vec<_>>(), vec!["r2"]);
        assert!(!ds.ground_truth.contains_key("r3"));
    }

    #[test]
    fn multi_conflict_anchor_has_multi_label_truth() {
        let ds = dataset(
            &[("r1", "alpha"), ("r2", "beta"), ("r3", "gamma")],
            &[
                ("r1", "r2", PairLabel::Conflict),
                ("r1", "r3", PairLabel::Conflict),
            ],
        );
        assert_eq!(ds.ground_truth["r1"].len(), 2);
    }

    #[test]
    fn pair_label_counts_match_table_scale_fixture() {
        // Same class distribution as the largest corpus this tool targets:
        // 5,553 Conflict and 3,400 Neutral pairs.
        let mut body = String::from("anchor_id,candidate_id,label\n");
        for i in 0..5_553 {
            body.push_str(&format!("a{i},b{i},conflict\n"));
        }
        for i in 0..3_400 {
            body.push_str(&format!("c{i},d{i},NEUTRAL\n"));
        }
        let f = write_temp(&body, ".csv");
        let pairs = read_pairs_csv(f.path()).unwrap();
        let conflicts = pairs.iter().filter(|p| p.label == PairLabel::Conflict).count();
        assert_eq!(conflicts, 5_553);
        assert_eq!(pairs.len() - conflicts, 3_400);
    }

    #[test]
    fn unknown_label_is_parse_error() {
        let f = write_temp("anchor_id,candidate_id,label\nr1,r2,Maybe\n", ".csv");
        let err = read_pairs_csv(f.path()).unwrap_err();
        match err {
            Error::Parse { location, message } => {
                assert!(location.ends_with("row 2"), "{location}");
                assert!(message.contains("Maybe"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_pair_id_is_integrity_error() {
        let mut ds = dataset(&[("r1", "alpha")], &[]);
        let f = write_temp("anchor_id,candidate_id,label\nr1,r9,Conflict\n", ".csv");
        assert!(matches!(ds.load_pairs(f.path()), Err(Error::Integrity(_))));
    }

    #[test]
    fn dedup_collapses_identical_text_and_remaps_pairs() {
        let ds = dataset(
            &[("r1", "the uav shall land"), ("r2", "the uav shall land"), ("r3", "other text")],
            &[("r2", "r3", PairLabel::Conflict)],
        );
        let d = ds.deduplicate();
        assert_eq!(d.requirements.len(), 2);
        assert_eq!(d.pairs[0].anchor_id, "r1");
        assert_eq!(d.ground_truth["r1"].iter().collect::<Vec<_>>(), vec!["r3"]);
    }

    #[test]
    fn dedup_normalizes_case_and_whitespace() {
        let ds = dataset(
            &[("r1", "The UAV  shall land."), ("r2", "the uav shall land")],
            &[],
        );
        assert_eq!(ds.deduplicate().requirements.len(), 1);
    }

    #[test]
    fn dedup_drops_self_pairs_produced_by_remapping() {
        let ds = dataset(
            &[("r1", "same text"), ("r2", "same text")],
            &[("r1", "r2", PairLabel::Conflict)],
        );
        let d = ds.deduplicate();
        assert!(d.pairs.is_empty());
        assert!(d.ground_truth.is_empty());
    }

    #[test]
    fn dedup_without_duplicates_is_identity() {
        let ds = dataset(
            &[("r1", "alpha"), ("r2", "beta")],
            &[("r1", "r2", PairLabel::Neutral)],
        );
        assert_eq!(ds.deduplicate(), ds);
    }

    #[test]
    fn stats_counts_and_tokens() {
        let ds = dataset(
            &[("r1", "one two three four"), ("r2", "a b c d e f")],
            &[
                ("r1", "r2", PairLabel::Conflict),
                ("r2", "r1", PairLabel::Conflict),
                ("r1", "r2", PairLabel::Neutral),
            ],
        );
        let s = ds.stats();
        assert_eq!(s.conflict_count, 2);
        assert_eq!(s.neutral_count, 1);
        assert_eq!(s.conflict_count + s.neutral_count, ds.pairs.len());
    }

    #[test]
    fn avg_tokens_pair_is_per_side() {
        let ds = dataset(
            &[("r1", "one two three four"), ("r2", "a b c d e f")],
            &[("r1", "r2", PairLabel::Conflict)],
        );
        assert_eq!(ds.stats().avg_tokens_pair, (4.0, 6.0));
    }

    #[test]
    fn vocabulary_counts_distinct_whitespace_tokens() {
        let ds = dataset(&[("r1", "the uav shall land / the uav shall hover")], &[]);
        assert_eq!(ds.stats().vocabulary_size, 6);
    }

    #[test]
    fn csv_round_trip_preserves_dataset() {
        let ds = dataset(
            &[("r1", "the uav, \"quoted\" text"), ("r2", "plain text")],
            &[("r1", "r2", PairLabel::Conflict)],
        );
        let dir = tempfile::tempdir().unwrap();
        let rp = dir.path().join("reqs.csv");
        let pp = dir.path().join("pairs.csv");
        ds.write_requirements_csv(&rp).unwrap();
        ds.write_pairs_csv(&pp).unwrap();
        let mut back = Dataset::load_requirements(&rp, DataFormat::Csv, "test").unwrap();
        back.load_pairs(&pp).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn cross_source_dedup_drops_later_copies() {
        let a = dataset(&[("r1", "shared text"), ("r2", "unique a")], &[]);
        let mut b = dataset(&[("x1", "shared text"), ("x2", "unique b")], &[]);
        b.source = "other".into();
        b.pairs = vec![RequirementPair {
            anchor_id: "x1".into(),
            candidate_id: "x2".into(),
            label: PairLabel::Conflict,
        }];
        b.ground_truth = build_ground_truth(&b.pairs);
        let out = deduplicate_cross_source(vec![a, b]);
        assert_eq!(out[0].requirements.len(), 2);
        assert_eq!(out[1].requirements.len(), 1);
        assert!(out[1].pairs.is_empty(), "pair referencing dropped id is removed");
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_dataset() -> impl Strategy<Value = Dataset> {
            let text = proptest::sample::select(vec![
                "the uav shall land",
                "The UAV shall land.",
                "the system shall log requests",
                "power must stay on",
                "unique gamma text",
            ]);
            proptest::collection::vec(text, 1..8).prop_map(|texts| {
                let reqs: Vec<(String, String)> = texts
                    .into_iter()
                    .enumerate()
                    .map(|(i, t)| (format!("r{i}"), t.to_string()))
                    .collect();
                let pairs: Vec<RequirementPair> = reqs
                    .windows(2)
                    .map(|w| RequirementPair {
                        anchor_id: w[0].0.clone(),
                        candidate_id: w[1].0.clone(),
                        label: PairLabel::Conflict,
                    })
                    .collect();
                let requirements = reqs
                    .into_iter()
                    .map(|(id, text)| Requirement {
                        id,
                        source: "p".into(),
                        text,
                    })
                    .collect();
                let ground_truth = build_ground_truth(&pairs);
                Dataset {
                    source: "p".into(),
                    requirements,
                    pairs,
                    ground_truth,
                }
            })
        }

        proptest! {
            #[test]
            fn dedup_is_idempotent(ds in arb_dataset()) {
                let once = ds.deduplicate();
                prop_assert_eq!(once.deduplicate(), once);
            }

            #[test]
            fn class_counts_sum_to_pair_count(ds in arb_dataset()) {
                let s = ds.stats();
                prop_assert_eq!(s.conflict_count + s.neutral_count, ds.pairs.len());
            }
        }
    }
}
