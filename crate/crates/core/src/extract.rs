//! Rule-based structured-entity extraction.
//!
//! Each requirement is reduced to a set of typed entities in five roles:
//! Actor, Action, Object, Attribute, Condition. The grammar is fixed and
//! fully deterministic:
//!
//! 1. split on the first modal in {shall, must, will, should};
//! 2. Actor = the token span preceding the modal (leading articles
//!    stripped); if a condition introducer occurs before the modal, the
//!    actor span ends there and the introducer opens a pre-modal condition
//!    clause;
//! 3. Action = lemma of the first token after the modal;
//! 4. Condition = each clause opened by an introducer in
//!    {when, if, while, where, unless, until}, running to the next
//!    introducer or the end of the sentence;
//! 5. Attribute = each number+unit bigram and each comparative phrase of
//!    the shape {more, less, at} {than, least, most} number unit;
//! 6. Object = every remaining token between the Action and the first
//!    post-modal introducer that is neither a stopword nor claimed by an
//!    Attribute.
//!
//! Unparseable text yields an empty entity set, never an error. The
//! stopword list and the irregular-verb table ship as plain-text data files
//! (one entry per line) and can be overridden via config.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Requirement;
use crate::error::Result;

/// Bundled 50-word stopword list.
pub const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");
/// Bundled irregular-verb table (`inflected<TAB>lemma` per line).
pub const DEFAULT_IRREGULAR_LEMMAS: &str = include_str!("../data/irregular_lemmas.txt");

pub const MODALS: [&str; 4] = ["shall", "must", "will", "should"];
pub const CONDITION_INTRODUCERS: [&str; 6] = ["when", "if", "while", "where", "unless", "until"];
const ARTICLES: [&str; 3] = ["a", "an", "the"];
const COMPARATIVE_HEADS: [&str; 3] = ["more", "less", "at"];
const COMPARATIVE_LINKS: [&str; 3] = ["than", "least", "most"];

/// The five entity roles.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum EntityKind {
    Actor,
    Action,
    Object,
    Attribute,
    Condition,
}

impl EntityKind {
    pub const ALL: [EntityKind; 5] = [
        EntityKind::Actor,
        EntityKind::Action,
        EntityKind::Object,
        EntityKind::Attribute,
        EntityKind::Condition,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EntityKind::Actor => "Actor",
            EntityKind::Action => "Action",
            EntityKind::Object => "Object",
            EntityKind::Attribute => "Attribute",
            EntityKind::Condition => "Condition",
        }
    }

    pub fn parse(s: &str) -> Option<EntityKind> {
        EntityKind::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A typed entity value. Action values are lemmas; all values are built from
/// normalized tokens.
#[derive(
    Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct Entity {
    pub kind: EntityKind,
    pub value: String,
}

impl Entity {
    pub fn new(kind: EntityKind, value: impl Into<String>) -> Entity {
        Entity {
            kind,
            value: value.into(),
        }
    }
}

/// The deduplicated entities of one requirement. May be empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySet {
    pub requirement_id: String,
    pub entities: BTreeSet<Entity>,
}

impl EntitySet {
    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }
}

/// Lowercased, punctuation-stripped, whitespace-split tokens. Digits are
/// kept, so numbers and units survive as tokens.
pub fn normalize_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let cleaned: String = raw
                .chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect();
            if cleaned.is_empty() {
                None
            } else {
                Some(cleaned)
            }
        })
        .collect()
}

fn is_number(token: &str) -> bool {
    !token.is_empty() && token.chars().all(|c| c.is_ascii_digit())
}

fn is_alphabetic(token: &str) -> bool {
    !token.is_empty() && token.chars().all(char::is_alphabetic)
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u')
}

/// consonant-vowel-consonant ending, the signal for restoring a trailing
/// "e" after suffix removal ("restor" -> "restore").
fn ends_cvc(stem: &str) -> bool {
    let chars: Vec<char> = stem.chars().collect();
    let n = chars.len();
    if n < 3 {
        return false;
    }
    let (c1, v, c2) = (chars[n - 3], chars[n - 2], chars[n - 1]);
    !is_vowel(c1) && is_vowel(v) && !is_vowel(c2) && !matches!(c2, 'w' | 'x' | 'y')
}

/// Rule-based extractor with configurable stopword and irregular-verb
/// tables.
#[derive(Debug, Clone)]
pub struct Extractor {
    stopwords: HashSet<String>,
    irregular: HashMap<String, String>,
}

impl Default for Extractor {
    fn default() -> Self {
        Extractor::new()
    }
}

impl Extractor {
    /// Extractor backed by the bundled data files.
    pub fn new() -> Extractor {
        Extractor {
            stopwords: parse_stopwords(DEFAULT_STOPWORDS),
            irregular: parse_irregular(DEFAULT_IRREGULAR_LEMMAS),
        }
    }

    /// Extractor with tables loaded from the given files; `None` falls back
    /// to the bundled defaults.
    pub fn from_files(stopwords: Option<&Path>, irregular: Option<&Path>) -> Result<Extractor> {
        let stopwords = match stopwords {
            Some(p) => parse_stopwords(&fs::read_to_string(p)?),
            None => parse_stopwords(DEFAULT_STOPWORDS),
        };
        let irregular = match irregular {
            Some(p) => parse_irregular(&fs::read_to_string(p)?),
            None => parse_irregular(DEFAULT_IRREGULAR_LEMMAS),
        };
        Ok(Extractor {
            stopwords,
            irregular,
        })
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(token)
    }

    /// Suffix-stripping lemmatizer over normalized tokens.
    ///
    /// Rule table, applied in order after the irregular lookup:
    /// - `ies` -> `y` (len > 4)
    /// - `sses` -> `ss`
    /// - `xes|ches|shes|zes|oes` -> strip `es`
    /// - other `es`, plain `s` (not `ss`/`us`/`is`) -> strip `s`
    /// - `ing` (len > 5), `ed` (len > 3; `ied` -> `y`) -> strip suffix, then
    ///   repair the stem: undouble a final doubled consonant (except
    ///   l/s/z), append `e` to stems shorter than 3 chars or with a
    ///   consonant-vowel-consonant ending.
    pub fn lemmatize(&self, token: &str) -> String {
        if let Some(lemma) = self.irregular.get(token) {
            return lemma.clone();
        }
        let n = token.len();
        if n <= 3 {
            return token.to_string();
        }
        if n > 4 {
            if let Some(stem) = token.strip_suffix("ies") {
                return format!("{stem}y");
            }
        }
        if let Some(stem) = token.strip_suffix("sses") {
            return format!("{stem}ss");
        }
        if token.ends_with("es") {
            for tail in ["xes", "ches", "shes", "zes", "oes"] {
                if let Some(stem) = token.strip_suffix(tail) {
                    return format!("{stem}{}", &tail[..tail.len() - 2]);
                }
            }
            return token[..n - 1].to_string();
        }
        if token.ends_with('s') && !token.ends_with("ss") && !token.ends_with("us") {
            return token[..n - 1].to_string();
        }
        if n > 5 {
            if let Some(stem) = token.strip_suffix("ing") {
                return repair_stem(stem);
            }
        }
        if let Some(stem) = token.strip_suffix("ied") {
            return format!("{stem}y");
        }
        if let Some(stem) = token.strip_suffix("ed") {
            return repair_stem(stem);
        }
        token.to_string()
    }

    /// Apply the extraction grammar to a requirement. Never fails;
    /// unparseable text yields an empty set.
    pub fn extract(&self, req: &Requirement) -> EntitySet {
        let tokens = normalize_tokens(&req.text);
        let mut entities: BTreeSet<Entity> = BTreeSet::new();

        let claimed = self.collect_attributes(&tokens, &mut entities);

        let modal = tokens
            .iter()
            .position(|t| MODALS.contains(&t.as_str()));

        let introducer_positions: Vec<usize> = tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| CONDITION_INTRODUCERS.contains(&t.as_str()))
            .map(|(i, _)| i)
            .collect();

        // Condition clauses: introducer + 1 up to the next introducer, or up
        // to the modal for clauses that begin before it, or the end.
        for (idx, &p) in introducer_positions.iter().enumerate() {
            let mut end = introducer_positions
                .get(idx + 1)
                .copied()
                .unwrap_or(tokens.len());
            if let Some(m) = modal {
                if p < m {
                    end = end.min(m);
                }
            }
            if p + 1 < end {
                let clause = tokens[p + 1..end].join(" ");
                entities.insert(Entity::new(EntityKind::Condition, clause));
            }
        }

        if let Some(m) = modal {
            // Actor: the pre-modal span, cut at the first pre-modal
            // introducer, with leading articles stripped.
            let actor_end = introducer_positions
                .iter()
                .copied()
                .find(|&p| p < m)
                .unwrap_or(m);
            let mut start = 0;
            while start < actor_end && ARTICLES.contains(&tokens[start].as_str()) {
                start += 1;
            }
            if start < actor_end {
                let span = tokens[start..actor_end].join(" ");
                entities.insert(Entity::new(EntityKind::Actor, span));
            }

            if m + 1 < tokens.len() {
                entities.insert(Entity::new(
                    EntityKind::Action,
                    self.lemmatize(&tokens[m + 1]),
                ));

                // Objects: tokens after the action, before the first
                // post-modal introducer.
                let object_end = introducer_positions
                    .iter()
                    .copied()
                    .find(|&p| p > m)
                    .unwrap_or(tokens.len());
                for (i, t) in tokens.iter().enumerate().take(object_end).skip(m + 2) {
                    if claimed.contains(&i) || self.is_stopword(t) {
                        continue;
                    }
                    entities.insert(Entity::new(EntityKind::Object, t.clone()));
                }
            }
        }

        EntitySet {
            requirement_id: req.id.clone(),
            entities,
        }
    }

    /// Attribute entities plus the set of token indices they claim.
    fn collect_attributes(
        &self,
        tokens: &[String],
        entities: &mut BTreeSet<Entity>,
    ) -> HashSet<usize> {
        let mut claimed: HashSet<usize> = HashSet::new();
        for i in 0..tokens.len() {
            if i + 3 < tokens.len()
                && COMPARATIVE_HEADS.contains(&tokens[i].as_str())
                && COMPARATIVE_LINKS.contains(&tokens[i + 1].as_str())
                && is_number(&tokens[i + 2])
                && is_alphabetic(&tokens[i + 3])
            {
                entities.insert(Entity::new(
                    EntityKind::Attribute,
                    tokens[i..i + 4].join(" "),
                ));
                claimed.extend(i..i + 4);
            }
        }
        for i in 0..tokens.len().saturating_sub(1) {
            if is_number(&tokens[i]) && is_alphabetic(&tokens[i + 1]) {
                entities.insert(Entity::new(
                    EntityKind::Attribute,
                    tokens[i..i + 2].join(" "),
                ));
                claimed.extend(i..i + 2);
            }
        }
        claimed
    }
}

fn repair_stem(stem: &str) -> String {
    let chars: Vec<char> = stem.chars().collect();
    let n = chars.len();
    if n >= 2 && chars[n - 1] == chars[n - 2] && !is_vowel(chars[n - 1]) {
        if !matches!(chars[n - 1], 'l' | 's' | 'z') {
            return stem[..stem.len() - 1].to_string();
        }
        return stem.to_string();
    }
    if n < 3 || ends_cvc(stem) {
        return format!("{stem}e");
    }
    stem.to_string()
}

fn parse_stopwords(raw: &str) -> HashSet<String> {
    raw.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

fn parse_irregular(raw: &str) -> HashMap<String, String> {
    raw.lines()
        .filter_map(|l| {
            let mut parts = l.split_whitespace();
            match (parts.next(), parts.next()) {
                (Some(infl), Some(lemma)) => Some((infl.to_string(), lemma.to_string())),
                _ => None,
            }
        })
        .collect()
}
