//! Prompt construction for the three strategies and strict parsing of model
//! replies.
//!
//! All three prompts share the task framing and the label definitions; they
//! differ only in their distinguishing section: nothing extra (zero-shot),
//! an `Examples:` block (few-shot), or internal `Thinking guidance`
//! (chain-of-thought). Rendering is byte-stable so identical specs produce
//! identical requests.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::PairLabel;
use crate::error::{Error, Result};

/// Bundled default few-shot exemplars.
pub const DEFAULT_SHOTS: &str = include_str!("../../data/shots.json");

/// Prompting strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "zeroshot")]
    ZeroShot,
    #[serde(rename = "fewshot")]
    FewShot,
    #[serde(rename = "cot")]
    ChainOfThought,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::ZeroShot => "zeroshot",
            Strategy::FewShot => "fewshot",
            Strategy::ChainOfThought => "cot",
        }
    }
}

/// One few-shot exemplar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shot {
    pub anchor: String,
    pub candidate: String,
    pub label: PairLabel,
}

/// Load a shots file: a JSON array of `{anchor, candidate, label}`.
pub fn load_shots(path: &Path) -> Result<Vec<Shot>> {
    let raw = fs::read_to_string(path)?;
    serde_json::from_str(&raw).map_err(|e| Error::Parse {
        location: path.display().to_string(),
        message: e.to_string(),
    })
}

/// The bundled default shots (one Conflict, one Neutral, one Conflict).
pub fn default_shots() -> Vec<Shot> {
    serde_json::from_str(DEFAULT_SHOTS).expect("bundled shots file is valid")
}

/// A fully specified prompt. Shots must be present exactly when the
/// strategy is few-shot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub strategy: Strategy,
    pub anchor_text: String,
    pub candidate_text: String,
    #[serde(default)]
    pub shots: Vec<Shot>,
}

impl PromptSpec {
    pub fn new(strategy: Strategy, anchor: impl Into<String>, candidate: impl Into<String>) -> Self {
        PromptSpec {
            strategy,
            anchor_text: anchor.into(),
            candidate_text: candidate.into(),
            shots: Vec::new(),
        }
    }

    pub fn with_shots(mut self, shots: Vec<Shot>) -> Self {
        self.shots = shots;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match (self.strategy, self.shots.is_empty()) {
            (Strategy::FewShot, true) => Err(Error::Validation(
                "few-shot prompts require at least one shot".into(),
            )),
            (Strategy::FewShot, false) => Ok(()),
            (_, false) => Err(Error::Validation(format!(
                "{} prompts must not carry shots",
                self.strategy.as_str()
            ))),
            (_, true) => Ok(()),
        }
    }
}

const HEADER: &str = "Task context: You are a requirements analyst.\n\
Goal: Given an ANCHOR requirement and one CANDIDATE requirement, classify the candidate as:\n\
- Conflicts with the Anchor\n\
- Neutral to the Anchor\n\
\n\
Label definitions\n\
Conflict: Requirements cannot both be true/satisfied simultaneously. They impose incompatible or contradictory constraints.\n\
Neutral: Requirements describe different, unrelated or independent behaviour.\n";

const THINKING_GUIDANCE: &str = "Thinking guidance (internal only)\n\
1. Identify entities, constraints\n\
2. Compare names, quantities, conditions\n\
3. Decide conflict / neutral. Do NOT reveal reasoning\n";

const JSON_CONTRACT_ZERO_SHOT: &str = "IMPORTANT:\n\
Return only the following JSON format - no extra text:\n\
{\n  \"label\": \"Conflict\" or \"Neutral\",\n  \"confidence\": <0-1>\n}\n";

const JSON_CONTRACT_STRICT: &str = "MUST return your final answer strictly in the following JSON format. \
Do NOT include any text before or after the JSON:\n\
{\n  \"label\": \"Conflict\" or \"Neutral\",\n  \"confidence\": <0-1>\n}\n";

/// Byte-stable rendering of a prompt spec.
pub fn render_prompt(spec: &PromptSpec) -> Result<String> {
    spec.validate()?;
    let pair = format!(
        "ANCHOR: \"{}\"\nCANDIDATE: \"{}\"\n",
        spec.anchor_text, spec.candidate_text
    );
    let rendered = match spec.strategy {
        Strategy::ZeroShot => format!("{HEADER}\n{pair}\n{JSON_CONTRACT_ZERO_SHOT}"),
        Strategy::FewShot => {
            let mut examples = String::from("Examples:\n");
            for (i, shot) in spec.shots.iter().enumerate() {
                examples.push_str(&format!(
                    "\nExample {}:\nANCHOR: \"{}\"\nCANDIDATE: \"{}\"\n{{\"label\": \"{}\", \"confidence\": 1.0}}\n",
                    i + 1,
                    shot.anchor,
                    shot.candidate,
                    shot.label
                ));
            }
            format!("{HEADER}\n{examples}\n{pair}\n{JSON_CONTRACT_STRICT}")
        }
        Strategy::ChainOfThought => {
            format!("{HEADER}\n{THINKING_GUIDANCE}\n{pair}\n{JSON_CONTRACT_STRICT}")
        }
    };
    Ok(rendered)
}

/// A successfully parsed model reply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParsedReply {
    pub label: PairLabel,
    pub confidence: f64,
}

/// Extract the first balanced `{...}` block and read `label` and
/// `confidence` from it. Labels parse case-insensitively; confidence is
/// coerced to a real and clamped to [0, 1]. Surrounding prose is tolerated.
pub fn parse_response(raw: &str) -> std::result::Result<ParsedReply, ParseFailure> {
    let block = first_json_block(raw).ok_or_else(|| ParseFailure::new(raw, "no JSON block"))?;
    let value: serde_json::Value = serde_json::from_str(block)
        .map_err(|e| ParseFailure::new(raw, &format!("invalid JSON block: {e}")))?;
    let label_raw = value
        .get("label")
        .and_then(|v| v.as_str())
        .ok_or_else(|| ParseFailure::new(raw, "missing label"))?;
    let label = PairLabel::parse(label_raw)
        .ok_or_else(|| ParseFailure::new(raw, &format!("unknown label '{label_raw}'")))?;
    let confidence = match value.get("confidence") {
        Some(serde_json::Value::Number(n)) => n.as_f64(),
        Some(serde_json::Value::String(s)) => s.trim().parse::<f64>().ok(),
        _ => None,
    }
    .ok_or_else(|| ParseFailure::new(raw, "missing or unparseable confidence"))?;
    Ok(ParsedReply {
        label,
        confidence: confidence.clamp(0.0, 1.0),
    })
}

/// A reply that violated the output contract; carries the raw text.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseFailure {
    pub raw_text: String,
    pub reason: String,
}

impl ParseFailure {
    fn new(raw: &str, reason: &str) -> ParseFailure {
        ParseFailure {
            raw_text: raw.to_string(),
            reason: reason.to_string(),
        }
    }
}

/// First balanced brace block, respecting JSON string syntax.
fn first_json_block(raw: &str) -> Option<&str> {
    let bytes = raw.as_bytes();
    let start = raw.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&raw[start..=i]);
                }
            }
            _ => {}
        }
    }
    None
}
