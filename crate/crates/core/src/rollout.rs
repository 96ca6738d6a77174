//! Rollouts, prompt groups, JSONL ingestion and boxed-answer extraction.

use std::io::{BufRead, Write};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::embeddings::{l2_normalize, UNIT_NORM_TOLERANCE};
use crate::error::{Error, Result};

const BOX_OPEN: &str = "\\boxed{";

/// One sampled response.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub id: String,
    pub prompt_id: String,
    pub text: String,
    /// `text` with the final boxed segment (and anything after it) removed.
    pub reasoning: String,
    pub answer: Option<String>,
    pub embedding: Option<Vec<f64>>,
    pub token_logprobs_old: Option<Vec<f64>>,
    pub length: usize,
}

impl Rollout {
    /// Build a rollout from raw text, running answer extraction and the
    /// reasoning split. Length defaults to the whitespace token count.
    pub fn from_text(id: impl Into<String>, prompt_id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let length = text.split_whitespace().count().max(1);
        Rollout {
            id: id.into(),
            prompt_id: prompt_id.into(),
            answer: extract_final_answer(&text),
            reasoning: split_reasoning(&text).to_owned(),
            text,
            embedding: None,
            token_logprobs_old: None,
            length,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.answer.is_some()
    }
}

/// All rollouts sampled for a single prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptGroup {
    pub prompt_id: String,
    pub rollouts: Vec<Rollout>,
}

impl PromptGroup {
    /// Checks the group invariants: non-empty, shared prompt id, distinct ids.
    pub fn new(prompt_id: impl Into<String>, rollouts: Vec<Rollout>) -> Result<Self> {
        let prompt_id = prompt_id.into();
        if rollouts.is_empty() {
            return Err(Error::InvalidArgument(format!("prompt `{prompt_id}` has no rollouts")));
        }
        let mut seen = std::collections::HashSet::new();
        for r in &rollouts {
            if r.prompt_id != prompt_id {
                return Err(Error::InvalidArgument(format!(
                    "rollout `{}` belongs to prompt `{}`, not `{prompt_id}`",
                    r.id, r.prompt_id
                )));
            }
            if !seen.insert(r.id.as_str()) {
                return Err(Error::DuplicateId { id: r.id.clone(), prompt_id });
            }
        }
        Ok(PromptGroup { prompt_id, rollouts })
    }

    pub fn len(&self) -> usize {
        self.rollouts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rollouts.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.rollouts.iter().map(|r| r.id.as_str())
    }
}

/// Byte offsets `(start_of_command, end_exclusive)` of the last `\boxed{`
/// occurrence, with `end` present only when its braces balance.
fn last_box(text: &str) -> Option<(usize, Option<usize>)> {
    let start = text.rfind(BOX_OPEN)?;
    let body = start + BOX_OPEN.len();
    let mut depth = 1usize;
    for (off, ch) in text[body..].char_indices() {
        match ch {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some((start, Some(body + off)));
                }
            }
            _ => {}
        }
    }
    Some((start, None))
}

/// Content of the final `\boxed{...}`, trimmed, if it balances and contains
/// at least one ASCII digit.
pub fn extract_final_answer(text: &str) -> Option<String> {
    let (start, end) = last_box(text)?;
    let content = text[start + BOX_OPEN.len()..end?].trim();
    content.bytes().any(|b| b.is_ascii_digit()).then(|| content.to_owned())
}

/// Everything before the final `\boxed{` command; the whole text when there is none.
pub fn split_reasoning(text: &str) -> &str {
    match last_box(text) {
        Some((start, _)) => &text[..start],
        None => text,
    }
}

/// Wire form of one rollout line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub id: String,
    pub prompt_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs_old: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<usize>,
}

impl RolloutRecord {
    fn into_rollout(self, line: usize) -> Result<Rollout> {
        let err = |message: String| Error::Parse { line, message };
        let embedding = match self.embedding {
            Some(v) => {
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if !norm.is_finite() {
                    return Err(err("embedding contains non-finite values".into()));
                }
                if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                    Some(l2_normalize(&v).map_err(|_| err(format!("zero-norm embedding for `{}`", self.id)))?)
                } else {
                    Some(v)
                }
            }
            None => None,
        };
        if let Some(lp) = &self.token_logprobs_old {
            if lp.iter().any(|x| !x.is_finite() || *x > 0.0) {
                return Err(err("token_logprobs_old must be finite and <= 0".into()));
            }
        }
        let length = match (self.length, &self.token_logprobs_old) {
            (Some(0), _) => return Err(err("length must be >= 1".into())),
            (Some(n), _) => n,
            (None, Some(lp)) if !lp.is_empty() => lp.len(),
            (None, _) => self.text.split_whitespace().count().max(1),
        };
        Ok(Rollout {
            answer: extract_final_answer(&self.text),
            reasoning: split_reasoning(&self.text).to_owned(),
            id: self.id,
            prompt_id: self.prompt_id,
            text: self.text,
            embedding,
            token_logprobs_old: self.token_logprobs_old,
            length,
        })
    }
}

impl From<&Rollout> for RolloutRecord {
    fn from(r: &Rollout) -> Self {
        RolloutRecord {
            id: r.id.clone(),
            prompt_id: r.prompt_id.clone(),
            text: r.text.clone(),
            embedding: r.embedding.clone(),
            token_logprobs_old: r.token_logprobs_old.clone(),
            length: Some(r.length),
        }
    }
}

/// Read rollout JSONL, grouping records by `prompt_id` in first-seen order.
/// Blank lines are skipped; line numbers in errors are 1-based.
pub fn parse_rollout_jsonl<R: BufRead>(reader: R) -> Result<Vec<PromptGroup>> {
    Ok(parse_rollout_jsonl_ordered(reader)?.0)
}

/// `(group index, position within group)` of one input record.
pub type RecordPosition = (usize, usize);

/// Like [`parse_rollout_jsonl`], also returning `(group, position)` for each
/// record in input order.
pub fn parse_rollout_jsonl_ordered<R: BufRead>(reader: R) -> Result<(Vec<PromptGroup>, Vec<RecordPosition>)> {
    let mut groups: IndexMap<String, Vec<Rollout>> = IndexMap::new();
    let mut order = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: RolloutRecord =
            serde_json::from_str(&line).map_err(|e| Error::Parse { line: lineno, message: e.to_string() })?;
        let rollout = record.into_rollout(lineno)?;
        let entry = groups.entry(rollout.prompt_id.clone());
        let group_idx = entry.index();
        let bucket = entry.or_default();
        if bucket.iter().any(|r| r.id == rollout.id) {
            return Err(Error::Parse {
                line: lineno,
                message: Error::DuplicateId { id: rollout.id, prompt_id: rollout.prompt_id }.to_string(),
            });
        }
        order.push((group_idx, bucket.len()));
        bucket.push(rollout);
    }
    let groups = groups.into_iter().map(|(prompt_id, rollouts)| PromptGroup { prompt_id, rollouts }).collect();
    Ok((groups, order))
}

/// Write groups back out as rollout JSONL (one line per rollout, `length` always set).
pub fn write_rollout_jsonl<W: Write>(mut out: W, groups: &[PromptGroup]) -> Result<()> {
    for g in groups {
        for r in &g.rollouts {
            let line = serde_json::to_string(&RolloutRecord::from(r)).expect("record serializes");
            writeln!(out, "{line}")?;
        }
    }
    Ok(())
}
