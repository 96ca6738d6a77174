//! Batch scoring: vote, novelty, reward and advantage for every rollout of
//! every prompt group, emitted as scored JSONL.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::consensus::majority_vote;
use crate::embeddings::{Embedder, EmbeddingTable};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::novelty::score_group;
use crate::optimizer::group_advantages;
use crate::reward::{evol_reward, majority_only_reward, Scheme};
use crate::rollout::PromptGroup;

/// One scored output line. `label` is `+1`/`-1` for valid rollouts and `0`
/// for invalid ones; `u_tilde` is present only under the novelty scheme for
/// valid rollouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub id: String,
    pub prompt_id: String,
    pub label: i8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_tilde: Option<f64>,
    pub reward: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advantage: Option<f64>,
}

/// Failure while scoring, split by whether embeddings were the cause.
#[derive(Debug, thiserror::Error)]
pub enum ScoreError {
    #[error("embedding resolution failed for prompt `{prompt_id}`: {source}")]
    Embedding { prompt_id: String, source: Error },
    #[error(transparent)]
    Other(#[from] Error),
}

/// Score one group given its embedding table (ignored for majority-only).
pub fn score_prompt_group(
    group: &PromptGroup,
    table: Option<&EmbeddingTable>,
    scheme: Scheme,
    alpha: f64,
    zscore_eps: f64,
    exec: Exec,
) -> Result<Vec<ScoredRecord>> {
    let verdict = majority_vote(group);
    let (rewards, novelty) = match scheme {
        Scheme::MajorityOnly => (majority_only_reward(&verdict), None),
        Scheme::EvolRl => {
            let table = table.ok_or_else(|| Error::InvalidArgument("novelty scoring needs embeddings".into()))?;
            let scores = score_group(&verdict, table, alpha, exec)?;
            (evol_reward(&verdict, &scores)?, Some(scores))
        }
    };
    let advantages = group_advantages(&rewards.values(), zscore_eps)?;
    Ok(group
        .rollouts
        .iter()
        .zip(advantages)
        .map(|(r, adv)| ScoredRecord {
            id: r.id.clone(),
            prompt_id: r.prompt_id.clone(),
            label: verdict.labels.get(&r.id).map_or(0, |l| l.sign()),
            u_tilde: novelty.as_ref().and_then(|n| n.normalized.get(&r.id).copied()),
            reward: rewards.rewards[&r.id],
            advantage: Some(adv),
        })
        .collect())
}

/// Score every group. File embeddings are loaded once for the whole batch.
pub fn score_batch(
    groups: &[PromptGroup],
    embedder: &Embedder,
    scheme: Scheme,
    alpha: f64,
    zscore_eps: f64,
    exec: Exec,
) -> std::result::Result<Vec<Vec<ScoredRecord>>, ScoreError> {
    let shared = match (scheme, embedder) {
        (Scheme::EvolRl, Embedder::File(path)) => {
            let ids: Vec<&str> =
                groups.iter().flat_map(|g| g.rollouts.iter().filter(|r| r.is_valid()).map(|r| r.id.as_str())).collect();
            let wrap = |source: Error| ScoreError::Embedding { prompt_id: "*".into(), source };
            let file = std::fs::File::open(path).map_err(|e| wrap(e.into()))?;
            Some(crate::embeddings::load_embedding_table(std::io::BufReader::new(file), &ids).map_err(wrap)?)
        }
        _ => None,
    };
    groups
        .iter()
        .map(|g| {
            let table = match (scheme, &shared) {
                (Scheme::MajorityOnly, _) => None,
                (Scheme::EvolRl, Some(t)) => Some(t.clone()),
                (Scheme::EvolRl, None) => Some(
                    embedder
                        .resolve(g, exec)
                        .map_err(|source| ScoreError::Embedding { prompt_id: g.prompt_id.clone(), source })?,
                ),
            };
            Ok(score_prompt_group(g, table.as_ref(), scheme, alpha, zscore_eps, exec)?)
        })
        .collect()
}

pub fn write_scored_jsonl<W: Write>(mut out: W, records: &[&ScoredRecord]) -> Result<()> {
    for r in records {
        writeln!(out, "{}", serde_json::to_string(r).expect("record serializes"))?;
    }
    Ok(())
}
