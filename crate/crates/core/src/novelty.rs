//! Variation: cosine similarity, raw novelty and per-group min-max normalization.
//!
//! For a scored rollout `i` with similarity row `S[i]`:
//!
//! ```text
//! mean_sim_i = mean_{j in own group, j != i} S[i][j]     (0 for a singleton group)
//! max_sim_i  = max_{j scored, j != i} S[i][j]            (0 if i is the only scored rollout)
//! u_i        = 1 - (alpha * mean_sim_i + (1 - alpha) * max_sim_i)
//! u~_i       = (u_i - min_g u) / (max_g u - min_g u + NORM_EPS)   per label group g
//! ```
//!
//! Invalid rollouts never enter the similarity pool.

use std::collections::HashMap;

use indexmap::IndexMap;

use crate::consensus::GroupVerdict;
use crate::embeddings::{dot, EmbeddingTable};
use crate::error::{Error, Result};
use crate::exec::Exec;

pub const NORM_EPS: f64 = 1e-8;

/// Dense row-major `n x n` cosine similarity matrix over named rollouts.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.ids.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.ids.len();
        &self.data[i * n..(i + 1) * n]
    }

    /// Mean over distinct unordered pairs; 1.0 when there are fewer than two rows.
    pub fn mean_off_diagonal(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 1.0;
        }
        let mut total = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                total += self.at(i, j);
            }
        }
        total / (n * (n - 1) / 2) as f64
    }
}

/// `S = V V^T` for the rows of `table` named by `ids`. Each entry is a
/// single dot product, so rows may be filled in parallel without changing a
/// bit, and `S[i][j] == S[j][i]` exactly (floating-point products commute).
pub fn similarity_matrix(table: &EmbeddingTable, ids: &[&str], exec: Exec) -> Result<SimilarityMatrix> {
    let vectors: Vec<&[f64]> =
        ids.iter().map(|id| table.get(id).ok_or_else(|| Error::UnknownId(id.to_string()))).collect::<Result<_>>()?;
    let rows = exec.map(ids.len(), |i| vectors.iter().map(|v| dot(vectors[i], v)).collect::<Vec<f64>>());
    let data = rows.concat();
    let ids: Vec<String> = ids.iter().map(|s| s.to_string()).collect();
    let index = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
    Ok(SimilarityMatrix { ids, index, data })
}

/// Per-rollout similarity statistics and novelty.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NoveltyScores {
    pub mean_sim: IndexMap<String, f64>,
    pub max_sim: IndexMap<String, f64>,
    pub raw: IndexMap<String, f64>,
    pub normalized: IndexMap<String, f64>,
    pub alpha: f64,
}

fn positions(s: &SimilarityMatrix, ids: &[&str]) -> Result<Vec<usize>> {
    ids.iter().map(|id| s.position(id).ok_or_else(|| Error::UnknownId(id.to_string()))).collect()
}

/// Raw novelty `u` for every majority and minority id. `normalized` is left empty.
pub fn novelty_raw(
    s: &SimilarityMatrix,
    majority_ids: &[&str],
    minority_ids: &[&str],
    alpha: f64,
) -> Result<NoveltyScores> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha must lie in [0,1], got {alpha}")));
    }
    let groups = [positions(s, majority_ids)?, positions(s, minority_ids)?];
    let scored: Vec<usize> = groups.iter().flatten().copied().collect();

    let mut out = NoveltyScores { alpha, ..Default::default() };
    for (group, ids) in groups.iter().zip([majority_ids, minority_ids]) {
        for (&i, id) in group.iter().zip(ids) {
            let row = s.row(i);
            let peers: Vec<f64> = group.iter().filter(|&&j| j != i).map(|&j| row[j]).collect();
            let mean = if peers.is_empty() { 0.0 } else { peers.iter().sum::<f64>() / peers.len() as f64 };
            let max = scored
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| row[j])
                .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x))))
                .unwrap_or(0.0);
            let u = 1.0 - (alpha * mean + (1.0 - alpha) * max);
            out.mean_sim.insert(id.to_string(), mean);
            out.max_sim.insert(id.to_string(), max);
            out.raw.insert(id.to_string(), u);
        }
    }
    Ok(out)
}

/// Min-max normalize `raw` separately within the majority and minority groups.
pub fn normalize_intra_group(
    raw: &IndexMap<String, f64>,
    majority_ids: &[&str],
    minority_ids: &[&str],
) -> Result<IndexMap<String, f64>> {
    let mut out = IndexMap::new();
    for ids in [majority_ids, minority_ids] {
        let values: Vec<f64> = ids
            .iter()
            .map(|id| raw.get(*id).copied().ok_or_else(|| Error::UnknownId(id.to_string())))
            .collect::<Result<_>>()?;
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (id, u) in ids.iter().zip(values) {
            out.insert(id.to_string(), (u - lo) / (hi - lo + NORM_EPS));
        }
    }
    Ok(out)
}

/// Full novelty pass for one verdict: similarity over valid ids, raw scores,
/// then per-group normalization.
pub fn score_group(verdict: &GroupVerdict, table: &EmbeddingTable, alpha: f64, exec: Exec) -> Result<NoveltyScores> {
    let valid = verdict.valid_ids();
    let majority = verdict.majority_ids();
    let minority = verdict.minority_ids();
    let s = similarity_matrix(table, &valid, exec)?;
    let mut scores = novelty_raw(&s, &majority, &minority, alpha)?;
    scores.normalized = normalize_intra_group(&scores.raw, &majority, &minority)?;
    Ok(scores)
}
