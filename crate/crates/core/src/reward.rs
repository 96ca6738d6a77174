//! Reward mapping for the majority + novelty scheme and the majority-only baseline.
//!
//! ```text
//! invalid         -> -1
//! majority (+1)   ->  0.5 + 0.5 * u~    in [0.5, 1]
//! minority (-1)   -> -1.0 + 0.5 * u~    in [-1, -0.5]
//! ```

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::consensus::{GroupVerdict, Label};
use crate::error::{Error, Result};
use crate::novelty::NoveltyScores;

pub const INVALID_REWARD: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "evolrl")]
    EvolRl,
    #[serde(rename = "majority-only")]
    MajorityOnly,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::EvolRl => "evolrl",
            Scheme::MajorityOnly => "majority-only",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "evolrl" => Ok(Scheme::EvolRl),
            "majority-only" => Ok(Scheme::MajorityOnly),
            other => Err(Error::InvalidArgument(format!("unknown scheme `{other}`"))),
        }
    }
}

/// Rewards for one prompt group, in the verdict's input order.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardVector {
    pub rewards: IndexMap<String, f64>,
    pub scheme: Scheme,
}

impl RewardVector {
    pub fn values(&self) -> Vec<f64> {
        self.rewards.values().copied().collect()
    }
}

pub fn band_reward(label: Label, u_tilde: f64) -> f64 {
    match label {
        Label::Majority => 0.5 + 0.5 * u_tilde,
        Label::Minority => -1.0 + 0.5 * u_tilde,
    }
}

pub fn evol_reward(verdict: &GroupVerdict, novelty: &NoveltyScores) -> Result<RewardVector> {
    if novelty.normalized.len() != verdict.labels.len() {
        return Err(Error::InvalidArgument(format!(
            "novelty covers {} ids but verdict has {} valid ids",
            novelty.normalized.len(),
            verdict.labels.len()
        )));
    }
    let mut rewards = IndexMap::with_capacity(verdict.ids.len());
    for id in &verdict.ids {
        let r = match verdict.labels.get(id) {
            Some(&label) => {
                let u = *novelty.normalized.get(id).ok_or_else(|| Error::UnknownId(id.clone()))?;
                band_reward(label, u)
            }
            None => INVALID_REWARD,
        };
        rewards.insert(id.clone(), r);
    }
    Ok(RewardVector { rewards, scheme: Scheme::EvolRl })
}

pub fn majority_only_reward(verdict: &GroupVerdict) -> RewardVector {
    let rewards = verdict
        .ids
        .iter()
        .map(|id| {
            let r = match verdict.labels.get(id) {
                Some(Label::Majority) => 1.0,
                Some(Label::Minority) | None => -1.0,
            };
            (id.clone(), r)
        })
        .collect();
    RewardVector { rewards, scheme: Scheme::MajorityOnly }
}
