//! Selection: validity filtering, majority vote and binary labels.

use indexmap::{IndexMap, IndexSet};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rollout::PromptGroup;

/// Agreement with the group's majority-voted answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Majority,
    Minority,
}

impl Label {
    pub fn sign(self) -> i8 {
        match self {
            Label::Majority => 1,
            Label::Minority => -1,
        }
    }
}

/// Outcome of the majority vote for one prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupVerdict {
    pub majority_answer: Option<String>,
    /// Answer counts over valid voters, in first-occurrence order.
    pub counts: IndexMap<String, usize>,
    pub labels: IndexMap<String, Label>,
    pub invalid_ids: IndexSet<String>,
    pub tie_broken: bool,
    /// Every rollout id covered by this verdict, in input order.
    pub ids: Vec<String>,
}

impl GroupVerdict {
    pub fn majority_ids(&self) -> Vec<&str> {
        self.ids_with(Label::Majority)
    }

    pub fn minority_ids(&self) -> Vec<&str> {
        self.ids_with(Label::Minority)
    }

    fn ids_with(&self, label: Label) -> Vec<&str> {
        self.labels.iter().filter(|(_, l)| **l == label).map(|(id, _)| id.as_str()).collect()
    }

    /// Valid ids in input order.
    pub fn valid_ids(&self) -> Vec<&str> {
        self.labels.keys().map(String::as_str).collect()
    }
}

/// Majority vote over valid rollouts (those with an extracted answer).
///
/// Answers compare by exact string equality. Ties go to the answer whose
/// first rollout appears earliest, and `tie_broken` is set.
pub fn majority_vote(group: &PromptGroup) -> GroupVerdict {
    let mut counts: IndexMap<String, usize> = IndexMap::new();
    let mut invalid_ids = IndexSet::new();
    for r in &group.rollouts {
        match &r.answer {
            Some(a) => *counts.entry(a.clone()).or_default() += 1,
            None => {
                invalid_ids.insert(r.id.clone());
            }
        }
    }

    let best = counts.values().copied().max().unwrap_or(0);
    let majority_answer = counts.iter().find(|(_, c)| **c == best).map(|(a, _)| a.clone());
    let tie_broken = counts.values().filter(|c| **c == best).count() > 1;

    let labels = group
        .rollouts
        .iter()
        .filter_map(|r| {
            let a = r.answer.as_ref()?;
            let label = if Some(a) == majority_answer.as_ref() { Label::Majority } else { Label::Minority };
            Some((r.id.clone(), label))
        })
        .collect();

    GroupVerdict {
        majority_answer,
        counts,
        labels,
        invalid_ids,
        tie_broken,
        ids: group.ids().map(str::to_owned).collect(),
    }
}

/// Vote over the first `n_vote` rollouts, then draw a uniform `n_train`
/// subset of those voters (kept in input order) for training. Counts and the
/// majority answer reflect the full vote; labels cover only the subset.
pub fn apply_vote_subsample<R: Rng + ?Sized>(
    group: &PromptGroup,
    n_vote: usize,
    n_train: usize,
    rng: &mut R,
) -> Result<(GroupVerdict, PromptGroup)> {
    if n_train > n_vote {
        return Err(Error::InvalidArgument(format!("n_train ({n_train}) exceeds n_vote ({n_vote})")));
    }
    if n_vote > group.len() {
        return Err(Error::InvalidArgument(format!("n_vote ({n_vote}) exceeds group size ({})", group.len())));
    }
    if n_train == 0 {
        return Err(Error::InvalidArgument("n_train must be >= 1".into()));
    }
    let voters = PromptGroup { prompt_id: group.prompt_id.clone(), rollouts: group.rollouts[..n_vote].to_vec() };
    let full = majority_vote(&voters);

    let mut picked = if n_train == n_vote {
        (0..n_vote).collect::<Vec<_>>()
    } else {
        rand::seq::index::sample(rng, n_vote, n_train).into_vec()
    };
    picked.sort_unstable();
    let subset = PromptGroup {
        prompt_id: group.prompt_id.clone(),
        rollouts: picked.iter().map(|&i| voters.rollouts[i].clone()).collect(),
    };

    let keep: IndexSet<&str> = subset.ids().collect();
    let verdict = GroupVerdict {
        labels: full.labels.iter().filter(|(id, _)| keep.contains(id.as_str())).map(|(k, v)| (k.clone(), *v)).collect(),
        invalid_ids: full.invalid_ids.iter().filter(|id| keep.contains(id.as_str())).cloned().collect(),
        ids: subset.ids().map(str::to_owned).collect(),
        ..full
    };
    Ok((verdict, subset))
}
