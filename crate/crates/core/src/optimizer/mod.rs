//! Group-relative advantages, the clipped surrogate with asymmetric clipping,
//! the token-level entropy regularizer, a closed-form KL penalty, and plain
//! gradient descent on toy factored-categorical policies.

mod loss;
mod policy;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use loss::{
    clipped_surrogate, entropy_loss, finite_difference_gradient, kink_distance, kl_loss, loss_and_gradient, step,
    total_loss, LossBreakdown,
};
pub use policy::{entropy_from_log_probs, log_softmax, softmax, Grid, ToyPolicy};

/// Optimizer hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub eps_low: f64,
    pub eps_high: f64,
    pub lambda_ent: f64,
    pub kl_coeff: f64,
    pub learning_rate: f64,
    pub zscore_eps: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            eps_low: 0.2,
            eps_high: 0.28,
            lambda_ent: 0.003,
            kl_coeff: 0.001,
            learning_rate: 0.05,
            zscore_eps: 1e-8,
        }
    }
}

impl OptimConfig {
    /// Learning rate used for the 4B/8B language-model runs; far too small
    /// for the toy policies, which default to 0.05.
    pub const LLM_LEARNING_RATE: f64 = 5e-7;

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("eps_low", self.eps_low),
            ("eps_high", self.eps_high),
            ("lambda_ent", self.lambda_ent),
            ("kl_coeff", self.kl_coeff),
            ("learning_rate", self.learning_rate),
            ("zscore_eps", self.zscore_eps),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.eps_low <= 0.0 || self.eps_high < self.eps_low {
            return Err(Error::InvalidArgument(format!(
                "clip range needs eps_high >= eps_low > 0, got low={} high={}",
                self.eps_low, self.eps_high
            )));
        }
        Ok(())
    }
}

/// Z-scored advantages using the population standard deviation. A group
/// whose rewards are all equal gets all-zero advantages.
pub fn group_advantages(rewards: &[f64], zscore_eps: f64) -> Result<Vec<f64>> {
    if rewards.is_empty() {
        return Err(Error::InvalidArgument("empty reward group".into()));
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite("rewards"));
    }
    let lo = rewards.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Ok(vec![0.0; rewards.len()]);
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let denom = var.sqrt() + zscore_eps;
    Ok(rewards.iter().map(|r| (r - mean) / denom).collect())
}

/// One sampled decision: which policy row was consulted and which column was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub row: usize,
    pub choice: usize,
}

/// A rollout as the optimizer sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub decisions: Vec<Decision>,
    /// Log-probabilities of each decision under the sampling policy.
    pub logprobs_old: Vec<f64>,
    pub reward: f64,
    pub advantage: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }
}

/// Trajectories plus the contiguous index ranges of their prompt groups.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    pub trajectories: Vec<Trajectory>,
    pub groups: Vec<Range<usize>>,
}

impl TrajectoryBatch {
    /// Validates shapes against a policy of `rows x cols`. Groups must tile
    /// `0..trajectories.len()` in order.
    pub fn new(trajectories: Vec<Trajectory>, groups: Vec<Range<usize>>, rows: usize, cols: usize) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::InvalidArgument("empty trajectory batch".into()));
        }
        let mut next = 0;
        for g in &groups {
            if g.start != next || g.end <= g.start {
                return Err(Error::InvalidArgument("groups must tile the batch contiguously".into()));
            }
            next = g.end;
        }
        if next != trajectories.len() {
            return Err(Error::InvalidArgument("groups must cover every trajectory".into()));
        }
        for (i, t) in trajectories.iter().enumerate() {
            if t.decisions.is_empty() || t.decisions.len() != t.logprobs_old.len() {
                return Err(Error::InvalidArgument(format!(
                    "trajectory {i}: needs >= 1 decision and one old log-prob per decision"
                )));
            }
            if t.logprobs_old.iter().any(|lp| !lp.is_finite() || *lp > 0.0) {
                return Err(Error::InvalidArgument(format!("trajectory {i}: old log-probs must be finite and <= 0")));
            }
            if t.decisions.iter().any(|d| d.row >= rows || d.choice >= cols) {
                return Err(Error::InvalidArgument(format!("trajectory {i}: decision outside {rows}x{cols} policy")));
            }
        }
        Ok(TrajectoryBatch { trajectories, groups })
    }

    /// Single-group convenience constructor.
    pub fn single_group(trajectories: Vec<Trajectory>, rows: usize, cols: usize) -> Result<Self> {
        let n = trajectories.len();
        Self::new(trajectories, std::iter::once(0..n).collect(), rows, cols)
    }

    /// Recompute every trajectory's advantage from the rewards of its group.
    pub fn assign_advantages(&mut self, zscore_eps: f64) -> Result<()> {
        for g in &self.groups {
            let rewards: Vec<f64> = self.trajectories[g.clone()].iter().map(|t| t.reward).collect();
            let adv = group_advantages(&rewards, zscore_eps)?;
            for (t, a) in self.trajectories[g.clone()].iter_mut().zip(adv) {
                t.advantage = a;
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}
