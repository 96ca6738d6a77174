//! Loss terms and their analytic gradients with respect to the logits.
//!
//! With `N` trajectories, trajectory `i` of length `L_i`, ratio
//! `rho = exp(logp_new - logp_old)` and advantage `A_i`:
//!
//! ```text
//! surrogate = -(1/N) sum_i (1/L_i) sum_t min(rho * A_i, clip(rho, 1-eps_low, 1+eps_high) * A_i)
//! entropy   = -lambda_ent * (1/N) sum_i (1/L_i) sum_t H(pi(.|row_t))
//! kl        =  kl_coeff * (1/R) sum_rows KL(pi(.|row) || ref(.|row))
//! ```
//!
//! Trajectories are accumulated in batch order so results do not depend on
//! how callers schedule work.

use super::policy::{entropy_from_log_probs, log_softmax, Grid, ToyPolicy};
use super::{OptimConfig, TrajectoryBatch};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub surrogate: f64,
    pub entropy: f64,
    pub kl: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.surrogate + self.entropy + self.kl
    }
}

/// `d/dz H(softmax(z))_k = -p_k (log p_k + H)`
fn entropy_grad(logp: &[f64], h: f64, scale: f64, out: &mut [f64]) {
    for (g, lp) in out.iter_mut().zip(logp) {
        *g += scale * -(lp.exp() * (lp + h));
    }
}

fn surrogate_part(
    policy: &ToyPolicy,
    batch: &TrajectoryBatch,
    eps_low: f64,
    eps_high: f64,
    mut grad: Option<&mut Grid>,
) -> Result<f64> {
    let n = batch.len() as f64;
    let (lo, hi) = (1.0 - eps_low, 1.0 + eps_high);
    let mut loss = 0.0;
    for traj in &batch.trajectories {
        let a = traj.advantage;
        let weight = 1.0 / (n * traj.len() as f64);
        let mut sum = 0.0;
        for (d, lp_old) in traj.decisions.iter().zip(&traj.logprobs_old) {
            let logp = log_softmax(policy.logits.row(d.row));
            let rho = (logp[d.choice] - lp_old).exp();
            if !rho.is_finite() {
                return Err(Error::NonFinite("importance ratio"));
            }
            let unclipped = rho * a;
            let clipped = rho.clamp(lo, hi) * a;
            sum += unclipped.min(clipped);
            if let Some(g) = grad.as_deref_mut() {
                if unclipped <= clipped {
                    // d(rho)/dz_k = rho * (1[k = choice] - p_k)
                    let row = g.row_mut(d.row);
                    for (k, (gk, lpk)) in row.iter_mut().zip(&logp).enumerate() {
                        let indicator = if k == d.choice { 1.0 } else { 0.0 };
                        *gk -= weight * a * rho * (indicator - lpk.exp());
                    }
                }
            }
        }
        loss -= weight * sum;
    }
    Ok(loss)
}

fn entropy_part(policy: &ToyPolicy, batch: &TrajectoryBatch, lambda_ent: f64, mut grad: Option<&mut Grid>) -> f64 {
    if lambda_ent == 0.0 {
        return 0.0;
    }
    let n = batch.len() as f64;
    let mut mean_h = 0.0;
    for traj in &batch.trajectories {
        let weight = 1.0 / (n * traj.len() as f64);
        let mut sum = 0.0;
        for d in &traj.decisions {
            let logp = log_softmax(policy.logits.row(d.row));
            let h = entropy_from_log_probs(&logp);
            sum += h;
            if let Some(g) = grad.as_deref_mut() {
                entropy_grad(&logp, h, -lambda_ent * weight, g.row_mut(d.row));
            }
        }
        mean_h += weight * sum;
    }
    -lambda_ent * mean_h
}

fn kl_part(policy: &ToyPolicy, kl_coeff: f64, mut grad: Option<&mut Grid>) -> f64 {
    if kl_coeff == 0.0 {
        return 0.0;
    }
    let rows = policy.rows();
    let scale = kl_coeff / rows as f64;
    let mut total = 0.0;
    for r in 0..rows {
        let lp = log_softmax(policy.logits.row(r));
        let lq = log_softmax(policy.reference.row(r));
        let kl: f64 = lp.iter().zip(&lq).map(|(p, q)| p.exp() * (p - q)).sum();
        total += kl;
        if let Some(g) = grad.as_deref_mut() {
            // d/dz_j KL = p_j (log p_j - log q_j - KL)
            for ((gj, p), q) in g.row_mut(r).iter_mut().zip(&lp).zip(&lq) {
                *gj += scale * p.exp() * (p - q - kl);
            }
        }
    }
    scale * total
}

pub fn clipped_surrogate(policy: &ToyPolicy, batch: &TrajectoryBatch, eps_low: f64, eps_high: f64) -> Result<f64> {
    surrogate_part(policy, batch, eps_low, eps_high, None)
}

pub fn entropy_loss(policy: &ToyPolicy, batch: &TrajectoryBatch, lambda_ent: f64) -> f64 {
    entropy_part(policy, batch, lambda_ent, None)
}

pub fn kl_loss(policy: &ToyPolicy, kl_coeff: f64) -> f64 {
    kl_part(policy, kl_coeff, None)
}

pub fn total_loss(policy: &ToyPolicy, batch: &TrajectoryBatch, config: &OptimConfig) -> Result<f64> {
    Ok(clipped_surrogate(policy, batch, config.eps_low, config.eps_high)?
        + entropy_loss(policy, batch, config.lambda_ent)
        + kl_loss(policy, config.kl_coeff))
}

/// Loss components and the gradient of their sum.
pub fn loss_and_gradient(
    policy: &ToyPolicy,
    batch: &TrajectoryBatch,
    config: &OptimConfig,
) -> Result<(LossBreakdown, Grid)> {
    let mut grad = Grid::zeros(policy.rows(), policy.cols());
    let parts = LossBreakdown {
        surrogate: surrogate_part(policy, batch, config.eps_low, config.eps_high, Some(&mut grad))?,
        entropy: entropy_part(policy, batch, config.lambda_ent, Some(&mut grad)),
        kl: kl_part(policy, config.kl_coeff, Some(&mut grad)),
    };
    Ok((parts, grad))
}

/// One gradient-descent step on the total loss. The reference logits are untouched.
pub fn step(policy: &ToyPolicy, batch: &TrajectoryBatch, config: &OptimConfig) -> Result<ToyPolicy> {
    let (_, grad) = loss_and_gradient(policy, batch, config)?;
    if grad.as_slice().iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }
    let mut next = policy.clone();
    for (z, g) in next.logits.as_mut_slice().iter_mut().zip(grad.as_slice()) {
        *z -= config.learning_rate * g;
    }
    Ok(next)
}

/// Smallest distance from any token's ratio to a clip edge. Gradients are
/// not defined at the edges, so numerical checks skip points closer than
/// their tolerance.
pub fn kink_distance(policy: &ToyPolicy, batch: &TrajectoryBatch, eps_low: f64, eps_high: f64) -> f64 {
    let mut best = f64::INFINITY;
    for traj in &batch.trajectories {
        for (d, lp_old) in traj.decisions.iter().zip(&traj.logprobs_old) {
            let rho = (log_softmax(policy.logits.row(d.row))[d.choice] - lp_old).exp();
            best = best.min((rho - (1.0 - eps_low)).abs()).min((rho - (1.0 + eps_high)).abs());
        }
    }
    best
}

/// Central differences `(f(z + h e_k) - f(z - h e_k)) / 2h` for every logit.
pub fn finite_difference_gradient<F>(loss_fn: F, policy: &ToyPolicy, h: f64) -> Grid
where
    F: Fn(&ToyPolicy) -> f64,
{
    let mut grad = Grid::zeros(policy.rows(), policy.cols());
    let mut probe = policy.clone();
    for k in 0..policy.logits.as_slice().len() {
        let z = policy.logits.as_slice()[k];
        probe.logits.as_mut_slice()[k] = z + h;
        let up = loss_fn(&probe);
        probe.logits.as_mut_slice()[k] = z - h;
        let down = loss_fn(&probe);
        probe.logits.as_mut_slice()[k] = z;
        grad.as_mut_slice()[k] = (up - down) / (2.0 * h);
    }
    grad
}
