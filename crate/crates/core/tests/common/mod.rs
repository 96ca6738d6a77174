//! Independent reference implementations and random fixtures shared by the
//! integration tests. Nothing here calls into the library's math.

#![allow(dead_code)]

use evolrl::rollout::{PromptGroup, Rollout};
use rand::Rng;

pub fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

pub fn random_unit<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        if v.iter().map(|x| x * x).sum::<f64>() > 1e-6 {
            return unit(&v);
        }
    }
}

/// A group of `g` rollouts with answers drawn from a small alphabet (so
/// majorities and ties both occur) and, with probability `p_invalid`, a
/// box without digits.
pub fn random_group<R: Rng>(rng: &mut R, g: usize, dim: usize, p_invalid: f64) -> PromptGroup {
    let alphabet = ["1", "2", "3", "x+1", "42"];
    let rollouts = (0..g)
        .map(|i| {
            let text = if rng.random_bool(p_invalid) {
                format!("step {i} \\boxed{{none}}")
            } else {
                format!("step {i} \\boxed{{{}}}", alphabet[rng.random_range(0..alphabet.len())])
            };
            let mut r = Rollout::from_text(format!("r{i}"), "p", text);
            r.embedding = Some(random_unit(rng, dim));
            r
        })
        .collect();
    PromptGroup::new("p", rollouts).unwrap()
}

/// Brute-force novelty for one group of valid rollouts.
/// `labels[i]` is true for majority. Returns `(mean_sim, max_sim, u, u_tilde)`.
pub struct NoveltyOracle {
    pub mean_sim: Vec<f64>,
    pub max_sim: Vec<f64>,
    pub u: Vec<f64>,
    pub u_tilde: Vec<f64>,
}

pub fn novelty_oracle(vectors: &[Vec<f64>], labels: &[bool], alpha: f64) -> NoveltyOracle {
    let n = vectors.len();
    let cos = |i: usize, j: usize| -> f64 {
        let a = &vectors[i];
        let b = &vectors[j];
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    };
    let mut mean_sim = vec![0.0; n];
    let mut max_sim = vec![0.0; n];
    let mut u = vec![0.0; n];
    for i in 0..n {
        let mut same = Vec::new();
        let mut best = f64::NEG_INFINITY;
        for j in 0..n {
            if j == i {
                continue;
            }
            let s = cos(i, j);
            if labels[j] == labels[i] {
                same.push(s);
            }
            best = best.max(s);
        }
        mean_sim[i] = if same.is_empty() { 0.0 } else { same.iter().sum::<f64>() / same.len() as f64 };
        max_sim[i] = if n == 1 { 0.0 } else { best };
        u[i] = 1.0 - (alpha * mean_sim[i] + (1.0 - alpha) * max_sim[i]);
    }
    let mut u_tilde = vec![0.0; n];
    for class in [true, false] {
        let members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        let lo = members.iter().map(|&i| u[i]).fold(f64::INFINITY, f64::min);
        let hi = members.iter().map(|&i| u[i]).fold(f64::NEG_INFINITY, f64::max);
        for &i in &members {
            u_tilde[i] = (u[i] - lo) / (hi - lo + 1e-8);
        }
    }
    NoveltyOracle { mean_sim, max_sim, u, u_tilde }
}

/// Majority vote oracle: modal answer, ties to earliest first occurrence.
pub fn vote_oracle(answers: &[Option<&str>]) -> Option<String> {
    let mut best: Option<(&str, usize, usize)> = None;
    for (first, a) in answers.iter().enumerate() {
        let Some(a) = a else { continue };
        if answers[..first].contains(&Some(*a)) {
            continue;
        }
        let count = answers.iter().filter(|b| **b == Some(*a)).count();
        match best {
            Some((_, c, _)) if c >= count => {}
            _ => best = Some((a, count, first)),
        }
    }
    best.map(|(a, _, _)| a.to_string())
}

/// Population z-score, written out longhand.
pub fn zscore_oracle(r: &[f64], eps: f64) -> Vec<f64> {
    if r.iter().all(|x| *x == r[0]) {
        return vec![0.0; r.len()];
    }
    let n = r.len() as f64;
    let mean = r.iter().sum::<f64>() / n;
    let sd = (r.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
    r.iter().map(|x| (x - mean) / (sd + eps)).collect()
}

fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    z.iter().map(|x| x - lse).collect()
}

/// `(row, choice, logp_old)` per decision.
pub type Steps = Vec<(usize, usize, f64)>;

/// Textbook PPO with a single symmetric clip `eps`, written as the max of
/// the two negated objectives, plus the entropy bonus and closed-form KL.
/// Trajectories are `(steps: [(row, choice, logp_old)], advantage)`.
pub fn symmetric_ppo_loss(
    logits: &[Vec<f64>],
    reference: &[Vec<f64>],
    trajectories: &[(Steps, f64)],
    eps: f64,
    lambda_ent: f64,
    kl_coeff: f64,
) -> f64 {
    let mut policy_term = 0.0;
    let mut ent_term = 0.0;
    for (steps, adv) in trajectories {
        let mut p = 0.0;
        let mut h = 0.0;
        for &(row, choice, old) in steps {
            let lp = log_softmax(&logits[row]);
            let ratio = (lp[choice] - old).exp();
            let clipped = if ratio < 1.0 - eps {
                1.0 - eps
            } else if ratio > 1.0 + eps {
                1.0 + eps
            } else {
                ratio
            };
            p += f64::max(-ratio * adv, -clipped * adv);
            h -= lp.iter().map(|l| l.exp() * l).sum::<f64>();
        }
        policy_term += p / steps.len() as f64;
        ent_term += h / steps.len() as f64;
    }
    let n = trajectories.len() as f64;
    let mut kl = 0.0;
    for (z, zr) in logits.iter().zip(reference) {
        let lp = log_softmax(z);
        let lq = log_softmax(zr);
        kl += lp.iter().zip(&lq).map(|(a, b)| a.exp() * (a - b)).sum::<f64>();
    }
    policy_term / n - lambda_ent * ent_term / n + kl_coeff * kl / logits.len() as f64
}
