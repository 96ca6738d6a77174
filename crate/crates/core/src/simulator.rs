//! Toy reasoning-population environment and the label-free training loop.
//!
//! The policy is a [`ToyPolicy`] with `1 + K` rows over `K` columns. Row 0
//! picks a reasoning mode; a mode with `token_length = L` then takes `L - 1`
//! further decisions from row `1 + mode`. Each mode carries an embedding
//! prototype and an answer accuracy. Ground truth is used for metrics only;
//! rewards see nothing but the sampled answers and embeddings.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::consensus::apply_vote_subsample;
use crate::embeddings::{l2_normalize, EmbeddingTable, UNIT_NORM_TOLERANCE};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::novelty::{normalize_intra_group, novelty_raw, similarity_matrix};
use crate::optimizer::{self, Decision, Grid, OptimConfig, ToyPolicy, Trajectory, TrajectoryBatch};
use crate::reward::{evol_reward, majority_only_reward, Scheme};
use crate::rng::{domain, StreamKey};
use crate::rollout::{PromptGroup, Rollout};

/// Columns of the metrics CSV, in order.
pub const METRIC_COLUMNS: [&str; 7] =
    ["step", "entropy_nats", "pass1", "pass_n", "maj_n", "mean_length", "mean_pairwise_sim"];

const EVAL_CHUNK: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub mode_id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub prototype: Vec<f64>,
    pub accuracy: f64,
    /// First entry is the correct answer.
    pub answer_alphabet: Vec<String>,
    #[serde(default)]
    pub noise_sigma: f64,
    pub token_length: usize,
}

fn default_group_size() -> usize {
    32
}
fn default_n_vote() -> usize {
    64
}
fn default_alpha() -> f64 {
    0.5
}
fn default_eval_n() -> usize {
    16
}
fn default_eval_trials() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub modes: Vec<ModeSpec>,
    /// Initial row-0 logits, one per mode.
    pub initial_mode_logits: Vec<f64>,
    /// Rollouts used for each training update.
    #[serde(default = "default_group_size")]
    pub group_size: usize,
    /// Rollouts sampled and voted on per step; raised to `group_size` when smaller.
    #[serde(default = "default_n_vote")]
    pub n_vote: usize,
    pub steps: usize,
    pub seed: u64,
    pub scheme: Scheme,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub optim: OptimConfig,
    #[serde(default = "default_eval_n")]
    pub eval_n: usize,
    #[serde(default = "default_eval_trials")]
    pub eval_trials: usize,
}

impl EnvConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: EnvConfig = serde_json::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    /// Size of the per-step vote pool.
    pub fn vote_pool(&self) -> usize {
        self.n_vote.max(self.group_size)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Scenario(m));
        let k = self.modes.len();
        if k < 2 {
            return bad(format!("need at least 2 modes, got {k}"));
        }
        if self.initial_mode_logits.len() != k {
            return bad(format!("initial_mode_logits has {} entries for {k} modes", self.initial_mode_logits.len()));
        }
        if self.initial_mode_logits.iter().any(|z| !z.is_finite()) {
            return bad("initial_mode_logits must be finite".into());
        }
        if self.group_size == 0 {
            return bad("group_size must be >= 1".into());
        }
        if self.eval_n == 0 || self.eval_trials == 0 {
            return bad("eval_n and eval_trials must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0,1], got {}", self.alpha));
        }
        self.optim.validate().map_err(|e| Error::Scenario(e.to_string()))?;
        let dim = self.modes[0].prototype.len();
        let correct = self.modes[0].answer_alphabet.first().cloned().unwrap_or_default();
        for (i, m) in self.modes.iter().enumerate() {
            if m.mode_id != i {
                return bad(format!("mode at position {i} has mode_id {}", m.mode_id));
            }
            if m.prototype.is_empty() || m.prototype.len() != dim {
                return bad(format!("mode {i}: prototype must have dimension {dim}"));
            }
            let norm = m.prototype.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return bad(format!("mode {i}: prototype is not unit norm (|v| = {norm})"));
            }
            if !(0.0..=1.0).contains(&m.accuracy) {
                return bad(format!("mode {i}: accuracy must lie in [0,1]"));
            }
            if !(m.noise_sigma >= 0.0 && m.noise_sigma.is_finite()) {
                return bad(format!("mode {i}: noise_sigma must be >= 0"));
            }
            if m.token_length == 0 {
                return bad(format!("mode {i}: token_length must be >= 1"));
            }
            if m.answer_alphabet.is_empty() || (m.accuracy < 1.0 && m.answer_alphabet.len() < 2) {
                return bad(format!(
                    "mode {i}: alphabet needs a correct answer and, unless accuracy is 1, a wrong one"
                ));
            }
            if m.answer_alphabet[0] != correct {
                return bad(format!("mode {i}: correct answer `{}` differs from `{correct}`", m.answer_alphabet[0]));
            }
            for a in &m.answer_alphabet {
                if crate::rollout::extract_final_answer(&format!("\\boxed{{{a}}}")).as_deref() != Some(a.as_str()) {
                    return bad(format!("mode {i}: answer `{a}` would not survive boxed extraction"));
                }
            }
            let mut seen = std::collections::HashSet::new();
            if !m.answer_alphabet.iter().all(|a| seen.insert(a)) {
                return bad(format!("mode {i}: duplicate answers in alphabet"));
            }
        }
        Ok(())
    }

    /// Initial policy: row 0 from `initial_mode_logits`, continuation rows uniform.
    pub fn initial_policy(&self) -> ToyPolicy {
        let k = self.num_modes();
        let mut rows = vec![self.initial_mode_logits.clone()];
        rows.extend((0..k).map(|_| vec![0.0; k]));
        ToyPolicy::new(Grid::from_rows(&rows).expect("validated shape")).expect("validated logits")
    }
}

/// One step of the training series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: usize,
    pub entropy_nats: f64,
    /// Expected single-sample correctness (exact).
    pub pass1: f64,
    pub pass_n: f64,
    pub maj_n: f64,
    pub mean_length: f64,
    pub mean_pairwise_sim: f64,
    pub mode_histogram: Vec<f64>,
}

/// Monte-Carlo pass/majority metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassAtN {
    pub pass1: f64,
    pub pass_n: f64,
    pub maj_n: f64,
}

/// A sampled group together with what the optimizer needs to replay it.
#[derive(Debug, Clone)]
pub struct SampledGroup {
    pub group: PromptGroup,
    pub modes: Vec<usize>,
    pub decisions: Vec<Vec<Decision>>,
}

/// Validated environment with answers interned for fast evaluation.
#[derive(Debug, Clone)]
pub struct Environment {
    config: EnvConfig,
    answers: Vec<String>,
    /// Per mode: interned ids of the wrong answers.
    wrong: Vec<Vec<usize>>,
}

fn cdf(probs: &[f64]) -> Vec<f64> {
    probs
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect()
}

fn draw(cdf: &[f64], u: f64) -> usize {
    let total = *cdf.last().expect("non-empty distribution");
    let target = u * total;
    cdf.iter().position(|c| target < *c).unwrap_or(cdf.len() - 1)
}

impl Environment {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let mut answers: Vec<String> = Vec::new();
        let mut intern = |a: &String| match answers.iter().position(|x| x == a) {
            Some(i) => i,
            None => {
                answers.push(a.clone());
                answers.len() - 1
            }
        };
        let mut wrong = Vec::new();
        for m in &config.modes {
            let ids: Vec<usize> = m.answer_alphabet.iter().map(&mut intern).collect();
            wrong.push(ids[1..].to_vec());
        }
        Ok(Environment { config, answers, wrong })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    /// Answer id 0 is always the correct answer.
    fn sample_answer<R: Rng>(&self, mode: usize, rng: &mut R) -> usize {
        let spec = &self.config.modes[mode];
        if rng.random::<f64>() < spec.accuracy {
            0
        } else {
            let w = &self.wrong[mode];
            w[rng.random_range(0..w.len())]
        }
    }

    /// Draw `count` rollouts. Rollout `i` uses its own stream `key.child(i)`.
    pub fn sample_rollouts(&self, policy: &ToyPolicy, count: usize, key: StreamKey, exec: Exec) -> SampledGroup {
        let row_logp: Vec<Vec<f64>> = (0..policy.rows()).map(|r| policy.log_probs(r)).collect();
        let row_cdf: Vec<Vec<f64>> =
            row_logp.iter().map(|lp| cdf(&lp.iter().map(|x| x.exp()).collect::<Vec<_>>())).collect();

        let drawn = exec.map(count, |i| {
            let mut rng = key.child(i as u64).rng();
            let mode = draw(&row_cdf[0], rng.random());
            let spec = &self.config.modes[mode];
            let mut decisions = vec![Decision { row: 0, choice: mode }];
            let mut logprobs = vec![row_logp[0][mode]];
            for _ in 1..spec.token_length {
                let row = 1 + mode;
                let c = draw(&row_cdf[row], rng.random());
                decisions.push(Decision { row, choice: c });
                logprobs.push(row_logp[row][c]);
            }
            let answer = &self.answers[self.sample_answer(mode, &mut rng)];
            let noisy: Vec<f64> =
                spec.prototype.iter().map(|x| x + spec.noise_sigma * rng.sample::<f64, _>(StandardNormal)).collect();
            let embedding = l2_normalize(&noisy).unwrap_or_else(|_| spec.prototype.clone());
            let tokens: Vec<String> = decisions[1..].iter().map(|d| format!("t{}", d.choice)).collect();
            let text = format!("mode {mode} {} \\boxed{{{answer}}}", tokens.join(" "));
            let mut r = Rollout::from_text(format!("r{i}"), "sim", text);
            r.embedding = Some(embedding);
            r.length = spec.token_length;
            r.token_logprobs_old = Some(logprobs);
            (r, mode, decisions)
        });

        let mut out = SampledGroup {
            group: PromptGroup { prompt_id: "sim".into(), rollouts: Vec::with_capacity(count) },
            modes: Vec::with_capacity(count),
            decisions: Vec::with_capacity(count),
        };
        for (r, m, d) in drawn {
            out.group.rollouts.push(r);
            out.modes.push(m);
            out.decisions.push(d);
        }
        out
    }

    /// Exact expected single-sample correctness.
    pub fn expected_accuracy(&self, policy: &ToyPolicy) -> f64 {
        policy.probs(0).iter().zip(&self.config.modes).map(|(p, m)| p * m.accuracy).sum()
    }

    /// Monte-Carlo pass@1, pass@n and maj@n over `trials` independent sets of
    /// `n` samples. Trials are split into fixed-size chunks, chunk `c` drawing
    /// from `key.child(c)`, and integer hit counts are summed in chunk order.
    pub fn eval_pass_at_n(&self, policy: &ToyPolicy, n: usize, trials: usize, key: StreamKey, exec: Exec) -> PassAtN {
        let mode_cdf = cdf(&policy.probs(0));
        let n_answers = self.answers.len();
        let chunks = trials.div_ceil(EVAL_CHUNK);
        let counts = exec.map(chunks, |c| {
            let mut rng = key.child(c as u64).rng();
            let size = EVAL_CHUNK.min(trials - c * EVAL_CHUNK);
            let (mut single, mut any, mut maj) = (0u64, 0u64, 0u64);
            let mut tally = vec![0u32; n_answers];
            let mut drawn = vec![0usize; n];
            for _ in 0..size {
                tally.iter_mut().for_each(|t| *t = 0);
                for slot in drawn.iter_mut() {
                    let mode = draw(&mode_cdf, rng.random());
                    let a = self.sample_answer(mode, &mut rng);
                    tally[a] += 1;
                    *slot = a;
                }
                let correct = tally[0] as u64;
                single += correct;
                any += u64::from(correct > 0);
                let best = *tally.iter().max().expect("non-empty");
                let modal = drawn.iter().find(|a| tally[**a] == best).expect("some answer is modal");
                maj += u64::from(*modal == 0);
            }
            (single, any, maj)
        });
        let (single, any, maj) = counts.iter().fold((0, 0, 0), |acc, c| (acc.0 + c.0, acc.1 + c.1, acc.2 + c.2));
        PassAtN {
            pass1: single as f64 / (trials * n) as f64,
            pass_n: any as f64 / trials as f64,
            maj_n: maj as f64 / trials as f64,
        }
    }

    /// One training update: sample, vote, score, reward, z-score, descend.
    /// Returns the updated policy plus the sampled training subset's mean
    /// length and mean pairwise similarity.
    pub fn train_step(&self, policy: &ToyPolicy, step: usize, exec: Exec) -> Result<(ToyPolicy, f64, f64)> {
        let cfg = &self.config;
        let root = StreamKey::root(cfg.seed);
        let pool = cfg.vote_pool();
        let sampled = self.sample_rollouts(policy, pool, root.child(domain::ROLLOUT).child(step as u64), exec);
        let mut sub_rng = root.child(domain::SUBSAMPLE).child(step as u64).rng();
        let (verdict, train) = apply_vote_subsample(&sampled.group, pool, cfg.group_size, &mut sub_rng)?;

        let mut table = EmbeddingTable::new(0);
        for r in &train.rollouts {
            table.insert(r.id.clone(), r.embedding.as_deref().expect("simulated rollouts carry embeddings"))?;
        }
        let all_ids: Vec<&str> = train.ids().collect();
        let sim = similarity_matrix(&table, &all_ids, exec)?;

        let rewards = match cfg.scheme {
            Scheme::MajorityOnly => majority_only_reward(&verdict),
            Scheme::EvolRl => {
                let majority = verdict.majority_ids();
                let minority = verdict.minority_ids();
                let mut scores = novelty_raw(&sim, &majority, &minority, cfg.alpha)?;
                scores.normalized = normalize_intra_group(&scores.raw, &majority, &minority)?;
                evol_reward(&verdict, &scores)?
            }
        };

        let index_of = |id: &str| id[1..].parse::<usize>().expect("simulator ids are r<index>");
        let trajectories: Vec<Trajectory> = train
            .rollouts
            .iter()
            .map(|r| {
                let i = index_of(&r.id);
                Trajectory {
                    decisions: sampled.decisions[i].clone(),
                    logprobs_old: r.token_logprobs_old.clone().expect("simulated rollouts carry log-probs"),
                    reward: rewards.rewards[&r.id],
                    advantage: 0.0,
                }
            })
            .collect();
        let mut batch = TrajectoryBatch::single_group(trajectories, policy.rows(), policy.cols())?;
        batch.assign_advantages(cfg.optim.zscore_eps)?;
        let next = optimizer::step(policy, &batch, &cfg.optim)?;

        let mean_length = train.rollouts.iter().map(|r| r.length as f64).sum::<f64>() / train.len() as f64;
        Ok((next, mean_length, sim.mean_off_diagonal()))
    }

    fn record(
        &self,
        policy: &ToyPolicy,
        step: usize,
        mean_length: f64,
        mean_pairwise_sim: f64,
        exec: Exec,
    ) -> MetricsRecord {
        let cfg = &self.config;
        let key = StreamKey::root(cfg.seed).child(domain::EVAL).child(step as u64);
        let eval = self.eval_pass_at_n(policy, cfg.eval_n, cfg.eval_trials, key, exec);
        MetricsRecord {
            step,
            entropy_nats: policy_entropy(policy),
            pass1: self.expected_accuracy(policy),
            pass_n: eval.pass_n,
            maj_n: eval.maj_n,
            mean_length,
            mean_pairwise_sim,
            mode_histogram: policy.probs(0),
        }
    }

    /// Run the full loop from the initial policy. Metrics for step `s`
    /// (1-based) describe the policy after its `s`-th update and the rollouts
    /// that update was computed from.
    pub fn run(&self, exec: Exec) -> Result<TrainingRun> {
        let mut policy = self.config.initial_policy();
        let mut metrics = Vec::with_capacity(self.config.steps);
        for s in 1..=self.config.steps {
            let (next, mean_length, sim) = self.train_step(&policy, s, exec)?;
            policy = next;
            metrics.push(self.record(&policy, s, mean_length, sim, exec));
        }
        Ok(TrainingRun { metrics, policy })
    }
}

/// Metric series plus the final policy.
#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub metrics: Vec<MetricsRecord>,
    pub policy: ToyPolicy,
}

/// Entropy in nats of the mode-choice distribution (row 0).
pub fn policy_entropy(policy: &ToyPolicy) -> f64 {
    policy.row_entropy(0)
}

pub fn run_training(env: &EnvConfig) -> Result<Vec<MetricsRecord>> {
    Ok(Environment::new(env.clone())?.run(Exec::default())?.metrics)
}

fn fmt_f64(x: f64) -> String {
    // shortest round-trip representation; stable across platforms
    format!("{x:?}")
}

/// Write the metrics CSV (exact column set, `\n` line endings).
pub fn write_metrics_csv<W: Write>(mut out: W, records: &[MetricsRecord]) -> Result<()> {
    writeln!(out, "{}", METRIC_COLUMNS.join(","))?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.step,
            fmt_f64(r.entropy_nats),
            fmt_f64(r.pass1),
            fmt_f64(r.pass_n),
            fmt_f64(r.maj_n),
            fmt_f64(r.mean_length),
            fmt_f64(r.mean_pairwise_sim)
        )?;
    }
    Ok(())
}

/// Sidecar CSV with the per-step mode distribution: `step,mode_0,..,mode_{K-1}`.
pub fn write_histogram_csv<W: Write>(mut out: W, records: &[MetricsRecord]) -> Result<()> {
    let k = records.first().map_or(0, |r| r.mode_histogram.len());
    let header: Vec<String> = std::iter::once("step".to_string()).chain((0..k).map(|i| format!("mode_{i}"))).collect();
    writeln!(out, "{}", header.join(","))?;
    for r in records {
        let cells: Vec<String> = r.mode_histogram.iter().map(|p| fmt_f64(*p)).collect();
        writeln!(out, "{},{}", r.step, cells.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_mode_config() -> EnvConfig {
        EnvConfig {
            name: None,
            modes: vec![
                ModeSpec {
                    mode_id: 0,
                    name: None,
                    prototype: vec![1.0, 0.0],
                    accuracy: 1.0,
                    answer_alphabet: vec!["1".into(), "2".into()],
                    noise_sigma: 0.0,
                    token_length: 1,
                },
                ModeSpec {
                    mode_id: 1,
                    name: None,
                    prototype: vec![0.0, 1.0],
                    accuracy: 0.0,
                    answer_alphabet: vec!["1".into(), "2".into()],
                    noise_sigma: 0.0,
                    token_length: 3,
                },
            ],
            initial_mode_logits: vec![0.0, 0.0],
            group_size: 8,
            n_vote: 8,
            steps: 3,
            seed: 11,
            scheme: Scheme::EvolRl,
            alpha: 0.5,
            optim: OptimConfig::default(),
            eval_n: 4,
            eval_trials: 1000,
        }
    }

    #[test]
    fn validation_rejects_bad_scenarios() {
        let ok = two_mode_config();
        assert!(ok.validate().is_ok());

        let mut c = ok.clone();
        c.modes.truncate(1);
        c.initial_mode_logits.truncate(1);
        assert!(c.validate().is_err());

        let mut c = ok.clone();
        c.modes[1].prototype = vec![2.0, 0.0];
        assert!(c.validate().is_err());

        let mut c = ok.clone();
        c.modes[1].answer_alphabet[0] = "9".into();
        assert!(c.validate().is_err());

        let mut c = ok.clone();
        c.modes[0].answer_alphabet = vec!["x".into()];
        assert!(c.validate().is_err());

        let mut c = ok.clone();
        c.modes[1].token_length = 0;
        assert!(c.validate().is_err());

        let mut c = ok;
        c.modes[1].mode_id = 5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_noise_same_mode_is_identical() {
        let mut cfg = two_mode_config();
        cfg.initial_mode_logits = vec![0.0, -1000.0];
        let env = Environment::new(cfg.clone()).unwrap();
        let g = env.sample_rollouts(&cfg.initial_policy(), 6, StreamKey::root(1), Exec::Sequential);
        assert!(g.modes.iter().all(|m| *m == 0));
        let a = g.group.rollouts[0].embedding.as_ref().unwrap();
        let b = g.group.rollouts[1].embedding.as_ref().unwrap();
        assert_eq!(crate::embeddings::dot(a, b), 1.0);
        assert!(g.group.rollouts.iter().all(|r| r.answer.as_deref() == Some("1")));
    }

    #[test]
    fn multi_step_rollouts_use_the_mode_row() {
        let mut cfg = two_mode_config();
        cfg.initial_mode_logits = vec![-1000.0, 0.0];
        let env = Environment::new(cfg.clone()).unwrap();
        let g = env.sample_rollouts(&cfg.initial_policy(), 4, StreamKey::root(2), Exec::Sequential);
        for (r, d) in g.group.rollouts.iter().zip(&g.decisions) {
            assert_eq!(r.length, 3);
            assert_eq!(d.len(), 3);
            assert!(d[1..].iter().all(|x| x.row == 2));
            assert_eq!(r.token_logprobs_old.as_ref().unwrap().len(), 3);
            assert_eq!(r.answer.as_deref(), Some("2"));
        }
    }

    #[test]
    fn entropy_examples() {
        let p = ToyPolicy::uniform(1, 8);
        assert!((policy_entropy(&p) - 8f64.ln()).abs() < 1e-12);
        let det = ToyPolicy::new(Grid::from_rows(&[vec![0.0, -1000.0, -1000.0]]).unwrap()).unwrap();
        assert_eq!(policy_entropy(&det), 0.0);
        let half = ToyPolicy::new(Grid::from_rows(&[vec![0.0, 0.0, -1000.0, -1000.0]]).unwrap()).unwrap();
        assert!((policy_entropy(&half) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_steps_is_empty() {
        let mut cfg = two_mode_config();
        cfg.steps = 0;
        assert!(run_training(&cfg).unwrap().is_empty());
    }

    #[test]
    fn csv_header_is_exact() {
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &[]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "step,entropy_nats,pass1,pass_n,maj_n,mean_length,mean_pairwise_sim\n"
        );
    }
}
