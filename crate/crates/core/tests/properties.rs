mod common;

use evolrl::consensus::{apply_vote_subsample, majority_vote, Label};
use evolrl::embeddings::{dot, l2_normalize, lexical_embed, Embedder, EmbeddingTable};
use evolrl::novelty::{score_group, similarity_matrix};
use evolrl::optimizer::{entropy_loss, group_advantages, Decision, Grid, ToyPolicy, Trajectory, TrajectoryBatch};
use evolrl::reward::{band_reward, evol_reward, majority_only_reward};
use evolrl::rollout::{extract_final_answer, parse_rollout_jsonl, write_rollout_jsonl, PromptGroup, Rollout};
use evolrl::Exec;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn group_from(answers: &[Option<u8>], vectors: &[Vec<f64>]) -> PromptGroup {
    let rollouts = answers
        .iter()
        .zip(vectors)
        .enumerate()
        .map(|(i, (a, v))| {
            let text = match a {
                Some(a) => format!("work {i} \\boxed{{{a}}}"),
                None => format!("work {i} \\boxed{{?}}"),
            };
            let mut r = Rollout::from_text(format!("r{i}"), "p", text);
            r.embedding = Some(common::unit(v));
            r
        })
        .collect();
    PromptGroup::new("p", rollouts).unwrap()
}

fn vector(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, dim).prop_filter("non-zero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-4)
}

fn scored_group(max_g: usize) -> impl Strategy<Value = (Vec<Option<u8>>, Vec<Vec<f64>>)> {
    (1..=max_g).prop_flat_map(|g| {
        (prop::collection::vec(prop::option::weighted(0.85, 0u8..4), g), prop::collection::vec(vector(6), g))
    })
}

fn table_for(group: &PromptGroup) -> EmbeddingTable {
    Embedder::Inline.resolve(group, Exec::Sequential).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn extraction_recovers_boxed_content(a in "[a-z+]{0,4}[0-9][a-z0-9+]{0,4}") {
        prop_assert_eq!(extract_final_answer(&format!("\\boxed{{{a}}}")), Some(a.clone()));
        prop_assert_eq!(extract_final_answer(&format!("x \\boxed{{0}} y \\boxed{{ {a} }}")), Some(a));
    }

    #[test]
    fn jsonl_round_trip_is_byte_identical((answers, vectors) in scored_group(6)) {
        let group = group_from(&answers, &vectors);
        let mut first = Vec::new();
        write_rollout_jsonl(&mut first, std::slice::from_ref(&group)).unwrap();
        let parsed = parse_rollout_jsonl(first.as_slice()).unwrap();
        let mut second = Vec::new();
        write_rollout_jsonl(&mut second, &parsed).unwrap();
        prop_assert_eq!(first, second);
        for r in &parsed[0].rollouts {
            let n = dot(r.embedding.as_ref().unwrap(), r.embedding.as_ref().unwrap()).sqrt();
            prop_assert!((n - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn normalized_vectors_have_unit_norm(v in vector(9)) {
        let u = l2_normalize(&v).unwrap();
        prop_assert!((dot(&u, &u).sqrt() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn lexical_embeddings_are_pure_and_bounded(a in ".{0,40}", b in ".{0,40}", seed in any::<u64>()) {
        let ea = lexical_embed(&a, 32, seed);
        prop_assert_eq!(&ea, &lexical_embed(&a, 32, seed));
        let c = dot(&ea, &lexical_embed(&b, 32, seed));
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&c));
    }

    #[test]
    fn vote_matches_oracle(answers in prop::collection::vec(prop::option::weighted(0.8, 0u8..4), 1..20)) {
        let vectors = vec![vec![1.0, 0.0]; answers.len()];
        let group = group_from(&answers, &vectors);
        let v = majority_vote(&group);
        let strings: Vec<Option<String>> = answers.iter().map(|a| a.map(|x| x.to_string())).collect();
        let refs: Vec<Option<&str>> = strings.iter().map(|s| s.as_deref()).collect();
        prop_assert_eq!(&v.majority_answer, &common::vote_oracle(&refs));
        let valid = answers.iter().filter(|a| a.is_some()).count();
        prop_assert_eq!(v.counts.values().sum::<usize>(), valid);
        prop_assert_eq!(v.labels.len(), valid);
        prop_assert!(v.labels.values().all(|l| l.sign() == 1 || l.sign() == -1));
    }

    #[test]
    fn vote_is_permutation_invariant_without_ties(
        answers in prop::collection::vec(prop::option::weighted(0.8, 0u8..4), 1..20),
        seed in any::<u64>(),
    ) {
        let vectors = vec![vec![1.0, 0.0]; answers.len()];
        let v = majority_vote(&group_from(&answers, &vectors));
        prop_assume!(!v.tie_broken);
        let mut shuffled = answers.clone();
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let w = majority_vote(&group_from(&shuffled, &vectors));
        prop_assert_eq!(v.majority_answer, w.majority_answer);
    }

    #[test]
    fn subsample_keeps_input_order(g in 2usize..40, seed in any::<u64>(), frac in 0.05f64..1.0) {
        let answers: Vec<Option<u8>> = (0..g).map(|i| Some((i % 3) as u8)).collect();
        let group = group_from(&answers, &vec![vec![1.0]; g]);
        let n_train = ((g as f64 * frac).ceil() as usize).clamp(1, g);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (verdict, sub) = apply_vote_subsample(&group, g, n_train, &mut rng).unwrap();
        prop_assert_eq!(sub.len(), n_train);
        let idx: Vec<usize> = sub.ids().map(|id| id[1..].parse().unwrap()).collect();
        prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(verdict.counts.values().sum::<usize>(), g);
        prop_assert_eq!(verdict.labels.len(), n_train);
    }

    #[test]
    fn similarity_is_symmetric_and_bounded(vectors in prop::collection::vec(vector(5), 1..10)) {
        let mut t = EmbeddingTable::new(0);
        let ids: Vec<String> = (0..vectors.len()).map(|i| format!("v{i}")).collect();
        for (id, v) in ids.iter().zip(&vectors) {
            t.insert(id.clone(), &common::unit(v)).unwrap();
        }
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let s = similarity_matrix(&t, &refs, Exec::Sequential).unwrap();
        for i in 0..s.len() {
            prop_assert!((s.at(i, i) - 1.0).abs() < 1e-12);
            for j in 0..s.len() {
                prop_assert_eq!(s.at(i, j), s.at(j, i));
                prop_assert!(s.at(i, j).abs() <= 1.0 + 1e-12);
            }
        }
        prop_assert_eq!(s, similarity_matrix(&t, &refs, Exec::Parallel).unwrap());
    }

    #[test]
    fn normalized_novelty_is_a_min_max_scaling((answers, vectors) in scored_group(12), alpha in 0.0f64..=1.0) {
        let group = group_from(&answers, &vectors);
        let verdict = majority_vote(&group);
        prop_assume!(!verdict.labels.is_empty());
        let scores = score_group(&verdict, &table_for(&group), alpha, Exec::Sequential).unwrap();
        for ids in [verdict.majority_ids(), verdict.minority_ids()] {
            if ids.is_empty() {
                continue;
            }
            let ut: Vec<f64> = ids.iter().map(|id| scores.normalized[*id]).collect();
            prop_assert!(ut.iter().all(|x| (0.0..=1.0).contains(x)));
            prop_assert!(ut.contains(&0.0));
            let raw: Vec<f64> = ids.iter().map(|id| scores.raw[*id]).collect();
            let range = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - raw.iter().cloned().fold(f64::INFINITY, f64::min);
            // With eps_norm = 1e-8 the top member sits at range/(range+1e-8),
            // which clears 1 - 1e-6 only once the spread reaches 1e-2.
            if range >= 1e-2 {
                prop_assert!(ut.iter().any(|x| *x >= 1.0 - 1e-6));
            }
        }
    }

    #[test]
    fn novelty_is_scale_invariant((answers, vectors) in scored_group(8), c in 0.01f64..100.0) {
        let a = group_from(&answers, &vectors);
        let scaled: Vec<Vec<f64>> = vectors.iter().map(|v| v.iter().map(|x| x * c).collect()).collect();
        let b = group_from(&answers, &scaled);
        let verdict = majority_vote(&a);
        prop_assume!(!verdict.labels.is_empty());
        let sa = score_group(&verdict, &table_for(&a), 0.5, Exec::Sequential).unwrap();
        let sb = score_group(&verdict, &table_for(&b), 0.5, Exec::Sequential).unwrap();
        for (id, x) in &sa.normalized {
            prop_assert!((x - sb.normalized[id]).abs() < 1e-6);
        }
    }

    #[test]
    fn distinct_member_among_duplicates_is_most_novel(k in 3usize..10, other in vector(4), alpha in 0.0f64..=1.0) {
        let base = vec![1.0, 0.0, 0.0, 0.0];
        let o = common::unit(&other);
        prop_assume!(dot(&o, &base) < 1.0 - 1e-6);
        let mut vectors = vec![base; k];
        vectors.push(o);
        let group = group_from(&vec![Some(1); k + 1], &vectors);
        let verdict = majority_vote(&group);
        let s = score_group(&verdict, &table_for(&group), alpha, Exec::Sequential).unwrap();
        let mutant = format!("r{k}");
        let best = s.raw.iter().filter(|(id, _)| **id != mutant).map(|(_, u)| *u).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(s.raw[&mutant] > best);
        prop_assert!(s.normalized[&mutant] > 0.99);
    }

    #[test]
    fn rewards_are_banded_and_affine((answers, vectors) in scored_group(16)) {
        let group = group_from(&answers, &vectors);
        let verdict = majority_vote(&group);
        let scores = if verdict.labels.is_empty() {
            Default::default()
        } else {
            score_group(&verdict, &table_for(&group), 0.5, Exec::Sequential).unwrap()
        };
        let rewards = evol_reward(&verdict, &scores).unwrap();
        let maj_only = majority_only_reward(&verdict);
        for r in &group.rollouts {
            let got = rewards.rewards[&r.id];
            match verdict.labels.get(&r.id) {
                None => {
                    prop_assert_eq!(got, -1.0);
                    prop_assert_eq!(maj_only.rewards[&r.id], -1.0);
                }
                Some(label) => {
                    let u = scores.normalized[&r.id];
                    let floor = if *label == Label::Majority { 0.5 } else { -1.0 };
                    prop_assert!((got - (floor + 0.5 * u)).abs() < 1e-15);
                    prop_assert_eq!(maj_only.rewards[&r.id], label.sign() as f64);
                }
            }
        }
    }

    #[test]
    fn band_order_survives_any_novelty(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        prop_assert!(band_reward(Label::Majority, a) > band_reward(Label::Minority, b));
    }

    #[test]
    fn advantages_are_centered_and_shift_invariant(
        rewards in prop::collection::vec(-1.0f64..1.0, 1..64),
        shift in -10.0f64..10.0,
    ) {
        let a = group_advantages(&rewards, 1e-8).unwrap();
        prop_assert!(a.iter().sum::<f64>().abs() <= 1e-9);
        let shifted: Vec<f64> = rewards.iter().map(|r| r + shift).collect();
        let b = group_advantages(&shifted, 1e-8).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
        for (x, y) in a.iter().zip(common::zscore_oracle(&rewards, 1e-8)) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        let var = a.iter().map(|x| x * x).sum::<f64>() / a.len() as f64;
        prop_assert!(var == 0.0 || (var - 1.0).abs() < 1e-4);
    }

    #[test]
    fn entropy_loss_is_lowest_at_uniform(logits in prop::collection::vec(-3.0f64..3.0, 4), lambda in 0.001f64..1.0) {
        let traj = Trajectory {
            decisions: vec![Decision { row: 0, choice: 0 }],
            logprobs_old: vec![-1.0],
            reward: 0.0,
            advantage: 0.0,
        };
        let batch = TrajectoryBatch::single_group(vec![traj], 1, 4).unwrap();
        let p = ToyPolicy::new(Grid::from_rows(&[logits]).unwrap()).unwrap();
        prop_assert!(entropy_loss(&ToyPolicy::uniform(1, 4), &batch, lambda) <= entropy_loss(&p, &batch, lambda) + 1e-15);
    }
}
