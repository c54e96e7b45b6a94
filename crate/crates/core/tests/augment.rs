use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use itemplan::augment::{
    augment_samples, claim_condition, concept_condition, expand_concepts, generate_claim,
    nucleus_filter, training_pairs, AugmentMode, ConditionalGenerator,
};
use itemplan::mixed_lm::vocab::BOS;
use itemplan::mixed_lm::{encode_items, step, ModelConfig, TrainConfig};
use itemplan::synthetic::planning_corpus;

fn distribution() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0u32..20, 1..12).prop_filter_map("needs mass", |w| {
        let total: u32 = w.iter().sum();
        (total > 0).then(|| w.iter().map(|&x| x as f64 / total as f64).collect())
    })
}

fn support(d: &[f64]) -> Vec<usize> {
    (0..d.len()).filter(|&i| d[i] > 0.0).collect()
}

proptest! {
    #[test]
    fn nucleus_is_a_renormalized_subset(d in distribution(), p in 0.01f64..=1.0) {
        let f = nucleus_filter(&d, p).unwrap();
        prop_assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for i in support(&f) {
            prop_assert!(d[i] > 0.0);
        }
        let kept: f64 = support(&f).iter().map(|&i| d[i]).sum();
        prop_assert!(kept >= p - 1e-9);
        // Ratios among kept entries are unchanged.
        let s = support(&f);
        for w in s.windows(2) {
            prop_assert!((f[w[0]] * d[w[1]] - f[w[1]] * d[w[0]]).abs() < 1e-9);
        }
    }

    #[test]
    fn nucleus_support_grows_with_p(d in distribution(), a in 0.01f64..=1.0, b in 0.01f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let small = support(&nucleus_filter(&d, lo).unwrap());
        let large = support(&nucleus_filter(&d, hi).unwrap());
        prop_assert!(small.iter().all(|i| large.contains(i)));
    }
}

#[test]
fn nucleus_rejects_bad_input() {
    assert!(nucleus_filter(&[0.5, 0.5], 0.0).is_err());
    assert!(nucleus_filter(&[0.5, 0.5], 1.5).is_err());
    assert!(nucleus_filter(&[0.5, 0.4], 0.9).is_err());
}

fn generator_config() -> ModelConfig {
    ModelConfig {
        embed_dim: 16,
        hidden_dim: 16,
        heads: 2,
        ffn_dim: 32,
        encoder_layers: 1,
        decoder_layers: 1,
        plan_dim: 8,
        max_source_len: 12,
        max_target_len: 12,
    }
}

/// One training pair per distinct condition, so the target is learnable.
fn unique_pairs(mode: AugmentMode) -> Pairs {
    let samples = planning_corpus(30, 3, 21).unwrap();
    let mut by_condition = BTreeMap::new();
    for (c, t) in training_pairs(&samples, mode).unwrap() {
        by_condition.entry(c).or_insert(t);
    }
    by_condition.into_iter().collect()
}

type Pairs = Vec<(Vec<String>, Vec<String>)>;

fn overfit(mode: AugmentMode) -> (ConditionalGenerator, Pairs) {
    let pairs = unique_pairs(mode);
    let mut g = ConditionalGenerator::new(mode, generator_config(), &pairs, 5).unwrap();
    let cfg = TrainConfig {
        batch_size: 4,
        learning_rate: 1e-2,
        patience: 1000,
        max_epochs: 120,
        seed: 5,
        plan_loss_weight: 0.0,
        ..TrainConfig::default()
    };
    g.train(&pairs, &pairs, &cfg).unwrap();
    (g, pairs)
}

#[test]
fn overfit_claim_generator_reproduces_its_pairs() {
    let (g, pairs) = overfit(AugmentMode::Claims);
    assert!(!pairs.is_empty());
    for (c, t) in &pairs {
        // The vocabulary is lowercased.
        let want: Vec<String> = t.iter().map(|w| w.to_lowercase()).collect();
        assert_eq!(g.greedy(c).unwrap(), want);
        // A vanishing nucleus keeps only the top token.
        assert_eq!(g.sample(c, 1e-9, 42).unwrap(), want);
    }
}

#[test]
fn concept_augmentation_replaces_expanded_sets() {
    let (g, _) = overfit(AugmentMode::Concepts);
    let samples = planning_corpus(4, 3, 21).unwrap();
    let out = augment_samples(&samples, &g, 0.9, 1).unwrap();
    assert_eq!(out.len(), samples.len());
    for (a, b) in out.iter().zip(&samples) {
        assert_eq!(a.target, b.target);
        for (x, y) in a.items.iter().zip(&b.items) {
            assert_eq!(x.core_concepts, y.core_concepts);
            assert!(x.expanded_concepts.is_disjoint(&x.core_concepts));
        }
    }
    assert_eq!(out, augment_samples(&samples, &g, 0.9, 1).unwrap());
}

#[test]
fn untrained_generator_is_refused() {
    let pairs = unique_pairs(AugmentMode::Claims);
    let g = ConditionalGenerator::new(AugmentMode::Claims, generator_config(), &pairs, 1).unwrap();
    assert!(g.greedy(&pairs[0].0).is_err());
}

fn set(xs: &[&str]) -> BTreeSet<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn overfit_single(mode: AugmentMode, pair: (Vec<String>, Vec<String>)) -> ConditionalGenerator {
    let pairs = vec![pair];
    let mut g = ConditionalGenerator::new(mode, generator_config(), &pairs, 3).unwrap();
    let cfg = TrainConfig {
        batch_size: 1,
        learning_rate: 1e-2,
        patience: 1000,
        max_epochs: 80,
        seed: 3,
        plan_loss_weight: 0.0,
        ..TrainConfig::default()
    };
    g.train(&pairs, &pairs, &cfg).unwrap();
    g
}

#[test]
fn overfit_expansion_recovers_concrete_concepts() {
    let title: Vec<String> = vec!["Clinton".into(), "legacy".into()];
    let entities = set(&["Bill_Clinton", "9/11_attacks"]);
    let core = set(&["make", "happen"]);
    let condition = concept_condition(&title, &entities, &core).unwrap();
    let target = vec!["administration".to_string(), "mistake".to_string()];
    let g = overfit_single(AugmentMode::Concepts, (condition, target));
    let got = expand_concepts(&title, &entities, &core, &g).unwrap();
    assert!(
        got.is_superset(&set(&["mistake", "administration"])),
        "{got:?}"
    );
}

#[test]
fn overfit_claim_survives_nucleus_sampling() {
    let title: Vec<String> = vec!["Visa".into(), "policy".into()];
    let entities = set(&["United_States"]);
    let claim = "the refusal was a mistake .";
    let condition = claim_condition(&title, &entities).unwrap();
    let target: Vec<String> = claim.split(' ').map(String::from).collect();
    let g = overfit_single(AugmentMode::Claims, (condition.clone(), target.clone()));

    // Verify the premise: the gold token carries more than 0.9 of the mass
    // at every step, so a 0.9 nucleus holds only that token.
    let src = g.model.vocab.encode(&condition);
    let encoded = encode_items(&g.model, &[src]).unwrap();
    let mut gold = g.model.vocab.encode(&target);
    gold.push(itemplan::mixed_lm::vocab::EOS);
    let mut prefix = vec![BOS];
    for &next in &gold {
        let out = step(&g.model, &encoded, &prefix);
        assert!(out.per_item[0][next] > 0.9, "step {}", prefix.len());
        prefix.push(next);
    }
    for seed in 0..10 {
        assert_eq!(
            generate_claim(&title, &entities, &g, 0.9, seed).unwrap(),
            claim
        );
    }
}
