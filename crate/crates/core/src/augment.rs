//! Content augmentation: predicted expanded concepts and sampled claims
//! from single-item conditional generators.

use std::collections::BTreeSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::content::{serialize_item, ContentItem, Sample};
use crate::error::{Error, Result};
use crate::mixed_lm::vocab::{BOS, EOS, PAD};
use crate::mixed_lm::{
    self, decode, encode_items, load_checkpoint, save_checkpoint, DecodeMode, Example, MixedLm,
    ModelConfig, TrainConfig, TrainReport, Vocab,
};
use crate::par;
use crate::text::{tokenize, SEGMENTER};

pub const DEFAULT_NUCLEUS_P: f64 = 0.9;
const MASS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentMode {
    Concepts,
    Claims,
}

impl AugmentMode {
    fn checkpoint_kind(self) -> &'static str {
        match self {
            AugmentMode::Concepts => "concept_generator",
            AugmentMode::Claims => "claim_generator",
        }
    }
}

impl std::str::FromStr for AugmentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concepts" => Ok(Self::Concepts),
            "claims" => Ok(Self::Claims),
            other => Err(Error::InvalidInput(format!(
                "unknown augment mode `{other}`"
            ))),
        }
    }
}

/// Keep the smallest prefix of tokens, by descending probability with ties
/// broken by index, whose mass reaches `p`; renormalize it.
pub fn nucleus_filter(dist: &[f64], p: f64) -> Result<Vec<f64>> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "nucleus mass {p} not in (0, 1]"
        )));
    }
    let mass: f64 = dist.iter().sum();
    if (mass - 1.0).abs() > MASS_TOLERANCE || dist.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "distribution is not normalized (mass {mass})"
        )));
    }
    let mut order: Vec<usize> = (0..dist.len()).filter(|&i| dist[i] > 0.0).collect();
    order.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
    let mut kept = 0.0;
    let mut out = vec![0.0; dist.len()];
    for &i in &order {
        out[i] = dist[i];
        kept += dist[i];
        if kept >= p {
            break;
        }
    }
    for v in &mut out {
        *v /= kept;
    }
    Ok(out)
}

/// Inverse-CDF draw over indices in ascending order.
fn sample_index(dist: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Condition for concept expansion: the item serialized without expanded
/// concepts or claim.
pub fn concept_condition(
    title: &[String],
    entities: &BTreeSet<String>,
    core: &BTreeSet<String>,
) -> Result<Vec<String>> {
    let item = ContentItem {
        entities: entities.clone(),
        core_concepts: core.clone(),
        ..ContentItem::default()
    };
    Ok(serialize_item(title, &item)?.tokens)
}

/// Condition for claim generation: `title <s> entities`.
pub fn claim_condition(title: &[String], entities: &BTreeSet<String>) -> Result<Vec<String>> {
    if title.is_empty() {
        return Err(Error::InvalidInput("empty title".into()));
    }
    let mut tokens = title.to_vec();
    tokens.push(SEGMENTER.to_string());
    tokens.extend(entities.iter().cloned());
    Ok(tokens)
}

/// (condition, target) token pairs for training a generator.
pub fn training_pairs(
    samples: &[Sample],
    mode: AugmentMode,
) -> Result<Vec<(Vec<String>, Vec<String>)>> {
    let mut pairs = Vec::new();
    for s in samples {
        for item in &s.items {
            match mode {
                AugmentMode::Concepts if !item.expanded_concepts.is_empty() => pairs.push((
                    concept_condition(&s.title, &item.entities, &item.core_concepts)?,
                    item.expanded_concepts.iter().cloned().collect(),
                )),
                AugmentMode::Claims => {
                    if let Some(claim) = &item.claim {
                        pairs.push((claim_condition(&s.title, &item.entities)?, tokenize(claim)));
                    }
                }
                _ => {}
            }
        }
    }
    Ok(pairs)
}

/// A single-item instance of the mixed LM used as a conditional generator.
#[derive(Debug, Clone)]
pub struct ConditionalGenerator {
    pub mode: AugmentMode,
    pub model: MixedLm,
}

impl ConditionalGenerator {
    pub fn new(
        mode: AugmentMode,
        config: ModelConfig,
        pairs: &[(Vec<String>, Vec<String>)],
        seed: u64,
    ) -> Result<Self> {
        let vocab = Vocab::build(pairs.iter().flat_map(|(c, t)| [c.iter(), t.iter()]), 1);
        Ok(Self {
            mode,
            model: MixedLm::new(config, vocab, seed)?,
        })
    }

    pub fn example(&self, id: String, condition: &[String], target: &[String]) -> Example {
        let cfg = &self.model.config;
        let mut src = self.model.vocab.encode(condition);
        src.truncate(cfg.max_source_len);
        let keep = target.len().min(cfg.max_target_len);
        let mut tgt = self.model.vocab.encode(&target[..keep]);
        tgt.push(EOS);
        let labels = vec![Some(0); tgt.len()];
        Example {
            id,
            items: vec![src],
            target: tgt,
            labels,
        }
    }

    fn examples(&self, pairs: &[(Vec<String>, Vec<String>)]) -> Vec<Example> {
        pairs
            .iter()
            .enumerate()
            .map(|(i, (c, t))| self.example(format!("pair-{i}"), c, t))
            .collect()
    }

    pub fn train(
        &mut self,
        pairs: &[(Vec<String>, Vec<String>)],
        val_pairs: &[(Vec<String>, Vec<String>)],
        cfg: &TrainConfig,
    ) -> Result<TrainReport> {
        let train = self.examples(pairs);
        let val = self.examples(val_pairs);
        mixed_lm::train(&mut self.model, &train, &val, cfg)
    }

    fn ensure_trained(&self) -> Result<()> {
        if self.model.trained {
            Ok(())
        } else {
            Err(Error::Untrained("conditional generator"))
        }
    }

    fn source(&self, condition: &[String]) -> Vec<usize> {
        let mut src = self.model.vocab.encode(condition);
        src.truncate(self.model.config.max_source_len);
        src
    }

    /// Greedy decoding of the generator's output tokens.
    pub fn greedy(&self, condition: &[String]) -> Result<Vec<String>> {
        self.ensure_trained()?;
        let out = decode(
            &self.model,
            &[self.source(condition)],
            DecodeMode::Weighted,
            self.model.config.max_target_len,
            0,
        )?;
        Ok(self.model.vocab.decode(&out.tokens))
    }

    /// Nucleus sampling with a caller-supplied seed.
    pub fn sample(&self, condition: &[String], nucleus_p: f64, seed: u64) -> Result<Vec<String>> {
        self.ensure_trained()?;
        if !(nucleus_p > 0.0 && nucleus_p <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "nucleus mass {nucleus_p} not in (0, 1]"
            )));
        }
        let encoded = encode_items(&self.model, &[self.source(condition)])?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut prefix = vec![BOS];
        let mut out = Vec::new();
        for _ in 0..self.model.config.max_target_len {
            let step = mixed_lm::step(&self.model, &encoded, &prefix);
            let mut dist = step.per_item.into_iter().next().expect("one item");
            dist[PAD] = 0.0;
            dist[BOS] = 0.0;
            let total: f64 = dist.iter().sum();
            for v in &mut dist {
                *v /= total;
            }
            let next = sample_index(&nucleus_filter(&dist, nucleus_p)?, &mut rng);
            if next == EOS {
                break;
            }
            out.push(next);
            prefix.push(next);
        }
        Ok(self.model.vocab.decode(&out))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_checkpoint(&self.model, self.mode.checkpoint_kind(), path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (model, kind) = load_checkpoint(path)?;
        let mode = match kind.as_str() {
            "concept_generator" => AugmentMode::Concepts,
            "claim_generator" => AugmentMode::Claims,
            other => {
                return Err(Error::validation(
                    "kind",
                    format!("checkpoint kind `{other}` is not a generator"),
                ))
            }
        };
        Ok(Self { mode, model })
    }
}

fn is_concept_token(tok: &str) -> bool {
    !tok.starts_with('<') && tok.chars().any(char::is_alphabetic) && tok != SEGMENTER
}

/// Predicted concepts for an item, deduplicated and disjoint from `core`.
pub fn expand_concepts(
    title: &[String],
    entities: &BTreeSet<String>,
    core: &BTreeSet<String>,
    g: &ConditionalGenerator,
) -> Result<BTreeSet<String>> {
    let condition = concept_condition(title, entities, core)?;
    let generated = g.greedy(&condition)?;
    Ok(generated
        .into_iter()
        .filter(|t| is_concept_token(t) && !core.contains(t))
        .collect())
}

/// Sample a claim for `title` and `entities`.
pub fn generate_claim(
    title: &[String],
    entities: &BTreeSet<String>,
    g: &ConditionalGenerator,
    nucleus_p: f64,
    seed: u64,
) -> Result<String> {
    if !(nucleus_p > 0.0 && nucleus_p <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "nucleus mass {nucleus_p} not in (0, 1]"
        )));
    }
    let condition = claim_condition(title, entities)?;
    let tokens = g.sample(&condition, nucleus_p, seed)?;
    Ok(tokens
        .into_iter()
        .filter(|t| t != SEGMENTER)
        .collect::<Vec<_>>()
        .join(" "))
}

fn item_seed(seed: u64, sample: usize, item: usize) -> u64 {
    let mut z = seed
        ^ (sample as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (item as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^ (z >> 31)
}

/// Replace gold expanded concepts (or claims) with generator predictions.
pub fn augment_samples(
    samples: &[Sample],
    g: &ConditionalGenerator,
    nucleus_p: f64,
    seed: u64,
) -> Result<Vec<Sample>> {
    let indexed: Vec<(usize, &Sample)> = samples.iter().enumerate().collect();
    par::map(&indexed, |&(si, s)| {
        let mut s = s.clone();
        for (ii, item) in s.items.iter_mut().enumerate() {
            match g.mode {
                AugmentMode::Concepts => {
                    item.expanded_concepts =
                        expand_concepts(&s.title, &item.entities, &item.core_concepts, g)?;
                }
                AugmentMode::Claims => {
                    let claim = generate_claim(
                        &s.title,
                        &item.entities,
                        g,
                        nucleus_p,
                        item_seed(seed, si, ii),
                    )?;
                    item.claim = (!claim.trim().is_empty()).then_some(claim);
                }
            }
        }
        s.validated_and_truncated()
    })
    .into_iter()
    .collect()
}
