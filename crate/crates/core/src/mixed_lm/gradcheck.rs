//! Central finite-difference verification of the training gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;

use super::example::Example;
use super::network::{MixedLm, ModelConfig};
use super::train::{forward_train, loss_and_grads};
use super::vocab::{Vocab, BOS, EOS, PAD, SEG};

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for the relative error of near-zero gradients.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct GradEntry {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub param_count: usize,
    pub entries: Vec<GradEntry>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Vocabulary for the check: reserved tokens plus a few words, the last of
/// which never occurs in the generated example.
pub fn check_vocab() -> Vocab {
    let words: Vec<String> = ["alpha", "beta", "gamma", "unused"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    Vocab::build([words.iter()], 1)
}

/// A random two-item example over the check vocabulary, avoiding `unused`.
pub fn check_example(vocab: &Vocab, config: &ModelConfig, seed: u64) -> Example {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let unused = vocab.id("unused");
    let pool: Vec<usize> = (0..vocab.len())
        .filter(|&i| i != PAD && i != BOS && i != EOS && i != SEG && i != unused)
        .collect();
    let pick = |rng: &mut ChaCha8Rng| pool[rng.random_range(0..pool.len())];
    let src_len = config.max_source_len.clamp(2, 5);
    let items = (0..2)
        .map(|_| {
            let mut ids: Vec<usize> = (0..src_len).map(|_| pick(&mut rng)).collect();
            ids[1] = SEG;
            ids
        })
        .collect();
    let tgt_len = config.max_target_len.clamp(1, 3);
    let mut target: Vec<usize> = (0..tgt_len).map(|_| pick(&mut rng)).collect();
    target.push(EOS);
    let mut labels: Vec<Option<usize>> = (0..tgt_len)
        .map(|t| {
            if t == 0 {
                None
            } else {
                Some(rng.random_range(0..2))
            }
        })
        .collect();
    labels.push(None);
    Example {
        id: format!("gradcheck-{seed}"),
        items,
        target,
        labels,
    }
}

/// Compare analytic gradients of the joint loss against central
/// differences on every parameter of a freshly initialized model.
pub fn finite_difference_check(config: &ModelConfig, seed: u64) -> Result<GradCheckReport> {
    let vocab = check_vocab();
    let mut model = MixedLm::new(config.clone(), vocab, seed)?;
    let ex = check_example(&model.vocab, config, seed);
    let (_, grads) = loss_and_grads(&model, &ex, 1.0)?;
    let mut entries = Vec::with_capacity(model.params.scalar_count());
    let mut max_rel_error: f64 = 0.0;
    for pid in 0..model.params.len() {
        for k in 0..model.params.value(pid).data.len() {
            let orig = model.params.value(pid).data[k];
            model.params.value_mut(pid).data[k] = orig + FD_STEP;
            let plus = forward_train(&model, &ex)?.loss;
            model.params.value_mut(pid).data[k] = orig - FD_STEP;
            let minus = forward_train(&model, &ex)?.loss;
            model.params.value_mut(pid).data[k] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let analytic = grads.values[pid].data[k];
            max_rel_error = max_rel_error.max(relative_error(analytic, numeric));
            entries.push(GradEntry {
                param: model.params.name(pid).to_string(),
                index: k,
                analytic,
                numeric,
            });
        }
    }
    Ok(GradCheckReport {
        max_rel_error,
        param_count: model.params.scalar_count(),
        entries,
    })
}

/// Configuration small enough for an exhaustive check (< 2k parameters).
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        embed_dim: 8,
        hidden_dim: 8,
        heads: 2,
        ffn_dim: 8,
        encoder_layers: 1,
        decoder_layers: 1,
        plan_dim: 4,
        max_source_len: 6,
        max_target_len: 4,
    }
}
