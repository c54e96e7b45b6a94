//! Autoregressive decoding over the mixture.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Tape;
use crate::error::{Error, Result};
use crate::par;

use super::network::MixedLm;
use super::plan::{argmax, encode_items, mixture_step, EncodedItems, StepPlanScores};
use super::vocab::{BOS, EOS, PAD};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    /// Mix every item's distribution with the plan weights.
    #[default]
    Weighted,
    /// Use only the item with the highest plan score.
    GreedySelect,
    /// Use one uniformly drawn item per step.
    RandomSelect,
}

impl std::str::FromStr for DecodeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weighted" => Ok(Self::Weighted),
            "greedy_select" => Ok(Self::GreedySelect),
            "random_select" => Ok(Self::RandomSelect),
            other => Err(Error::InvalidInput(format!(
                "unknown decode mode `{other}`"
            ))),
        }
    }
}

/// One decoding step: every item's next-token distribution and the plan
/// scores computed from the current prefix.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub per_item: Vec<Vec<f64>>,
    pub scores: StepPlanScores,
}

/// Run every item's decoder over `prefix` (starting with BOS) and score
/// the last position.
pub fn step(model: &MixedLm, encoded: &EncodedItems, prefix: &[usize]) -> StepOutput {
    let indices: Vec<usize> = (0..encoded.len()).collect();
    let rows = par::map(&indices, |&i| {
        let mut tape = Tape::new(&model.params);
        let memory = tape.constant(encoded.states[i].clone());
        let s = model.decode(&mut tape, memory, prefix);
        let last = tape.slice_rows(s, prefix.len() - 1, 1);
        let h = tape.slice_rows(memory, 0, 1);
        let e = model.plan_scores_node(&mut tape, h, last);
        let lp = model.log_probs_node(&mut tape, last);
        let probs: Vec<f64> = tape.value(lp).data.iter().map(|x| x.exp()).collect();
        (tape.value(e).data[0], probs)
    });
    let (raw, per_item): (Vec<f64>, Vec<Vec<f64>>) = rows.into_iter().unzip();
    StepOutput {
        per_item,
        scores: StepPlanScores::from_raw(raw),
    }
}

/// Generated ids (EOS excluded) and the plan weights used at each step.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub tokens: Vec<usize>,
    pub plan: Vec<StepPlanScores>,
}

/// Greedy autoregressive decoding. Stops at EOS or after `max_len` tokens.
pub fn decode(
    model: &MixedLm,
    items: &[Vec<usize>],
    mode: DecodeMode,
    max_len: usize,
    seed: u64,
) -> Result<Decoded> {
    let mut out = Decoded {
        tokens: Vec::new(),
        plan: Vec::new(),
    };
    if max_len == 0 {
        return Ok(out);
    }
    let encoded = encode_items(model, items)?;
    let n = encoded.len();
    let max_len = max_len.min(model.config.max_target_len);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prefix = vec![BOS];
    while out.tokens.len() < max_len {
        let step = step(model, &encoded, &prefix);
        let used = match mode {
            DecodeMode::Weighted => step.scores,
            DecodeMode::GreedySelect => {
                let k = step.scores.argmax();
                StepPlanScores {
                    raw: step.scores.raw,
                    dist: StepPlanScores::one_hot(n, k).dist,
                }
            }
            DecodeMode::RandomSelect => {
                let k = rng.random_range(0..n);
                StepPlanScores {
                    raw: step.scores.raw,
                    dist: StepPlanScores::one_hot(n, k).dist,
                }
            }
        };
        let mut mix = mixture_step(&step.per_item, &used)?;
        mix[PAD] = f64::NEG_INFINITY;
        mix[BOS] = f64::NEG_INFINITY;
        let next = argmax(&mix);
        if next == EOS {
            break;
        }
        out.tokens.push(next);
        out.plan.push(used);
        prefix.push(next);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_modes() {
        assert_eq!(
            "weighted".parse::<DecodeMode>().unwrap(),
            DecodeMode::Weighted
        );
        assert_eq!(
            "random_select".parse::<DecodeMode>().unwrap(),
            DecodeMode::RandomSelect
        );
        assert!("beam".parse::<DecodeMode>().is_err());
    }
}
