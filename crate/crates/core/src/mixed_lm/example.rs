use serde::{Deserialize, Serialize};

use crate::content::{serialize_item, ContentItem, Sample};
use crate::error::{Error, Result};

use super::network::ModelConfig;
use super::vocab::{Vocab, EOS};

/// Ablation: blank one element type of every item before serialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemMask {
    Claims,
    Entities,
    Concepts,
    ExpandedConcepts,
}

impl std::str::FromStr for ItemMask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "claims" => Ok(Self::Claims),
            "entities" => Ok(Self::Entities),
            "concepts" => Ok(Self::Concepts),
            "expanded_concepts" => Ok(Self::ExpandedConcepts),
            other => Err(Error::InvalidInput(format!("unknown mask `{other}`"))),
        }
    }
}

pub fn apply_masks(item: &ContentItem, masks: &[ItemMask]) -> ContentItem {
    let mut item = item.clone();
    for mask in masks {
        match mask {
            ItemMask::Claims => item.claim = None,
            ItemMask::Entities => item.entities.clear(),
            ItemMask::Concepts => {
                item.core_concepts.clear();
                item.expanded_concepts.clear();
            }
            ItemMask::ExpandedConcepts => item.expanded_concepts.clear(),
        }
    }
    item
}

/// Model-ready form of a sample: serialized item ids, target ids ending in
/// EOS, and plan labels aligned with the target (EOS is unlabeled).
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub items: Vec<Vec<usize>>,
    pub target: Vec<usize>,
    pub labels: Vec<Option<usize>>,
}

impl Example {
    pub fn from_sample(
        sample: &Sample,
        vocab: &Vocab,
        config: &ModelConfig,
        masks: &[ItemMask],
    ) -> Result<Self> {
        if sample.items.is_empty() {
            return Err(Error::validation(
                "items",
                "at least one content item required",
            ));
        }
        let items = sample
            .items
            .iter()
            .map(|item| {
                let serialized = serialize_item(&sample.title, &apply_masks(item, masks))?;
                let mut ids = vocab.encode(&serialized.tokens);
                ids.truncate(config.max_source_len);
                Ok(ids)
            })
            .collect::<Result<Vec<_>>>()?;
        let keep = sample.target.len().min(config.max_target_len);
        let mut target = vocab.encode(&sample.target[..keep]);
        target.push(EOS);
        let mut labels: Vec<Option<usize>> =
            sample.plan_labels.iter().take(keep).copied().collect();
        labels.resize(keep, None);
        labels.push(None);
        Ok(Self {
            id: sample.id.clone(),
            items,
            target,
            labels,
        })
    }

    /// Decoder input: BOS followed by all target ids but the last.
    pub fn decoder_input(&self) -> Vec<usize> {
        let mut input = Vec::with_capacity(self.target.len());
        input.push(super::vocab::BOS);
        input.extend_from_slice(&self.target[..self.target.len() - 1]);
        input
    }
}

pub fn examples_from_samples(
    samples: &[Sample],
    vocab: &Vocab,
    config: &ModelConfig,
    masks: &[ItemMask],
) -> Result<Vec<Example>> {
    samples
        .iter()
        .map(|s| Example::from_sample(s, vocab, config, masks))
        .collect()
}
