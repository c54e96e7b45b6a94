//! Synthetic planning corpora with a known sentence-to-item mapping.
//!
//! Every topic owns a fixed five-token sentence template with one concept
//! slot. A sample holds a few items with distinct topics in shuffled order;
//! its target realizes each item's sentence in ascending topic order.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::content::{ContentItem, Sample};
use crate::error::{Error, Result};
use crate::preprocess::RawRecord;
use crate::text::tokenize;

pub struct Topic {
    pub entity: &'static str,
    pub mention: &'static str,
    pub verb: &'static str,
    /// Sentence with `{}` marking the concept slot.
    pub template: &'static str,
    pub concepts: [&'static str; 5],
}

pub const TOPICS: [Topic; 6] = [
    Topic {
        entity: "Economy",
        mention: "economy",
        verb: "need",
        template: "The economy needs more {}.",
        concepts: ["steel", "lumber", "copper", "grain", "cotton"],
    },
    Topic {
        entity: "Education",
        mention: "schools",
        verb: "teach",
        template: "Schools should teach more {}.",
        concepts: ["music", "algebra", "chemistry", "poetry", "geography"],
    },
    Topic {
        entity: "Health",
        mention: "doctors",
        verb: "warn",
        template: "Doctors often warn about {}.",
        concepts: ["sugar", "tobacco", "alcohol", "salt", "caffeine"],
    },
    Topic {
        entity: "Urban_planning",
        mention: "cities",
        verb: "invest",
        template: "Cities must invest in {}.",
        concepts: ["tram", "park", "bridge", "library", "sewer"],
    },
    Topic {
        entity: "Agriculture",
        mention: "farmers",
        verb: "depend",
        template: "Farmers depend heavily on {}.",
        concepts: ["rain", "fertilizer", "tractor", "seed", "irrigation"],
    },
    Topic {
        entity: "Elections",
        mention: "voters",
        verb: "trust",
        template: "Voters rarely ever trust {}.",
        concepts: ["pollster", "senator", "lobbyist", "pundit", "mayor"],
    },
];

pub const TITLE: &str = "Policy debate";

/// Topics whose template expresses an opinion.
fn is_claim_topic(t: &Topic) -> bool {
    t.template.contains("should") || t.template.contains("must")
}

fn sentence(topic: &Topic, concept: &str) -> String {
    topic.template.replace("{}", concept)
}

struct Draw {
    /// (topic, concept) per item, in storage order.
    items: Vec<(usize, &'static str)>,
}

impl Draw {
    fn ordered(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.items.len()).collect();
        order.sort_by_key(|&i| self.items[i].0);
        order
    }

    fn reference(&self) -> String {
        self.ordered()
            .into_iter()
            .map(|i| sentence(&TOPICS[self.items[i].0], self.items[i].1))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn draws(n: usize, items_per_sample: usize, seed: u64) -> Result<Vec<Draw>> {
    if items_per_sample == 0 || items_per_sample > TOPICS.len() {
        return Err(Error::InvalidInput(format!(
            "items per sample must be in 1..={}",
            TOPICS.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<usize> = (0..TOPICS.len()).collect();
    Ok((0..n)
        .map(|_| {
            let mut topics: Vec<usize> = all
                .choose_multiple(&mut rng, items_per_sample)
                .copied()
                .collect();
            topics.shuffle(&mut rng);
            let items = topics
                .into_iter()
                .map(|t| (t, *TOPICS[t].concepts.choose(&mut rng).expect("concepts")))
                .collect();
            Draw { items }
        })
        .collect())
}

/// `n` samples whose items are stored shuffled and whose plan labels give
/// the storage index of the item realized by each token.
pub fn planning_corpus(n: usize, items_per_sample: usize, seed: u64) -> Result<Vec<Sample>> {
    let title = tokenize(TITLE);
    draws(n, items_per_sample, seed)?
        .into_iter()
        .enumerate()
        .map(|(idx, d)| {
            let items = d
                .items
                .iter()
                .map(|&(t, c)| {
                    ContentItem::new(
                        [TOPICS[t].entity],
                        [TOPICS[t].verb],
                        [c],
                        is_claim_topic(&TOPICS[t])
                            .then(|| sentence(&TOPICS[t], c))
                            .as_deref(),
                    )
                })
                .collect();
            let mut target = Vec::new();
            let mut plan_labels = Vec::new();
            for i in d.ordered() {
                let (t, c) = d.items[i];
                let toks = tokenize(&sentence(&TOPICS[t], c));
                plan_labels.extend(std::iter::repeat_n(Some(i), toks.len()));
                target.extend(toks);
            }
            Sample {
                id: format!("synth-{idx:04}"),
                title: title.clone(),
                items,
                target,
                plan_labels,
            }
            .validated_and_truncated()
        })
        .collect()
}

/// Raw (title, reference) records drawn like [`planning_corpus`].
pub fn raw_records(n: usize, items_per_sample: usize, seed: u64) -> Result<Vec<RawRecord>> {
    Ok(draws(n, items_per_sample, seed)?
        .into_iter()
        .enumerate()
        .map(|(idx, d)| RawRecord {
            id: Some(format!("raw-{idx:04}")),
            title: TITLE.to_string(),
            reference: d.reference(),
        })
        .collect())
}

pub fn save_raw_records(records: &[RawRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub const ENTITIES_FILE: &str = "entities.tsv";
pub const CONCEPTS_FILE: &str = "concepts.tsv";
pub const CONCRETENESS_FILE: &str = "concreteness.tsv";
pub const CLAIMS_FILE: &str = "claims.tsv";
pub const TAGGER_FILE: &str = "pos.tsv";

/// Write entity, concept, concreteness and labeled-claim resources
/// covering the synthetic vocabulary into `dir`.
pub fn write_resources(dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entities = String::from("# mention\tentity\n");
    let mut concepts = String::from("# lemma\tpos\n");
    let mut concreteness = String::from("# word\tscore\n");
    let mut claims = String::from("# label\tsentence\n");
    let mut tags = String::from("# word\tpos\n");
    let mut nouns = BTreeSet::new();
    for t in &TOPICS {
        entities.push_str(&format!("{}\t{}\n", t.mention, t.entity));
        concepts.push_str(&format!("{}\tv\n", t.verb));
        concreteness.push_str(&format!("{}\t2.0\n", t.verb));
        let surface = tokenize(t.template)
            .into_iter()
            .find(|w| crate::text::lemmatize(w, None) == t.verb || w == t.verb)
            .expect("template contains its verb");
        tags.push_str(&format!("{}\tv\n", surface.to_lowercase()));
        for c in t.concepts {
            nouns.insert(c);
            let label = if is_claim_topic(t) { "claim" } else { "fact" };
            claims.push_str(&format!("{label}\t{}\n", sentence(t, c)));
        }
    }
    for n in nouns {
        concepts.push_str(&format!("{n}\tn\n"));
        concreteness.push_str(&format!("{n}\t4.5\n"));
    }
    for (name, body) in [
        (ENTITIES_FILE, entities),
        (CONCEPTS_FILE, concepts),
        (CONCRETENESS_FILE, concreteness),
        (CLAIMS_FILE, claims),
        (TAGGER_FILE, tags),
    ] {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
