//! Content-item construction from (title, reference) pairs.

mod claim;
mod concept;
mod entity;

use std::fs::{self, File};
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use claim::{
    classify_claim, parse_labeled_sentences, train_claim_classifier, ClaimClassifier, ClaimLabel,
    ClaimTrainConfig, CLAIM_THRESHOLD,
};
pub use concept::{
    extract_concepts, extract_tagged_concepts, split_concepts, ConceptLexicon, ConcretenessLexicon,
    DefaultTagger, Pos, PosTagger, CORE_CONCRETENESS,
};
pub use entity::{link_entities, EntityDictionary};

pub use crate::text::{segment_sentences, Abbreviations};

use crate::content::{save_corpus, ContentItem, Sample};
use crate::error::{Error, Result};
use crate::text::tokenize;

/// Sentences shorter than this many tokens yield no content item.
pub const MIN_ITEM_TOKENS: usize = 5;

/// Lexical resources used to build content items.
pub struct Resources {
    pub entities: EntityDictionary,
    pub concepts: ConceptLexicon,
    pub concreteness: ConcretenessLexicon,
    pub abbreviations: Abbreviations,
    pub tagger: Box<dyn PosTagger>,
    pub claims: Option<ClaimClassifier>,
}

impl Resources {
    pub fn new(
        entities: EntityDictionary,
        concepts: ConceptLexicon,
        concreteness: ConcretenessLexicon,
    ) -> Self {
        Self {
            entities,
            concepts,
            concreteness,
            abbreviations: Abbreviations::default(),
            tagger: Box::new(DefaultTagger::default()),
            claims: None,
        }
    }

    pub fn with_tagger(mut self, tagger: Box<dyn PosTagger>) -> Self {
        self.tagger = tagger;
        self
    }

    pub fn with_claims(mut self, clf: ClaimClassifier) -> Self {
        self.claims = Some(clf);
        self
    }

    pub fn load(
        entities: impl AsRef<Path>,
        concepts: impl AsRef<Path>,
        concreteness: impl AsRef<Path>,
    ) -> Result<Self> {
        Ok(Self::new(
            EntityDictionary::parse(&read(entities.as_ref())?)?,
            ConceptLexicon::parse(&read(concepts.as_ref())?)?,
            ConcretenessLexicon::parse(&read(concreteness.as_ref())?)?,
        ))
    }
}

pub(crate) fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Build one sample: each sentence of at least five tokens becomes a
/// content item, and its target tokens are labeled with that item.
pub fn build_sample(id: &str, title: &str, reference: &str, res: &Resources) -> Result<Sample> {
    let mut items = Vec::new();
    let mut target = Vec::new();
    let mut plan_labels = Vec::new();
    for sentence in segment_sentences(reference, &res.abbreviations) {
        let tokens = tokenize(&sentence);
        let label = if tokens.len() >= MIN_ITEM_TOKENS {
            let entities = link_entities(&tokens, &res.entities);
            let tagged = extract_tagged_concepts(&tokens, &res.concepts, res.tagger.as_ref());
            let concepts = tagged.keys().cloned().collect();
            let (core, expanded) = split_concepts(&concepts, &tagged, &res.concreteness);
            let claim = match &res.claims {
                Some(clf) if classify_claim(&sentence, clf)? == ClaimLabel::Claim => {
                    Some(sentence.clone())
                }
                _ => None,
            };
            items.push(ContentItem {
                entities,
                core_concepts: core,
                expanded_concepts: expanded,
                claim,
                concatenated: None,
            });
            Some(items.len() - 1)
        } else {
            None
        };
        plan_labels.extend(std::iter::repeat_n(label, tokens.len()));
        target.extend(tokens);
    }
    if items.is_empty() {
        return Err(Error::InvalidInput(format!(
            "sample `{id}`: no content items"
        )));
    }
    Sample {
        id: id.to_string(),
        title: tokenize(title),
        items,
        target,
        plan_labels,
    }
    .validated_and_truncated()
}

/// One raw input record.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RawRecord {
    #[serde(default)]
    pub id: Option<String>,
    pub title: String,
    pub reference: String,
}

pub fn load_raw(path: impl AsRef<Path>) -> Result<Vec<RawRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut rec: RawRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        if rec.id.is_none() {
            rec.id = Some(format!("line-{}", idx + 1));
        }
        out.push(rec);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PreprocessSummary {
    pub written: usize,
    pub skipped: usize,
}

/// Build samples for every raw record; records without any retained
/// sentence are skipped and counted.
pub fn preprocess_records(records: &[RawRecord], res: &Resources) -> Result<(Vec<Sample>, usize)> {
    let mut samples = Vec::with_capacity(records.len());
    let mut skipped = 0;
    for rec in records {
        let id = rec.id.clone().unwrap_or_default();
        match build_sample(&id, &rec.title, &rec.reference, res) {
            Ok(s) => samples.push(s),
            Err(Error::InvalidInput(msg)) => {
                log::warn!("skipping: {msg}");
                skipped += 1;
            }
            Err(e) => return Err(e),
        }
    }
    Ok((samples, skipped))
}

pub fn preprocess_file(
    input: impl AsRef<Path>,
    res: &Resources,
    output: impl AsRef<Path>,
) -> Result<PreprocessSummary> {
    let records = load_raw(input)?;
    let (samples, skipped) = preprocess_records(&records, res)?;
    save_corpus(&samples, output)?;
    Ok(PreprocessSummary {
        written: samples.len(),
        skipped,
    })
}
