//! Content items, samples, their serialized token form, and corpus I/O.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{tokenize, SEGMENTER};

pub const MAX_ITEMS: usize = 10;
pub const MAX_ENTITIES: usize = 20;
pub const MAX_CONCEPTS: usize = 20;

/// One planning unit: entities, core and expanded concepts, optional claim.
///
/// `concatenated` is only set for the concatenation baseline, where a single
/// item carries the already-serialized bodies of several items.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ContentItem {
    pub entities: BTreeSet<String>,
    pub core_concepts: BTreeSet<String>,
    pub expanded_concepts: BTreeSet<String>,
    pub claim: Option<String>,
    pub concatenated: Option<Vec<String>>,
}

impl ContentItem {
    pub fn new<E, C, X>(entities: E, core: C, expanded: X, claim: Option<&str>) -> Self
    where
        E: IntoIterator,
        E::Item: Into<String>,
        C: IntoIterator,
        C::Item: Into<String>,
        X: IntoIterator,
        X::Item: Into<String>,
    {
        Self {
            entities: entities.into_iter().map(Into::into).collect(),
            core_concepts: core.into_iter().map(Into::into).collect(),
            expanded_concepts: expanded.into_iter().map(Into::into).collect(),
            claim: claim.map(str::to_string),
            concatenated: None,
        }
    }

    pub fn has_claim(&self) -> bool {
        self.claim.is_some()
    }

    fn validate(&self, field: &str) -> Result<()> {
        for e in &self.entities {
            check_element(e, &format!("{field}.entities"))?;
        }
        for (name, set) in [
            ("core_concepts", &self.core_concepts),
            ("expanded_concepts", &self.expanded_concepts),
        ] {
            for c in set {
                check_element(c, &format!("{field}.{name}"))?;
                if c.chars().any(char::is_uppercase) {
                    return Err(Error::validation(
                        format!("{field}.{name}"),
                        format!("concept `{c}` is not lowercase"),
                    ));
                }
            }
        }
        if let Some(clash) = self
            .core_concepts
            .intersection(&self.expanded_concepts)
            .next()
        {
            return Err(Error::validation(
                format!("{field}.expanded_concepts"),
                format!("`{clash}` is also a core concept"),
            ));
        }
        if let Some(claim) = &self.claim {
            if claim.trim().is_empty() {
                return Err(Error::validation(format!("{field}.claim"), "empty claim"));
            }
            if claim.contains(SEGMENTER) {
                return Err(Error::validation(
                    format!("{field}.claim"),
                    "claim contains the segmenter token",
                ));
            }
        }
        Ok(())
    }

    /// Apply the element caps: entities and concepts keep their
    /// lexicographically smallest members; core concepts are kept first.
    pub fn truncate(&mut self) {
        truncate_set(&mut self.entities, MAX_ENTITIES);
        truncate_set(&mut self.core_concepts, MAX_CONCEPTS);
        let room = MAX_CONCEPTS - self.core_concepts.len();
        truncate_set(&mut self.expanded_concepts, room);
    }
}

fn truncate_set(set: &mut BTreeSet<String>, cap: usize) {
    while set.len() > cap {
        set.pop_last();
    }
}

fn check_element(value: &str, field: &str) -> Result<()> {
    if value.is_empty() {
        return Err(Error::validation(field, "empty element"));
    }
    if value.chars().any(char::is_whitespace) {
        return Err(Error::validation(
            field,
            format!("`{value}` contains whitespace"),
        ));
    }
    if value.contains(SEGMENTER) {
        return Err(Error::validation(
            field,
            format!("`{value}` contains the segmenter token"),
        ));
    }
    Ok(())
}

/// A titled example: unordered content items, target tokens and the gold
/// token-to-item plan labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub id: String,
    pub title: Vec<String>,
    pub items: Vec<ContentItem>,
    pub target: Vec<String>,
    pub plan_labels: Vec<Option<usize>>,
}

impl Sample {
    pub fn validate(&self) -> Result<()> {
        if self.title.is_empty() {
            return Err(Error::validation("title", "empty title"));
        }
        for tok in self.title.iter().chain(&self.target) {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::validation("target", format!("bad token `{tok}`")));
            }
        }
        if self.items.is_empty() {
            return Err(Error::validation(
                "items",
                "at least one content item required",
            ));
        }
        if self.items.len() > MAX_ITEMS {
            return Err(Error::validation(
                "items",
                format!("{} items exceed the cap of {MAX_ITEMS}", self.items.len()),
            ));
        }
        for (i, item) in self.items.iter().enumerate() {
            item.validate(&format!("items[{i}]"))?;
        }
        self.validate_labels(self.items.len())
    }

    fn validate_labels(&self, item_count: usize) -> Result<()> {
        if self.plan_labels.len() != self.target.len() {
            return Err(Error::validation(
                "plan_labels",
                format!(
                    "{} labels for {} target tokens",
                    self.plan_labels.len(),
                    self.target.len()
                ),
            ));
        }
        if let Some(bad) = self
            .plan_labels
            .iter()
            .flatten()
            .find(|&&l| l >= item_count)
        {
            return Err(Error::validation(
                "plan_labels",
                format!("label {bad} out of range for {item_count} items"),
            ));
        }
        Ok(())
    }

    /// Validate, then apply the item and element caps. Items beyond the cap
    /// are dropped in storage order and labels pointing at them become
    /// unlabeled.
    pub fn validated_and_truncated(mut self) -> Result<Self> {
        if self.items.is_empty() {
            return Err(Error::validation(
                "items",
                "at least one content item required",
            ));
        }
        self.validate_labels(self.items.len())?;
        if self.items.len() > MAX_ITEMS {
            self.items.truncate(MAX_ITEMS);
            for label in &mut self.plan_labels {
                if matches!(label, Some(l) if *l >= MAX_ITEMS) {
                    *label = None;
                }
            }
        }
        for item in &mut self.items {
            item.truncate();
        }
        self.validate()?;
        Ok(self)
    }
}

/// Token form of one content item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SerializedItem {
    pub tokens: Vec<String>,
}

impl SerializedItem {
    pub fn segmenter_count(&self) -> usize {
        self.tokens.iter().filter(|t| *t == SEGMENTER).count()
    }
}

impl fmt::Display for SerializedItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens.join(" "))
    }
}

/// `title <s> entities <s> concepts [<s> claim]`, with entities and the
/// merged concept set in lexicographic order.
pub fn serialize_item(title: &[String], item: &ContentItem) -> Result<SerializedItem> {
    if title.is_empty() {
        return Err(Error::InvalidInput("empty title".into()));
    }
    if let Some(t) = title.iter().find(|t| t.contains(SEGMENTER)) {
        return Err(Error::InvalidInput(format!(
            "title token `{t}` contains the segmenter"
        )));
    }
    let mut tokens: Vec<String> = title.to_vec();
    if let Some(body) = &item.concatenated {
        tokens.push(SEGMENTER.to_string());
        tokens.extend(body.iter().cloned());
        return Ok(SerializedItem { tokens });
    }
    for e in &item.entities {
        check_element(e, "entities").map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    let concepts: BTreeSet<&String> = item
        .core_concepts
        .iter()
        .chain(&item.expanded_concepts)
        .collect();
    for c in &concepts {
        check_element(c, "concepts").map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    tokens.push(SEGMENTER.to_string());
    tokens.extend(item.entities.iter().cloned());
    tokens.push(SEGMENTER.to_string());
    tokens.extend(concepts.into_iter().cloned());
    if let Some(claim) = &item.claim {
        if claim.contains(SEGMENTER) {
            return Err(Error::InvalidInput(
                "claim contains the segmenter token".into(),
            ));
        }
        tokens.push(SEGMENTER.to_string());
        tokens.extend(tokenize(claim));
    }
    Ok(SerializedItem { tokens })
}

#[derive(Debug, Serialize, Deserialize)]
struct ItemRecord {
    #[serde(default)]
    entities: Vec<String>,
    #[serde(default)]
    core_concepts: Vec<String>,
    #[serde(default)]
    expanded_concepts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    claim: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    segments: Option<Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleRecord {
    id: String,
    title: String,
    items: Vec<ItemRecord>,
    target: String,
    plan_labels: Vec<Option<usize>>,
}

impl From<&Sample> for SampleRecord {
    fn from(s: &Sample) -> Self {
        SampleRecord {
            id: s.id.clone(),
            title: s.title.join(" "),
            items: s
                .items
                .iter()
                .map(|it| ItemRecord {
                    entities: it.entities.iter().cloned().collect(),
                    core_concepts: it.core_concepts.iter().cloned().collect(),
                    expanded_concepts: it.expanded_concepts.iter().cloned().collect(),
                    claim: it.claim.clone(),
                    segments: it.concatenated.clone(),
                })
                .collect(),
            target: s.target.join(" "),
            plan_labels: s.plan_labels.clone(),
        }
    }
}

impl From<SampleRecord> for Sample {
    fn from(r: SampleRecord) -> Self {
        Sample {
            id: r.id,
            title: r.title.split_whitespace().map(String::from).collect(),
            items: r
                .items
                .into_iter()
                .map(|it| ContentItem {
                    entities: it.entities.into_iter().collect(),
                    core_concepts: it.core_concepts.into_iter().collect(),
                    expanded_concepts: it.expanded_concepts.into_iter().collect(),
                    claim: it.claim,
                    concatenated: it.segments,
                })
                .collect(),
            target: r.target.split_whitespace().map(String::from).collect(),
            plan_labels: r.plan_labels,
        }
    }
}

/// Parse one corpus line.
pub fn parse_sample_line(line: &str) -> std::result::Result<Sample, String> {
    let record: SampleRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    Ok(record.into())
}

pub fn sample_to_line(sample: &Sample) -> String {
    serde_json::to_string(&SampleRecord::from(sample)).expect("sample records always serialize")
}

/// Read a corpus in the one-record-per-line format. Blank lines are skipped.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Sample>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut samples = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let sample = parse_sample_line(&line).map_err(|message| Error::Parse {
            line: idx + 1,
            message,
        })?;
        let sample = sample.validated_and_truncated().map_err(|e| match e {
            Error::Validation { field, message } => Error::Validation {
                field,
                message: format!("line {}: {message}", idx + 1),
            },
            other => other,
        })?;
        samples.push(sample);
    }
    Ok(samples)
}

pub fn save_corpus(samples: &[Sample], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in samples {
        writeln!(w, "{}", sample_to_line(s)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
