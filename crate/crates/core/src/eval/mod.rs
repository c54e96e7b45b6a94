//! Automatic metrics and post-hoc analyses of generated outputs.

mod metrics;

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use metrics::{
    bleu2, chunk_count, meteor, meteor_alignment, meteor_pair, rouge2, Rouge2, SynonymTable,
    BLEU_SMOOTHING, METEOR_ALPHA, METEOR_BETA, METEOR_GAMMA,
};

use crate::content::Sample;
use crate::error::{Error, Result};
use crate::mixed_lm::{align_output, AlignmentResult, DecodeMode, StepPlanScores};
use crate::preprocess::{classify_claim, ClaimClassifier, ClaimLabel};
use crate::text::sentence_spans;

/// One generated output with the plan distribution used at every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub id: String,
    pub mode: DecodeMode,
    pub tokens: Vec<String>,
    pub text: String,
    /// Plan distribution `d` per emitted token.
    pub plan: Vec<Vec<f64>>,
    /// Whether each input item carries a claim.
    pub item_claims: Vec<bool>,
}

impl GenerationRecord {
    pub fn align(&self) -> Result<AlignedSample> {
        let plan: Vec<StepPlanScores> = self
            .plan
            .iter()
            .map(|d| StepPlanScores {
                raw: Vec::new(),
                dist: d.clone(),
            })
            .collect();
        let spans = sentence_spans(&self.tokens);
        let alignment = align_output(&self.tokens, &plan, &spans, self.item_claims.len())?;
        Ok(AlignedSample {
            tokens: self.tokens.clone(),
            item_claims: self.item_claims.clone(),
            alignment,
        })
    }
}

pub fn load_generations(path: impl AsRef<Path>) -> Result<Vec<GenerationRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn save_generations(records: &[GenerationRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

/// Corpus-level automatic scores, all percentages except the length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu2: f64,
    pub rouge2_recall: f64,
    pub rouge2_f1: f64,
    pub meteor: f64,
    pub mean_output_length: f64,
    pub pairs: usize,
    pub rouge2_skipped: usize,
}

pub fn evaluate(
    hyps: &[Vec<String>],
    refs: &[Vec<String>],
    synonyms: Option<&SynonymTable>,
) -> Result<MetricReport> {
    let lower = |xs: &[Vec<String>]| -> Vec<Vec<String>> {
        xs.iter()
            .map(|s| s.iter().map(|t| t.to_lowercase()).collect())
            .collect()
    };
    let hyps = lower(hyps);
    let refs = lower(refs);
    let rouge = rouge2(&hyps, &refs)?;
    Ok(MetricReport {
        bleu2: bleu2(&hyps, &refs)?,
        rouge2_recall: rouge.recall,
        rouge2_f1: rouge.f1,
        meteor: meteor(&hyps, &refs, synonyms)?,
        mean_output_length: hyps.iter().map(Vec::len).sum::<usize>() as f64 / hyps.len() as f64,
        pairs: hyps.len(),
        rouge2_skipped: rouge.skipped,
    })
}

/// Score generations against the targets of the reference corpus, matched
/// by sample id.
pub fn evaluate_generations(
    records: &[GenerationRecord],
    references: &[Sample],
    synonyms: Option<&SynonymTable>,
) -> Result<MetricReport> {
    let by_id: HashMap<&str, &Sample> = references.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut hyps = Vec::with_capacity(records.len());
    let mut refs = Vec::with_capacity(records.len());
    for r in records {
        let s = by_id.get(r.id.as_str()).ok_or_else(|| {
            Error::InvalidInput(format!("generation `{}` has no reference sample", r.id))
        })?;
        hyps.push(r.tokens.clone());
        refs.push(s.target.clone());
    }
    evaluate(&hyps, &refs, synonyms)
}

/// A generated token sequence with its alignment to the input items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedSample {
    pub tokens: Vec<String>,
    pub item_claims: Vec<bool>,
    pub alignment: AlignmentResult,
}

/// Percentage of items aligned to at least one sentence, micro-averaged.
pub fn coverage_report(alignments: &[AlignmentResult]) -> Result<f64> {
    if alignments.is_empty() {
        return Err(Error::InvalidInput("no alignments to report on".into()));
    }
    let aligned: usize = alignments.iter().map(|a| a.aligned_items).sum();
    let total: usize = alignments.iter().map(|a| a.item_count).sum();
    Ok(if total == 0 {
        0.0
    } else {
        100.0 * aligned as f64 / total as f64
    })
}

/// Serialized as a number, or the string `"undefined"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Realization {
    Rate(f64),
    /// No output sentence was aligned to an item carrying a claim.
    Undefined,
}

impl Serialize for Realization {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Realization::Rate(r) => s.serialize_f64(*r),
            Realization::Undefined => s.serialize_str("undefined"),
        }
    }
}

impl<'de> Deserialize<'de> for Realization {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::Number(n) => n
                .as_f64()
                .map(Realization::Rate)
                .ok_or_else(|| serde::de::Error::custom("rate out of range")),
            serde_json::Value::String(s) if s == "undefined" => Ok(Realization::Undefined),
            other => Err(serde::de::Error::custom(format!(
                "bad realization rate {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClaimRealization {
    pub claim_aligned_sentences: usize,
    pub labeled_claim: usize,
    pub rate: Realization,
}

/// Among sentences aligned to claim-bearing items, the percentage the
/// classifier labels as claims.
pub fn claim_realization_rate(
    samples: &[AlignedSample],
    clf: &ClaimClassifier,
) -> Result<ClaimRealization> {
    if !clf.is_trained() {
        return Err(Error::Untrained("claim classifier"));
    }
    let mut aligned = 0;
    let mut claims = 0;
    for s in samples {
        for (&(start, end), item) in s.alignment.spans.iter().zip(&s.alignment.sentence_items) {
            let Some(k) = *item else { continue };
            if !s.item_claims.get(k).copied().unwrap_or(false) {
                continue;
            }
            aligned += 1;
            let sentence = s.tokens[start..end].join(" ");
            if classify_claim(&sentence, clf)? == ClaimLabel::Claim {
                claims += 1;
            }
        }
    }
    let rate = if aligned == 0 {
        Realization::Undefined
    } else {
        Realization::Rate(100.0 * claims as f64 / aligned as f64)
    };
    Ok(ClaimRealization {
        claim_aligned_sentences: aligned,
        labeled_claim: claims,
        rate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub samples: usize,
    pub items: usize,
    pub aligned_items: usize,
    pub coverage: f64,
    pub sentences: usize,
    pub aligned_sentences: usize,
    pub claim_realization: Option<ClaimRealization>,
}

/// Alignment coverage and, when a classifier is given, claim realization.
pub fn analyze(
    records: &[GenerationRecord],
    clf: Option<&ClaimClassifier>,
) -> Result<AnalysisReport> {
    let aligned: Vec<AlignedSample> = records
        .iter()
        .map(GenerationRecord::align)
        .collect::<Result<_>>()?;
    let alignments: Vec<AlignmentResult> = aligned.iter().map(|a| a.alignment.clone()).collect();
    Ok(AnalysisReport {
        samples: records.len(),
        items: alignments.iter().map(|a| a.item_count).sum(),
        aligned_items: alignments.iter().map(|a| a.aligned_items).sum(),
        coverage: coverage_report(&alignments)?,
        sentences: alignments.iter().map(|a| a.spans.len()).sum(),
        aligned_sentences: alignments
            .iter()
            .map(|a| a.sentence_items.iter().flatten().count())
            .sum(),
        claim_realization: clf
            .map(|c| claim_realization_rate(&aligned, c))
            .transpose()?,
    })
}
