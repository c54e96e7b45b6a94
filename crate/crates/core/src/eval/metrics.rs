//! Corpus BLEU-2, ROUGE-2 and METEOR over token sequences.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::stem_forms;

/// Stand-in for a zero modified-precision count.
pub const BLEU_SMOOTHING: f64 = 1e-9;
pub const METEOR_ALPHA: f64 = 0.9;
pub const METEOR_GAMMA: f64 = 0.5;
pub const METEOR_BETA: f64 = 3.0;

fn check_pairs<T>(hyps: &[T], refs: &[T]) -> Result<()> {
    if hyps.is_empty() {
        return Err(Error::InvalidInput("no hypotheses to score".into()));
    }
    if hyps.len() != refs.len() {
        return Err(Error::InvalidInput(format!(
            "{} hypotheses but {} references",
            hyps.len(),
            refs.len()
        )));
    }
    Ok(())
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

fn clipped_overlap(
    hyp: &HashMap<&[String], usize>,
    reference: &HashMap<&[String], usize>,
) -> usize {
    hyp.iter()
        .map(|(g, &c)| c.min(reference.get(g).copied().unwrap_or(0)))
        .sum()
}

/// Corpus-level BLEU with uniform weights over unigram and bigram modified
/// precisions and a brevity penalty, as a percentage.
pub fn bleu2(hyps: &[Vec<String>], refs: &[Vec<String>]) -> Result<f64> {
    check_pairs(hyps, refs)?;
    let mut matched = [0usize; 2];
    let mut total = [0usize; 2];
    let mut ref_total = [0usize; 2];
    for (h, r) in hyps.iter().zip(refs) {
        for n in 1..=2 {
            let hc = ngram_counts(h, n);
            let rc = ngram_counts(r, n);
            matched[n - 1] += clipped_overlap(&hc, &rc);
            total[n - 1] += h.len().saturating_sub(n - 1);
            ref_total[n - 1] += r.len().saturating_sub(n - 1);
        }
    }
    let hyp_len = total[0];
    let ref_len = ref_total[0];
    if hyp_len == 0 {
        return Ok(if ref_len == 0 { 100.0 } else { 0.0 });
    }
    let mut log_p = 0.0;
    for n in 0..2 {
        let p = if total[n] == 0 {
            if ref_total[n] == 0 {
                1.0
            } else {
                BLEU_SMOOTHING
            }
        } else if matched[n] == 0 {
            BLEU_SMOOTHING / total[n] as f64
        } else {
            matched[n] as f64 / total[n] as f64
        };
        log_p += 0.5 * p.ln();
    }
    let bp = if hyp_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    Ok((100.0 * bp * log_p.exp()).clamp(0.0, 100.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rouge2 {
    pub recall: f64,
    pub f1: f64,
    /// Pairs skipped because the reference has fewer than two tokens.
    pub skipped: usize,
}

/// Mean per-pair bigram recall and F1, as percentages.
pub fn rouge2(hyps: &[Vec<String>], refs: &[Vec<String>]) -> Result<Rouge2> {
    check_pairs(hyps, refs)?;
    let mut recall = 0.0;
    let mut f1 = 0.0;
    let mut scored = 0usize;
    for (h, r) in hyps.iter().zip(refs) {
        if r.len() < 2 {
            continue;
        }
        let hc = ngram_counts(h, 2);
        let rc = ngram_counts(r, 2);
        let overlap = clipped_overlap(&hc, &rc) as f64;
        let rec = overlap / (r.len() - 1) as f64;
        let prec = if h.len() >= 2 {
            overlap / (h.len() - 1) as f64
        } else {
            0.0
        };
        recall += rec;
        if rec + prec > 0.0 {
            f1 += 2.0 * prec * rec / (prec + rec);
        }
        scored += 1;
    }
    if scored == 0 {
        return Err(Error::InvalidInput(
            "every reference is shorter than two tokens; ROUGE-2 undefined".into(),
        ));
    }
    Ok(Rouge2 {
        recall: 100.0 * recall / scored as f64,
        f1: 100.0 * f1 / scored as f64,
        skipped: hyps.len() - scored,
    })
}

/// Symmetric word-to-synonyms relation for METEOR's synonym stage.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymTable {
    map: BTreeMap<String, HashSet<String>>,
}

impl SynonymTable {
    /// Declare every word in `group` a synonym of every other.
    pub fn add_group<'a>(&mut self, group: impl IntoIterator<Item = &'a str>) {
        let words: Vec<String> = group.into_iter().map(str::to_lowercase).collect();
        for a in &words {
            for b in &words {
                if a != b {
                    self.map.entry(a.clone()).or_default().insert(b.clone());
                }
            }
        }
    }

    /// One whitespace-separated synonym group per line; `#` starts a comment.
    pub fn parse(contents: &str) -> Self {
        let mut table = Self::default();
        for line in contents.lines() {
            let line = line.split('#').next().unwrap_or("");
            let words: Vec<&str> = line.split_whitespace().collect();
            if words.len() >= 2 {
                table.add_group(words);
            }
        }
        table
    }

    pub fn are_synonyms(&self, a: &str, b: &str) -> bool {
        let a = a.to_lowercase();
        let b = b.to_lowercase();
        self.map.get(&a).is_some_and(|s| s.contains(&b))
    }
}

/// Greedy one-to-one alignment over exact, stem and synonym stages.
/// Within a stage each hypothesis token, left to right, takes the reference
/// position continuing the previous match if possible, else the leftmost.
/// Returns `(hyp_index, ref_index)` pairs sorted by hypothesis index.
pub fn meteor_alignment(
    hyp: &[String],
    reference: &[String],
    synonyms: Option<&SynonymTable>,
) -> Vec<(usize, usize)> {
    let hyp_l: Vec<String> = hyp.iter().map(|t| t.to_lowercase()).collect();
    let ref_l: Vec<String> = reference.iter().map(|t| t.to_lowercase()).collect();
    let hyp_s: Vec<Vec<String>> = hyp_l.iter().map(|t| stem_forms(t)).collect();
    let ref_s: Vec<Vec<String>> = ref_l.iter().map(|t| stem_forms(t)).collect();
    let mut hyp_to_ref: Vec<Option<usize>> = vec![None; hyp.len()];
    let mut ref_used = vec![false; reference.len()];

    let stages: [&dyn Fn(usize, usize) -> bool; 3] = [
        &|i, j| hyp_l[i] == ref_l[j],
        &|i, j| hyp_s[i].iter().any(|f| ref_s[j].contains(f)),
        &|i, j| synonyms.is_some_and(|t| t.are_synonyms(&hyp_l[i], &ref_l[j])),
    ];
    for matches in stages {
        for i in 0..hyp.len() {
            if hyp_to_ref[i].is_some() {
                continue;
            }
            let continuation = i
                .checked_sub(1)
                .and_then(|p| hyp_to_ref[p])
                .map(|j| j + 1)
                .filter(|&j| j < reference.len() && !ref_used[j] && matches(i, j));
            let pick = continuation
                .or_else(|| (0..reference.len()).find(|&j| !ref_used[j] && matches(i, j)));
            if let Some(j) = pick {
                hyp_to_ref[i] = Some(j);
                ref_used[j] = true;
            }
        }
    }
    hyp_to_ref
        .into_iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| (i, j)))
        .collect()
}

/// Number of maximal runs of matches adjacent in both sequences.
pub fn chunk_count(alignment: &[(usize, usize)]) -> usize {
    let mut chunks = 0;
    let mut prev: Option<(usize, usize)> = None;
    for &(i, j) in alignment {
        match prev {
            Some((pi, pj)) if i == pi + 1 && j == pj + 1 => {}
            _ => chunks += 1,
        }
        prev = Some((i, j));
    }
    chunks
}

/// METEOR for one pair, as a fraction in [0, 1].
pub fn meteor_pair(hyp: &[String], reference: &[String], synonyms: Option<&SynonymTable>) -> f64 {
    if hyp.is_empty() && reference.is_empty() {
        return 1.0;
    }
    let alignment = meteor_alignment(hyp, reference, synonyms);
    let m = alignment.len();
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / hyp.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let f_mean = p * r / (METEOR_ALPHA * p + (1.0 - METEOR_ALPHA) * r);
    let frag = chunk_count(&alignment) as f64 / m as f64;
    let penalty = METEOR_GAMMA * frag.powf(METEOR_BETA);
    f_mean * (1.0 - penalty)
}

/// Mean per-pair METEOR, as a percentage.
pub fn meteor(
    hyps: &[Vec<String>],
    refs: &[Vec<String>],
    synonyms: Option<&SynonymTable>,
) -> Result<f64> {
    check_pairs(hyps, refs)?;
    let total: f64 = hyps
        .iter()
        .zip(refs)
        .map(|(h, r)| meteor_pair(h, r, synonyms))
        .sum();
    Ok((100.0 * total / hyps.len() as f64).clamp(0.0, 100.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn bleu_golden_values() {
        let x = vec![toks("the cat sat on the mat")];
        assert!((bleu2(&x, &x).unwrap() - 100.0).abs() < 1e-9);
        let v = bleu2(&[toks("the cat sat")], &[toks("the cat ran")]).unwrap();
        assert!((v - 100.0 * (2.0f64 / 3.0 * 0.5).sqrt()).abs() < 1e-9);
        assert!(bleu2(&[toks("a b")], &[toks("c d")]).unwrap() <= 0.01);
        assert!(bleu2(&[], &[]).is_err());
    }

    #[test]
    fn brevity_penalty_applies() {
        let v = bleu2(&[toks("a b")], &[toks("a b c d")]).unwrap();
        assert!((v - 100.0 * (1.0f64 - 2.0).exp()).abs() < 1e-9);
    }

    #[test]
    fn rouge_golden_values() {
        let r = rouge2(&[toks("a b c")], &[toks("a b d")]).unwrap();
        assert!((r.recall - 50.0).abs() < 1e-9);
        assert!((r.f1 - 50.0).abs() < 1e-9);
        let r = rouge2(&[toks("x y"), toks("a b")], &[toks("x"), toks("a b")]).unwrap();
        assert_eq!(r.skipped, 1);
        assert_eq!(r.recall, 100.0);
        assert!(rouge2(&[toks("a")], &[toks("a")]).is_err());
        assert_eq!(rouge2(&[toks("a b")], &[toks("c d")]).unwrap().recall, 0.0);
    }

    #[test]
    fn meteor_golden_values() {
        let x = vec![toks("w x y z")];
        let v = meteor(&x, &x, None).unwrap();
        assert!((v - 100.0 * (1.0 - 0.5 * 0.25f64.powi(3))).abs() < 1e-9);
        assert_eq!(meteor(&[toks("a b")], &[toks("c d")], None).unwrap(), 0.0);
        let mut t = SynonymTable::default();
        t.add_group(["dog", "canine"]);
        assert_eq!(
            meteor(&[toks("dog")], &[toks("canine")], None).unwrap(),
            0.0
        );
        assert!(meteor(&[toks("dog")], &[toks("canine")], Some(&t)).unwrap() > 0.0);
    }

    #[test]
    fn meteor_stem_stage_matches_inflections() {
        let a = meteor_alignment(&toks("cats running"), &toks("cat run"), None);
        assert_eq!(a, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn chunks_follow_adjacency() {
        let a = meteor_alignment(&toks("a b c d"), &toks("c d a b"), None);
        assert_eq!(a, vec![(0, 2), (1, 3), (2, 0), (3, 1)]);
        assert_eq!(chunk_count(&a), 2);
    }

    #[test]
    fn repeated_words_prefer_continuation() {
        let a = meteor_alignment(&toks("b a c"), &toks("a b a c"), None);
        assert_eq!(a, vec![(0, 1), (1, 2), (2, 3)]);
        assert_eq!(chunk_count(&a), 1);
    }

    #[test]
    fn synonym_table_parses_groups() {
        let t = SynonymTable::parse("# groups\nbig large huge\nsmall\n");
        assert!(t.are_synonyms("Large", "huge"));
        assert!(!t.are_synonyms("small", "big"));
    }
}
