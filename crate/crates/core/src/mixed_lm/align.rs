use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::plan::StepPlanScores;

/// Minimum plan weight (exclusive) for a token to be attributed to an item.
pub const ALIGN_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    /// Item each token is attributed to, if any.
    pub token_items: Vec<Option<usize>>,
    /// Token spans `[start, end)` of the output sentences.
    pub spans: Vec<(usize, usize)>,
    /// Item each sentence is aligned to, if all its tokens agree.
    pub sentence_items: Vec<Option<usize>>,
    pub item_count: usize,
    /// Items aligned to at least one sentence.
    pub aligned_items: usize,
    pub coverage: f64,
}

/// Map each token to `argmax d` when that weight exceeds 0.5, then align a
/// sentence to an item when every one of its tokens maps to that item.
pub fn align_output<T>(
    tokens: &[T],
    plan: &[StepPlanScores],
    spans: &[(usize, usize)],
    item_count: usize,
) -> Result<AlignmentResult> {
    if plan.len() != tokens.len() {
        return Err(Error::Dimension(format!(
            "{} plan steps for {} tokens",
            plan.len(),
            tokens.len()
        )));
    }
    if let Some(&(s, e)) = spans.iter().find(|(s, e)| s > e || *e > tokens.len()) {
        return Err(Error::InvalidInput(format!(
            "sentence span ({s}, {e}) out of range"
        )));
    }
    let token_items: Vec<Option<usize>> = plan
        .iter()
        .map(|d| {
            let k = d.argmax();
            (d.dist[k] > ALIGN_THRESHOLD).then_some(k)
        })
        .collect();
    let sentence_items: Vec<Option<usize>> = spans
        .iter()
        .map(|&(s, e)| {
            let first = *token_items.get(s)?;
            let k = first?;
            token_items[s..e].iter().all(|&t| t == Some(k)).then_some(k)
        })
        .collect();
    let mut covered = vec![false; item_count];
    for k in sentence_items.iter().flatten() {
        if *k < item_count {
            covered[*k] = true;
        }
    }
    let aligned_items = covered.iter().filter(|&&c| c).count();
    let coverage = if item_count == 0 {
        0.0
    } else {
        aligned_items as f64 / item_count as f64
    };
    Ok(AlignmentResult {
        token_items,
        spans: spans.to_vec(),
        sentence_items,
        item_count,
        aligned_items,
        coverage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn steps(ds: &[[f64; 2]]) -> Vec<StepPlanScores> {
        ds.iter()
            .map(|d| StepPlanScores {
                raw: vec![0.0; 2],
                dist: d.to_vec(),
            })
            .collect()
    }

    #[test]
    fn sharp_plan_aligns_sentence() {
        let plan = steps(&[[0.8, 0.2]; 4]);
        let r = align_output(&[0; 4], &plan, &[(0, 4)], 2).unwrap();
        assert_eq!(r.sentence_items, vec![Some(0)]);
        assert_eq!(r.coverage, 0.5);
        assert_eq!(r.aligned_items, 1);
    }

    #[test]
    fn even_split_leaves_sentence_unaligned() {
        let plan = steps(&[[0.8, 0.2], [0.5, 0.5], [0.8, 0.2]]);
        let r = align_output(&[0; 3], &plan, &[(0, 3)], 2).unwrap();
        assert_eq!(r.token_items[1], None);
        assert_eq!(r.sentence_items, vec![None]);
        assert_eq!(r.coverage, 0.0);
    }

    #[test]
    fn mixed_items_within_sentence_do_not_align() {
        let plan = steps(&[[0.9, 0.1], [0.1, 0.9], [0.1, 0.9], [0.2, 0.8]]);
        let r = align_output(&[0; 4], &plan, &[(0, 2), (2, 4)], 2).unwrap();
        assert_eq!(r.sentence_items, vec![None, Some(1)]);
        assert_eq!(r.coverage, 0.5);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        assert!(align_output(&[0; 2], &steps(&[[1.0, 0.0]]), &[], 2).is_err());
    }
}
