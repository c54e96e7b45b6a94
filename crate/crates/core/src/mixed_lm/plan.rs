//! Plan distributions over content items and the mixture of their
//! next-token distributions.

use serde::{Deserialize, Serialize};

use crate::autograd::Tape;
use crate::error::{Error, Result};
use crate::par;
use crate::tensor::Matrix;

use super::network::MixedLm;

/// Tolerance used when checking that an input distribution is normalized.
pub const MASS_TOLERANCE: f64 = 1e-6;

/// Raw plan scores `e_i` for one decoding step and `d = softmax(e)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepPlanScores {
    pub raw: Vec<f64>,
    pub dist: Vec<f64>,
}

impl StepPlanScores {
    pub fn from_raw(raw: Vec<f64>) -> Self {
        let dist = softmax(&raw);
        Self { raw, dist }
    }

    /// Hard selection of item `k` out of `n`.
    pub fn one_hot(n: usize, k: usize) -> Self {
        let mut dist = vec![0.0; n];
        dist[k] = 1.0;
        let raw = dist
            .iter()
            .map(|&p| if p > 0.0 { 0.0 } else { f64::NEG_INFINITY })
            .collect();
        Self { raw, dist }
    }

    /// Most probable item, lowest index on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.dist)
    }
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|v| v / sum).collect()
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate() {
        if v > x[best] {
            best = i;
        }
    }
    best
}

/// Per-item encoder states and item summaries (first-token state).
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedItems {
    pub states: Vec<Matrix>,
    pub summaries: Vec<Vec<f64>>,
}

impl EncodedItems {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Encode every serialized item independently.
pub fn encode_items(model: &MixedLm, items: &[Vec<usize>]) -> Result<EncodedItems> {
    if items.is_empty() {
        return Err(Error::InvalidInput("no content items to encode".into()));
    }
    if items.iter().any(Vec::is_empty) {
        return Err(Error::InvalidInput("empty serialized item".into()));
    }
    let states = par::map(items, |ids| {
        let mut tape = Tape::new(&model.params);
        let enc = model.encode(&mut tape, model.clip_source(ids));
        tape.value(enc).clone()
    });
    let summaries = states.iter().map(|m| m.row(0).to_vec()).collect();
    Ok(EncodedItems { states, summaries })
}

/// Plan scores for item summaries `h` paired with per-item decoder
/// states `s` at the current step.
pub fn plan_scores(model: &MixedLm, h: &[Vec<f64>], s: &[Vec<f64>]) -> Result<StepPlanScores> {
    if h.len() != s.len() {
        return Err(Error::Dimension(format!(
            "{} item summaries but {} decoder states",
            h.len(),
            s.len()
        )));
    }
    if h.is_empty() {
        return Err(Error::InvalidInput("no content items to score".into()));
    }
    let hd = model.hidden_dim();
    if let Some(bad) = h.iter().chain(s).find(|v| v.len() != hd) {
        return Err(Error::Dimension(format!(
            "vector of length {} where hidden size is {hd}",
            bad.len()
        )));
    }
    let raw = h
        .iter()
        .zip(s)
        .map(|(hi, si)| {
            let mut tape = Tape::new(&model.params);
            let hn = tape.constant(Matrix::row_vector(hi.clone()));
            let sn = tape.constant(Matrix::row_vector(si.clone()));
            let e = model.plan_scores_node(&mut tape, hn, sn);
            tape.value(e).data[0]
        })
        .collect();
    Ok(StepPlanScores::from_raw(raw))
}

/// `p(v) = Σ_i d_i · p_i(v)`.
pub fn mixture_step(per_item: &[Vec<f64>], d: &StepPlanScores) -> Result<Vec<f64>> {
    if per_item.len() != d.dist.len() {
        return Err(Error::Dimension(format!(
            "{} item distributions but {} plan weights",
            per_item.len(),
            d.dist.len()
        )));
    }
    let Some(first) = per_item.first() else {
        return Err(Error::InvalidInput("no item distributions".into()));
    };
    let width = first.len();
    for (i, p) in per_item.iter().enumerate() {
        if p.len() != width {
            return Err(Error::Dimension(format!(
                "item {i} distribution has {} entries, expected {width}",
                p.len()
            )));
        }
        let mass: f64 = p.iter().sum();
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "item {i} distribution sums to {mass}"
            )));
        }
    }
    let mut out = vec![0.0; width];
    for (p, &w) in per_item.iter().zip(&d.dist) {
        for (o, &q) in out.iter_mut().zip(p) {
            *o += w * q;
        }
    }
    Ok(out)
}
