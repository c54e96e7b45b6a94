//! Joint generation + planning loss, its gradient, and the training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Grads, NodeId, ParamStore, Tape};
use crate::error::{Error, Result};
use crate::par;
use crate::tensor::Matrix;

use super::example::Example;
use super::network::MixedLm;
use super::plan::{argmax, softmax, StepPlanScores};

/// Probabilities are floored here before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainStepOutput {
    pub l_gen: f64,
    pub l_plan: f64,
    /// `l_gen + l_plan`.
    pub loss: f64,
}

struct ItemPass<'p> {
    tape: Tape<'p>,
    scores: NodeId,
    picked: NodeId,
    log_probs: NodeId,
}

fn item_passes<'p>(model: &'p MixedLm, ex: &Example) -> Result<Vec<ItemPass<'p>>> {
    if ex.items.is_empty() {
        return Err(Error::InvalidInput(format!(
            "sample `{}` has no content items",
            ex.id
        )));
    }
    if ex.items.iter().any(Vec::is_empty) {
        return Err(Error::InvalidInput(format!(
            "sample `{}` has an empty item",
            ex.id
        )));
    }
    if ex.target.is_empty() || ex.labels.len() != ex.target.len() {
        return Err(Error::InvalidInput(format!(
            "sample `{}` has malformed target",
            ex.id
        )));
    }
    let input = ex.decoder_input();
    let picks: Vec<(usize, usize)> = ex.target.iter().copied().enumerate().collect();
    Ok(par::map(&ex.items, |ids| {
        let mut tape = Tape::new(&model.params);
        let enc = model.encode(&mut tape, model.clip_source(ids));
        let h = tape.slice_rows(enc, 0, 1);
        let s = model.decode(&mut tape, enc, &input);
        let scores = model.plan_scores_node(&mut tape, h, s);
        let log_probs = model.log_probs_node(&mut tape, s);
        let picked = tape.pick(log_probs, &picks);
        ItemPass {
            tape,
            scores,
            picked,
            log_probs,
        }
    }))
}

/// Seeds for the per-item tapes: `∂L/∂e_i` and `∂L/∂log p_i(y_t)`.
struct MixtureGrad {
    d_scores: Vec<Vec<f64>>,
    d_logp: Vec<Vec<f64>>,
}

/// Mixture loss from per-item raw plan scores `e[i][t]` and gold-token
/// log-probabilities `lp[i][t]`.
fn mixture_loss(
    e: &[Vec<f64>],
    lp: &[Vec<f64>],
    labels: &[Option<usize>],
    plan_weight: f64,
    want_grad: bool,
) -> (TrainStepOutput, Option<MixtureGrad>) {
    let n = e.len();
    let steps = labels.len();
    let labeled = labels.iter().filter(|l| l.is_some()).count();
    let mut l_gen = 0.0;
    let mut l_plan = 0.0;
    let mut grad = want_grad.then(|| MixtureGrad {
        d_scores: vec![vec![0.0; steps]; n],
        d_logp: vec![vec![0.0; steps]; n],
    });
    let inv_t = 1.0 / steps as f64;
    for t in 0..steps {
        let raw: Vec<f64> = (0..n).map(|i| e[i][t]).collect();
        let d = softmax(&raw);
        let p: Vec<f64> = (0..n).map(|i| lp[i][t].exp()).collect();
        let q: f64 = d.iter().zip(&p).map(|(a, b)| a * b).sum();
        l_gen -= q.max(PROB_FLOOR).ln() * inv_t;
        if let Some(g) = grad.as_mut() {
            if q >= PROB_FLOOR {
                for i in 0..n {
                    let resp = d[i] * p[i] / q;
                    g.d_logp[i][t] = -resp * inv_t;
                    g.d_scores[i][t] = -(resp - d[i]) * inv_t;
                }
            }
        }
        if let Some(gold) = labels[t] {
            let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + raw.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            l_plan += (lse - raw[gold]) / labeled as f64;
            if let Some(g) = grad.as_mut() {
                for (i, (row, di)) in g.d_scores.iter_mut().zip(&d).enumerate() {
                    let target = if i == gold { 1.0 } else { 0.0 };
                    row[t] += plan_weight * (di - target) / labeled as f64;
                }
            }
        }
    }
    let out = TrainStepOutput {
        l_gen,
        l_plan,
        loss: l_gen + l_plan,
    };
    (out, grad)
}

fn pass_values(passes: &[ItemPass<'_>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let e = passes
        .iter()
        .map(|p| p.tape.value(p.scores).data.clone())
        .collect();
    let lp = passes
        .iter()
        .map(|p| p.tape.value(p.picked).data.clone())
        .collect();
    (e, lp)
}

/// Teacher-forced losses for one example.
pub fn forward_train(model: &MixedLm, ex: &Example) -> Result<TrainStepOutput> {
    let passes = item_passes(model, ex)?;
    let (e, lp) = pass_values(&passes);
    Ok(mixture_loss(&e, &lp, &ex.labels, 1.0, false).0)
}

/// Losses and the gradient of `l_gen + plan_weight · l_plan`.
pub fn loss_and_grads(
    model: &MixedLm,
    ex: &Example,
    plan_weight: f64,
) -> Result<(TrainStepOutput, Grads)> {
    let passes = item_passes(model, ex)?;
    let (e, lp) = pass_values(&passes);
    let (out, grad) = mixture_loss(&e, &lp, &ex.labels, plan_weight, true);
    let grad = grad.expect("gradient requested");
    let indexed: Vec<(usize, &ItemPass<'_>)> = passes.iter().enumerate().collect();
    let per_item = par::map(&indexed, |&(i, pass)| {
        let steps = grad.d_scores[i].len();
        pass.tape.backward(&[
            (
                pass.scores,
                Matrix::from_vec(steps, 1, grad.d_scores[i].clone()),
            ),
            (
                pass.picked,
                Matrix::from_vec(steps, 1, grad.d_logp[i].clone()),
            ),
        ])
    });
    let mut total = Grads::zeros_like(&model.params);
    for g in &per_item {
        total.add_assign(g);
    }
    Ok((out, total))
}

/// Teacher-forced plan distributions and next-token predictions.
#[derive(Debug, Clone)]
pub struct TeacherForced {
    pub plan: Vec<StepPlanScores>,
    pub predictions: Vec<usize>,
    pub correct: usize,
}

pub fn teacher_forced(model: &MixedLm, ex: &Example) -> Result<TeacherForced> {
    let passes = item_passes(model, ex)?;
    let (e, _) = pass_values(&passes);
    let n = passes.len();
    let mut plan = Vec::with_capacity(ex.target.len());
    let mut predictions = Vec::with_capacity(ex.target.len());
    let mut correct = 0;
    for (t, &gold) in ex.target.iter().enumerate() {
        let scores = StepPlanScores::from_raw((0..n).map(|i| e[i][t]).collect());
        let vocab = model.vocab.len();
        let mut mix = vec![0.0; vocab];
        for (pass, &w) in passes.iter().zip(&scores.dist) {
            let row = pass.tape.value(pass.log_probs).row(t);
            for (m, lp) in mix.iter_mut().zip(row) {
                *m += w * lp.exp();
            }
        }
        let pred = argmax(&mix);
        if pred == gold {
            correct += 1;
        }
        predictions.push(pred);
        plan.push(scores);
    }
    Ok(TeacherForced {
        plan,
        predictions,
        correct,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub plan_loss_weight: f64,
    /// Global gradient-norm clip; non-positive disables clipping.
    pub grad_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            learning_rate: 3e-4,
            patience: 3,
            max_epochs: 50,
            seed: 0,
            plan_loss_weight: 1.0,
            grad_clip: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size", "must be positive"));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::validation("learning_rate", "must be positive"));
        }
        if self.max_epochs == 0 {
            return Err(Error::validation("max_epochs", "must be positive"));
        }
        if self.plan_loss_weight.is_nan() || self.plan_loss_weight < 0.0 {
            return Err(Error::validation(
                "plan_loss_weight",
                "must be non-negative",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub l_gen: f64,
    pub l_plan: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

/// Early-stopping rule over validation loss: stop once the loss has failed
/// to improve for more than `patience` consecutive epochs.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    stale: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            stale: 0,
        }
    }

    pub fn observe(&mut self, val_loss: f64) -> StopDecision {
        if val_loss < self.best {
            self.best = val_loss;
            self.stale = 0;
            StopDecision::Improved
        } else {
            self.stale += 1;
            if self.stale > self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

struct Adam {
    m: Grads,
    v: Grads,
    step: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(params: &ParamStore) -> Self {
        Self {
            m: Grads::zeros_like(params),
            v: Grads::zeros_like(params),
            step: 0,
        }
    }

    fn update(&mut self, params: &mut ParamStore, grads: &Grads, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::B1.powi(self.step);
        let c2 = 1.0 - Self::B2.powi(self.step);
        for pid in 0..params.len() {
            let g = &grads.values[pid].data;
            let m = &mut self.m.values[pid].data;
            let v = &mut self.v.values[pid].data;
            let w = &mut params.value_mut(pid).data;
            for k in 0..w.len() {
                m[k] = Self::B1 * m[k] + (1.0 - Self::B1) * g[k];
                v[k] = Self::B2 * v[k] + (1.0 - Self::B2) * g[k] * g[k];
                w[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

/// Mean `l_gen + plan_weight · l_plan` over a set of examples.
pub fn mean_loss(model: &MixedLm, examples: &[Example], plan_weight: f64) -> Result<f64> {
    let losses = par::map(examples, |ex| forward_train(model, ex));
    let mut total = 0.0;
    for l in losses {
        let l = l?;
        total += l.l_gen + plan_weight * l.l_plan;
    }
    Ok(total / examples.len().max(1) as f64)
}

/// Minibatch Adam on the joint loss with early stopping on validation
/// loss. On return `model` holds the best-validation parameters.
pub fn train(
    model: &mut MixedLm,
    train_set: &[Example],
    val_set: &[Example],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    if val_set.is_empty() {
        return Err(Error::InvalidInput("empty validation set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(&model.params);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_params = model.params.clone();
    let mut best_epoch = 0;
    let mut epochs = Vec::new();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut step = 0usize;
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let (mut sum_gen, mut sum_plan) = (0.0, 0.0);
        for batch in order.chunks(cfg.batch_size) {
            step += 1;
            let model_ref: &MixedLm = model;
            let results = par::map(batch, |&idx| {
                loss_and_grads(model_ref, &train_set[idx], cfg.plan_loss_weight)
            });
            let mut total = Grads::zeros_like(&model.params);
            for (&idx, r) in batch.iter().zip(results) {
                let (out, g) = r?;
                if !out.loss.is_finite() || !g.is_finite() {
                    return Err(Error::NonFinite {
                        step,
                        sample_id: train_set[idx].id.clone(),
                    });
                }
                sum_gen += out.l_gen;
                sum_plan += out.l_plan;
                total.add_assign(&g);
            }
            total.scale(1.0 / batch.len() as f64);
            if cfg.grad_clip > 0.0 {
                let norm = total.norm();
                if norm > cfg.grad_clip {
                    total.scale(cfg.grad_clip / norm);
                }
            }
            adam.update(&mut model.params, &total, cfg.learning_rate);
        }
        let val_loss = mean_loss(model, val_set, cfg.plan_loss_weight)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite {
                step,
                sample_id: "<validation>".into(),
            });
        }
        let n = train_set.len() as f64;
        let entry = EpochLog {
            epoch,
            l_gen: sum_gen / n,
            l_plan: sum_plan / n,
            val_loss,
        };
        log::info!(
            "epoch {epoch}: l_gen={:.5} l_plan={:.5} val={:.5}",
            entry.l_gen,
            entry.l_plan,
            entry.val_loss
        );
        epochs.push(entry);
        match stopper.observe(val_loss) {
            StopDecision::Improved => {
                best_params = model.params.clone();
                best_epoch = epoch;
            }
            StopDecision::Continue => {}
            StopDecision::Stop => {
                stopped_early = true;
                break;
            }
        }
    }
    model.params = best_params;
    model.trained = true;
    Ok(TrainReport {
        epochs,
        best_epoch,
        best_val_loss: stopper.best(),
        stopped_early,
    })
}

/// Fraction of target positions whose teacher-forced argmax matches.
pub fn teacher_forced_accuracy(model: &MixedLm, examples: &[Example]) -> Result<f64> {
    let results = par::map(examples, |ex| teacher_forced(model, ex));
    let (mut correct, mut total) = (0usize, 0usize);
    for (r, ex) in results.into_iter().zip(examples) {
        correct += r?.correct;
        total += ex.target.len();
    }
    Ok(correct as f64 / total.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn early_stopping_contract() {
        let mut s = EarlyStopping::new(0);
        assert_eq!(s.observe(1.0), StopDecision::Improved);
        assert_eq!(s.observe(1.5), StopDecision::Stop);

        let mut s = EarlyStopping::new(2);
        assert_eq!(s.observe(1.0), StopDecision::Improved);
        assert_eq!(s.observe(1.0), StopDecision::Continue);
        assert_eq!(s.observe(0.9), StopDecision::Improved);
        assert_eq!(s.observe(2.0), StopDecision::Continue);
        assert_eq!(s.observe(2.0), StopDecision::Continue);
        assert_eq!(s.observe(2.0), StopDecision::Stop);
        assert_eq!(s.best(), 0.9);
    }

    #[test]
    fn single_item_has_zero_plan_loss() {
        let e = vec![vec![0.3, -2.0, 5.0]];
        let lp = vec![vec![-0.5, -1.0, -0.1]];
        let (out, g) = mixture_loss(&e, &lp, &[Some(0), Some(0), None], 1.0, true);
        assert_eq!(out.l_plan, 0.0);
        assert_eq!(out.loss, out.l_gen);
        assert!(g.unwrap().d_scores[0].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn unlabeled_tokens_skip_plan_loss() {
        let e = vec![vec![0.3, 1.0], vec![-0.2, 0.4]];
        let lp = vec![vec![-0.5, -1.0], vec![-2.0, -0.3]];
        let (out, _) = mixture_loss(&e, &lp, &[None, None], 1.0, false);
        assert_eq!(out.l_plan, 0.0);
        assert_eq!(out.loss, out.l_gen);
    }

    #[test]
    fn mixture_loss_gradient_matches_differences() {
        let e = vec![
            vec![0.3, 1.0, -0.4],
            vec![-0.2, 0.4, 0.9],
            vec![0.1, 0.0, 0.2],
        ];
        let lp = vec![
            vec![-0.5, -1.0, -0.2],
            vec![-2.0, -0.3, -1.1],
            vec![-0.7, -0.9, -3.0],
        ];
        let labels = [Some(1), None, Some(2)];
        let (_, g) = mixture_loss(&e, &lp, &labels, 0.7, true);
        let g = g.unwrap();
        let f = |e: &[Vec<f64>], lp: &[Vec<f64>]| {
            let (o, _) = mixture_loss(e, lp, &labels, 0.7, false);
            o.l_gen + 0.7 * o.l_plan
        };
        let h = 1e-6;
        for i in 0..3 {
            for t in 0..3 {
                let mut ep = e.clone();
                ep[i][t] += h;
                let mut em = e.clone();
                em[i][t] -= h;
                let num = (f(&ep, &lp) - f(&em, &lp)) / (2.0 * h);
                assert!((num - g.d_scores[i][t]).abs() < 1e-8);
                let mut lpp = lp.clone();
                lpp[i][t] += h;
                let mut lpm = lp.clone();
                lpm[i][t] -= h;
                let num = (f(&e, &lpp) - f(&e, &lpm)) / (2.0 * h);
                assert!((num - g.d_logp[i][t]).abs() < 1e-8);
            }
        }
    }
}
