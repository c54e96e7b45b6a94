//! Shared per-item encoder-decoder and the plan scorer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{NodeId, ParamStore, Tape};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

use super::vocab::Vocab;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    /// Width of the plan scorer's hidden layer.
    pub plan_dim: usize,
    pub max_source_len: usize,
    pub max_target_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            hidden_dim: 64,
            heads: 2,
            ffn_dim: 128,
            encoder_layers: 2,
            decoder_layers: 2,
            plan_dim: 64,
            max_source_len: 128,
            max_target_len: 200,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("heads", self.heads),
            ("ffn_dim", self.ffn_dim),
            ("encoder_layers", self.encoder_layers),
            ("decoder_layers", self.decoder_layers),
            ("plan_dim", self.plan_dim),
            ("max_source_len", self.max_source_len),
            ("max_target_len", self.max_target_len),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::validation(name, "must be positive"));
            }
        }
        if !self.hidden_dim.is_multiple_of(self.heads) {
            return Err(Error::validation("heads", "must divide hidden_dim"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Attn {
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
}

#[derive(Debug, Clone, Copy)]
struct Norm {
    gain: usize,
    bias: usize,
}

#[derive(Debug, Clone, Copy)]
struct Ffn {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Debug, Clone)]
struct EncoderLayer {
    norm1: Norm,
    attn: Attn,
    norm2: Norm,
    ffn: Ffn,
}

#[derive(Debug, Clone)]
struct DecoderLayer {
    norm1: Norm,
    self_attn: Attn,
    norm2: Norm,
    cross_attn: Attn,
    norm3: Norm,
    ffn: Ffn,
}

#[derive(Debug, Clone)]
struct Layout {
    tok_emb: usize,
    emb_proj: Option<usize>,
    enc_pos: usize,
    dec_pos: usize,
    encoder: Vec<EncoderLayer>,
    enc_norm: Norm,
    decoder: Vec<DecoderLayer>,
    dec_norm: Norm,
    out_w: usize,
    out_b: usize,
    plan_wd: usize,
    plan_wo: usize,
}

enum Init {
    Zeros,
    Ones,
    Uniform(f64),
    Glorot,
}

struct Builder<'a> {
    store: &'a mut ParamStore,
    rng: ChaCha8Rng,
}

impl Builder<'_> {
    fn add(&mut self, name: String, rows: usize, cols: usize, init: Init) -> usize {
        let data = match init {
            Init::Zeros => vec![0.0; rows * cols],
            Init::Ones => vec![1.0; rows * cols],
            Init::Uniform(a) => (0..rows * cols)
                .map(|_| self.rng.random_range(-a..a))
                .collect(),
            Init::Glorot => {
                let a = (6.0 / (rows + cols) as f64).sqrt();
                (0..rows * cols)
                    .map(|_| self.rng.random_range(-a..a))
                    .collect()
            }
        };
        self.store
            .register(name, Matrix::from_vec(rows, cols, data))
    }

    fn norm(&mut self, prefix: &str, h: usize) -> Norm {
        Norm {
            gain: self.add(format!("{prefix}.gain"), 1, h, Init::Ones),
            bias: self.add(format!("{prefix}.bias"), 1, h, Init::Zeros),
        }
    }

    fn attn(&mut self, prefix: &str, h: usize) -> Attn {
        Attn {
            wq: self.add(format!("{prefix}.wq"), h, h, Init::Glorot),
            bq: self.add(format!("{prefix}.bq"), 1, h, Init::Zeros),
            wk: self.add(format!("{prefix}.wk"), h, h, Init::Glorot),
            bk: self.add(format!("{prefix}.bk"), 1, h, Init::Zeros),
            wv: self.add(format!("{prefix}.wv"), h, h, Init::Glorot),
            bv: self.add(format!("{prefix}.bv"), 1, h, Init::Zeros),
            wo: self.add(format!("{prefix}.wo"), h, h, Init::Glorot),
            bo: self.add(format!("{prefix}.bo"), 1, h, Init::Zeros),
        }
    }

    fn ffn(&mut self, prefix: &str, h: usize, f: usize) -> Ffn {
        Ffn {
            w1: self.add(format!("{prefix}.w1"), h, f, Init::Glorot),
            b1: self.add(format!("{prefix}.b1"), 1, f, Init::Zeros),
            w2: self.add(format!("{prefix}.w2"), f, h, Init::Glorot),
            b2: self.add(format!("{prefix}.b2"), 1, h, Init::Zeros),
        }
    }
}

fn build_layout(config: &ModelConfig, vocab_size: usize, seed: u64) -> (ParamStore, Layout) {
    let mut store = ParamStore::new();
    let mut b = Builder {
        store: &mut store,
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let (e, h, f) = (config.embed_dim, config.hidden_dim, config.ffn_dim);
    let tok_emb = b.add("embed.tokens".into(), vocab_size, e, Init::Uniform(1.0));
    let emb_proj = (e != h).then(|| b.add("embed.proj".into(), e, h, Init::Glorot));
    let enc_pos = b.add(
        "encoder.pos".into(),
        config.max_source_len,
        h,
        Init::Uniform(0.1),
    );
    let dec_pos = b.add(
        "decoder.pos".into(),
        config.max_target_len + 1,
        h,
        Init::Uniform(0.1),
    );
    let encoder = (0..config.encoder_layers)
        .map(|l| {
            let p = format!("encoder.{l}");
            EncoderLayer {
                norm1: b.norm(&format!("{p}.norm1"), h),
                attn: b.attn(&format!("{p}.attn"), h),
                norm2: b.norm(&format!("{p}.norm2"), h),
                ffn: b.ffn(&format!("{p}.ffn"), h, f),
            }
        })
        .collect();
    let enc_norm = b.norm("encoder.norm", h);
    let decoder = (0..config.decoder_layers)
        .map(|l| {
            let p = format!("decoder.{l}");
            DecoderLayer {
                norm1: b.norm(&format!("{p}.norm1"), h),
                self_attn: b.attn(&format!("{p}.self_attn"), h),
                norm2: b.norm(&format!("{p}.norm2"), h),
                cross_attn: b.attn(&format!("{p}.cross_attn"), h),
                norm3: b.norm(&format!("{p}.norm3"), h),
                ffn: b.ffn(&format!("{p}.ffn"), h, f),
            }
        })
        .collect();
    let dec_norm = b.norm("decoder.norm", h);
    let out_w = b.add("output.w".into(), h, vocab_size, Init::Glorot);
    let out_b = b.add("output.b".into(), 1, vocab_size, Init::Zeros);
    let plan_wd = b.add("plan.wd".into(), 2 * h, config.plan_dim, Init::Glorot);
    let plan_wo = b.add("plan.wo".into(), config.plan_dim, 1, Init::Glorot);
    let layout = Layout {
        tok_emb,
        emb_proj,
        enc_pos,
        dec_pos,
        encoder,
        enc_norm,
        decoder,
        dec_norm,
        out_w,
        out_b,
        plan_wd,
        plan_wo,
    };
    (store, layout)
}

/// Parameters shared by every content-item-conditioned language model,
/// plus the plan scorer `e = W_o tanh(W_d [h; s])`.
#[derive(Debug, Clone)]
pub struct MixedLm {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub params: ParamStore,
    pub trained: bool,
    layout: Layout,
}

impl MixedLm {
    pub fn new(config: ModelConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        config.validate()?;
        let (params, layout) = build_layout(&config, vocab.len(), seed);
        Ok(Self {
            config,
            vocab,
            params,
            trained: false,
            layout,
        })
    }

    pub fn hidden_dim(&self) -> usize {
        self.config.hidden_dim
    }

    fn embed(&self, tape: &mut Tape, ids: &[usize], pos_table: usize) -> NodeId {
        let table = tape.param(self.layout.tok_emb);
        let mut x = tape.gather_rows(table, ids);
        if let Some(proj) = self.layout.emb_proj {
            let p = tape.param(proj);
            x = tape.matmul(x, p);
        }
        let positions: Vec<usize> = (0..ids.len()).collect();
        let pos = tape.param(pos_table);
        let pos = tape.gather_rows(pos, &positions);
        tape.add(x, pos)
    }

    fn norm(&self, tape: &mut Tape, x: NodeId, n: Norm) -> NodeId {
        let g = tape.param(n.gain);
        let b = tape.param(n.bias);
        tape.layer_norm(x, g, b)
    }

    fn linear(tape: &mut Tape, x: NodeId, w: usize, b: usize) -> NodeId {
        let w = tape.param(w);
        let b = tape.param(b);
        let y = tape.matmul(x, w);
        tape.add_row(y, b)
    }

    fn attention(
        &self,
        tape: &mut Tape,
        a: Attn,
        query: NodeId,
        memory: NodeId,
        causal: bool,
    ) -> NodeId {
        let q = Self::linear(tape, query, a.wq, a.bq);
        let k = Self::linear(tape, memory, a.wk, a.bk);
        let v = Self::linear(tape, memory, a.wv, a.bv);
        let heads = self.config.heads;
        let dh = self.config.hidden_dim / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(heads);
        for head in 0..heads {
            let (qh, kh, vh) = if heads == 1 {
                (q, k, v)
            } else {
                (
                    tape.slice_cols(q, head * dh, dh),
                    tape.slice_cols(k, head * dh, dh),
                    tape.slice_cols(v, head * dh, dh),
                )
            };
            let scores = tape.matmul_bt(qh, kh);
            let scores = tape.scale(scores, scale);
            let weights = tape.softmax_rows(scores, causal);
            outs.push(tape.matmul(weights, vh));
        }
        let joined = if heads == 1 {
            outs[0]
        } else {
            tape.concat_cols(&outs)
        };
        Self::linear(tape, joined, a.wo, a.bo)
    }

    fn feed_forward(&self, tape: &mut Tape, f: Ffn, x: NodeId) -> NodeId {
        let h = Self::linear(tape, x, f.w1, f.b1);
        let h = tape.gelu(h);
        Self::linear(tape, h, f.w2, f.b2)
    }

    /// Encoder states (`len × hidden`) for one serialized item. Sequences
    /// longer than `max_source_len` must be truncated by the caller.
    pub fn encode(&self, tape: &mut Tape, ids: &[usize]) -> NodeId {
        let mut x = self.embed(tape, ids, self.layout.enc_pos);
        for layer in &self.layout.encoder {
            let a = self.norm(tape, x, layer.norm1);
            let a = self.attention(tape, layer.attn, a, a, false);
            x = tape.add(x, a);
            let f = self.norm(tape, x, layer.norm2);
            let f = self.feed_forward(tape, layer.ffn, f);
            x = tape.add(x, f);
        }
        self.norm(tape, x, self.layout.enc_norm)
    }

    /// Last-layer decoder states (`len × hidden`) for a teacher-forced
    /// input prefix, attending to one item's encoder states.
    pub fn decode(&self, tape: &mut Tape, memory: NodeId, input: &[usize]) -> NodeId {
        let mut x = self.embed(tape, input, self.layout.dec_pos);
        for layer in &self.layout.decoder {
            let a = self.norm(tape, x, layer.norm1);
            let a = self.attention(tape, layer.self_attn, a, a, true);
            x = tape.add(x, a);
            let c = self.norm(tape, x, layer.norm2);
            let c = self.attention(tape, layer.cross_attn, c, memory, false);
            x = tape.add(x, c);
            let f = self.norm(tape, x, layer.norm3);
            let f = self.feed_forward(tape, layer.ffn, f);
            x = tape.add(x, f);
        }
        self.norm(tape, x, self.layout.dec_norm)
    }

    /// Raw plan scores (`rows × 1`) for item summary `h` (`1 × hidden`)
    /// paired with each row of decoder states `s`.
    pub fn plan_scores_node(&self, tape: &mut Tape, h: NodeId, s: NodeId) -> NodeId {
        let hd = self.config.hidden_dim;
        let wd = tape.param(self.layout.plan_wd);
        let wd_h = tape.slice_rows(wd, 0, hd);
        let wd_s = tape.slice_rows(wd, hd, hd);
        let from_h = tape.matmul(h, wd_h);
        let from_s = tape.matmul(s, wd_s);
        let pre = tape.add_row(from_s, from_h);
        let act = tape.tanh(pre);
        let wo = tape.param(self.layout.plan_wo);
        tape.matmul(act, wo)
    }

    /// Next-token log-probabilities (`rows × vocab`).
    pub fn log_probs_node(&self, tape: &mut Tape, s: NodeId) -> NodeId {
        let logits = Self::linear(tape, s, self.layout.out_w, self.layout.out_b);
        tape.log_softmax_rows(logits)
    }

    /// Clip source ids to the configured maximum length.
    pub fn clip_source<'a>(&self, ids: &'a [usize]) -> &'a [usize] {
        &ids[..ids.len().min(self.config.max_source_len)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            embed_dim: 6,
            hidden_dim: 4,
            heads: 2,
            ffn_dim: 8,
            encoder_layers: 1,
            decoder_layers: 1,
            plan_dim: 3,
            max_source_len: 10,
            max_target_len: 10,
        }
    }

    #[test]
    fn shapes_line_up() {
        let m = MixedLm::new(tiny(), Vocab::default(), 1).unwrap();
        let mut tape = Tape::new(&m.params);
        let enc = m.encode(&mut tape, &[1, 4, 1]);
        assert_eq!(tape.value(enc).shape(), (3, 4));
        let dec = m.decode(&mut tape, enc, &[2, 1]);
        assert_eq!(tape.value(dec).shape(), (2, 4));
        let h = tape.slice_rows(enc, 0, 1);
        let e = m.plan_scores_node(&mut tape, h, dec);
        assert_eq!(tape.value(e).shape(), (2, 1));
        let lp = m.log_probs_node(&mut tape, dec);
        let row_mass: f64 = tape.value(lp).row(0).iter().map(|x| x.exp()).sum();
        assert!((row_mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let mut c = tiny();
        c.heads = 3;
        assert!(MixedLm::new(c, Vocab::default(), 0).is_err());
        let mut c = tiny();
        c.encoder_layers = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn same_seed_same_params() {
        let a = MixedLm::new(tiny(), Vocab::default(), 9).unwrap();
        let b = MixedLm::new(tiny(), Vocab::default(), 9).unwrap();
        assert_eq!(a.params, b.params);
    }
}
