//! Toy dual encoder: a small causal-masked text transformer with a learned
//! positional table and EOT (or average) pooling, plus a two-layer image
//! feature projector.
//!
//! Forward passes keep explicit caches so the hand-written backward pass can
//! produce exact analytic gradients; the backward is verified against
//! central finite differences in the test suites.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::{real, Scalar};
use crate::pos_embed::PositionalTable;
use crate::text_pipeline::TokenSequence;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("sequence length {got} does not match context window {expected}")]
    ContextOverflow { expected: usize, got: usize },
    #[error("input dimension {got} does not match configured {expected}")]
    ShapeMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Read the hidden state at the EOT position (default).
    Eot,
    /// Mean over positions `sot_index..=eot_index` (ablation arm).
    Average,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TextEncoderConfig {
    pub layers: usize,
    pub heads: usize,
    pub model_dim: usize,
    pub feedforward_dim: usize,
    pub l_ctx: usize,
    pub vocab_size: usize,
    pub output_dim: usize,
    pub pooling: Pooling,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageEncoderConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub text: TextEncoderConfig,
    pub image: ImageEncoderConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerNormParams<F> {
    pub gain: Array1<F>,
    pub bias: Array1<F>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttentionParams<F> {
    pub wq: Array2<F>,
    pub wk: Array2<F>,
    pub wv: Array2<F>,
    pub wo: Array2<F>,
    pub bq: Array1<F>,
    pub bk: Array1<F>,
    pub bv: Array1<F>,
    pub bo: Array1<F>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpParams<F> {
    pub w1: Array2<F>,
    pub b1: Array1<F>,
    pub w2: Array2<F>,
    pub b2: Array1<F>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerParams<F> {
    pub ln1: LayerNormParams<F>,
    pub attn: AttentionParams<F>,
    pub ln2: LayerNormParams<F>,
    pub mlp: MlpParams<F>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TextParams<F> {
    pub tok_emb: Array2<F>,
    pub pos: PositionalTable<F>,
    pub layers: Vec<LayerParams<F>>,
    pub ln_f: LayerNormParams<F>,
    pub proj: Array2<F>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageParams<F> {
    pub w1: Array2<F>,
    pub b1: Array1<F>,
    pub w2: Array2<F>,
    pub b2: Array1<F>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualParams<F> {
    pub text: TextParams<F>,
    pub image: ImageParams<F>,
    pub log_inv_temp: F,
}

/// What a parameter slice is, for optimizer policy (decay, freezing).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamTag {
    Matrix,
    Bias,
    Gain,
    TokenEmbedding,
    /// Positional table; the first `frozen_rows * dim` entries are excluded
    /// from updates.
    Positional { frozen_entries: usize },
    LogitScale,
}

impl<F: Scalar> DualParams<F> {
    /// Visit every parameter slice in a fixed, stable order.
    pub fn visit_mut(&mut self, f: &mut dyn FnMut(ParamTag, &mut [F])) {
        use ParamTag::*;
        fn slice<F>(a: &mut Array2<F>) -> &mut [F] {
            a.as_slice_mut().expect("standard layout")
        }
        fn slice1<F>(a: &mut Array1<F>) -> &mut [F] {
            a.as_slice_mut().expect("standard layout")
        }
        f(TokenEmbedding, slice(&mut self.text.tok_emb));
        let frozen_entries = self.text.pos.frozen_prefix * self.text.pos.dim();
        f(
            Positional { frozen_entries },
            slice(&mut self.text.pos.embeddings),
        );
        for layer in &mut self.text.layers {
            f(Gain, slice1(&mut layer.ln1.gain));
            f(Bias, slice1(&mut layer.ln1.bias));
            f(Matrix, slice(&mut layer.attn.wq));
            f(Matrix, slice(&mut layer.attn.wk));
            f(Matrix, slice(&mut layer.attn.wv));
            f(Matrix, slice(&mut layer.attn.wo));
            f(Bias, slice1(&mut layer.attn.bq));
            f(Bias, slice1(&mut layer.attn.bk));
            f(Bias, slice1(&mut layer.attn.bv));
            f(Bias, slice1(&mut layer.attn.bo));
            f(Gain, slice1(&mut layer.ln2.gain));
            f(Bias, slice1(&mut layer.ln2.bias));
            f(Matrix, slice(&mut layer.mlp.w1));
            f(Bias, slice1(&mut layer.mlp.b1));
            f(Matrix, slice(&mut layer.mlp.w2));
            f(Bias, slice1(&mut layer.mlp.b2));
        }
        f(Gain, slice1(&mut self.text.ln_f.gain));
        f(Bias, slice1(&mut self.text.ln_f.bias));
        f(Matrix, slice(&mut self.text.proj));
        f(Matrix, slice(&mut self.image.w1));
        f(Bias, slice1(&mut self.image.b1));
        f(Matrix, slice(&mut self.image.w2));
        f(Bias, slice1(&mut self.image.b2));
        f(LogitScale, std::slice::from_mut(&mut self.log_inv_temp));
    }

    /// Same-shape parameter set filled with zeros (gradient accumulator).
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        out.visit_mut(&mut |_, s| {
            for x in s {
                *x = F::zero();
            }
        });
        out
    }

    pub fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_mut(&mut |_, s| n += s.len());
        n
    }
}

/// Pre- and post-softmax attention rows of the output token, head-averaged.
/// Positions after the EOT index hold the masked sentinel (`-inf` pre, `0`
/// post softmax).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttentionCapture<F> {
    pub pre_softmax: Vec<F>,
    pub post_softmax: Vec<F>,
}

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu<F: Scalar>(x: F) -> F {
    let c: F = real(GELU_C);
    let a: F = real(GELU_A);
    let half: F = real(0.5);
    let u = c * (x + a * x * x * x);
    half * x * (F::one() + u.tanh())
}

fn gelu_grad<F: Scalar>(x: F) -> F {
    let c: F = real(GELU_C);
    let a: F = real(GELU_A);
    let half: F = real(0.5);
    let three: F = real(3.0);
    let u = c * (x + a * x * x * x);
    let t = u.tanh();
    let sech2 = F::one() - t * t;
    half * (F::one() + t) + half * x * sech2 * c * (F::one() + three * a * x * x)
}

struct LnCache<F> {
    xhat: Array2<F>,
    inv_std: Array1<F>,
    out: Array2<F>,
}

fn layer_norm<F: Scalar>(x: &Array2<F>, p: &LayerNormParams<F>) -> LnCache<F> {
    let d = x.ncols();
    let inv_d: F = real(1.0 / d as f64);
    let eps: F = real(LN_EPS);
    let mut xhat = Array2::<F>::zeros(x.raw_dim());
    let mut inv_std = Array1::<F>::zeros(x.nrows());
    let mut out = Array2::<F>::zeros(x.raw_dim());
    for i in 0..x.nrows() {
        let row = x.row(i);
        let mean = row.sum() * inv_d;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() * inv_d;
        let is = F::one() / (var + eps).sqrt();
        inv_std[i] = is;
        for j in 0..d {
            let h = (row[j] - mean) * is;
            xhat[[i, j]] = h;
            out[[i, j]] = h * p.gain[j] + p.bias[j];
        }
    }
    LnCache { xhat, inv_std, out }
}

/// Backward of layer norm. Returns grad wrt the input and accumulates the
/// gain/bias gradients.
fn layer_norm_backward<F: Scalar>(
    cache: &LnCache<F>,
    p: &LayerNormParams<F>,
    grad_out: &Array2<F>,
    grad_p: &mut LayerNormParams<F>,
) -> Array2<F> {
    let (n, d) = (grad_out.nrows(), grad_out.ncols());
    let inv_d: F = real(1.0 / d as f64);
    let mut grad_x = Array2::<F>::zeros(grad_out.raw_dim());
    for i in 0..n {
        let mut sum_dh = F::zero();
        let mut sum_dh_xhat = F::zero();
        for j in 0..d {
            let dh = grad_out[[i, j]] * p.gain[j];
            sum_dh = sum_dh + dh;
            sum_dh_xhat = sum_dh_xhat + dh * cache.xhat[[i, j]];
            grad_p.gain[j] = grad_p.gain[j] + grad_out[[i, j]] * cache.xhat[[i, j]];
            grad_p.bias[j] = grad_p.bias[j] + grad_out[[i, j]];
        }
        let mean_dh = sum_dh * inv_d;
        let mean_dh_xhat = sum_dh_xhat * inv_d;
        for j in 0..d {
            let dh = grad_out[[i, j]] * p.gain[j];
            grad_x[[i, j]] = cache.inv_std[i] * (dh - mean_dh - cache.xhat[[i, j]] * mean_dh_xhat);
        }
    }
    grad_x
}

struct LayerCache<F> {
    ln1: LnCache<F>,
    q: Array2<F>,
    k: Array2<F>,
    v: Array2<F>,
    /// Per-head post-softmax attention over the full sequence.
    probs: Vec<Array2<F>>,
    ctx: Array2<F>,
    ln2: LnCache<F>,
    h_pre: Array2<F>,
    h_act: Array2<F>,
}

struct TextCache<F> {
    ids: Vec<u32>,
    sot: usize,
    eot: usize,
    layers: Vec<LayerCache<F>>,
    lnf: LnCache<F>,
    pooled: Array1<F>,
    feat_pre: Array1<F>,
    feat: Array1<F>,
    capture: Option<AttentionCapture<F>>,
}

/// Batch text forward result with per-sample caches for backprop.
pub struct TextForward<F> {
    pub features: Array2<F>,
    caches: Vec<TextCache<F>>,
}

struct ImageCache<F> {
    x: Array2<F>,
    h_pre: Array2<F>,
    h_act: Array2<F>,
    feat_pre: Array2<F>,
    feat: Array2<F>,
}

/// Batch image forward result.
pub struct ImageForward<F> {
    pub features: Array2<F>,
    cache: ImageCache<F>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualEncoder<F> {
    pub cfg: EncoderConfig,
    pub params: DualParams<F>,
}

fn randn<F: Scalar, R: Rng + ?Sized>(rng: &mut R, std: f64) -> F {
    let z: f64 = StandardNormal.sample(rng);
    real(z * std)
}

impl<F: Scalar> DualEncoder<F> {
    /// Random initialization; the positional table is supplied so the
    /// freeze/stretch pipeline stays in the caller's hands.
    pub fn init<R: Rng + ?Sized>(cfg: EncoderConfig, pos: PositionalTable<F>, rng: &mut R) -> Self {
        let t = &cfg.text;
        assert_eq!(pos.len(), t.l_ctx, "positional table must match context");
        assert_eq!(pos.dim(), t.model_dim);
        assert_eq!(t.model_dim % t.heads, 0, "model_dim divisible by heads");
        let d = t.model_dim;
        let mat = |rng: &mut R, rows: usize, cols: usize, std: f64| {
            Array2::from_shape_fn((rows, cols), |_| randn::<F, R>(rng, std))
        };
        let ln = |_: &mut R, dim: usize| LayerNormParams {
            gain: Array1::from_elem(dim, F::one()),
            bias: Array1::zeros(dim),
        };
        let w_std = 0.02;
        let layers = (0..t.layers)
            .map(|_| LayerParams {
                ln1: ln(rng, d),
                attn: AttentionParams {
                    wq: mat(rng, d, d, w_std),
                    wk: mat(rng, d, d, w_std),
                    wv: mat(rng, d, d, w_std),
                    wo: mat(rng, d, d, w_std),
                    bq: Array1::zeros(d),
                    bk: Array1::zeros(d),
                    bv: Array1::zeros(d),
                    bo: Array1::zeros(d),
                },
                ln2: ln(rng, d),
                mlp: MlpParams {
                    w1: mat(rng, d, t.feedforward_dim, w_std),
                    b1: Array1::zeros(t.feedforward_dim),
                    w2: mat(rng, t.feedforward_dim, d, w_std),
                    b2: Array1::zeros(d),
                },
            })
            .collect();
        let text = TextParams {
            tok_emb: mat(rng, t.vocab_size, d, w_std),
            pos,
            layers,
            ln_f: ln(rng, d),
            proj: mat(rng, d, t.output_dim, 1.0 / (d as f64).sqrt()),
        };
        let im = &cfg.image;
        let image = ImageParams {
            w1: mat(rng, im.input_dim, im.hidden_dim, (1.0 / im.input_dim as f64).sqrt()),
            b1: Array1::from_shape_fn(im.hidden_dim, |_| randn::<F, R>(rng, 0.02)),
            w2: mat(rng, im.hidden_dim, im.output_dim, (1.0 / im.hidden_dim as f64).sqrt()),
            b2: Array1::from_shape_fn(im.output_dim, |_| randn::<F, R>(rng, 0.02)),
        };
        let log_inv_temp = real(14.3f64.ln());
        DualEncoder {
            cfg,
            params: DualParams {
                text,
                image,
                log_inv_temp,
            },
        }
    }

    /// Set the initial inverse temperature (stored as a log-parameter).
    pub fn set_init_inv_temp(&mut self, inv_temp: f64) {
        self.params.log_inv_temp = real(inv_temp.ln());
    }

    fn forward_one_text(&self, seq: &TokenSequence, capture: bool) -> Result<TextCache<F>, EncoderError> {
        let t = &self.cfg.text;
        let l = t.l_ctx;
        if seq.ids.len() != l {
            return Err(EncoderError::ContextOverflow {
                expected: l,
                got: seq.ids.len(),
            });
        }
        let d = t.model_dim;
        let heads = t.heads;
        let dh = d / heads;
        let scale: F = real(1.0 / (dh as f64).sqrt());
        let p = &self.params.text;

        let mut x = Array2::<F>::zeros((l, d));
        for (i, &id) in seq.ids.iter().enumerate() {
            let e = p.tok_emb.row(id as usize);
            let pe = p.pos.embeddings.row(i);
            for j in 0..d {
                x[[i, j]] = e[j] + pe[j];
            }
        }

        let mut layer_caches = Vec::with_capacity(t.layers);
        let mut cap = None;
        for (li, layer) in p.layers.iter().enumerate() {
            let ln1 = layer_norm(&x, &layer.ln1);
            let q = ln1.out.dot(&layer.attn.wq) + &layer.attn.bq;
            let k = ln1.out.dot(&layer.attn.wk) + &layer.attn.bk;
            let v = ln1.out.dot(&layer.attn.wv) + &layer.attn.bv;
            let mut probs = Vec::with_capacity(heads);
            let mut ctx = Array2::<F>::zeros((l, d));
            let mut cap_pre = vec![F::zero(); l];
            let mut cap_post = vec![F::zero(); l];
            for h in 0..heads {
                let cols = h * dh..(h + 1) * dh;
                let qh = q.slice(ndarray::s![.., cols.clone()]);
                let kh = k.slice(ndarray::s![.., cols.clone()]);
                let vh = v.slice(ndarray::s![.., cols.clone()]);
                let scores = qh.dot(&kh.t()).mapv(|s| s * scale);
                let mut ph = Array2::<F>::zeros((l, l));
                for i in 0..l {
                    // causal: position i attends to j <= i (self-inclusive)
                    let mut m = F::neg_infinity();
                    for j in 0..=i {
                        if scores[[i, j]] > m {
                            m = scores[[i, j]];
                        }
                    }
                    let mut z = F::zero();
                    for j in 0..=i {
                        let e = (scores[[i, j]] - m).exp();
                        ph[[i, j]] = e;
                        z = z + e;
                    }
                    for j in 0..=i {
                        ph[[i, j]] = ph[[i, j]] / z;
                    }
                    if capture && li == t.layers - 1 && i == seq.eot_index {
                        for j in 0..=i {
                            cap_pre[j] = cap_pre[j] + scores[[i, j]];
                            cap_post[j] = cap_post[j] + ph[[i, j]];
                        }
                    }
                }
                let ctx_h = ph.dot(&vh);
                ctx.slice_mut(ndarray::s![.., cols]).assign(&ctx_h);
                probs.push(ph);
            }
            if capture && li == t.layers - 1 {
                let inv_h: F = real(1.0 / heads as f64);
                let mut pre: Vec<F> = cap_pre.iter().map(|&s| s * inv_h).collect();
                let mut post: Vec<F> = cap_post.iter().map(|&s| s * inv_h).collect();
                for j in (seq.eot_index + 1)..l {
                    pre[j] = F::neg_infinity();
                    post[j] = F::zero();
                }
                cap = Some(AttentionCapture {
                    pre_softmax: pre,
                    post_softmax: post,
                });
            }
            let attn_out = ctx.dot(&layer.attn.wo) + &layer.attn.bo;
            let x_mid = &x + &attn_out;
            let ln2 = layer_norm(&x_mid, &layer.ln2);
            let h_pre = ln2.out.dot(&layer.mlp.w1) + &layer.mlp.b1;
            let h_act = h_pre.mapv(gelu);
            x = &x_mid + &h_act.dot(&layer.mlp.w2) + &layer.mlp.b2;
            layer_caches.push(LayerCache {
                ln1,
                q,
                k,
                v,
                probs,
                ctx,
                ln2,
                h_pre,
                h_act,
            });
        }

        let lnf = layer_norm(&x, &p.ln_f);
        let pooled = match t.pooling {
            Pooling::Eot => lnf.out.row(seq.eot_index).to_owned(),
            Pooling::Average => {
                let span = lnf.out.slice(ndarray::s![seq.sot_index..=seq.eot_index, ..]);
                span.mean_axis(Axis(0)).expect("non-empty span")
            }
        };
        let feat_pre = pooled.dot(&p.proj);
        let norm = feat_pre.iter().map(|&v| v * v).sum::<F>().sqrt();
        let feat = feat_pre.mapv(|v| v / norm);
        Ok(TextCache {
            ids: seq.ids.clone(),
            sot: seq.sot_index,
            eot: seq.eot_index,
            layers: layer_caches,
            lnf,
            pooled,
            feat_pre,
            feat,
            capture: cap,
        })
    }

    /// Encode one token sequence, optionally capturing the output token's
    /// last-layer attention row.
    pub fn encode_text(
        &self,
        seq: &TokenSequence,
        capture_attention: bool,
    ) -> Result<(Array1<F>, Option<AttentionCapture<F>>), EncoderError> {
        let cache = self.forward_one_text(seq, capture_attention)?;
        Ok((cache.feat, cache.capture))
    }

    /// Final hidden states (after the last layer norm), for diagnostics.
    pub fn hidden_states(&self, seq: &TokenSequence) -> Result<Array2<F>, EncoderError> {
        let cache = self.forward_one_text(seq, false)?;
        Ok(cache.lnf.out)
    }

    /// Batch text forward with caches retained for [`Self::backward_text`].
    pub fn forward_text(&self, seqs: &[TokenSequence]) -> Result<TextForward<F>, EncoderError> {
        let mut caches = Vec::with_capacity(seqs.len());
        for seq in seqs {
            caches.push(self.forward_one_text(seq, false)?);
        }
        let d_out = self.cfg.text.output_dim;
        let mut features = Array2::<F>::zeros((seqs.len(), d_out));
        for (i, c) in caches.iter().enumerate() {
            features.row_mut(i).assign(&c.feat);
        }
        Ok(TextForward { features, caches })
    }

    /// Accumulate text-encoder gradients for `d loss / d features`.
    pub fn backward_text(
        &self,
        fwd: &TextForward<F>,
        grad_features: &Array2<F>,
        grads: &mut DualParams<F>,
    ) {
        let t = &self.cfg.text;
        let p = &self.params.text;
        let (d, heads) = (t.model_dim, t.heads);
        let dh = d / heads;
        let l = t.l_ctx;
        let scale: F = real(1.0 / (dh as f64).sqrt());

        for (si, cache) in fwd.caches.iter().enumerate() {
            // normalize backward
            let g_feat = grad_features.row(si);
            let norm = cache.feat_pre.iter().map(|&v| v * v).sum::<F>().sqrt();
            let dot = cache
                .feat
                .iter()
                .zip(g_feat.iter())
                .map(|(&y, &g)| y * g)
                .sum::<F>();
            let d_feat_pre: Array1<F> = cache
                .feat
                .iter()
                .zip(g_feat.iter())
                .map(|(&y, &g)| (g - y * dot) / norm)
                .collect();

            // projection backward
            for a in 0..d {
                for b in 0..t.output_dim {
                    grads.text.proj[[a, b]] =
                        grads.text.proj[[a, b]] + cache.pooled[a] * d_feat_pre[b];
                }
            }
            let d_pooled = p.proj.dot(&d_feat_pre);

            // pooling backward
            let mut d_lnf_out = Array2::<F>::zeros((l, d));
            match t.pooling {
                Pooling::Eot => {
                    d_lnf_out.row_mut(cache.eot).assign(&d_pooled);
                }
                Pooling::Average => {
                    let span = cache.eot - cache.sot + 1;
                    let w: F = real(1.0 / span as f64);
                    for i in cache.sot..=cache.eot {
                        let scaled = d_pooled.mapv(|v| v * w);
                        d_lnf_out.row_mut(i).assign(&scaled);
                    }
                }
            }
            let mut d_x = layer_norm_backward(&cache.lnf, &p.ln_f, &d_lnf_out, &mut grads.text.ln_f);

            for (li, layer) in p.layers.iter().enumerate().rev() {
                let lc = &cache.layers[li];
                let gl = &mut grads.text.layers[li];
                // mlp block: x_out = x_mid + gelu(ln2(x_mid) w1 + b1) w2 + b2
                let d_x_out = d_x;
                let d_h_act = d_x_out.dot(&layer.mlp.w2.t());
                gl.mlp.w2 += &lc.h_act.t().dot(&d_x_out);
                for b in 0..d {
                    gl.mlp.b2[b] = gl.mlp.b2[b] + d_x_out.column(b).sum();
                }
                let mut d_h_pre = d_h_act;
                for i in 0..l {
                    for a in 0..t.feedforward_dim {
                        d_h_pre[[i, a]] = d_h_pre[[i, a]] * gelu_grad(lc.h_pre[[i, a]]);
                    }
                }
                let d_m = d_h_pre.dot(&layer.mlp.w1.t());
                {
                    let w1g = lc.ln2.out.t().dot(&d_h_pre);
                    gl.mlp.w1  += &w1g;
                    for a in 0..t.feedforward_dim {
                        gl.mlp.b1[a] = gl.mlp.b1[a] + d_h_pre.column(a).sum();
                    }
                }
                let mut d_x_mid =
                    layer_norm_backward(&lc.ln2, &layer.ln2, &d_m, &mut gl.ln2) + &d_x_out;

                // attention block: x_mid = x + (ctx wo + bo)
                let d_attn_out = d_x_mid.clone();
                let d_ctx = d_attn_out.dot(&layer.attn.wo.t());
                {
                    let wog = lc.ctx.t().dot(&d_attn_out);
                    gl.attn.wo  += &wog;
                    for b in 0..d {
                        gl.attn.bo[b] = gl.attn.bo[b] + d_attn_out.column(b).sum();
                    }
                }
                let mut d_q = Array2::<F>::zeros((l, d));
                let mut d_k = Array2::<F>::zeros((l, d));
                let mut d_v = Array2::<F>::zeros((l, d));
                for h in 0..heads {
                    let cols = h * dh..(h + 1) * dh;
                    let ph = &lc.probs[h];
                    let vh = lc.v.slice(ndarray::s![.., cols.clone()]);
                    let qh = lc.q.slice(ndarray::s![.., cols.clone()]);
                    let kh = lc.k.slice(ndarray::s![.., cols.clone()]);
                    let d_ctx_h = d_ctx.slice(ndarray::s![.., cols.clone()]);
                    // d_v_h = ph^T d_ctx_h
                    let d_vh = ph.t().dot(&d_ctx_h);
                    d_v.slice_mut(ndarray::s![.., cols.clone()]).assign(&d_vh);
                    // d_probs = d_ctx_h vh^T  (only lower triangle is live)
                    let d_probs = d_ctx_h.dot(&vh.t());
                    // softmax backward row-wise, then scores -> q, k
                    let mut d_scores = Array2::<F>::zeros((l, l));
                    for i in 0..l {
                        let mut dot = F::zero();
                        for j in 0..=i {
                            dot = dot + d_probs[[i, j]] * ph[[i, j]];
                        }
                        for j in 0..=i {
                            d_scores[[i, j]] = ph[[i, j]] * (d_probs[[i, j]] - dot) * scale;
                        }
                    }
                    d_q.slice_mut(ndarray::s![.., cols.clone()])
                        .assign(&d_scores.dot(&kh));
                    d_k.slice_mut(ndarray::s![.., cols.clone()])
                        .assign(&d_scores.t().dot(&qh));
                }
                let a_in = &lc.ln1.out;
                let mut d_a = d_q.dot(&layer.attn.wq.t());
                d_a = d_a + d_k.dot(&layer.attn.wk.t());
                d_a = d_a + d_v.dot(&layer.attn.wv.t());
                gl.attn.wq  += &a_in.t().dot(&d_q);
                gl.attn.wk  += &a_in.t().dot(&d_k);
                gl.attn.wv  += &a_in.t().dot(&d_v);
                for b in 0..d {
                    gl.attn.bq[b] = gl.attn.bq[b] + d_q.column(b).sum();
                    gl.attn.bk[b] = gl.attn.bk[b] + d_k.column(b).sum();
                    gl.attn.bv[b] = gl.attn.bv[b] + d_v.column(b).sum();
                }
                d_x_mid = d_x_mid + layer_norm_backward(&lc.ln1, &layer.ln1, &d_a, &mut gl.ln1);
                d_x = d_x_mid;
            }

            // embedding scatter
            for (i, &id) in cache.ids.iter().enumerate() {
                for j in 0..d {
                    grads.text.tok_emb[[id as usize, j]] =
                        grads.text.tok_emb[[id as usize, j]] + d_x[[i, j]];
                    grads.text.pos.embeddings[[i, j]] =
                        grads.text.pos.embeddings[[i, j]] + d_x[[i, j]];
                }
            }
        }
    }

    /// Un-normalized image projector output (diagnostic surface).
    pub fn image_forward_raw(&self, x: &Array1<F>) -> Result<Array1<F>, EncoderError> {
        let im = &self.cfg.image;
        if x.len() != im.input_dim {
            return Err(EncoderError::ShapeMismatch {
                expected: im.input_dim,
                got: x.len(),
            });
        }
        let p = &self.params.image;
        let h = (x.dot(&p.w1) + &p.b1).mapv(gelu);
        Ok(h.dot(&p.w2) + &p.b2)
    }

    /// Encode one image feature vector to a unit-norm output.
    pub fn encode_image(&self, x: &Array1<F>) -> Result<Array1<F>, EncoderError> {
        let raw = self.image_forward_raw(x)?;
        let norm = raw.iter().map(|&v| v * v).sum::<F>().sqrt();
        Ok(raw.mapv(|v| v / norm))
    }

    /// Batch image forward with cache for [`Self::backward_image`].
    pub fn forward_image(&self, x: &Array2<F>) -> Result<ImageForward<F>, EncoderError> {
        let im = &self.cfg.image;
        if x.ncols() != im.input_dim {
            return Err(EncoderError::ShapeMismatch {
                expected: im.input_dim,
                got: x.ncols(),
            });
        }
        let p = &self.params.image;
        let h_pre = x.dot(&p.w1) + &p.b1;
        let h_act = h_pre.mapv(gelu);
        let feat_pre = h_act.dot(&p.w2) + &p.b2;
        let feat = crate::objective::normalize_rows(&feat_pre);
        Ok(ImageForward {
            features: feat.clone(),
            cache: ImageCache {
                x: x.clone(),
                h_pre,
                h_act,
                feat_pre,
                feat,
            },
        })
    }

    /// Accumulate image-projector gradients for `d loss / d features`.
    pub fn backward_image(
        &self,
        fwd: &ImageForward<F>,
        grad_features: &Array2<F>,
        grads: &mut DualParams<F>,
    ) {
        let p = &self.params.image;
        let c = &fwd.cache;
        let d_feat_pre =
            crate::objective::normalize_rows_backward(&c.feat_pre, &c.feat, grad_features);
        grads.image.w2  += &c.h_act.t().dot(&d_feat_pre);
        for b in 0..d_feat_pre.ncols() {
            grads.image.b2[b] = grads.image.b2[b] + d_feat_pre.column(b).sum();
        }
        let mut d_h = d_feat_pre.dot(&p.w2.t());
        for i in 0..d_h.nrows() {
            for j in 0..d_h.ncols() {
                d_h[[i, j]] = d_h[[i, j]] * gelu_grad(c.h_pre[[i, j]]);
            }
        }
        grads.image.w1  += &c.x.t().dot(&d_h);
        for b in 0..d_h.ncols() {
            grads.image.b1[b] = grads.image.b1[b] + d_h.column(b).sum();
        }
    }
}
