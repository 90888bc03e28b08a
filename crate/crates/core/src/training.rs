//! Deterministic training loop: AdamW with linear warmup, per-batch caption
//! augmentation, the weighted two-branch objective, and JSON checkpoints
//! that resume onto the exact same trajectory.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augmentation::{build_training_pair, AugmentConfig, AugmentError, SamplingStrategy};
use crate::corpus::Corpus;
use crate::encoder::{
    DualEncoder, EncoderConfig, EncoderError, ImageEncoderConfig, ParamTag, Pooling,
    TextEncoderConfig,
};
use crate::manifest::sha256_hex;
use crate::objective::{
    inv_temp_from_log, total_loss_with_grad, LossConfig, LossWeighting, ObjectiveError,
};
use crate::pos_embed::{stretch, PosEmbedError};
use crate::text_pipeline::{split_sentences, Caption, PaddingMode, Vocabulary};
use crate::Real;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("corpus is empty")]
    CorpusEmpty,
    #[error("invalid train config: {0}")]
    ConfigInvalid(String),
    #[error("checkpoint does not match: {0}")]
    ResumeMismatch(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    PosEmbed(#[from] PosEmbedError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialize: {0}")]
    Json(#[from] serde_json::Error),
}

/// Model geometry that does not depend on the corpus (vocabulary size and
/// image input dimension are filled in at trainer construction).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncoderGeometry {
    pub layers: usize,
    pub heads: usize,
    pub model_dim: usize,
    pub feedforward_dim: usize,
    pub output_dim: usize,
    pub image_hidden_dim: usize,
    pub pooling: Pooling,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub warmup_iters: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub augment: AugmentConfig,
    pub loss: LossConfig,
    pub encoder: EncoderGeometry,
    /// Positional table before stretching.
    pub pos_base_len: usize,
    pub pos_freeze: usize,
    pub pos_factor: usize,
}

impl TrainConfig {
    /// CPU-friendly defaults for from-scratch toy training. The learning
    /// rate is far above the published fine-tuning value on purpose: a
    /// randomly initialized model needs real steps.
    pub fn desk_default() -> Self {
        TrainConfig {
            epochs: 3,
            batch_size: 32,
            warmup_iters: 20,
            learning_rate: 3e-4,
            weight_decay: 1e-2,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            augment: AugmentConfig {
                strategy: SamplingStrategy::Random,
                padding: PaddingMode::Random,
                l_ctx: 48,
            },
            loss: LossConfig::default(),
            encoder: EncoderGeometry {
                layers: 2,
                heads: 2,
                model_dim: 32,
                feedforward_dim: 64,
                output_dim: 16,
                image_hidden_dim: 32,
                pooling: Pooling::Eot,
            },
            pos_base_len: 27,
            pos_freeze: 20,
            pos_factor: 4,
        }
    }

    /// Hyperparameters as published (fine-tuning scale): 3 epochs, batch
    /// 256, warmup 200, AdamW lr 1e-6 / wd 1e-2, context 77 -> 248.
    pub fn paper_faithful() -> Self {
        TrainConfig {
            epochs: 3,
            batch_size: 256,
            warmup_iters: 200,
            learning_rate: 1e-6,
            weight_decay: 1e-2,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            augment: AugmentConfig {
                strategy: SamplingStrategy::Random,
                padding: PaddingMode::Random,
                l_ctx: 248,
            },
            loss: LossConfig::default(),
            encoder: EncoderGeometry {
                layers: 2,
                heads: 4,
                model_dim: 64,
                feedforward_dim: 128,
                output_dim: 32,
                image_hidden_dim: 64,
                pooling: Pooling::Eot,
            },
            pos_base_len: 77,
            pos_freeze: 20,
            pos_factor: 4,
        }
    }

    pub fn l_ctx(&self) -> usize {
        self.pos_freeze + self.pos_factor * (self.pos_base_len - self.pos_freeze)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: String| Err(TrainError::ConfigInvalid(m));
        if self.batch_size < 2 {
            return fail("batch_size must be at least 2 (contrastive negatives)".into());
        }
        if self.epochs == 0 {
            return fail("epochs must be positive".into());
        }
        if self.pos_freeze >= self.pos_base_len || self.pos_factor < 1 {
            return fail("positional geometry invalid".into());
        }
        if self.augment.l_ctx != self.l_ctx() {
            return fail(format!(
                "augment.l_ctx {} disagrees with stretched table length {}",
                self.augment.l_ctx,
                self.l_ctx()
            ));
        }
        if self.encoder.model_dim % self.encoder.heads != 0 {
            return fail("model_dim must be divisible by heads".into());
        }
        self.augment.strategy.validate()?;
        Ok(())
    }
}

/// Which published recipe drives augmentation and loss weighting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Short caption = the summary sentence, unweighted loss.
    LongclipBaseline,
    /// Summary dropped, sentences subsampled, pads redistributed, weighted
    /// loss.
    Debias,
    /// Use the config's augmentation/loss settings as given.
    Custom,
}

/// Resolve mode overrides into the effective augmentation and loss configs.
pub fn effective_configs(cfg: &TrainConfig, mode: TrainMode) -> (AugmentConfig, LossConfig) {
    let mut aug = cfg.augment.clone();
    let mut loss = cfg.loss.clone();
    match mode {
        TrainMode::LongclipBaseline => {
            aug.strategy = SamplingStrategy::Summary;
            aug.padding = PaddingMode::None;
            loss.weighting = LossWeighting::Unweighted;
        }
        TrainMode::Debias => {
            aug.strategy = SamplingStrategy::Random;
            aug.padding = PaddingMode::Random;
            if !matches!(loss.weighting, LossWeighting::Weighted { .. }) {
                loss.weighting = LossWeighting::Weighted { lambda_short: 0.1 };
            }
        }
        TrainMode::Custom => {}
    }
    (aug, loss)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: usize,
    pub loss_s: f64,
    pub loss_l: f64,
    pub loss_total: f64,
    pub lr: f64,
    pub inv_temp: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AdamW {
    m: Vec<Vec<Real>>,
    v: Vec<Vec<Real>>,
    t: usize,
}

impl AdamW {
    fn new(params: &mut crate::encoder::DualParams<Real>) -> Self {
        let mut m = Vec::new();
        params.visit_mut(&mut |_, s| m.push(vec![0.0; s.len()]));
        AdamW {
            v: m.clone(),
            m,
            t: 0,
        }
    }

    fn step(
        &mut self,
        params: &mut crate::encoder::DualParams<Real>,
        grads: &mut crate::encoder::DualParams<Real>,
        lr: f64,
        cfg: &TrainConfig,
    ) {
        self.t += 1;
        let t = self.t as f64;
        let (b1, b2, eps, wd) = (cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.weight_decay);
        let bc1 = 1.0 - b1.powf(t);
        let bc2 = 1.0 - b2.powf(t);
        let mut gslices: Vec<Vec<Real>> = Vec::new();
        grads.visit_mut(&mut |_, s| gslices.push(s.to_vec()));
        let mut idx = 0;
        params.visit_mut(&mut |tag, p| {
            // grads mirrors params: same visit order, same shapes
            let g = &gslices[idx];
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            idx += 1;
            let (skip_until, decay) = match tag {
                ParamTag::Positional { frozen_entries } => (frozen_entries, true),
                ParamTag::Matrix | ParamTag::TokenEmbedding => (0, true),
                ParamTag::Bias | ParamTag::Gain | ParamTag::LogitScale => (0, false),
            };
            for i in skip_until..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                let mut upd = mhat / (vhat.sqrt() + eps);
                if decay {
                    upd += wd * p[i];
                }
                p[i] -= lr * upd;
            }
        });
    }
}

/// Full training state; serializing it is the checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trainer {
    pub schema: String,
    pub cfg: TrainConfig,
    pub mode: TrainMode,
    pub vocab: Vocabulary,
    pub encoder: DualEncoder<Real>,
    opt: AdamW,
    rng: ChaCha8Rng,
    pub step: usize,
    pub epochs_done: usize,
    pub corpus_hash: String,
    pub metrics: Vec<MetricsRecord>,
}

const CHECKPOINT_SCHEMA: &str = "longcap-checkpoint/1";

fn corpus_digest(corpus: &Corpus) -> String {
    let mut buf = Vec::new();
    corpus.write_jsonl(&mut buf).expect("in-memory serialize");
    sha256_hex(&buf)
}

impl Trainer {
    pub fn new(cfg: TrainConfig, corpus: &Corpus, mode: TrainMode) -> Result<Self, TrainError> {
        cfg.validate()?;
        if corpus.records.is_empty() {
            return Err(TrainError::CorpusEmpty);
        }
        let vocab = corpus.vocabulary();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let g = &cfg.encoder;
        let enc_cfg = EncoderConfig {
            text: TextEncoderConfig {
                layers: g.layers,
                heads: g.heads,
                model_dim: g.model_dim,
                feedforward_dim: g.feedforward_dim,
                l_ctx: cfg.l_ctx(),
                vocab_size: vocab.size() as usize,
                output_dim: g.output_dim,
                pooling: g.pooling,
            },
            image: ImageEncoderConfig {
                input_dim: corpus.image_dim(),
                hidden_dim: g.image_hidden_dim,
                output_dim: g.output_dim,
            },
        };
        let base = Array2::from_shape_fn((cfg.pos_base_len, g.model_dim), |_| {
            use rand_distr::Distribution;
            let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
            z * 0.01
        });
        let pos = stretch(&base, cfg.pos_freeze, cfg.pos_factor)?;
        let mut encoder = DualEncoder::init(enc_cfg, pos, &mut rng);
        encoder.set_init_inv_temp(cfg.loss.init_inv_temp);
        let opt = AdamW::new(&mut encoder.params);
        Ok(Trainer {
            schema: CHECKPOINT_SCHEMA.to_string(),
            cfg,
            mode,
            vocab,
            encoder,
            opt,
            rng,
            step: 0,
            epochs_done: 0,
            corpus_hash: corpus_digest(corpus),
            metrics: Vec::new(),
        })
    }

    /// Run training up to `target_epochs` (capped by the config).
    pub fn run_to(&mut self, corpus: &Corpus, target_epochs: usize) -> Result<(), TrainError> {
        let target = target_epochs.min(self.cfg.epochs);
        let (aug, loss_cfg) = effective_configs(&self.cfg, self.mode);
        let captions: Vec<Caption> = corpus
            .records
            .iter()
            .map(|r| split_sentences(&r.caption).expect("corpus captions are non-empty"))
            .collect();
        while self.epochs_done < target {
            let mut order: Vec<usize> = (0..corpus.records.len()).collect();
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(self.cfg.batch_size) {
                if chunk.len() < 2 {
                    continue;
                }
                self.train_batch(corpus, &captions, chunk, &aug, &loss_cfg)?;
            }
            self.epochs_done += 1;
        }
        Ok(())
    }

    /// Run to the configured epoch count.
    pub fn run(&mut self, corpus: &Corpus) -> Result<(), TrainError> {
        self.run_to(corpus, self.cfg.epochs)
    }

    fn train_batch(
        &mut self,
        corpus: &Corpus,
        captions: &[Caption],
        chunk: &[usize],
        aug: &AugmentConfig,
        loss_cfg: &LossConfig,
    ) -> Result<(), TrainError> {
        let n = chunk.len();
        let mut long_seqs = Vec::with_capacity(n);
        let mut short_seqs = Vec::with_capacity(n);
        let mut images = Array2::<Real>::zeros((n, corpus.image_dim()));
        for (row, &ri) in chunk.iter().enumerate() {
            let pair = build_training_pair(
                &captions[ri],
                corpus.records[ri].image.clone(),
                &self.vocab,
                &mut self.rng,
                aug,
            )?;
            long_seqs.push(pair.long_tokens);
            short_seqs.push(pair.short_tokens);
            images
                .row_mut(row)
                .assign(&Array1::from_vec(pair.image));
        }

        let fwd_long = self.encoder.forward_text(&long_seqs)?;
        let fwd_short = self.encoder.forward_text(&short_seqs)?;
        let fwd_image = self.encoder.forward_image(&images)?;

        let (inv_t, clamped) =
            inv_temp_from_log(self.encoder.params.log_inv_temp, loss_cfg.max_inv_temp);
        let mut loss_cfg_batch = loss_cfg.clone();
        // PCA rank cannot exceed the (possibly short, final) batch
        loss_cfg_batch.pca_rank = loss_cfg.pca_rank.min(n.min(self.cfg.encoder.output_dim));
        let out = total_loss_with_grad(
            &fwd_short.features,
            &fwd_long.features,
            &fwd_image.features,
            inv_t,
            &loss_cfg_batch,
        )?;

        let mut grads = self.encoder.params.zeros_like();
        self.encoder
            .backward_text(&fwd_short, &out.grad_u_short, &mut grads);
        self.encoder
            .backward_text(&fwd_long, &out.grad_u_long, &mut grads);
        self.encoder
            .backward_image(&fwd_image, &out.grad_v, &mut grads);
        grads.log_inv_temp = if clamped {
            0.0
        } else {
            out.grad_inv_temp * inv_t
        };

        self.step += 1;
        let lr = if self.cfg.warmup_iters > 0 {
            self.cfg.learning_rate * (self.step as f64 / self.cfg.warmup_iters as f64).min(1.0)
        } else {
            self.cfg.learning_rate
        };
        self.opt
            .step(&mut self.encoder.params, &mut grads, lr, &self.cfg);

        self.metrics.push(MetricsRecord {
            step: self.step,
            loss_s: out.components.loss_short,
            loss_l: out.components.loss_long,
            loss_total: out.components.total,
            lr,
            inv_temp: inv_temp_from_log(self.encoder.params.log_inv_temp, loss_cfg.max_inv_temp).0,
        });
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let body = serde_json::to_string(self)?;
        std::fs::write(path, body)?;
        Ok(())
    }

    /// Load a checkpoint and verify it matches the corpus it will continue
    /// training on.
    pub fn load(path: &Path, corpus: &Corpus) -> Result<Self, TrainError> {
        let body = std::fs::read_to_string(path)?;
        let t: Trainer = serde_json::from_str(&body)?;
        if t.schema != CHECKPOINT_SCHEMA {
            return Err(TrainError::ResumeMismatch(format!(
                "unknown checkpoint schema {}",
                t.schema
            )));
        }
        let digest = corpus_digest(corpus);
        if t.corpus_hash != digest {
            return Err(TrainError::ResumeMismatch(format!(
                "corpus hash {} != checkpoint {}",
                &digest[..12],
                &t.corpus_hash[..12]
            )));
        }
        Ok(t)
    }

    /// Load for evaluation only: no corpus check.
    pub fn load_unchecked(path: &Path) -> Result<Self, TrainError> {
        let body = std::fs::read_to_string(path)?;
        let t: Trainer = serde_json::from_str(&body)?;
        if t.schema != CHECKPOINT_SCHEMA {
            return Err(TrainError::ResumeMismatch(format!(
                "unknown checkpoint schema {}",
                t.schema
            )));
        }
        Ok(t)
    }

    pub fn write_metrics<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        for m in &self.metrics {
            serde_json::to_writer(&mut w, m)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Convenience wrapper: build a trainer and run to completion.
pub fn train(cfg: TrainConfig, corpus: &Corpus, mode: TrainMode) -> Result<Trainer, TrainError> {
    let mut t = Trainer::new(cfg, corpus, mode)?;
    t.run(corpus)?;
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, SummaryMode, SyntheticCorpusSpec};
    use rand::SeedableRng;

    fn tiny_corpus(n: usize, seed: u64) -> Corpus {
        let spec = SyntheticCorpusSpec {
            n_samples: n,
            concepts_per_image: 3,
            sentences_min: 4,
            sentences_max: 6,
            vocab_size: 16,
            summary_mode: SummaryMode::Union,
            image_noise_sigma: 0.05,
        };
        generate_corpus(&spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn tiny_cfg(epochs: usize) -> TrainConfig {
        let mut cfg = TrainConfig::desk_default();
        cfg.epochs = epochs;
        cfg.batch_size = 8;
        cfg.warmup_iters = 4;
        cfg.loss.pca_rank = 4;
        cfg
    }

    #[test]
    fn same_seed_same_metrics() {
        let corpus = tiny_corpus(24, 1);
        let a = train(tiny_cfg(1), &corpus, TrainMode::Debias).unwrap();
        let b = train(tiny_cfg(1), &corpus, TrainMode::Debias).unwrap();
        let mut wa = Vec::new();
        let mut wb = Vec::new();
        a.write_metrics(&mut wa).unwrap();
        b.write_metrics(&mut wb).unwrap();
        assert!(!wa.is_empty());
        assert_eq!(wa, wb);
    }

    #[test]
    fn warmup_schedule_is_linear_then_flat() {
        let corpus = tiny_corpus(32, 2);
        let cfg = tiny_cfg(2);
        let lr0 = cfg.learning_rate;
        let warm = cfg.warmup_iters;
        let t = train(cfg, &corpus, TrainMode::Debias).unwrap();
        for m in &t.metrics {
            let expect = lr0 * (m.step as f64 / warm as f64).min(1.0);
            assert!((m.lr - expect).abs() < 1e-15, "step {}", m.step);
        }
        assert!(t.metrics.iter().any(|m| m.lr == lr0));
    }

    #[test]
    fn loss_decreases_from_start_to_finish() {
        let corpus = tiny_corpus(48, 3);
        let mut cfg = tiny_cfg(6);
        cfg.batch_size = 16;
        let t = train(cfg, &corpus, TrainMode::Debias).unwrap();
        let head: f64 = t.metrics[..3].iter().map(|m| m.loss_total).sum::<f64>() / 3.0;
        let n = t.metrics.len();
        let tail: f64 = t.metrics[n - 3..].iter().map(|m| m.loss_total).sum::<f64>() / 3.0;
        assert!(
            tail < head,
            "training should descend: first {head:.4} last {tail:.4}"
        );
    }

    #[test]
    fn frozen_positional_rows_never_move() {
        let corpus = tiny_corpus(24, 4);
        let cfg = tiny_cfg(2);
        let freeze = cfg.pos_freeze;
        let mut t = Trainer::new(cfg, &corpus, TrainMode::Debias).unwrap();
        let before = t.encoder.params.text.pos.embeddings.clone();
        t.run(&corpus).unwrap();
        let after = &t.encoder.params.text.pos.embeddings;
        for p in 0..freeze {
            for d in 0..before.ncols() {
                assert_eq!(before[[p, d]].to_bits(), after[[p, d]].to_bits());
            }
        }
        // unfrozen rows must actually have trained
        let mut moved = false;
        for p in freeze..before.nrows() {
            for d in 0..before.ncols() {
                if before[[p, d]] != after[[p, d]] {
                    moved = true;
                }
            }
        }
        assert!(moved);
    }

    #[test]
    fn checkpoint_resume_matches_uninterrupted_run() {
        let corpus = tiny_corpus(24, 5);
        let cfg = tiny_cfg(2);

        let straight = train(cfg.clone(), &corpus, TrainMode::Debias).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let ck = dir.path().join("ck.json");
        let mut first = Trainer::new(cfg, &corpus, TrainMode::Debias).unwrap();
        first.run_to(&corpus, 1).unwrap();
        first.save(&ck).unwrap();
        let mut resumed = Trainer::load(&ck, &corpus).unwrap();
        resumed.run(&corpus).unwrap();

        assert_eq!(straight.metrics.len(), resumed.metrics.len());
        let mut wa = Vec::new();
        let mut wb = Vec::new();
        straight.write_metrics(&mut wa).unwrap();
        resumed.write_metrics(&mut wb).unwrap();
        assert_eq!(wa, wb, "resume must rejoin the exact trajectory");
        assert_eq!(
            serde_json::to_string(&straight.encoder.params).unwrap(),
            serde_json::to_string(&resumed.encoder.params).unwrap()
        );
    }

    #[test]
    fn resume_rejects_wrong_corpus() {
        let corpus = tiny_corpus(24, 6);
        let other = tiny_corpus(24, 7);
        let dir = tempfile::tempdir().unwrap();
        let ck = dir.path().join("ck.json");
        let t = Trainer::new(tiny_cfg(1), &corpus, TrainMode::Debias).unwrap();
        t.save(&ck).unwrap();
        assert!(matches!(
            Trainer::load(&ck, &other),
            Err(TrainError::ResumeMismatch(_))
        ));
    }

    #[test]
    fn empty_corpus_and_bad_config_are_rejected() {
        let corpus = tiny_corpus(24, 8);
        let empty = Corpus {
            spec: corpus.spec.clone(),
            records: vec![],
        };
        assert!(matches!(
            Trainer::new(tiny_cfg(1), &empty, TrainMode::Debias),
            Err(TrainError::CorpusEmpty)
        ));
        let mut cfg = tiny_cfg(1);
        cfg.batch_size = 1;
        assert!(Trainer::new(cfg, &corpus, TrainMode::Debias).is_err());
        let mut cfg = tiny_cfg(1);
        cfg.augment.l_ctx = 40; // disagrees with pos geometry (48)
        assert!(Trainer::new(cfg, &corpus, TrainMode::Debias).is_err());
    }

    #[test]
    fn paper_preset_keeps_published_numbers() {
        let cfg = TrainConfig::paper_faithful();
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.batch_size, 256);
        assert_eq!(cfg.warmup_iters, 200);
        assert_eq!(cfg.weight_decay, 1e-2);
        assert_eq!(cfg.learning_rate, 1e-6);
        assert_eq!(cfg.l_ctx(), 248);
        assert_eq!(cfg.loss.init_inv_temp, 14.3);
    }

    #[test]
    fn baseline_mode_uses_summary_and_unweighted_loss() {
        let cfg = tiny_cfg(1);
        let (aug, loss) = effective_configs(&cfg, TrainMode::LongclipBaseline);
        assert_eq!(aug.strategy, SamplingStrategy::Summary);
        assert_eq!(aug.padding, PaddingMode::None);
        assert!(matches!(loss.weighting, LossWeighting::Unweighted));
        let (aug, loss) = effective_configs(&cfg, TrainMode::Debias);
        assert_eq!(aug.strategy, SamplingStrategy::Random);
        assert_eq!(aug.padding, PaddingMode::Random);
        assert!(matches!(
            loss.weighting,
            LossWeighting::Weighted { lambda_short } if lambda_short == 0.1
        ));
    }
}
