//! Caption-level augmentations: summary removal, sentence sampling, probe
//! transforms, and assembly of the long/short training pair.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text_pipeline::{
    redistribute_padding, tokenize, Caption, PaddingMode, TextError, TokenSequence, Vocabulary,
};

/// Literal used by the padding-sentence probe.
pub const PAD_SENTENCE: &str = "This is a photo.";

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("probe index {index} out of range for {k} sentences")]
    IndexOutOfRange { index: usize, k: usize },
    #[error("invalid sampling strategy: {0}")]
    InvalidStrategy(String),
    #[error(transparent)]
    Text(#[from] TextError),
}

/// How the short caption is drawn from the sentence set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingStrategy {
    /// Uniform count `U{1..k}`, distinct sentences, uniformly random order.
    Random,
    /// Contiguous block from the first sentence to a uniformly chosen end.
    Ordered,
    /// Per-sentence Bernoulli keep with probability `p`; redrawn if empty.
    Independent(f64),
    /// Exactly `n` random sentences (all of them if fewer exist).
    KeepN(usize),
    /// All sentences in a uniformly random order.
    Shuffle,
    /// The first sentence only (summary-as-short-caption baseline).
    Summary,
    /// Contiguous prefix of the full caption, summary included.
    Prefix,
}

impl SamplingStrategy {
    /// Whether the short caption is drawn from the full caption rather than
    /// from the summary-stripped remainder.
    pub fn uses_full_caption(&self) -> bool {
        matches!(self, SamplingStrategy::Summary | SamplingStrategy::Prefix)
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        match self {
            SamplingStrategy::Independent(p) if !(*p > 0.0 && *p < 1.0) => Err(
                AugmentError::InvalidStrategy(format!("p = {p} must lie in (0, 1)")),
            ),
            SamplingStrategy::KeepN(0) => Err(AugmentError::InvalidStrategy(
                "keep_n needs n >= 1".to_string(),
            )),
            _ => Ok(()),
        }
    }
}

/// Remove the summary sentence, returning the remainder and a flag that is
/// set when the caption had a single sentence and was kept as-is.
pub fn drop_summary(c: &Caption) -> (Caption, bool) {
    if c.k() <= 1 {
        (c.clone(), true)
    } else {
        (Caption::from_sentences(c.sentences[1..].to_vec()), false)
    }
}

/// Draw a short caption from `c` according to `strategy`.
pub fn sample_sentences<R: Rng + ?Sized>(
    c: &Caption,
    rng: &mut R,
    strategy: SamplingStrategy,
) -> Caption {
    let k = c.k();
    debug_assert!(k >= 1);
    let picked: Vec<String> = match strategy {
        SamplingStrategy::Random => {
            let n = rng.random_range(1..=k);
            pick_random(c, rng, n)
        }
        SamplingStrategy::Ordered | SamplingStrategy::Prefix => {
            let end = rng.random_range(1..=k);
            c.sentences[..end].to_vec()
        }
        SamplingStrategy::Independent(p) => loop {
            let kept: Vec<String> = c
                .sentences
                .iter()
                .filter(|_| rng.random_bool(p))
                .cloned()
                .collect();
            if !kept.is_empty() {
                break kept;
            }
        },
        SamplingStrategy::KeepN(n) => pick_random(c, rng, n.min(k)),
        SamplingStrategy::Shuffle => {
            let mut all = c.sentences.clone();
            all.shuffle(rng);
            all
        }
        SamplingStrategy::Summary => vec![c.sentences[0].clone()],
    };
    Caption::from_sentences(picked)
}

fn pick_random<R: Rng + ?Sized>(c: &Caption, rng: &mut R, n: usize) -> Vec<String> {
    let mut idx: Vec<usize> = (0..c.k()).collect();
    idx.shuffle(rng);
    idx.truncate(n);
    idx.into_iter().map(|i| c.sentences[i].clone()).collect()
}

/// Sentence-level transformations used by the evaluation probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Probe {
    Keep,
    /// Transpose sentences `i` and `j` (1-based). If `j` exceeds the
    /// sentence count, the first and last sentences are transposed.
    Move(usize, usize),
    RemoveFirst,
    /// Insert `n` copies of [`PAD_SENTENCE`] before the retained text.
    PrependPadSentences(usize),
    FirstM(usize),
    SwapFirstTwo,
}

impl Probe {
    /// Parse the CLI spelling: `keep`, `move:i:j`, `remove_first`, `pad:n`,
    /// `first:m`, `swap2`.
    pub fn parse(s: &str) -> Result<Probe, AugmentError> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || AugmentError::InvalidStrategy(format!("unknown probe `{s}`"));
        let num = |t: &str| t.parse::<usize>().map_err(|_| bad());
        match parts.as_slice() {
            ["keep"] => Ok(Probe::Keep),
            ["move", i, j] => Ok(Probe::Move(num(i)?, num(j)?)),
            ["remove_first"] => Ok(Probe::RemoveFirst),
            ["pad", n] => Ok(Probe::PrependPadSentences(num(n)?)),
            ["first", m] => Ok(Probe::FirstM(num(m)?)),
            ["swap2"] => Ok(Probe::SwapFirstTwo),
            _ => Err(bad()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Probe::Keep => "keep".to_string(),
            Probe::Move(i, j) => format!("move:{i}:{j}"),
            Probe::RemoveFirst => "remove_first".to_string(),
            Probe::PrependPadSentences(n) => format!("pad:{n}"),
            Probe::FirstM(m) => format!("first:{m}"),
            Probe::SwapFirstTwo => "swap2".to_string(),
        }
    }
}

/// Apply a probe transformation to a caption.
pub fn probe_transform(c: &Caption, probe: Probe) -> Result<Caption, AugmentError> {
    let k = c.k();
    let out = match probe {
        Probe::Keep => c.clone(),
        Probe::Move(i, j) => {
            if i < 1 || i > k {
                return Err(AugmentError::IndexOutOfRange { index: i, k });
            }
            let mut s = c.sentences.clone();
            let (a, b) = if j > k { (0, k - 1) } else { (i - 1, j - 1) };
            s.swap(a, b);
            Caption::from_sentences(s)
        }
        Probe::RemoveFirst => drop_summary(c).0,
        Probe::PrependPadSentences(n) => {
            let mut s = vec![PAD_SENTENCE.to_string(); n];
            s.extend_from_slice(&c.sentences);
            Caption::from_sentences(s)
        }
        Probe::FirstM(m) => {
            if m < 1 || m > k {
                return Err(AugmentError::IndexOutOfRange { index: m, k });
            }
            Caption::from_sentences(c.sentences[..m].to_vec())
        }
        Probe::SwapFirstTwo => {
            if k < 2 {
                return Err(AugmentError::IndexOutOfRange { index: 2, k });
            }
            let mut s = c.sentences.clone();
            s.swap(0, 1);
            Caption::from_sentences(s)
        }
    };
    Ok(out)
}

/// Configuration for training-pair construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub strategy: SamplingStrategy,
    pub padding: PaddingMode,
    pub l_ctx: usize,
}

/// The (long tokens, short tokens, image features) unit consumed by the
/// training loop.
#[derive(Debug, Clone)]
pub struct TrainingPair {
    pub long_tokens: TokenSequence,
    pub short_tokens: TokenSequence,
    pub image: Vec<f64>,
    /// Set when the caption had a single sentence and the short caption
    /// fell back to the full caption.
    pub degenerate: bool,
}

/// Build the long/short caption pair for one record.
///
/// Long path tokenizes the full caption; the short path runs summary
/// removal, sentence sampling, tokenization, and padding redistribution in
/// that order. The summary baseline bypasses removal and redistribution.
pub fn build_training_pair<R: Rng + ?Sized>(
    c: &Caption,
    image: Vec<f64>,
    vocab: &Vocabulary,
    rng: &mut R,
    cfg: &AugmentConfig,
) -> Result<TrainingPair, AugmentError> {
    cfg.strategy.validate()?;
    let long_tokens = tokenize(c, vocab, cfg.l_ctx);
    let (source, degenerate) = if cfg.strategy.uses_full_caption() {
        (c.clone(), false)
    } else {
        drop_summary(c)
    };
    let sampled = sample_sentences(&source, rng, cfg.strategy);
    let short_plain = tokenize(&sampled, vocab, cfg.l_ctx);
    let padding = if matches!(cfg.strategy, SamplingStrategy::Summary) {
        PaddingMode::None
    } else {
        cfg.padding
    };
    let short_tokens = redistribute_padding(&short_plain, rng, padding)?;
    Ok(TrainingPair {
        long_tokens,
        short_tokens,
        image,
        degenerate,
    })
}
