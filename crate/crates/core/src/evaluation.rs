//! Retrieval metrics, the sentence-probe battery, and attention profiling.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augmentation::{probe_transform, AugmentError, Probe};
use crate::corpus::Corpus;
use crate::encoder::{DualEncoder, EncoderError};
use crate::text_pipeline::{split_sentences, tokenize, TextError, Vocabulary};
use crate::Real;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("feature shapes disagree: {text:?} vs {image:?}")]
    ShapeMismatch {
        text: (usize, usize),
        image: (usize, usize),
    },
    #[error("no queries to evaluate")]
    Empty,
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Text(#[from] TextError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub label: String,
    pub recall_at_1_t2i: f64,
    pub recall_at_1_i2t: f64,
    pub n_queries: usize,
}

/// Recall@1 in both directions over unit-feature galleries. Similarity is
/// the dot product; ties break toward the lowest index.
pub fn eval_retrieval(
    text: &Array2<Real>,
    image: &Array2<Real>,
    label: &str,
) -> Result<RetrievalResult, EvalError> {
    if text.dim() != image.dim() {
        return Err(EvalError::ShapeMismatch {
            text: text.dim(),
            image: image.dim(),
        });
    }
    let n = text.nrows();
    if n == 0 {
        return Err(EvalError::Empty);
    }
    let sims = text.dot(&image.t());
    let mut hit_t2i = 0usize;
    let mut hit_i2t = 0usize;
    for i in 0..n {
        let mut best = 0usize;
        for j in 1..n {
            if sims[[i, j]] > sims[[i, best]] {
                best = j;
            }
        }
        if best == i {
            hit_t2i += 1;
        }
        let mut best = 0usize;
        for j in 1..n {
            if sims[[j, i]] > sims[[best, i]] {
                best = j;
            }
        }
        if best == i {
            hit_i2t += 1;
        }
    }
    Ok(RetrievalResult {
        label: label.to_string(),
        recall_at_1_t2i: hit_t2i as f64 / n as f64,
        recall_at_1_i2t: hit_i2t as f64 / n as f64,
        n_queries: n,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeRow {
    pub probe: String,
    pub recall_at_1_t2i: f64,
    pub recall_at_1_i2t: f64,
    pub delta_t2i: f64,
    pub delta_i2t: f64,
    pub n_queries: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeTable {
    pub rows: Vec<ProbeRow>,
}

impl ProbeTable {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "probe,recall_at_1_t2i,recall_at_1_i2t,delta_t2i,delta_i2t,n_queries")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.probe, r.recall_at_1_t2i, r.recall_at_1_i2t, r.delta_t2i, r.delta_i2t, r.n_queries
            )?;
        }
        Ok(())
    }

    pub fn row(&self, probe: &str) -> Option<&ProbeRow> {
        self.rows.iter().find(|r| r.probe == probe)
    }
}

fn image_gallery(model: &DualEncoder<Real>, corpus: &Corpus) -> Result<Array2<Real>, EvalError> {
    let n = corpus.records.len();
    let mut x = Array2::<Real>::zeros((n, corpus.image_dim()));
    for (i, r) in corpus.records.iter().enumerate() {
        x.row_mut(i).assign(&Array1::from_vec(r.image.clone()));
    }
    Ok(model.forward_image(&x)?.features)
}

fn encode_captions(
    model: &DualEncoder<Real>,
    vocab: &Vocabulary,
    captions: &[crate::text_pipeline::Caption],
) -> Result<Array2<Real>, EvalError> {
    let l_ctx = model.cfg.text.l_ctx;
    let d = model.cfg.text.output_dim;
    let mut out = Array2::<Real>::zeros((captions.len(), d));
    for (i, c) in captions.iter().enumerate() {
        let seq = tokenize(c, vocab, l_ctx);
        let (f, _) = model.encode_text(&seq, false)?;
        out.row_mut(i).assign(&f);
    }
    Ok(out)
}

/// Re-encode probed captions against the fixed image gallery; one row per
/// probe with deltas against `keep`.
pub fn run_probe_suite(
    model: &DualEncoder<Real>,
    vocab: &Vocabulary,
    corpus: &Corpus,
    probes: &[Probe],
) -> Result<ProbeTable, EvalError> {
    if corpus.records.is_empty() {
        return Err(EvalError::Empty);
    }
    let gallery = image_gallery(model, corpus)?;
    let captions: Vec<_> = corpus
        .records
        .iter()
        .map(|r| split_sentences(&r.caption))
        .collect::<Result<_, _>>()?;

    let keep_caps: Vec<_> = captions.clone();
    let keep_feats = encode_captions(model, vocab, &keep_caps)?;
    let keep = eval_retrieval(&keep_feats, &gallery, "keep")?;

    let mut rows = Vec::with_capacity(probes.len());
    for probe in probes {
        let r = if *probe == Probe::Keep {
            keep.clone()
        } else {
            let probed: Vec<_> = captions
                .iter()
                .map(|c| probe_transform(c, probe.clone()))
                .collect::<Result<_, _>>()?;
            let feats = encode_captions(model, vocab, &probed)?;
            eval_retrieval(&feats, &gallery, &probe.label())?
        };
        rows.push(ProbeRow {
            probe: probe.label(),
            recall_at_1_t2i: r.recall_at_1_t2i,
            recall_at_1_i2t: r.recall_at_1_i2t,
            delta_t2i: r.recall_at_1_t2i - keep.recall_at_1_t2i,
            delta_i2t: r.recall_at_1_i2t - keep.recall_at_1_i2t,
            n_queries: r.n_queries,
        });
    }
    Ok(ProbeTable { rows })
}

/// Aggregated output-token attention statistics over a caption set.
///
/// `mean_pre_softmax[p]` is the head-averaged pre-softmax attention from the
/// output token to position `p`, averaged over the captions whose visible
/// span covers `p`; unoccupied positions and the SOT position serialize as
/// `null`. The SOT column is reported separately.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttentionProfile {
    #[serde(with = "nullable_vec")]
    pub mean_pre_softmax: Vec<f64>,
    #[serde(with = "nullable_vec")]
    pub mean_post_softmax: Vec<f64>,
    pub occupancy: Vec<u64>,
    pub sot_pre_softmax_mean: f64,
    pub sot_post_softmax_mean: f64,
    /// Std of `mean_pre_softmax` over occupied positions `>= 20`.
    #[serde(with = "nullable")]
    pub flatness: f64,
    /// Positions with occupancy below 5 (high-variance tail).
    pub high_variance_positions: Vec<usize>,
    pub n_captions: usize,
}

/// Non-finite floats serialize as JSON null (the "unoccupied" marker) and
/// come back as NaN.
mod nullable {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

mod nullable_vec {
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for &x in v {
            seq.serialize_element(&if x.is_finite() { Some(x) } else { None })?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<Option<f64>>::deserialize(d)?
            .into_iter()
            .map(|x| x.unwrap_or(f64::NAN))
            .collect())
    }
}

/// How deep into the table the flatness statistic starts; early positions
/// are dominated by the summary/prefix effect the statistic is meant to
/// exclude.
pub const FLATNESS_START: usize = 20;
const LOW_OCCUPANCY: u64 = 5;

pub fn attention_profile(
    model: &DualEncoder<Real>,
    vocab: &Vocabulary,
    captions: &[crate::text_pipeline::Caption],
) -> Result<AttentionProfile, EvalError> {
    if captions.is_empty() {
        return Err(EvalError::Empty);
    }
    let l = model.cfg.text.l_ctx;
    let mut sum_pre = vec![0.0f64; l];
    let mut sum_post = vec![0.0f64; l];
    let mut occupancy = vec![0u64; l];
    let mut sot_pre = 0.0f64;
    let mut sot_post = 0.0f64;
    for c in captions {
        let seq = tokenize(c, vocab, l);
        let (_, cap) = model.encode_text(&seq, true)?;
        let cap = cap.expect("capture requested");
        sot_pre += cap.pre_softmax[seq.sot_index];
        sot_post += cap.post_softmax[seq.sot_index];
        for p in 0..l {
            if p == seq.sot_index || p > seq.eot_index {
                continue;
            }
            sum_pre[p] += cap.pre_softmax[p];
            sum_post[p] += cap.post_softmax[p];
            occupancy[p] += 1;
        }
    }
    let n = captions.len() as f64;
    let mean = |sums: &[f64]| -> Vec<f64> {
        sums.iter()
            .zip(&occupancy)
            .map(|(&s, &o)| if o > 0 { s / o as f64 } else { f64::NAN })
            .collect()
    };
    let mean_pre = mean(&sum_pre);
    let mean_post = mean(&sum_post);
    let occupied_tail: Vec<f64> = (FLATNESS_START..l)
        .filter(|&p| occupancy[p] > 0)
        .map(|p| mean_pre[p])
        .collect();
    let flatness = if occupied_tail.len() >= 2 {
        let m = occupied_tail.iter().sum::<f64>() / occupied_tail.len() as f64;
        (occupied_tail.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
            / occupied_tail.len() as f64)
            .sqrt()
    } else {
        f64::NAN
    };
    Ok(AttentionProfile {
        mean_pre_softmax: mean_pre,
        mean_post_softmax: mean_post,
        high_variance_positions: occupancy
            .iter()
            .enumerate()
            .filter(|&(p, &o)| p > 0 && o < LOW_OCCUPANCY)
            .map(|(p, _)| p)
            .collect(),
        occupancy,
        sot_pre_softmax_mean: sot_pre / n,
        sot_post_softmax_mean: sot_post / n,
        flatness,
        n_captions: captions.len(),
    })
}
