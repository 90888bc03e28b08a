//! Positional-embedding table construction and the freeze-prefix linear
//! interpolation stretch.
//!
//! The stretch maps a table of `L_in` rows to `freeze + factor * (L_in -
//! freeze)` rows. Rows below `freeze` are copied verbatim; row `p >= freeze`
//! is the linear interpolation of the source at coordinate
//!
//! ```text
//! s(p) = freeze + (p - freeze) * (L_in - 1 - freeze) / (L_out - 1 - freeze)
//! ```
//!
//! so both boundary rows (`p = freeze` and `p = L_out - 1`) are exact copies
//! of source rows `freeze` and `L_in - 1`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::{real, Scalar};

#[derive(Debug, Error)]
pub enum PosEmbedError {
    #[error("cannot stretch table of {rows} rows with freeze {freeze}, factor {factor}")]
    ShapeMismatch {
        rows: usize,
        freeze: usize,
        factor: usize,
    },
}

/// Per-position embedding matrix with a gradient-frozen prefix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PositionalTable<F> {
    pub embeddings: Array2<F>,
    pub frozen_prefix: usize,
    pub stretch_factor: usize,
}

impl<F: Scalar> PositionalTable<F> {
    pub fn len(&self) -> usize {
        self.embeddings.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.embeddings.ncols()
    }
}

/// Stretch a positional table, freezing the first `freeze` rows and
/// linearly interpolating the remainder by `factor`.
pub fn stretch<F: Scalar>(
    source: &Array2<F>,
    freeze: usize,
    factor: usize,
) -> Result<PositionalTable<F>, PosEmbedError> {
    let l_in = source.nrows();
    if l_in < 2 || freeze >= l_in || factor < 1 {
        return Err(PosEmbedError::ShapeMismatch {
            rows: l_in,
            freeze,
            factor,
        });
    }
    let l_out = freeze + factor * (l_in - freeze);
    let dim = source.ncols();
    let mut out = Array2::<F>::zeros((l_out, dim));
    for p in 0..freeze {
        out.row_mut(p).assign(&source.row(p));
    }
    let span_in = (l_in - 1 - freeze) as f64;
    let span_out = (l_out - 1 - freeze) as f64;
    for p in freeze..l_out {
        let s = freeze as f64 + (p - freeze) as f64 * span_in / span_out;
        let i0 = s.floor() as usize;
        let t = s - i0 as f64;
        if t == 0.0 {
            out.row_mut(p).assign(&source.row(i0));
        } else {
            let w0: F = real(1.0 - t);
            let w1: F = real(t);
            let row = source.row(i0).mapv(|x| x * w0) + source.row(i0 + 1).mapv(|x| x * w1);
            out.row_mut(p).assign(&row);
        }
    }
    Ok(PositionalTable {
        embeddings: out,
        frozen_prefix: freeze,
        stretch_factor: factor,
    })
}

/// Stretch every row (ablation arm): no frozen prefix.
pub fn stretch_all<F: Scalar>(
    source: &Array2<F>,
    factor: usize,
) -> Result<PositionalTable<F>, PosEmbedError> {
    stretch(source, 0, factor)
}
