//! Contrastive losses, the batch-wise PCA reconstruction operator, and the
//! weighted total loss with analytic gradients.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::{real, Scalar};

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("contrastive loss needs at least one pair")]
    DegenerateBatch,
    #[error("PCA rank {rank} exceeds min(N, D) = {max}")]
    RankTooLarge { rank: usize, max: usize },
}

/// How the short and long caption losses are combined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossWeighting {
    /// `L = lambda_short * L_s + (1 - lambda_short) * L_l`.
    Weighted { lambda_short: f64 },
    /// `L = L_s + L_l` (summary-baseline recipe).
    Unweighted,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossConfig {
    pub weighting: LossWeighting,
    /// Initial value of the learnable inverse temperature `1/tau`.
    pub init_inv_temp: f64,
    /// Clamp on `1/tau`; gradients stop flowing once the clamp is active.
    pub max_inv_temp: f64,
    pub pca_rank: usize,
    /// Whether the PCA operator re-normalizes rows after reconstruction.
    pub pca_renormalize: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            weighting: LossWeighting::Weighted { lambda_short: 0.1 },
            init_inv_temp: 14.3,
            max_inv_temp: 100.0,
            pca_rank: 8,
            pca_renormalize: true,
        }
    }
}

/// Map the learnable log-parameter to `1/tau`, applying the clamp.
/// Returns the value and whether the clamp is active.
pub fn inv_temp_from_log<F: Scalar>(log_inv_temp: F, max_inv_temp: F) -> (F, bool) {
    let raw = log_inv_temp.exp();
    if raw > max_inv_temp {
        (max_inv_temp, true)
    } else {
        (raw, false)
    }
}

/// Row-wise cross-entropy of the scaled similarity matrix against the
/// diagonal pairing: `-(1/N) sum_i log softmax(S_i)[i]` with
/// `S = (a b^T) / tau`.
pub fn contrastive_loss<F: Scalar>(
    a: &Array2<F>,
    b: &Array2<F>,
    inv_temp: F,
) -> Result<F, ObjectiveError> {
    Ok(contrastive_loss_with_grad(a, b, inv_temp)?.loss)
}

pub struct ContrastiveGrad<F> {
    pub loss: F,
    pub grad_a: Array2<F>,
    pub grad_b: Array2<F>,
    pub grad_inv_temp: F,
}

pub fn contrastive_loss_with_grad<F: Scalar>(
    a: &Array2<F>,
    b: &Array2<F>,
    inv_temp: F,
) -> Result<ContrastiveGrad<F>, ObjectiveError> {
    let n = a.nrows();
    if n == 0 || b.nrows() != n {
        return Err(ObjectiveError::DegenerateBatch);
    }
    let sims = a.dot(&b.t());
    let logits = sims.mapv(|x| x * inv_temp);
    let inv_n: F = real(1.0 / n as f64);

    let mut loss = F::zero();
    // d loss / d logits = (softmax - I) / N
    let mut dlogits = Array2::<F>::zeros((n, n));
    for i in 0..n {
        let row = logits.row(i);
        let m = row.iter().cloned().fold(F::neg_infinity(), F::max);
        let exps: Array1<F> = row.mapv(|x| (x - m).exp());
        let z: F = exps.sum();
        loss = loss + (m + z.ln() - logits[[i, i]]);
        for j in 0..n {
            let p = exps[j] / z;
            let target = if i == j { F::one() } else { F::zero() };
            dlogits[[i, j]] = (p - target) * inv_n;
        }
    }
    loss = loss * inv_n;

    let grad_inv_temp = (&dlogits * &sims).sum();
    let grad_a = dlogits.dot(b).mapv(|x| x * inv_temp);
    let grad_b = dlogits.t().dot(a).mapv(|x| x * inv_temp);
    Ok(ContrastiveGrad {
        loss,
        grad_a,
        grad_b,
        grad_inv_temp,
    })
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues (descending) and the matching eigenvector columns.
pub fn symmetric_eigen<F: Scalar>(sym: &Array2<F>) -> (Array1<F>, Array2<F>) {
    let d = sym.nrows();
    assert_eq!(d, sym.ncols());
    let mut a = sym.clone();
    let mut v = Array2::<F>::eye(d);
    let tol: F = real(1e-30);
    for _sweep in 0..100 {
        let mut off = F::zero();
        for p in 0..d {
            for q in (p + 1)..d {
                off = off + a[[p, q]] * a[[p, q]];
            }
        }
        let scale = a.iter().map(|&x| x * x).sum::<F>();
        if off <= tol * scale.max(F::min_positive_value()) {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[[p, q]];
                if apq == F::zero() {
                    continue;
                }
                let tau = (a[[q, q]] - a[[p, p]]) / (real::<F>(2.0) * apq);
                let t = if tau >= F::zero() {
                    F::one() / (tau + (F::one() + tau * tau).sqrt())
                } else {
                    -F::one() / (-tau + (F::one() + tau * tau).sqrt())
                };
                let c = F::one() / (F::one() + t * t).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..d {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        a[[j, j]]
            .partial_cmp(&a[[i, i]])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let vals = Array1::from_iter(order.iter().map(|&i| a[[i, i]]));
    let mut vecs = Array2::<F>::zeros((d, d));
    for (col, &i) in order.iter().enumerate() {
        vecs.column_mut(col).assign(&v.column(i));
    }
    (vals, vecs)
}

/// Intermediate state of one PCA reconstruction, kept for the backward pass.
pub struct PcaForward<F> {
    pub output: Array2<F>,
    /// Reconstruction before row re-normalization.
    pub pre_norm: Array2<F>,
    /// Top-`r` principal directions (columns).
    pub basis: Array2<F>,
    pub mean: Array1<F>,
    /// All covariance eigenvalues, descending.
    pub eigenvalues: Array1<F>,
    pub renormalized: bool,
}

/// Batch-wise low-rank reconstruction: center, project onto the top-`r`
/// principal directions of the batch covariance (`X^T X / N`), reconstruct,
/// add the mean back, and optionally re-normalize rows.
pub fn pca_reconstruct<F: Scalar>(
    v: &Array2<F>,
    rank: usize,
    renormalize: bool,
) -> Result<Array2<F>, ObjectiveError> {
    Ok(pca_forward(v, rank, renormalize)?.output)
}

pub fn pca_forward<F: Scalar>(
    v: &Array2<F>,
    rank: usize,
    renormalize: bool,
) -> Result<PcaForward<F>, ObjectiveError> {
    let (n, d) = (v.nrows(), v.ncols());
    if n < 2 {
        return Err(ObjectiveError::DegenerateBatch);
    }
    let max = n.min(d);
    if rank < 1 || rank > max {
        return Err(ObjectiveError::RankTooLarge { rank, max });
    }
    let mean = v.mean_axis(Axis(0)).expect("non-empty batch");
    let centered = v - &mean;
    let cov = centered.t().dot(&centered).mapv(|x| x / real(n as f64));
    let (vals, vecs) = symmetric_eigen(&cov);
    let basis = vecs.slice(ndarray::s![.., ..rank]).to_owned();
    let pre_norm = centered.dot(&basis).dot(&basis.t()) + &mean;
    let output = if renormalize {
        normalize_rows(&pre_norm)
    } else {
        pre_norm.clone()
    };
    Ok(PcaForward {
        output,
        pre_norm,
        basis,
        mean,
        eigenvalues: vals,
        renormalized: renormalize,
    })
}

/// Backward pass of [`pca_forward`] treating the principal directions and
/// the batch mean as constants: gradients flow through the projection (and
/// the row re-normalization when enabled).
pub fn pca_backward<F: Scalar>(fwd: &PcaForward<F>, grad_output: &Array2<F>) -> Array2<F> {
    let grad_pre = if fwd.renormalized {
        normalize_rows_backward(&fwd.pre_norm, &fwd.output, grad_output)
    } else {
        grad_output.clone()
    };
    grad_pre.dot(&fwd.basis).dot(&fwd.basis.t())
}

/// Row-wise L2 normalization.
pub fn normalize_rows<F: Scalar>(m: &Array2<F>) -> Array2<F> {
    let mut out = m.clone();
    for mut row in out.rows_mut() {
        let norm = row.iter().map(|&x| x * x).sum::<F>().sqrt();
        if norm > F::zero() {
            row.mapv_inplace(|x| x / norm);
        }
    }
    out
}

/// Backward of row-wise normalization `y = z / |z|`:
/// `dz = (g - y * (g . y)) / |z|` per row.
pub fn normalize_rows_backward<F: Scalar>(
    pre: &Array2<F>,
    out: &Array2<F>,
    grad_out: &Array2<F>,
) -> Array2<F> {
    let mut grad = Array2::<F>::zeros(pre.raw_dim());
    for i in 0..pre.nrows() {
        let z = pre.row(i);
        let y = out.row(i);
        let g = grad_out.row(i);
        let norm = z.iter().map(|&x| x * x).sum::<F>().sqrt();
        if norm == F::zero() {
            continue;
        }
        let dot = y
            .iter()
            .zip(g.iter())
            .map(|(&yi, &gi)| yi * gi)
            .sum::<F>();
        for j in 0..pre.ncols() {
            grad[[i, j]] = (g[j] - y[j] * dot) / norm;
        }
    }
    grad
}

/// Per-component values of one total-loss evaluation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossComponents<F> {
    pub total: F,
    pub loss_short: F,
    pub loss_long: F,
}

pub struct TotalLossGrad<F> {
    pub components: LossComponents<F>,
    pub grad_u_short: Array2<F>,
    pub grad_u_long: Array2<F>,
    pub grad_v: Array2<F>,
    pub grad_inv_temp: F,
}

/// Weighted two-caption objective:
/// `L_s = L_cont(u_s, f(v)) + L_cont(f(v), u_s)`,
/// `L_l = L_cont(u_l, v) + L_cont(v, u_l)`,
/// combined per [`LossWeighting`].
pub fn total_loss<F: Scalar>(
    u_short: &Array2<F>,
    u_long: &Array2<F>,
    v: &Array2<F>,
    inv_temp: F,
    cfg: &LossConfig,
) -> Result<LossComponents<F>, ObjectiveError> {
    Ok(total_loss_with_grad(u_short, u_long, v, inv_temp, cfg)?.components)
}

pub fn total_loss_with_grad<F: Scalar>(
    u_short: &Array2<F>,
    u_long: &Array2<F>,
    v: &Array2<F>,
    inv_temp: F,
    cfg: &LossConfig,
) -> Result<TotalLossGrad<F>, ObjectiveError> {
    let pca = pca_forward(v, cfg.pca_rank, cfg.pca_renormalize)?;
    let fv = &pca.output;

    let s1 = contrastive_loss_with_grad(u_short, fv, inv_temp)?;
    let s2 = contrastive_loss_with_grad(fv, u_short, inv_temp)?;
    let l1 = contrastive_loss_with_grad(u_long, v, inv_temp)?;
    let l2 = contrastive_loss_with_grad(v, u_long, inv_temp)?;

    let loss_short = s1.loss + s2.loss;
    let loss_long = l1.loss + l2.loss;
    let (w_s, w_l) = match cfg.weighting {
        LossWeighting::Weighted { lambda_short } => {
            (real::<F>(lambda_short), real::<F>(1.0 - lambda_short))
        }
        LossWeighting::Unweighted => (F::one(), F::one()),
    };
    let total = w_s * loss_short + w_l * loss_long;

    let grad_u_short = (s1.grad_a + s2.grad_b).mapv(|x| x * w_s);
    let grad_u_long = (l1.grad_a + l2.grad_b).mapv(|x| x * w_l);
    let grad_fv = (s1.grad_b + s2.grad_a).mapv(|x| x * w_s);
    let grad_v_direct = (l1.grad_b + l2.grad_a).mapv(|x| x * w_l);
    let grad_v = grad_v_direct + pca_backward(&pca, &grad_fv);
    let grad_inv_temp =
        w_s * (s1.grad_inv_temp + s2.grad_inv_temp) + w_l * (l1.grad_inv_temp + l2.grad_inv_temp);

    Ok(TotalLossGrad {
        components: LossComponents {
            total,
            loss_short,
            loss_long,
        },
        grad_u_short,
        grad_u_long,
        grad_v,
        grad_inv_temp,
    })
}
