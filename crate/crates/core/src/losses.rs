//! Mask variance hinge, symmetric contrastive loss and their combination.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Target standard deviation of pooled mask values per token.
    pub gamma: f64,
    /// Variance floor inside the square root.
    pub epsilon: f64,
    /// Weight of the variance term.
    pub alpha: f64,
    /// Softmax temperature.
    pub tau: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            gamma: 0.75,
            epsilon: 1e-4,
            alpha: 5.0,
            tau: 0.05,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.gamma > 0.0 && self.epsilon > 0.0 && self.alpha >= 0.0 && self.tau > 0.0;
        let finite = [self.gamma, self.epsilon, self.alpha, self.tau]
            .iter()
            .all(|v| v.is_finite());
        if !ok || !finite {
            return Err(Error::Argument(format!(
                "loss config needs gamma > 0, epsilon > 0, alpha >= 0, tau > 0; got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub contrastive: f64,
    pub variance: f64,
    pub total: f64,
}

/// Value and per-video mask gradients of the variance loss.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceLoss {
    pub value: f64,
    pub grads: Vec<Matrix>,
}

/// Hinge on the regularized standard deviation of mask values per token.
///
/// For token position `j` the `L·K` values `m[i][j][k]` (all videos `i`, all
/// prototypes `k`) are pooled; `D = sqrt(Var + ε)` with population variance,
/// and the loss is `mean_j max(0, γ − D_j)`. With `K = 0` the loss is zero.
pub fn variance_loss(masks: &[&Matrix], cfg: &LossConfig) -> Result<VarianceLoss> {
    let first = masks
        .first()
        .ok_or_else(|| Error::Argument("variance loss needs at least one mask matrix".into()))?;
    let (b, k) = first.shape();
    if let Some(m) = masks.iter().find(|m| m.shape() != (b, k)) {
        return Err(Error::shape("variance_loss", (b, k), m.shape()));
    }
    let mut grads: Vec<Matrix> = masks.iter().map(|_| Matrix::zeros(b, k)).collect();
    if k == 0 || b == 0 {
        return Ok(VarianceLoss { value: 0.0, grads });
    }
    let n = (masks.len() * k) as f64;
    let mut total = 0.0;
    for j in 0..b {
        let mean = masks.iter().map(|m| m.row(j).iter().sum::<f64>()).sum::<f64>() / n;
        let var = masks
            .iter()
            .map(|m| m.row(j).iter().map(|x| (x - mean) * (x - mean)).sum::<f64>())
            .sum::<f64>()
            / n;
        let std = libm::sqrt(var + cfg.epsilon);
        let hinge = cfg.gamma - std;
        if hinge > 0.0 {
            total += hinge;
            let scale = -1.0 / (n * b as f64 * std);
            for (g, m) in grads.iter_mut().zip(masks) {
                for (gv, x) in g.row_mut(j).iter_mut().zip(m.row(j)) {
                    *gv = scale * (x - mean);
                }
            }
        }
    }
    Ok(VarianceLoss {
        value: total / b as f64,
        grads,
    })
}

/// Value and similarity gradient of the contrastive loss.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveLoss {
    pub value: f64,
    pub grad: Matrix,
}

/// Symmetric InfoNCE over an `L x L` similarity matrix with positives on the
/// diagonal: the mean over `i` of `−log softmax(row i / τ)_i − log softmax(col i / τ)_i`.
pub fn contrastive_loss(scores: &Matrix, tau: f64) -> Result<ContrastiveLoss> {
    let l = scores.rows();
    if l != scores.cols() || l == 0 {
        return Err(Error::shape("contrastive_loss", scores.shape(), (l, l)));
    }
    let logits = scores.map(|s| s / tau);
    let mut value = 0.0;
    let mut grad = Matrix::zeros(l, l);
    let inv_l = 1.0 / l as f64;
    let mut buf = Vec::with_capacity(l);
    for dir in 0..2 {
        for i in 0..l {
            buf.clear();
            if dir == 0 {
                buf.extend_from_slice(logits.row(i));
            } else {
                buf.extend((0..l).map(|r| logits[(r, i)]));
            }
            let max = buf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = buf.iter().map(|x| libm::exp(x - max)).sum();
            let log_z = max + libm::log(sum);
            value += (log_z - buf[i]) * inv_l;
            for (j, &x) in buf.iter().enumerate() {
                let p = libm::exp(x - log_z);
                let g = (p - if j == i { 1.0 } else { 0.0 }) * inv_l / tau;
                if dir == 0 {
                    grad[(i, j)] += g;
                } else {
                    grad[(j, i)] += g;
                }
            }
        }
    }
    Ok(ContrastiveLoss { value, grad })
}

/// `contrastive + α·variance`.
pub fn total_loss(contrastive: f64, variance: f64, cfg: &LossConfig) -> Result<LossBreakdown> {
    for (name, v) in [("contrastive", contrastive), ("variance", variance)] {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("{name} loss ({v})")));
        }
    }
    Ok(LossBreakdown {
        contrastive,
        variance,
        total: contrastive + cfg.alpha * variance,
    })
}
