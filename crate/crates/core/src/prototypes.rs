//! The retrieval head: mask generation, prototype aggregation, projection to
//! the joint space, and the contiguous-part ablation.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    l2_normalize_rows, l2_normalize_rows_backward, linear_backward, linear_forward, relu, relu_backward, Matrix,
    ParamTensor, RngStream, NORM_GUARD,
};

/// How the `K` non-class prototypes are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Learned linear+relu masks over tokens.
    Mask,
    /// Means of `K` contiguous token groups.
    Part,
    /// Class token only (`K = 0`).
    Baseline,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Mask => "mask",
            Variant::Part => "part",
            Variant::Baseline => "baseline",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        match s {
            "mask" => Some(Variant::Mask),
            "part" => Some(Variant::Part),
            "baseline" => Some(Variant::Baseline),
            _ => None,
        }
    }
}

/// Trainable weights of the head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParameters {
    /// `D x K`.
    pub mask_w: ParamTensor,
    /// `1 x K`.
    pub mask_b: ParamTensor,
    /// `D x D_e`, no bias.
    pub vproj_w: ParamTensor,
    /// `D_t x D_e`, no bias.
    pub tproj_w: ParamTensor,
}

pub const MASK_BIAS_INIT: f64 = 0.1;

fn xavier(rng: &mut RngStream, fan_in: usize, fan_out: usize) -> Matrix {
    let limit = libm::sqrt(6.0 / (fan_in + fan_out).max(1) as f64);
    let data = (0..fan_in * fan_out)
        .map(|_| rng.uniform_range(-limit, limit))
        .collect();
    Matrix::from_vec(fan_in, fan_out, data).expect("sized above")
}

impl HeadParameters {
    /// Glorot-uniform weights; mask bias starts at `+0.1` so masks begin active.
    pub fn init(token_dim: usize, text_dim: usize, embed_dim: usize, k: usize, rng: &mut RngStream) -> Self {
        HeadParameters {
            mask_w: ParamTensor::new(xavier(rng, token_dim, k)),
            mask_b: ParamTensor::new(Matrix::filled(1, k, MASK_BIAS_INIT)),
            vproj_w: ParamTensor::new(xavier(rng, token_dim, embed_dim)),
            tproj_w: ParamTensor::new(xavier(rng, text_dim, embed_dim)),
        }
    }

    pub fn k(&self) -> usize {
        self.mask_w.value.cols()
    }

    pub fn token_dim(&self) -> usize {
        self.vproj_w.value.rows()
    }

    pub fn text_dim(&self) -> usize {
        self.tproj_w.value.rows()
    }

    pub fn embed_dim(&self) -> usize {
        self.vproj_w.value.cols()
    }

    /// Checks internal shape consistency and finiteness.
    pub fn validate(&self) -> Result<()> {
        let (d, k, e) = (self.token_dim(), self.k(), self.embed_dim());
        if self.mask_w.value.rows() != d {
            return Err(Error::shape("HeadParameters mask_w", self.mask_w.value.shape(), (d, k)));
        }
        if self.mask_b.value.shape() != (1, k) {
            return Err(Error::shape("HeadParameters mask_b", self.mask_b.value.shape(), (1, k)));
        }
        if self.tproj_w.value.cols() != e {
            return Err(Error::shape(
                "HeadParameters tproj_w",
                self.tproj_w.value.shape(),
                (self.text_dim(), e),
            ));
        }
        for t in self.tensors() {
            if t.value.shape() != t.grad.shape() {
                return Err(Error::shape("HeadParameters grad", t.value.shape(), t.grad.shape()));
            }
            if !t.value.is_finite() {
                return Err(Error::NonFinite("head parameters".into()));
            }
        }
        Ok(())
    }

    /// Fixed order: mask weight, mask bias, visual projection, text projection.
    pub fn tensors(&self) -> [&ParamTensor; 4] {
        [&self.mask_w, &self.mask_b, &self.vproj_w, &self.tproj_w]
    }

    pub fn tensors_mut(&mut self) -> [&mut ParamTensor; 4] {
        [&mut self.mask_w, &mut self.mask_b, &mut self.vproj_w, &mut self.tproj_w]
    }

    pub fn zero_grad(&mut self) {
        self.tensors_mut().into_iter().for_each(ParamTensor::zero_grad);
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.value.as_slice().len()).sum()
    }

    /// All values concatenated in [`tensors`](Self::tensors) order.
    pub fn flat_values(&self) -> Vec<f64> {
        self.tensors()
            .iter()
            .flat_map(|t| t.value.as_slice().iter().copied())
            .collect()
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        self.tensors()
            .iter()
            .flat_map(|t| t.grad.as_slice().iter().copied())
            .collect()
    }

    pub fn set_flat_values(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_values() {
            return Err(Error::shape(
                "set_flat_values",
                (self.num_values(), 1),
                (values.len(), 1),
            ));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            let dst = t.value.as_mut_slice();
            dst.copy_from_slice(&values[offset..offset + dst.len()]);
            offset += dst.len();
        }
        Ok(())
    }
}

/// `relu(z·W + b)`, a `B x K` matrix of non-negative token weights.
pub fn compute_masks(z: &Matrix, params: &HeadParameters) -> Result<Matrix> {
    let pre = linear_forward(z, &params.mask_w.value, Some(params.mask_b.value.as_slice()))?;
    Ok(relu(&pre))
}

/// Backward of [`compute_masks`]: accumulates mask parameter gradients and
/// returns `∂z`. `masks` is the forward output (positive exactly where the
/// pre-activation was).
pub fn compute_masks_backward(
    z: &Matrix,
    params: &mut HeadParameters,
    masks: &Matrix,
    d_masks: &Matrix,
) -> Result<Matrix> {
    let d_pre = relu_backward(masks, d_masks)?;
    let g = linear_backward(z, &params.mask_w.value, &d_pre)?;
    params.mask_w.accumulate(&g.weight)?;
    params.mask_b.accumulate(&g.bias)?;
    Ok(g.input)
}

/// `p_k = Σ_j m[j][k]·z_j` for every learned prototype (the sum includes the
/// class token), followed by the class token itself as the last row.
pub fn aggregate_prototypes(z: &Matrix, masks: &Matrix) -> Result<Matrix> {
    if z.rows() != masks.rows() || z.rows() == 0 {
        return Err(Error::shape("aggregate_prototypes", z.shape(), masks.shape()));
    }
    let k = masks.cols();
    let learned = masks.t_matmul(z)?;
    let mut protos = Matrix::zeros(k + 1, z.cols());
    for i in 0..k {
        protos.row_mut(i).copy_from_slice(learned.row(i));
    }
    protos.row_mut(k).copy_from_slice(z.row(0));
    Ok(protos)
}

/// Backward of [`aggregate_prototypes`]: `(∂z, ∂m)`.
pub fn aggregate_prototypes_backward(z: &Matrix, masks: &Matrix, d_protos: &Matrix) -> Result<(Matrix, Matrix)> {
    let k = masks.cols();
    if d_protos.shape() != (k + 1, z.cols()) {
        return Err(Error::shape(
            "aggregate_prototypes_backward",
            (k + 1, z.cols()),
            d_protos.shape(),
        ));
    }
    let d_learned = Matrix::from_vec(k, z.cols(), d_protos.as_slice()[..k * z.cols()].to_vec())?;
    let d_masks = z.matmul_t(&d_learned)?;
    let mut dz = masks.matmul(&d_learned)?;
    for (d, g) in dz.row_mut(0).iter_mut().zip(d_protos.row(k)) {
        *d += g;
    }
    Ok((dz, d_masks))
}

/// Contiguous-part prototypes: the non-class tokens are split in order into
/// `k` groups (sizes differ by at most one, earlier groups larger) and each
/// group's mean becomes a prototype; the class token is appended last.
pub fn variant_part(z: &Matrix, k: usize) -> Result<Matrix> {
    let b = z.rows();
    if b == 0 || k > b - 1 {
        return Err(Error::Argument(format!(
            "part variant needs K <= tokens - 1, got K = {k} with {b} tokens"
        )));
    }
    let n = b - 1;
    let mut protos = Matrix::zeros(k + 1, z.cols());
    let mut start = 1;
    for part in 0..k {
        let size = n / k + usize::from(part < n % k);
        let row = protos.row_mut(part);
        for j in start..start + size {
            for (p, v) in row.iter_mut().zip(z.row(j)) {
                *p += v;
            }
        }
        row.iter_mut().for_each(|p| *p /= size as f64);
        start += size;
    }
    protos.row_mut(k).copy_from_slice(z.row(0));
    Ok(protos)
}

/// Projected (pre-normalization) and normalized prototype embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedded {
    pub projected: Matrix,
    pub embedded: Matrix,
}

/// `normalize(p · W_v)`; one unit row per prototype (zero rows stay zero).
pub fn embed_prototypes(protos: &Matrix, params: &HeadParameters) -> Result<Embedded> {
    let projected = protos.matmul(&params.vproj_w.value)?;
    let embedded = l2_normalize_rows(&projected, NORM_GUARD);
    Ok(Embedded { projected, embedded })
}

/// Backward of [`embed_prototypes`]: accumulates the projection gradient and
/// returns `∂p`.
pub fn embed_prototypes_backward(
    protos: &Matrix,
    params: &mut HeadParameters,
    forward: &Embedded,
    d_embedded: &Matrix,
) -> Result<Matrix> {
    let d_projected = l2_normalize_rows_backward(&forward.projected, NORM_GUARD, d_embedded)?;
    params.vproj_w.accumulate(&protos.t_matmul(&d_projected)?)?;
    d_projected.matmul_t(&params.vproj_w.value)
}

/// `normalize(t · W_t)` for a single text feature vector.
pub fn embed_text(features: &[f64], params: &HeadParameters) -> Result<Vec<f64>> {
    Ok(embed_texts(&Matrix::row_vector(features), params)?.embedded.into_vec())
}

/// Row-wise [`embed_text`] over an `N x D_t` matrix.
pub fn embed_texts(features: &Matrix, params: &HeadParameters) -> Result<Embedded> {
    let projected = features.matmul(&params.tproj_w.value)?;
    let embedded = l2_normalize_rows(&projected, NORM_GUARD);
    Ok(Embedded { projected, embedded })
}

/// Backward of [`embed_texts`]; accumulates the text projection gradient.
pub fn embed_texts_backward(
    features: &Matrix,
    params: &mut HeadParameters,
    forward: &Embedded,
    d_embedded: &Matrix,
) -> Result<()> {
    let d_projected = l2_normalize_rows_backward(&forward.projected, NORM_GUARD, d_embedded)?;
    params.tproj_w.accumulate(&features.t_matmul(&d_projected)?)
}

/// Cached forward pass of one video through the head.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoForward {
    /// `B x K` mask matrix (`None` for the part variant).
    pub masks: Option<Matrix>,
    /// `(K+1) x D`.
    pub prototypes: Matrix,
    pub embedding: Embedded,
}

impl VideoForward {
    /// `(K+1) x D_e` unit-row prototype embeddings.
    pub fn embedded(&self) -> &Matrix {
        &self.embedding.embedded
    }
}

/// Full forward pass of one video.
pub fn encode_video(z: &Matrix, params: &HeadParameters, variant: Variant) -> Result<VideoForward> {
    if z.cols() != params.token_dim() {
        return Err(Error::shape("encode_video", z.shape(), params.vproj_w.value.shape()));
    }
    let (masks, prototypes) = match variant {
        Variant::Mask | Variant::Baseline => {
            let m = compute_masks(z, params)?;
            let p = aggregate_prototypes(z, &m)?;
            (Some(m), p)
        }
        Variant::Part => (None, variant_part(z, params.k())?),
    };
    let embedding = embed_prototypes(&prototypes, params)?;
    Ok(VideoForward {
        masks,
        prototypes,
        embedding,
    })
}

/// Backward of [`encode_video`]. `d_masks_extra` is an additional upstream
/// gradient on the mask matrix (the variance loss). Accumulates parameter
/// gradients and returns `∂z`.
pub fn encode_video_backward(
    z: &Matrix,
    params: &mut HeadParameters,
    forward: &VideoForward,
    d_embedded: &Matrix,
    d_masks_extra: Option<&Matrix>,
) -> Result<Matrix> {
    let d_protos = embed_prototypes_backward(&forward.prototypes, params, &forward.embedding, d_embedded)?;
    match &forward.masks {
        Some(masks) => {
            let (mut dz, mut d_masks) = aggregate_prototypes_backward(z, masks, &d_protos)?;
            if let Some(extra) = d_masks_extra {
                d_masks.add_assign(extra)?;
            }
            dz.add_assign(&compute_masks_backward(z, params, masks, &d_masks)?)?;
            Ok(dz)
        }
        None => {
            let k = params.k();
            let n = z.rows() - 1;
            let mut dz = Matrix::zeros(z.rows(), z.cols());
            let mut start = 1;
            for part in 0..k {
                let size = n / k + usize::from(part < n % k);
                for j in start..start + size {
                    for (d, g) in dz.row_mut(j).iter_mut().zip(d_protos.row(part)) {
                        *d += g / size as f64;
                    }
                }
                start += size;
            }
            for (d, g) in dz.row_mut(0).iter_mut().zip(d_protos.row(k)) {
                *d += g;
            }
            Ok(dz)
        }
    }
}
