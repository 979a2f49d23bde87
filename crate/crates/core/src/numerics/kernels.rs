//! Forward kernels and their vector-Jacobian products.

use alloc::vec::Vec;

use super::matrix::{dot, norm, Matrix};
use crate::error::{Error, Result};

/// Default denominator guard for row normalization.
pub const NORM_GUARD: f64 = 1e-12;

/// Gradients of [`linear_forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrads {
    pub input: Matrix,
    pub weight: Matrix,
    pub bias: Matrix,
}

/// `y = x·W + b`, with `b` broadcast over rows. `bias` may be `None`.
pub fn linear_forward(x: &Matrix, weight: &Matrix, bias: Option<&[f64]>) -> Result<Matrix> {
    let mut y = x.matmul(weight)?;
    if let Some(b) = bias {
        if b.len() != weight.cols() {
            return Err(Error::shape("linear_forward bias", weight.shape(), (1, b.len())));
        }
        for i in 0..y.rows() {
            for (v, bj) in y.row_mut(i).iter_mut().zip(b) {
                *v += bj;
            }
        }
    }
    Ok(y)
}

/// VJP of [`linear_forward`]: `(∂x, ∂W, ∂b)` for upstream `dy`.
pub fn linear_backward(x: &Matrix, weight: &Matrix, dy: &Matrix) -> Result<LinearGrads> {
    if dy.shape() != (x.rows(), weight.cols()) {
        return Err(Error::shape("linear_backward", (x.rows(), weight.cols()), dy.shape()));
    }
    Ok(LinearGrads {
        input: dy.matmul_t(weight)?,
        weight: x.t_matmul(dy)?,
        bias: dy.column_sums(),
    })
}

pub fn relu(x: &Matrix) -> Matrix {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Passes `dy` where `x > 0`; the subgradient at exactly zero is zero.
pub fn relu_backward(x: &Matrix, dy: &Matrix) -> Result<Matrix> {
    if x.shape() != dy.shape() {
        return Err(Error::shape("relu_backward", x.shape(), dy.shape()));
    }
    let data = x
        .as_slice()
        .iter()
        .zip(dy.as_slice())
        .map(|(&xv, &g)| if xv > 0.0 { g } else { 0.0 })
        .collect();
    Matrix::from_vec(x.rows(), x.cols(), data)
}

/// Divides each row by `‖row‖ + guard`.
pub fn l2_normalize_rows(m: &Matrix, guard: f64) -> Matrix {
    let mut out = m.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let denom = norm(row) + guard;
        row.iter_mut().for_each(|v| *v /= denom);
    }
    out
}

/// VJP of [`l2_normalize_rows`].
///
/// For `y = x / (n + g)` with `n = ‖x‖`:
/// `∂x = dy / (n + g) − x (x·dy) / (n (n + g)²)`. At `x = 0` only the first
/// term survives.
pub fn l2_normalize_rows_backward(m: &Matrix, guard: f64, dy: &Matrix) -> Result<Matrix> {
    if m.shape() != dy.shape() {
        return Err(Error::shape("l2_normalize_rows_backward", m.shape(), dy.shape()));
    }
    let mut dx = Matrix::zeros(m.rows(), m.cols());
    for i in 0..m.rows() {
        let x = m.row(i);
        let g = dy.row(i);
        let n = norm(x);
        let denom = n + guard;
        let radial = if n > 0.0 { dot(x, g) / (n * denom * denom) } else { 0.0 };
        for ((d, &xv), &gv) in dx.row_mut(i).iter_mut().zip(x).zip(g) {
            *d = gv / denom - xv * radial;
        }
    }
    Ok(dx)
}

/// Normalizes a single vector with the same guard convention.
pub fn l2_normalize(v: &[f64], guard: f64) -> Vec<f64> {
    let denom = norm(v) + guard;
    v.iter().map(|x| x / denom).collect()
}
