//! Dense kernels with hand-written VJPs, optimizer, schedule, RNG and the
//! finite-difference checker.

mod adam;
mod gradcheck;
mod kernels;
mod matrix;
mod rng;
mod schedule;

pub use adam::{adam_step, AdamConfig, AdamState, ParamTensor};
pub use gradcheck::{finite_diff_check, numeric_gradient, GradCheckReport, DEFAULT_STEP};
pub use kernels::{
    l2_normalize, l2_normalize_rows, l2_normalize_rows_backward, linear_backward, linear_forward, relu, relu_backward,
    LinearGrads, NORM_GUARD,
};
pub use matrix::{cosine, dot, norm, Matrix};
pub use rng::{RngState, RngStream};
pub use schedule::LrSchedule;
