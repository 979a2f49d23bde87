#![no_std]
//! Multi-prototype text-to-video retrieval head.
//!
//! A video is given as a matrix of final-layer token features (row 0 is the
//! class token). A linear+relu mask generator produces `K` non-negative
//! weightings over the tokens; each weighting aggregates the tokens into a
//! prototype, and the class token is appended as prototype `K+1`. Prototypes
//! and text vectors are projected into a shared space and normalized, and a
//! text scores a video by its best-matching prototype.
//!
//! Training uses a symmetric temperature-scaled contrastive loss plus a hinge
//! on the per-token standard deviation of mask values. Every operation has a
//! hand-written backward pass; [`numerics::finite_diff_check`] verifies them.
//!
//! This crate performs no IO. File formats and the command-line harness live
//! in the companion `tmvm` crate.

extern crate alloc;

pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod losses;
pub mod matching;
pub mod numerics;
pub mod prototypes;
pub mod trainer;

pub use error::{Error, Result};
pub use numerics::Matrix;
