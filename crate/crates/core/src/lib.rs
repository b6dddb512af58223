//! BM3D with a learnable collaborative filter: block matching and aggregation
//! are kept as fixed, differentiable operators around a small network,
//! together with the classic two-stage BM3D baseline, a low-dose CT noise
//! simulator, and everything needed to train and score them.
//!
//! The denoising pipeline is `plan_matches -> gather_stacks -> network ->
//! aggregate`; see [`pipeline::denoise_pipeline`].

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` deliberately rejects NaN

pub mod aggregation;
pub mod classic;
pub mod error;
pub mod image;
pub mod ldct;
pub mod matching;
pub mod metrics;
pub mod phantom;
pub mod pipeline;
pub mod rng;
pub mod tensor;
pub mod train;
pub mod unet;

pub use error::{Error, Result};
