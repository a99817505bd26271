//! Cross-modal RGB + thermal depth estimation.
//!
//! The crate covers the whole pipeline at desk scale: a small reverse-mode
//! autodiff engine ([`tensor`]), pinhole geometry and thermal-to-RGB depth
//! warping ([`camera`]), training objectives ([`losses`]), evaluation
//! metrics ([`metrics`]), the coarse/confidence/fusion networks ([`nn`]), a
//! procedural scene generator ([`scenes`]), file formats ([`io`]) and the
//! training/evaluation/inference driver ([`pipeline`]).

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod error;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod scenes;
pub mod tensor;

pub use error::{Error, Result};
