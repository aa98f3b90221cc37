//! Dual-stream diffusion transformer for covariate-aware time-series forecasting.
//!
//! The crate is `no_std` with `alloc`: tensors and differentiation, windowing
//! and synthetic data, the model and its ablation variants, flow-matching
//! training and sampling, and forecast metrics. File IO and the command line
//! live in the `dits` companion crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod data;
pub mod flow;
pub mod metrics;
pub mod model;
pub mod tensor;

pub use tensor::{Graph, ParamId, ParamStore, Tensor, TensorError, Var};
