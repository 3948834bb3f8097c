//! Graph neural operator with a learnable non-uniform Fourier encoder.
//!
//! The pipeline maps scattered samples of an input function to the PDE
//! solution at the same points:
//!
//! 1. [`geometry`]: sample grid nodes, build a radius graph with edge
//!    attributes `concat(x_i, x_j, f(x_i), f(x_j))`.
//! 2. [`spectral`]: project onto learnable complex exponentials, filter per
//!    mode, synthesise node features.
//! 3. [`msgpass`]: edge messages aggregated by mean, max, min and std.
//! 4. [`attention`]: global linear attention with normalised keys/values.
//! 5. [`gatlayer`]: neighbourhood attention with edge features, then the
//!    prediction head.
//!
//! Everything runs on the [`autodiff`] tape and needs only `alloc`.

#![no_std]

extern crate alloc;

pub mod attention;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod gatlayer;
pub mod geometry;
mod math;
pub mod model;
pub mod msgpass;
pub mod nn;
pub mod rng;
pub mod spectral;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{ParamStore, Tensor};
