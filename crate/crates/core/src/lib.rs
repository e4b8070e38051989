//! Core of a multi-scale-stage coarse-to-fine deblurring network.
//!
//! The crate is `no_std` (it needs `alloc`). It carries the dense tensor
//! type, a reverse-mode differentiation engine, the layer and UNet stage
//! definitions, the full multi-scale network with its variant presets, the
//! content and frequency losses, the training loop and the symbolic
//! parameter/MAC auditor. File formats and the command line live in the
//! companion `mssnet-cli` crate.
//!
//! Enable the `parallel` feature to run convolution kernels on the rayon
//! pool; results are bit-identical either way.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod audit;
pub mod autodiff;
pub mod error;
pub mod kernels;
pub mod layers;
pub mod loss;
pub mod metrics;
pub mod model;
mod real;
mod tensor;
pub mod train;
pub mod unet;
pub mod verify;

pub use error::{Error, Result};
pub use real::Real;
pub use tensor::{Shape, Tensor};
