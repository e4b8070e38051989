//! Reverse-mode differentiation.
//!
//! Network code is written once against the [`Backend`] trait and runs on
//! either of two executors:
//!
//! * [`Graph`] records every operation so that [`Graph::backward`] can
//!   propagate gradients to the [`Variable`]s of a [`ParamStore`];
//! * [`Eager`] evaluates immediately and keeps nothing alive beyond the
//!   values the caller still holds, for inference and finite differences.

mod eager;
mod gradcheck;
mod graph;
mod params;

pub use eager::{Eager, EagerValue};
pub use gradcheck::{
    check_objective, finite_diff_at, finite_diff_grad, GradCheckOptions, GradCheckReport, Objective, VariableCheck,
};
pub use graph::{Gradients, Graph, NodeId};
pub use params::{ParamId, ParamStore, Variable};

use crate::error::Result;
use crate::kernels::Resize;
use crate::real::Real;
use crate::tensor::{Shape, Tensor};

/// Tensor operations needed by the network, losses and tests.
///
/// Every method is a pure function of its operands.
pub trait Backend<T: Real> {
    type Value: Clone;

    fn params(&self) -> &ParamStore<T>;

    /// The current value of a [`Variable`].
    fn param(&mut self, id: ParamId) -> Self::Value;

    /// A constant operand (no gradient).
    fn constant(&mut self, t: Tensor<T>) -> Self::Value;

    fn tensor<'a>(&'a self, v: &'a Self::Value) -> &'a Tensor<T>;

    fn shape(&self, v: &Self::Value) -> Shape {
        self.tensor(v).shape()
    }

    fn conv2d(&mut self, x: &Self::Value, w: &Self::Value, pad: usize) -> Result<Self::Value>;
    fn prelu(&mut self, x: &Self::Value, slopes: &Self::Value) -> Result<Self::Value>;
    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn sub(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn mul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn scale(&mut self, a: &Self::Value, s: T) -> Self::Value;
    fn concat(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn resize(&mut self, a: &Self::Value, ratio: Resize) -> Result<Self::Value>;
    fn pixel_shuffle(&mut self, a: &Self::Value, r: usize) -> Result<Self::Value>;
    fn pixel_unshuffle(&mut self, a: &Self::Value, r: usize) -> Result<Self::Value>;
    /// Unnormalized 2-D DFT, real parts then imaginary parts along channels.
    fn dft2(&mut self, a: &Self::Value) -> Self::Value;
    /// `Σ|a|` as a scalar; the subgradient at zero is zero.
    fn abs_sum(&mut self, a: &Self::Value) -> Self::Value;
    /// `Σa²` as a scalar.
    fn square_sum(&mut self, a: &Self::Value) -> Self::Value;
    /// `Σa` as a scalar.
    fn sum(&mut self, a: &Self::Value) -> Self::Value;

    /// Scalar value of a `1×1×1×1` operand.
    fn item(&self, v: &Self::Value) -> Result<T> {
        self.tensor(v).item()
    }
}
