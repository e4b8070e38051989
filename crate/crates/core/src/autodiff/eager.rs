use alloc::rc::Rc;

use super::{Backend, ParamId, ParamStore};
use crate::error::Result;
use crate::kernels::{self, Resize};
use crate::real::Real;
use crate::tensor::Tensor;

/// Value handle of the [`Eager`] executor.
#[derive(Debug, Clone)]
pub enum EagerValue<T> {
    Param(ParamId),
    Owned(Rc<Tensor<T>>),
}

/// Immediate-mode executor; nothing is recorded.
pub struct Eager<'p, T> {
    params: &'p ParamStore<T>,
    kinks: Option<u64>,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0100_0000_01b3;

impl<'p, T: Real> Eager<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Eager { params, kinks: None }
    }

    /// Executor that also hashes the sign of every PReLU input and every
    /// absolute-value argument it sees.
    pub fn tracking_kinks(params: &'p ParamStore<T>) -> Self {
        Eager {
            params,
            kinks: Some(FNV_OFFSET),
        }
    }

    /// Hash of the sign pattern seen so far, if tracking.
    /// Two evaluations with equal signatures lie on the same linear piece of
    /// every PReLU and absolute value.
    pub fn kink_signature(&self) -> Option<u64> {
        self.kinks
    }

    fn t<'a>(&'a self, v: &'a EagerValue<T>) -> &'a Tensor<T> {
        match v {
            EagerValue::Param(id) => self.params.value(*id),
            EagerValue::Owned(t) => t,
        }
    }

    /// Takes the tensor out of a value, copying only if it is shared.
    pub fn into_tensor(&self, v: EagerValue<T>) -> Tensor<T> {
        match v {
            EagerValue::Param(id) => self.params.value(id).clone(),
            EagerValue::Owned(t) => Rc::try_unwrap(t).unwrap_or_else(|t| (*t).clone()),
        }
    }

    fn record_signs(&mut self, v: &EagerValue<T>) {
        let Some(mut h) = self.kinks else { return };
        let data = self.t(v).data();
        // Round-off residue of exact zeros (e.g. imaginary DC bins) is not a kink.
        let floor = data.iter().fold(T::zero(), |m, x| m.max(x.abs())) * T::from_f64(1e-12);
        for &x in data {
            let bit = if x > floor {
                1
            } else if x < -floor {
                2
            } else {
                3
            };
            h = (h ^ bit).wrapping_mul(FNV_PRIME);
        }
        self.kinks = Some(h);
    }
}

fn own<T>(t: Tensor<T>) -> EagerValue<T> {
    EagerValue::Owned(Rc::new(t))
}

impl<'p, T: Real> Backend<T> for Eager<'p, T> {
    type Value = EagerValue<T>;

    fn params(&self) -> &ParamStore<T> {
        self.params
    }

    fn param(&mut self, id: ParamId) -> EagerValue<T> {
        EagerValue::Param(id)
    }

    fn constant(&mut self, t: Tensor<T>) -> EagerValue<T> {
        own(t)
    }

    fn tensor<'a>(&'a self, v: &'a EagerValue<T>) -> &'a Tensor<T> {
        self.t(v)
    }

    fn conv2d(&mut self, x: &EagerValue<T>, w: &EagerValue<T>, pad: usize) -> Result<EagerValue<T>> {
        kernels::conv2d(self.t(x), self.t(w), pad).map(own)
    }

    fn prelu(&mut self, x: &EagerValue<T>, slopes: &EagerValue<T>) -> Result<EagerValue<T>> {
        self.record_signs(x);
        kernels::prelu(self.t(x), self.t(slopes)).map(own)
    }

    fn add(&mut self, a: &EagerValue<T>, b: &EagerValue<T>) -> Result<EagerValue<T>> {
        self.t(a).add(self.t(b)).map(own)
    }

    fn sub(&mut self, a: &EagerValue<T>, b: &EagerValue<T>) -> Result<EagerValue<T>> {
        self.t(a).sub(self.t(b)).map(own)
    }

    fn mul(&mut self, a: &EagerValue<T>, b: &EagerValue<T>) -> Result<EagerValue<T>> {
        self.t(a).mul(self.t(b)).map(own)
    }

    fn scale(&mut self, a: &EagerValue<T>, s: T) -> EagerValue<T> {
        own(self.t(a).scale(s))
    }

    fn concat(&mut self, a: &EagerValue<T>, b: &EagerValue<T>) -> Result<EagerValue<T>> {
        kernels::concat_channels(self.t(a), self.t(b)).map(own)
    }

    fn resize(&mut self, a: &EagerValue<T>, ratio: Resize) -> Result<EagerValue<T>> {
        kernels::bilinear_resize(self.t(a), ratio).map(own)
    }

    fn pixel_shuffle(&mut self, a: &EagerValue<T>, r: usize) -> Result<EagerValue<T>> {
        kernels::pixel_shuffle(self.t(a), r).map(own)
    }

    fn pixel_unshuffle(&mut self, a: &EagerValue<T>, r: usize) -> Result<EagerValue<T>> {
        kernels::pixel_unshuffle(self.t(a), r).map(own)
    }

    fn dft2(&mut self, a: &EagerValue<T>) -> EagerValue<T> {
        own(kernels::dft2_stacked(self.t(a)))
    }

    fn abs_sum(&mut self, a: &EagerValue<T>) -> EagerValue<T> {
        self.record_signs(a);
        let s = self.t(a).data().iter().fold(T::zero(), |acc, v| acc + v.abs());
        own(Tensor::scalar(s))
    }

    fn square_sum(&mut self, a: &EagerValue<T>) -> EagerValue<T> {
        let s = self.t(a).data().iter().fold(T::zero(), |acc, &v| acc + v * v);
        own(Tensor::scalar(s))
    }

    fn sum(&mut self, a: &EagerValue<T>) -> EagerValue<T> {
        own(Tensor::scalar(self.t(a).sum()))
    }
}
