//! Parameterized building blocks: bias-free convolution, per-channel PReLU
//! and the conv–PReLU–conv residual block.

use alloc::format;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Backend, ParamId, ParamStore};
use crate::error::Result;
use crate::real::Real;
use crate::tensor::{Shape, Tensor};

/// Geometry of a stride-1, bias-free convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConvSpec {
    pub k: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub pad: usize,
}

impl ConvSpec {
    /// `k×k` filters with "same" padding.
    pub const fn same(k: usize, c_in: usize, c_out: usize) -> Self {
        ConvSpec {
            k,
            c_in,
            c_out,
            pad: k / 2,
        }
    }

    pub const fn weight_shape(&self) -> Shape {
        Shape::new(self.c_out, self.c_in, self.k, self.k)
    }

    pub const fn params(&self) -> usize {
        self.k * self.k * self.c_in * self.c_out
    }
}

/// Seeded weight initializer.
///
/// Convolution weights are drawn from `N(0, gain²/fan_in)`; PReLU slopes
/// start at 0.25. Layers that feed a residual sum (the second conv of a
/// [`ResBlock`] and every image head) use `residual_gain` instead.
pub struct Init {
    rng: ChaCha8Rng,
    gain: f64,
    residual_gain: f64,
}

impl Init {
    pub const PRELU_SLOPE: f64 = 0.25;
    pub const DEFAULT_GAIN: f64 = 1.0;
    pub const DEFAULT_RESIDUAL_GAIN: f64 = 0.1;

    pub fn new(seed: u64) -> Self {
        Init {
            rng: ChaCha8Rng::seed_from_u64(seed),
            gain: Self::DEFAULT_GAIN,
            residual_gain: Self::DEFAULT_RESIDUAL_GAIN,
        }
    }

    pub fn with_gains(mut self, gain: f64, residual_gain: f64) -> Self {
        self.gain = gain;
        self.residual_gain = residual_gain;
        self
    }

    fn draw<T: Real>(&mut self, spec: &ConvSpec, gain: f64) -> Tensor<T> {
        let fan_in = (spec.c_in * spec.k * spec.k) as f64;
        Tensor::randn(spec.weight_shape(), gain / num_traits::Float::sqrt(fan_in), &mut self.rng)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Conv {
    pub weight: ParamId,
    pub spec: ConvSpec,
}

impl Conv {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, spec: ConvSpec, init: &mut Init) -> Result<Self> {
        let gain = init.gain;
        let weight = store.add(name, init.draw(&spec, gain))?;
        Ok(Conv { weight, spec })
    }

    /// Same as [`Conv::new`] but drawn with the residual gain.
    pub fn residual<T: Real>(store: &mut ParamStore<T>, name: &str, spec: ConvSpec, init: &mut Init) -> Result<Self> {
        let gain = init.residual_gain;
        let weight = store.add(name, init.draw(&spec, gain))?;
        Ok(Conv { weight, spec })
    }

    pub fn forward<T: Real, B: Backend<T>>(&self, b: &mut B, x: &B::Value) -> Result<B::Value> {
        let w = b.param(self.weight);
        b.conv2d(x, &w, self.spec.pad)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PRelu {
    pub slopes: ParamId,
    pub channels: usize,
}

impl PRelu {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Result<Self> {
        let slopes = store.add(name, Tensor::full([1, channels, 1, 1], T::from_f64(Init::PRELU_SLOPE)))?;
        Ok(PRelu { slopes, channels })
    }

    pub fn forward<T: Real, B: Backend<T>>(&self, b: &mut B, x: &B::Value) -> Result<B::Value> {
        let s = b.param(self.slopes);
        b.prelu(x, &s)
    }
}

/// `out = feat + conv₂(PReLU(conv₁(feat)))` with two 3×3 convolutions.
#[derive(Debug, Clone, Copy)]
pub struct ResBlock {
    pub conv1: Conv,
    pub act: PRelu,
    pub conv2: Conv,
}

impl ResBlock {
    pub fn new<T: Real>(store: &mut ParamStore<T>, path: &str, channels: usize, init: &mut Init) -> Result<Self> {
        let spec = ConvSpec::same(3, channels, channels);
        Ok(ResBlock {
            conv1: Conv::new(store, &format!("{path}/conv1"), spec, init)?,
            act: PRelu::new(store, &format!("{path}/prelu"), channels)?,
            conv2: Conv::residual(store, &format!("{path}/conv2"), spec, init)?,
        })
    }

    pub fn channels(&self) -> usize {
        self.act.channels
    }

    pub fn forward<T: Real, B: Backend<T>>(&self, b: &mut B, x: &B::Value) -> Result<B::Value> {
        let h = self.conv1.forward(b, x)?;
        let h = self.act.forward(b, &h)?;
        let h = self.conv2.forward(b, &h)?;
        b.add(x, &h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Eager, Graph};

    #[test]
    fn zero_weights_make_identity() {
        let mut store = ParamStore::<f64>::new();
        let mut init = Init::new(1);
        let rb = ResBlock::new(&mut store, "rb", 6, &mut init).unwrap();
        store.value_mut(rb.conv1.weight).fill(0.0);
        store.value_mut(rb.conv2.weight).fill(0.0);
        let x = Tensor::<f64>::from_fn([1, 6, 5, 5], |_, c, y, xx| (c as f64) - (y * xx) as f64 * 0.1);
        let mut b = Eager::new(&store);
        let xv = b.constant(x.clone());
        let y = rb.forward(&mut b, &xv).unwrap();
        assert_eq!(b.tensor(&y), &x);
    }

    #[test]
    fn shape_preserved() {
        let mut store = ParamStore::<f32>::new();
        let rb = ResBlock::new(&mut store, "rb", 54, &mut Init::new(0)).unwrap();
        let mut b = Eager::new(&store);
        let xv = b.constant(Tensor::zeros([1, 54, 32, 32]));
        let y = rb.forward(&mut b, &xv).unwrap();
        assert_eq!(b.shape(&y), Shape::new(1, 54, 32, 32));
    }

    #[test]
    fn input_gradient_is_identity_at_zero_weights() {
        let mut store = ParamStore::<f64>::new();
        let rb = ResBlock::new(&mut store, "rb", 3, &mut Init::new(2)).unwrap();
        store.value_mut(rb.conv1.weight).fill(0.0);
        store.value_mut(rb.conv2.weight).fill(0.0);
        let x = Tensor::<f64>::from_fn([1, 3, 4, 4], |_, c, y, xx| (c + y) as f64 - xx as f64);
        let probe = Tensor::<f64>::from_fn([1, 3, 4, 4], |_, c, y, xx| ((c * 16 + y * 4 + xx) % 7) as f64);
        let mut g = Graph::new(&store);
        let xi = g.input(x);
        let y = rb.forward(&mut g, &xi).unwrap();
        let p = g.constant(probe.clone());
        let prod = g.mul(&y, &p).unwrap();
        let loss = g.sum(&prod);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.leaf(xi).unwrap(), &probe);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut store = ParamStore::<f32>::new();
        let mut init = Init::new(0);
        Conv::new(&mut store, "a", ConvSpec::same(3, 2, 2), &mut init).unwrap();
        assert!(Conv::new(&mut store, "a", ConvSpec::same(3, 2, 2), &mut init).is_err());
    }
}
