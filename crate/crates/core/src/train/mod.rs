//! Desk-scale training: cosine-annealed Adam over randomly cropped and
//! flipped patch pairs.

mod toy;

pub use toy::{blur, motion_kernel, synthetic_image, MotionKernel};

use alloc::format;
use alloc::vec::Vec;
use core::ops::ControlFlow;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Backend, Graph, ParamStore};
use crate::error::{Error, Result};
use crate::loss::{total_loss, LossConfig, LossReport};
use crate::model::{model_forward, Model};
use crate::real::Real;
use crate::tensor::{Shape, Tensor};

/// `lr_final + ½(lr_init − lr_final)(1 + cos(πt/T))`, clamped to
/// `lr_final` once `t ≥ T`.
pub fn cosine_lr(t: usize, total: usize, lr_init: f64, lr_final: f64) -> f64 {
    if total == 0 || t >= total {
        return lr_final;
    }
    if 2 * t == total {
        return (lr_init + lr_final) / 2.0;
    }
    let phase = core::f64::consts::PI * t as f64 / total as f64;
    lr_final + 0.5 * (lr_init - lr_final) * (1.0 + Float::cos(phase))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments for every Variable of a store.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
    pub hyper: AdamHyper,
}

impl<T: Real> AdamState<T> {
    pub fn new(store: &ParamStore<T>, hyper: AdamHyper) -> Self {
        let zeros = || store.iter().map(|(_, v)| Tensor::zeros(v.value().shape())).collect();
        AdamState {
            m: zeros(),
            v: zeros(),
            t: 0,
            hyper,
        }
    }
}

/// One bias-corrected Adam update using the store's gradient slots.
pub fn adam_step<T: Real>(store: &mut ParamStore<T>, state: &mut AdamState<T>, lr: f64) {
    state.t += 1;
    let h = state.hyper;
    let t = state.t as i32;
    let c1 = 1.0 - Float::powi(h.beta1, t);
    let c2 = 1.0 - Float::powi(h.beta2, t);
    let (b1, b2) = (T::from_f64(h.beta1), T::from_f64(h.beta2));
    let (ob1, ob2) = (T::from_f64(1.0 - h.beta1), T::from_f64(1.0 - h.beta2));
    let step = T::from_f64(lr / c1);
    let inv_c2 = T::from_f64(1.0 / c2);
    let eps = T::from_f64(h.eps);
    for ((value, grad), (m, v)) in store
        .values_and_grads_mut()
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let it = value
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()));
        for ((p, &g), (mi, vi)) in it {
            *mi = b1 * *mi + ob1 * g;
            *vi = b2 * *vi + ob2 * g * g;
            *p = *p - step * *mi / ((*vi * inv_c2).sqrt() + eps);
        }
    }
}

/// Pixel-aligned blurred/sharp images, each `1×3×H×W`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair<T> {
    pub blurred: Tensor<T>,
    pub sharp: Tensor<T>,
}

impl<T: Real> Pair<T> {
    pub fn new(blurred: Tensor<T>, sharp: Tensor<T>) -> Result<Self> {
        if blurred.shape() != sharp.shape() {
            return Err(Error::ShapeMismatch {
                op: "pair",
                lhs: blurred.shape(),
                rhs: sharp.shape(),
            });
        }
        Ok(Pair { blurred, sharp })
    }
}

pub fn flip_horizontal<T: Real>(t: &Tensor<T>) -> Tensor<T> {
    let s = t.shape();
    Tensor::from_fn(s, |n, c, y, x| t.get(n, c, y, s.w - 1 - x))
}

pub fn flip_vertical<T: Real>(t: &Tensor<T>) -> Tensor<T> {
    let s = t.shape();
    Tensor::from_fn(s, |n, c, y, x| t.get(n, c, s.h - 1 - y, x))
}

fn crop<T: Real>(t: &Tensor<T>, top: usize, left: usize, size: usize) -> Tensor<T> {
    let s = t.shape();
    Tensor::from_fn(Shape::new(1, s.c, size, size), |_, c, y, x| t.get(0, c, top + y, left + x))
}

/// Crops the same `patch×patch` window from both images and applies the
/// same flips, each axis independently with probability ½ when `flips`.
pub fn sample_patch<T: Real, R: Rng + ?Sized>(pair: &Pair<T>, patch: usize, flips: bool, rng: &mut R) -> Result<Pair<T>> {
    let s = pair.blurred.shape();
    if s.h < patch || s.w < patch {
        return Err(Error::contract(
            "sample_patch",
            format!("{}x{} image is smaller than a {patch}x{patch} patch", s.h, s.w),
        ));
    }
    let top = rng.random_range(0..=s.h - patch);
    let left = rng.random_range(0..=s.w - patch);
    let mut b = crop(&pair.blurred, top, left, patch);
    let mut g = crop(&pair.sharp, top, left, patch);
    if flips {
        if rng.random_bool(0.5) {
            b = flip_horizontal(&b);
            g = flip_horizontal(&g);
        }
        if rng.random_bool(0.5) {
            b = flip_vertical(&b);
            g = flip_vertical(&g);
        }
    }
    Ok(Pair { blurred: b, sharp: g })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr_init: f64,
    pub lr_final: f64,
    pub total_iters: usize,
    pub batch: usize,
    pub patch: usize,
    pub flips: bool,
    pub seed: u64,
    pub precision: Precision,
    pub loss: LossConfig,
    pub adam: AdamHyper,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_init: 2e-4,
            lr_final: 1e-6,
            total_iters: 2000,
            batch: 4,
            patch: 64,
            flips: true,
            seed: 0,
            precision: Precision::F32,
            loss: LossConfig::default(),
            adam: AdamHyper::default(),
        }
    }
}

impl TrainConfig {
    /// The full-length regime: 396k iterations of 16 patches of 256².
    pub fn full_scale() -> Self {
        TrainConfig {
            total_iters: 396_000,
            batch: 16,
            patch: 256,
            ..Self::default()
        }
    }

    pub fn validate(&self, size_multiple: usize) -> Result<()> {
        if !(self.lr_init > self.lr_final && self.lr_final > 0.0) {
            return Err(Error::Config(format!(
                "learning rates must satisfy lr_init > lr_final > 0 (got {} and {})",
                self.lr_init, self.lr_final
            )));
        }
        if self.patch == 0 || !self.patch.is_multiple_of(size_multiple) {
            return Err(Error::Config(format!(
                "patch {} is not a positive multiple of {size_multiple}",
                self.patch
            )));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch must be positive".into()));
        }
        Ok(())
    }

    /// Passes over `pairs` images implied by the iteration budget.
    pub fn epochs(&self, pairs: usize) -> f64 {
        let per_epoch = pairs.div_ceil(self.batch).max(1);
        self.total_iters as f64 / per_epoch as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow<T> {
    pub iter: usize,
    pub lr: f64,
    pub report: LossReport<T>,
}

/// Draws one training batch.
pub fn sample_batch<T: Real, R: Rng + ?Sized>(
    data: &[Pair<T>],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let mut blurred = Vec::with_capacity(cfg.batch);
    let mut sharp = Vec::with_capacity(cfg.batch);
    for _ in 0..cfg.batch {
        let i = rng.random_range(0..data.len());
        let p = sample_patch(&data[i], cfg.patch, cfg.flips, rng)?;
        blurred.push(p.blurred);
        sharp.push(p.sharp);
    }
    Ok((Tensor::stack_batch(&blurred)?, Tensor::stack_batch(&sharp)?))
}

/// One forward/backward/update on a fixed batch. Returns the loss
/// measured before the update.
pub fn train_step<T: Real>(
    model: &mut Model<T>,
    state: &mut AdamState<T>,
    blurred: &Tensor<T>,
    sharp: &Tensor<T>,
    loss: &LossConfig,
    lr: f64,
) -> Result<LossReport<T>> {
    let grads = {
        let mut g = Graph::new(&model.store);
        let b = g.constant(blurred.clone());
        let s = g.constant(sharp.clone());
        let out = model_forward(&mut g, &model.net, &b, true)?;
        let terms = total_loss(&mut g, &out, &s, &model.net.config, loss)?;
        if !terms.report.is_finite() {
            let head = terms
                .report
                .non_finite_head()
                .map(|h| format!("{h}"))
                .unwrap_or_else(|| "(total)".into());
            return Err(Error::NonFiniteLoss { head });
        }
        let report = terms.report;
        (g.backward(terms.total)?, report)
    };
    let (grads, report) = grads;
    model.store.set_grads(&grads)?;
    adam_step(&mut model.store, state, lr);
    Ok(report)
}

/// Runs `cfg.total_iters` steps. `observe` sees every history row with the
/// updated model and may stop the run early.
pub fn train<T: Real>(
    model: &mut Model<T>,
    data: &[Pair<T>],
    cfg: &TrainConfig,
    mut observe: impl FnMut(&HistoryRow<T>, &Model<T>) -> ControlFlow<()>,
) -> Result<Vec<HistoryRow<T>>> {
    if data.is_empty() {
        return Err(Error::contract("train", "dataset is empty"));
    }
    cfg.validate(model.net.config.size_multiple())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdamState::new(&model.store, cfg.adam);
    let mut history = Vec::with_capacity(cfg.total_iters);
    for it in 0..cfg.total_iters {
        let lr = cosine_lr(it, cfg.total_iters, cfg.lr_init, cfg.lr_final);
        let (b, s) = sample_batch(data, cfg, &mut rng)?;
        let report = train_step(model, &mut state, &b, &s, &cfg.loss, lr)?;
        let row = HistoryRow { iter: it, lr, report };
        let flow = observe(&row, model);
        history.push(row);
        if flow.is_break() {
            break;
        }
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints() {
        assert_eq!(cosine_lr(0, 1000, 2e-4, 1e-6), 2e-4);
        assert_eq!(cosine_lr(1000, 1000, 2e-4, 1e-6), 1e-6);
        assert_eq!(cosine_lr(500, 1000, 2e-4, 1e-6), 1.005e-4);
        assert_eq!(cosine_lr(5000, 1000, 2e-4, 1e-6), 1e-6);
    }

    #[test]
    fn first_adam_step_is_signed_lr() {
        let mut store = ParamStore::<f64>::new();
        let id = store.add("w", Tensor::new([1, 1, 1, 3], alloc::vec![1.0, 1.0, 1.0]).unwrap()).unwrap();
        let mut state = AdamState::new(&store, AdamHyper::default());
        let mut g = Graph::new(&store);
        let w = g.param(id);
        let c = g.constant(Tensor::new([1, 1, 1, 3], alloc::vec![3.0, -0.5, 0.0]).unwrap());
        let p = g.mul(&w, &c).unwrap();
        let l = g.sum(&p);
        let gr = g.backward(l).unwrap();
        store.set_grads(&gr).unwrap();
        adam_step(&mut store, &mut state, 0.01);
        let v = store.value(id).data();
        assert!((v[0] - 0.99).abs() < 1e-8);
        assert!((v[1] - 1.01).abs() < 1e-8);
        assert_eq!(v[2], 1.0);
    }

    #[test]
    fn flips_are_involutions() {
        let t = Tensor::<f32>::from_fn([1, 3, 5, 7], |_, c, y, x| (c * 100 + y * 10 + x) as f32);
        assert_eq!(flip_horizontal(&flip_horizontal(&t)), t);
        assert_eq!(flip_vertical(&flip_vertical(&t)), t);
        assert_ne!(flip_horizontal(&t), t);
    }

    #[test]
    fn patches_stay_aligned() {
        let sharp = Tensor::<f32>::from_fn([1, 3, 20, 24], |_, c, y, x| (c * 1000 + y * 30 + x) as f32);
        let blurred = sharp.map(|v| v + 0.5);
        let pair = Pair::new(blurred, sharp).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let p = sample_patch(&pair, 8, true, &mut rng).unwrap();
            assert_eq!(p.blurred, p.sharp.map(|v| v + 0.5));
        }
        assert!(sample_patch(&pair, 32, false, &mut rng).is_err());
    }
}
