//! Central-difference gradient oracle and the backward-vs-oracle checker.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Backend, Eager, Graph, ParamStore};
use crate::error::Result;
use crate::real::Real;
use crate::tensor::Tensor;

/// Central differences `(f(θ+εeᵢ) − f(θ−εeᵢ)) / 2ε` for every element.
pub fn finite_diff_grad<T: Real>(mut f: impl FnMut(&Tensor<T>) -> T, theta: &Tensor<T>, eps: T) -> Tensor<T> {
    let all: Vec<usize> = (0..theta.numel()).collect();
    let g = finite_diff_at(&mut f, theta, &all, eps);
    Tensor::new(theta.shape(), g).expect("one derivative per element")
}

/// Central differences at the listed flat indices only.
pub fn finite_diff_at<T: Real>(mut f: impl FnMut(&Tensor<T>) -> T, theta: &Tensor<T>, indices: &[usize], eps: T) -> Vec<T> {
    let mut probe = theta.clone();
    let two_eps = eps + eps;
    indices
        .iter()
        .map(|&i| {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + eps;
            let hi = f(&probe);
            probe.data_mut()[i] = orig - eps;
            let lo = f(&probe);
            probe.data_mut()[i] = orig;
            (hi - lo) / two_eps
        })
        .collect()
}

/// A scalar function of a model's variables, expressible on any backend.
pub trait Objective<T: Real> {
    fn eval<B: Backend<T>>(&self, b: &mut B) -> Result<B::Value>;
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Largest accepted relative error per variable.
    pub tol: f64,
    /// Finite-difference step.
    pub eps: f64,
    /// Elements perturbed per variable (all of them for smaller variables).
    pub samples_per_variable: usize,
    pub seed: u64,
    /// Times the step may be divided by ten when `θ ± ε` straddles a kink.
    pub max_refinements: u32,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            tol: 1e-4,
            eps: 1e-4,
            samples_per_variable: 10,
            seed: 0,
            max_refinements: 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VariableCheck {
    pub name: String,
    pub checked: usize,
    /// `max|fd − bw| / max(max|fd|, max|bw|)` over the checked elements.
    pub max_rel_error: f64,
    /// `max(max|fd|, max|bw|)`.
    pub grad_scale: f64,
    /// Samples that needed a smaller step to avoid a kink.
    pub refined: usize,
    /// Samples still straddling a kink at the smallest step.
    pub kinked: usize,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub variables: Vec<VariableCheck>,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.variables.iter().all(|v| v.max_rel_error <= self.tol)
    }

    pub fn worst(&self) -> Option<&VariableCheck> {
        self.variables
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }

    pub fn failures(&self) -> impl Iterator<Item = &VariableCheck> {
        self.variables.iter().filter(move |v| v.max_rel_error > self.tol)
    }
}

fn eval_eager<O: Objective<f64>>(store: &ParamStore<f64>, obj: &O) -> Result<(f64, Option<u64>)> {
    let mut b = Eager::tracking_kinks(store);
    let v = obj.eval(&mut b)?;
    Ok((b.item(&v)?, b.kink_signature()))
}

/// Compares backward-mode gradients of `obj` with central differences on a
/// seeded random subsample of every variable's elements.
///
/// A difference is only accepted when `θ+ε`, `θ` and `θ−ε` share one sign
/// pattern of PReLU inputs and absolute-value arguments; otherwise the step
/// is divided by ten, up to `max_refinements` times.
pub fn check_objective<O: Objective<f64>>(
    store: &mut ParamStore<f64>,
    obj: &O,
    opts: GradCheckOptions,
) -> Result<GradCheckReport> {
    let grads = {
        let mut g = Graph::new(&*store);
        let loss = obj.eval(&mut g)?;
        g.backward(loss)?
    };
    let (_, center) = eval_eager(store, obj)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let ids: Vec<_> = store.ids().collect();
    let mut variables = Vec::with_capacity(ids.len());
    for id in ids {
        let numel = store.get(id).numel();
        let mut picks: Vec<usize> = if numel <= opts.samples_per_variable {
            (0..numel).collect()
        } else {
            index::sample(&mut rng, numel, opts.samples_per_variable).into_vec()
        };
        picks.sort_unstable();
        let analytic: Vec<f64> = match grads.param(id) {
            Some(g) => picks.iter().map(|&i| g.data()[i]).collect(),
            None => alloc::vec![0.0; picks.len()],
        };
        let mut numeric = Vec::with_capacity(picks.len());
        let (mut refined, mut kinked) = (0, 0);
        for &i in &picks {
            let orig = store.value(id).data()[i];
            let mut eps = opts.eps;
            let mut round = 0;
            let fd = loop {
                store.value_mut(id).data_mut()[i] = orig + eps;
                let (hi, sig_hi) = eval_eager(store, obj)?;
                store.value_mut(id).data_mut()[i] = orig - eps;
                let (lo, sig_lo) = eval_eager(store, obj)?;
                store.value_mut(id).data_mut()[i] = orig;
                let fd = (hi - lo) / (2.0 * eps);
                if sig_hi == center && sig_lo == center {
                    break fd;
                }
                if round == opts.max_refinements {
                    kinked += 1;
                    break fd;
                }
                round += 1;
                eps /= 10.0;
            };
            if round > 0 {
                refined += 1;
            }
            numeric.push(fd);
        }
        let scale = analytic
            .iter()
            .chain(&numeric)
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(1e-12);
        let diff = analytic
            .iter()
            .zip(&numeric)
            .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
        variables.push(VariableCheck {
            name: store.get(id).name().into(),
            checked: picks.len(),
            max_rel_error: diff / scale,
            grad_scale: scale,
            refined,
            kinked,
        });
    }
    Ok(GradCheckReport { variables, tol: opts.tol })
}
