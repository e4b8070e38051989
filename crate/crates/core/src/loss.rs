//! Content (pixel L1) and frequency (DFT L1) losses over every head.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::autodiff::Backend;
use crate::error::{Error, Result};
use crate::kernels::Resize;
use crate::model::{ForwardOutputs, HeadId, ModelConfig};
use crate::real::Real;

/// Weight of the frequency term in the total loss.
pub const LAMBDA: f64 = 0.1;

/// Per-element penalty applied to head errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L1,
    /// Squared error, a smooth surrogate for tests.
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub lambda: f64,
    pub norm: Norm,
    pub frequency: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda: LAMBDA,
            norm: Norm::L1,
            frequency: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HeadLoss<T> {
    pub cont: T,
    pub freq: T,
}

/// Scalar summary of one loss evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport<T> {
    pub cont: T,
    pub freq: T,
    pub total: T,
    pub per_head: BTreeMap<HeadId, HeadLoss<T>>,
}

impl<T: Real> LossReport<T> {
    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
    }

    /// First head whose contribution is not finite.
    pub fn non_finite_head(&self) -> Option<HeadId> {
        self.per_head
            .iter()
            .find(|(_, h)| !(h.cont.is_finite() && h.freq.is_finite()))
            .map(|(k, _)| *k)
    }
}

/// A differentiable total together with its scalar breakdown.
pub struct LossTerms<V, T> {
    pub total: V,
    pub report: LossReport<T>,
}

fn penalty<T: Real, B: Backend<T>>(b: &mut B, v: &B::Value, norm: Norm) -> B::Value {
    match norm {
        Norm::L1 => b.abs_sum(v),
        Norm::L2 => b.square_sum(v),
    }
}

/// The sharp image at every pyramid depth a head needs.
fn targets<T: Real, B: Backend<T>>(b: &mut B, sharp: &B::Value, depth: usize) -> Result<Vec<B::Value>> {
    let mut out = alloc::vec![sharp.clone()];
    for d in 1..=depth {
        let next = b.resize(&out[d - 1], Resize::Half)?;
        out.push(next);
    }
    Ok(out)
}

/// Evaluates both losses over every head of `config` and combines them as
/// `cont + lambda·freq`.
pub fn total_loss<T: Real, B: Backend<T>>(
    b: &mut B,
    outputs: &ForwardOutputs<B::Value>,
    sharp: &B::Value,
    config: &ModelConfig,
    loss: &LossConfig,
) -> Result<LossTerms<B::Value, T>> {
    let heads = config.head_ids();
    let max_depth = heads.iter().map(|&h| config.head_geometry(h).depth).max().unwrap_or(0);
    let pyr = targets(b, sharp, max_depth)?;

    let mut cont_terms = Vec::with_capacity(heads.len());
    let mut freq_terms = Vec::with_capacity(heads.len());
    let mut per_head = BTreeMap::new();
    for id in heads {
        let img = outputs
            .image(id)
            .ok_or_else(|| Error::contract("loss", format!("missing output for head {id}")))?;
        let target = &pyr[config.head_geometry(id).depth];
        let diff = b.sub(img, target)?;
        let inv_n = T::one() / T::from_usize(b.shape(&diff).numel());
        let c = penalty(b, &diff, loss.norm);
        let c = b.scale(&c, inv_n);
        let mut entry = HeadLoss {
            cont: b.item(&c)?,
            freq: T::zero(),
        };
        cont_terms.push(c);
        if loss.frequency {
            let spec = b.dft2(&diff);
            let f = penalty(b, &spec, loss.norm);
            let f = b.scale(&f, inv_n);
            entry.freq = b.item(&f)?;
            freq_terms.push(f);
        }
        per_head.insert(id, entry);
    }

    let mut cont = cont_terms[0].clone();
    for t in &cont_terms[1..] {
        cont = b.add(&cont, t)?;
    }
    let cont_value = b.item(&cont)?;
    let (total, freq_value) = if let Some((first, rest)) = freq_terms.split_first() {
        let mut freq = first.clone();
        for t in rest {
            freq = b.add(&freq, t)?;
        }
        let freq_value = b.item(&freq)?;
        let weighted = b.scale(&freq, T::from_f64(loss.lambda));
        (b.add(&cont, &weighted)?, freq_value)
    } else {
        (cont, T::zero())
    };
    let total_value = b.item(&total)?;
    Ok(LossTerms {
        total,
        report: LossReport {
            cont: cont_value,
            freq: freq_value,
            total: total_value,
            per_head,
        },
    })
}

/// Sum over heads of the mean absolute pixel error.
pub fn content_loss<T: Real, B: Backend<T>>(
    b: &mut B,
    outputs: &ForwardOutputs<B::Value>,
    sharp: &B::Value,
    config: &ModelConfig,
) -> Result<T> {
    let cfg = LossConfig {
        frequency: false,
        ..LossConfig::default()
    };
    Ok(total_loss(b, outputs, sharp, config, &cfg)?.report.cont)
}

/// Sum over heads of `(Σ|ΔRe| + Σ|ΔIm|) / N` of the per-channel 2-D DFT.
pub fn frequency_loss<T: Real, B: Backend<T>>(
    b: &mut B,
    outputs: &ForwardOutputs<B::Value>,
    sharp: &B::Value,
    config: &ModelConfig,
) -> Result<T> {
    Ok(total_loss(b, outputs, sharp, config, &LossConfig::default())?.report.freq)
}
