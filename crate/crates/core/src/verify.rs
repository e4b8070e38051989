//! Finite-difference verification of single layers and whole networks.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{check_objective, Backend, GradCheckOptions, GradCheckReport, Objective, ParamId, ParamStore};
use crate::error::Result;
use crate::kernels::{idft2, ComplexPair, Resize};
use crate::layers::{Conv, ConvSpec, Init, PRelu, ResBlock};
use crate::loss::{total_loss, LossConfig, Norm};
use crate::model::{build_model_with, model_forward, ForwardOutputs, ModelConfig, Network};
use crate::tensor::{Shape, Tensor};
use crate::unet::{StageFeatures, UNet, UNetChannels};

/// Total training loss of a network on one fixed pair.
pub struct ModelObjective<'a> {
    pub net: &'a Network,
    pub blurred: Tensor<f64>,
    pub sharp: Tensor<f64>,
    pub loss: LossConfig,
}

impl Objective<f64> for ModelObjective<'_> {
    fn eval<B: Backend<f64>>(&self, b: &mut B) -> Result<B::Value> {
        let x = b.constant(self.blurred.clone());
        let y = b.constant(self.sharp.clone());
        let out = model_forward(b, self.net, &x, true)?;
        Ok(total_loss(b, &out, &y, &self.net.config, &self.loss)?.total)
    }
}

/// Magnitude of every real and imaginary component of the target
/// pattern's spectrum.
pub const PATTERN_LEVEL: f64 = 10.0;

/// A real `shape` pattern whose DFT has `±level` in every real and
/// imaginary component (imaginary parts of self-conjugate bins are zero),
/// signs drawn from `seed`.
pub fn flat_spectrum_pattern(shape: Shape, level: f64, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (shape.h, shape.w);
    let mut re = Tensor::<f64>::zeros(shape);
    let mut im = Tensor::<f64>::zeros(shape);
    for n in 0..shape.n {
        for c in 0..shape.c {
            for ky in 0..h {
                for kx in 0..w {
                    let (py, px) = ((h - ky) % h, (w - kx) % w);
                    if (py, px) < (ky, kx) {
                        continue;
                    }
                    let a = if rng.random_bool(0.5) { level } else { -level };
                    re.set(n, c, ky, kx, a);
                    re.set(n, c, py, px, a);
                    if (py, px) != (ky, kx) {
                        let b = if rng.random_bool(0.5) { level } else { -level };
                        im.set(n, c, ky, kx, b);
                        im.set(n, c, py, px, -b);
                    }
                }
            }
        }
    }
    idft2(&ComplexPair { re, im }).expect("matching parts").re
}

/// The default gradient-check target: the input plus a flat-spectrum
/// pattern plus a constant that keeps every pixel error at least 1 away
/// from zero.
pub fn default_target(input: &Tensor<f64>, seed: u64) -> Tensor<f64> {
    let p = flat_spectrum_pattern(input.shape(), PATTERN_LEVEL, seed ^ 0x5eed);
    let offset = p.max_abs() + 1.0;
    input.zip_map(&p, "target", |a, b| a + b + offset).expect("same shape")
}

/// Residual-branch init gain of networks built for gradient checks.
/// At the training default the deepest gradients fall to ~1e-8, below
/// what a refined central difference resolves.
pub const CHECK_RESIDUAL_GAIN: f64 = 0.5;

/// Builds `config` in 64-bit with `opts.seed` and [`CHECK_RESIDUAL_GAIN`],
/// then compares backward-mode gradients of the total loss against central
/// differences.
pub fn check_gradients(config: &ModelConfig, input: &Tensor<f64>, opts: GradCheckOptions) -> Result<GradCheckReport> {
    let target = default_target(input, opts.seed);
    check_model_gradients(config, input, &target, opts)
}

pub fn check_model_gradients(
    config: &ModelConfig,
    blurred: &Tensor<f64>,
    sharp: &Tensor<f64>,
    opts: GradCheckOptions,
) -> Result<GradCheckReport> {
    let init = Init::new(opts.seed).with_gains(Init::DEFAULT_GAIN, CHECK_RESIDUAL_GAIN);
    let mut model = build_model_with::<f64>(config, init)?;
    let obj = ModelObjective {
        net: &model.net,
        blurred: blurred.clone(),
        sharp: sharp.clone(),
        loss: LossConfig::default(),
    };
    check_objective(&mut model.store, &obj, opts)
}

enum Op {
    Conv(Conv),
    PRelu(PRelu),
    ResBlock(ResBlock),
    UNet(Box<UNet>, Option<StageFeatures<ParamId>>),
    Resize(Resize),
    Shuffle,
    Unshuffle,
    Dft,
    Concat(ParamId),
    Arith(ParamId),
    AbsSum,
    SquareSum,
    Loss(ModelConfig, Tensor<f64>, Norm),
}

/// One layer applied to a variable input `x`, read out through a fixed
/// random linear functional.
struct LayerCase {
    x: ParamId,
    op: Op,
}

const READOUT_SEED: u64 = 0x7ead;

fn readout<B: Backend<f64>>(b: &mut B, y: &B::Value, seed: u64) -> Result<B::Value> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = Tensor::uniform(b.shape(y), -1.0, 1.0, &mut rng);
    let r = b.constant(r);
    let p = b.mul(y, &r)?;
    Ok(b.sum(&p))
}

impl Objective<f64> for LayerCase {
    fn eval<B: Backend<f64>>(&self, b: &mut B) -> Result<B::Value> {
        let x = b.param(self.x);
        let y = match &self.op {
            Op::Conv(c) => c.forward(b, &x)?,
            Op::PRelu(p) => p.forward(b, &x)?,
            Op::ResBlock(r) => r.forward(b, &x)?,
            Op::UNet(u, prev) => {
                let prev = match prev {
                    Some(p) => Some(p.map(|&id| Ok(b.param(id)))?),
                    None => None,
                };
                let f = u.forward(b, &x, prev.as_ref())?;
                let mut acc = readout(b, &f.dec[0], READOUT_SEED)?;
                for (i, v) in f.enc.iter().chain(&f.dec[1..]).enumerate() {
                    let t = readout(b, v, READOUT_SEED + 1 + i as u64)?;
                    acc = b.add(&acc, &t)?;
                }
                return Ok(acc);
            }
            Op::Resize(r) => b.resize(&x, *r)?,
            Op::Shuffle => b.pixel_shuffle(&x, 2)?,
            Op::Unshuffle => b.pixel_unshuffle(&x, 2)?,
            Op::Dft => b.dft2(&x),
            Op::Concat(other) => {
                let o = b.param(*other);
                b.concat(&x, &o)?
            }
            Op::Arith(other) => {
                let o = b.param(*other);
                let s = b.sub(&x, &o)?;
                let m = b.mul(&s, &x)?;
                let a = b.add(&m, &o)?;
                b.scale(&a, 0.7)
            }
            Op::AbsSum => return Ok(b.abs_sum(&x)),
            Op::SquareSum => return Ok(b.square_sum(&x)),
            Op::Loss(cfg, sharp, norm) => {
                let out = ForwardOutputs {
                    final_image: x.clone(),
                    residual: x.clone(),
                    final_id: cfg.final_head(),
                    aux: Default::default(),
                };
                let s = b.constant(sharp.clone());
                let loss = LossConfig {
                    norm: *norm,
                    ..LossConfig::default()
                };
                return Ok(total_loss(b, &out, &s, cfg, &loss)?.total);
            }
        };
        readout(b, &y, READOUT_SEED)
    }
}

/// Gradient-check outcome for one layer type.
#[derive(Debug, Clone)]
pub struct LayerCheck {
    pub layer: &'static str,
    pub report: GradCheckReport,
}

fn variable(store: &mut ParamStore<f64>, name: &str, shape: impl Into<Shape>, seed: u64) -> Result<ParamId> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    store.add(name, Tensor::uniform(shape, -1.0, 1.0, &mut rng))
}

fn loss_op(norm: Norm) -> Result<Op> {
    let cfg = ModelConfig::plain(&[1], UNetChannels::new(4, 6, 8));
    let sharp = Tensor::uniform([1, 3, 8, 8], 0.0, 1.0, &mut ChaCha8Rng::seed_from_u64(4));
    Ok(Op::Loss(cfg, sharp, norm))
}

fn fused_unet(s: &mut ParamStore<f64>) -> Result<Op> {
    let ch = UNetChannels::new(3, 4, 5);
    let u = UNet::new(s, "u", ch, true, &mut Init::new(1).with_gains(1.0, 0.5))?;
    let lv = ch.levels();
    let mut level = |kind: &str, l: usize| {
        variable(s, &format!("prev/{kind}{l}"), [1, lv[l], 8 >> l, 8 >> l], 10 + l as u64)
    };
    let enc = [level("enc", 0)?, level("enc", 1)?, level("enc", 2)?];
    let dec = [level("dec", 0)?, level("dec", 1)?, level("dec", 2)?];
    Ok(Op::UNet(Box::new(u), Some(StageFeatures { enc, dec })))
}

type Setup = fn(&mut ParamStore<f64>) -> Result<Op>;

const LAYER_CASES: [(&str, [usize; 4], Setup); 18] = [
    ("conv 3x3", [2, 3, 6, 5], |s| {
        Ok(Op::Conv(Conv::new(s, "c", ConvSpec::same(3, 3, 5), &mut Init::new(0))?))
    }),
    ("conv 1x1", [1, 4, 4, 4], |s| {
        Ok(Op::Conv(Conv::new(s, "c", ConvSpec::same(1, 4, 2), &mut Init::new(0))?))
    }),
    ("prelu", [2, 3, 5, 5], |s| Ok(Op::PRelu(PRelu::new(s, "p", 3)?))),
    ("resblock", [1, 4, 6, 6], |s| {
        Ok(Op::ResBlock(ResBlock::new(s, "r", 4, &mut Init::new(5).with_gains(1.0, 1.0))?))
    }),
    ("unet", [1, 3, 8, 8], |s| {
        let mut init = Init::new(1).with_gains(1.0, 0.5);
        Ok(Op::UNet(Box::new(UNet::new(s, "u", UNetChannels::new(3, 4, 5), false, &mut init)?), None))
    }),
    ("unet with fusion", [1, 3, 8, 8], fused_unet),
    ("bilinear half", [1, 2, 6, 8], |_| Ok(Op::Resize(Resize::Half))),
    ("bilinear double", [1, 2, 3, 5], |_| Ok(Op::Resize(Resize::Double))),
    ("pixel shuffle", [1, 8, 3, 2], |_| Ok(Op::Shuffle)),
    ("pixel unshuffle", [1, 2, 4, 6], |_| Ok(Op::Unshuffle)),
    ("dft2 8x8", [1, 2, 8, 8], |_| Ok(Op::Dft)),
    ("dft2 6x5", [1, 1, 6, 5], |_| Ok(Op::Dft)),
    ("concat", [2, 3, 3, 3], |s| Ok(Op::Concat(variable(s, "o", [2, 4, 3, 3], 9)?))),
    ("add sub mul scale", [1, 2, 4, 4], |s| Ok(Op::Arith(variable(s, "o", [1, 2, 4, 4], 9)?))),
    ("abs sum", [1, 3, 4, 4], |_| Ok(Op::AbsSum)),
    ("square sum", [1, 3, 4, 4], |_| Ok(Op::SquareSum)),
    ("loss l1", [1, 3, 8, 8], |_| loss_op(Norm::L1)),
    ("loss l2", [1, 3, 8, 8], |_| loss_op(Norm::L2)),
];

/// Checks every layer type of the network on small random operands, the
/// layer input included as a variable.
pub fn check_layers(opts: GradCheckOptions) -> Result<Vec<LayerCheck>> {
    let mut out = Vec::with_capacity(LAYER_CASES.len());
    for (layer, shape, setup) in LAYER_CASES {
        let mut store = ParamStore::new();
        let x = variable(&mut store, "x", shape, 1)?;
        let op = setup(&mut store)?;
        let report = check_objective(&mut store, &LayerCase { x, op }, opts)?;
        out.push(LayerCheck { layer, report });
    }
    Ok(out)
}
