//! Network assembly: multi-scale inputs, per-scale extractors, inter-scale
//! fusion, stage chains, output and auxiliary heads, and the preset family.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{Backend, Eager, ParamStore};
use crate::error::{Error, Result};
use crate::kernels::Resize;
use crate::layers::{Conv, ConvSpec, Init, ResBlock};
use crate::real::Real;
use crate::tensor::Tensor;
use crate::unet::{StageFeatures, UNet, UNetChannels};

/// How a coarse scale's result enters the next finer scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Propagation {
    /// Upsampled, 1×1-projected features concatenated with the extractor
    /// output and merged by a 3×3 conv.
    FeatureConcat,
    /// Upsampled, 1×1-projected features added to the extractor output.
    FeatureSkip,
    /// The coarse image estimate, upsampled and concatenated with the finer
    /// blurred input ahead of the extractor.
    ImageConcat,
}

impl Propagation {
    pub const fn name(self) -> &'static str {
        match self {
            Propagation::FeatureConcat => "feature-concat",
            Propagation::FeatureSkip => "feature-skip",
            Propagation::ImageConcat => "image-concat",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "feature-concat" => Some(Propagation::FeatureConcat),
            "feature-skip" => Some(Propagation::FeatureSkip),
            "image-concat" => Some(Propagation::ImageConcat),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeightSharing {
    None,
    /// One UNet is reused by every stage of every scale.
    AllStagesAndScales,
}

impl WeightSharing {
    pub const fn name(self) -> &'static str {
        match self {
            WeightSharing::None => "none",
            WeightSharing::AllStagesAndScales => "all",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(WeightSharing::None),
            "all" => Some(WeightSharing::AllStagesAndScales),
            _ => None,
        }
    }
}

/// UNet widths for every stage, either one setting or one per scale.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ChannelPlan {
    Uniform(UNetChannels),
    PerScale(Vec<UNetChannels>),
}

/// `(scale, stage)`, both 1-based, scales ordered coarse to fine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HeadId {
    pub scale: usize,
    pub stage: usize,
}

impl HeadId {
    pub const fn new(scale: usize, stage: usize) -> Self {
        HeadId { scale, stage }
    }
}

impl core::fmt::Display for HeadId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "({},{})", self.scale, self.stage)
    }
}

/// Layout of an image head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadGeometry {
    /// Output channels of the head conv (3, or 12 before a pixel shuffle).
    pub conv_out: usize,
    pub shuffle: bool,
    /// Pyramid depth of the produced image: its size is the input size
    /// divided by `2^depth`.
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModelConfig {
    /// Stage counts, coarse to fine.
    pub stages_per_scale: Vec<usize>,
    pub channels: ChannelPlan,
    pub csff: bool,
    pub propagation: Propagation,
    pub pixel_unshuffle_inputs: bool,
    pub aux_pixel_shuffle_heads: bool,
    pub weight_sharing: WeightSharing,
    /// Extractor output width; equals `x` of every stage.
    pub base_channels: usize,
}

impl ModelConfig {
    /// Three scales with one, two and three stages, all fusion and
    /// pixel-shuffle features enabled.
    pub fn full(channels: UNetChannels) -> Self {
        ModelConfig {
            stages_per_scale: vec![1, 2, 3],
            channels: ChannelPlan::Uniform(channels),
            csff: true,
            propagation: Propagation::FeatureConcat,
            pixel_unshuffle_inputs: true,
            aux_pixel_shuffle_heads: true,
            weight_sharing: WeightSharing::None,
            base_channels: channels.x,
        }
    }

    /// The [`ModelConfig::full`] layout with no CSFF and no pixel
    /// (un)shuffling.
    pub fn plain(stages: &[usize], channels: UNetChannels) -> Self {
        ModelConfig {
            stages_per_scale: stages.to_vec(),
            csff: false,
            pixel_unshuffle_inputs: false,
            aux_pixel_shuffle_heads: false,
            ..Self::full(channels)
        }
    }

    /// A small instance for gradient checks and desk-scale training.
    pub fn tiny() -> Self {
        Self::full(UNetChannels::new(4, 6, 8))
    }

    pub fn num_scales(&self) -> usize {
        self.stages_per_scale.len()
    }

    /// Pyramid depth of a 0-based scale index (0 is the finest).
    pub fn depth(&self, scale: usize) -> usize {
        self.num_scales() - 1 - scale
    }

    /// UNet widths for a 0-based scale index.
    pub fn scale_channels(&self, scale: usize) -> UNetChannels {
        match &self.channels {
            ChannelPlan::Uniform(c) => *c,
            ChannelPlan::PerScale(v) => v[scale],
        }
    }

    /// Channels entering the extractor of a 0-based scale.
    pub fn extractor_input_channels(&self, scale: usize) -> usize {
        let base = if self.pixel_unshuffle_inputs && self.depth(scale) > 0 {
            12
        } else {
            3
        };
        if self.propagation == Propagation::ImageConcat && scale > 0 {
            base + 3
        } else {
            base
        }
    }

    /// Height and width must be multiples of this.
    pub fn size_multiple(&self) -> usize {
        4 << (self.num_scales().max(1) - 1)
    }

    /// Every supervised output, final head last.
    pub fn head_ids(&self) -> Vec<HeadId> {
        let mut ids = Vec::new();
        for (i, &n) in self.stages_per_scale.iter().enumerate() {
            for j in 0..n {
                ids.push(HeadId::new(i + 1, j + 1));
            }
        }
        ids
    }

    pub fn final_head(&self) -> HeadId {
        let s = self.num_scales();
        HeadId::new(s, self.stages_per_scale[s - 1])
    }

    /// Auxiliary (training-only) heads.
    pub fn aux_ids(&self) -> Vec<HeadId> {
        let last = self.final_head();
        self.head_ids().into_iter().filter(|&h| h != last).collect()
    }

    /// Whether a head also feeds inference (image propagation uses the
    /// last coarse head of each scale).
    pub fn head_used_at_inference(&self, id: HeadId) -> bool {
        id == self.final_head()
            || (self.propagation == Propagation::ImageConcat
                && id.scale < self.num_scales()
                && id.stage == self.stages_per_scale[id.scale - 1])
    }

    pub fn head_geometry(&self, id: HeadId) -> HeadGeometry {
        let d = self.depth(id.scale - 1);
        if id == self.final_head() || d == 0 {
            HeadGeometry {
                conv_out: 3,
                shuffle: false,
                depth: d,
            }
        } else if self.aux_pixel_shuffle_heads {
            HeadGeometry {
                conv_out: 12,
                shuffle: true,
                depth: d - 1,
            }
        } else {
            HeadGeometry {
                conv_out: 3,
                shuffle: false,
                depth: d,
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.stages_per_scale.is_empty() {
            return bad("at least one scale is required".to_string());
        }
        if self.stages_per_scale.contains(&0) {
            return bad("every scale needs at least one stage".to_string());
        }
        if let ChannelPlan::PerScale(v) = &self.channels {
            if v.len() != self.num_scales() {
                return bad(format!("{} channel settings for {} scales", v.len(), self.num_scales()));
            }
        }
        for s in 0..self.num_scales() {
            let c = self.scale_channels(s);
            if c.x == 0 || c.y == 0 || c.z == 0 {
                return bad(format!("scale {} has a zero channel width", s + 1));
            }
            if c.x != self.base_channels {
                return bad(format!(
                    "scale {} has x = {} but base_channels = {}",
                    s + 1,
                    c.x,
                    self.base_channels
                ));
            }
        }
        if self.csff && self.propagation != Propagation::FeatureConcat {
            return bad(format!("{} propagation requires csff = false", self.propagation.name()));
        }
        if self.aux_pixel_shuffle_heads && !self.pixel_unshuffle_inputs {
            return bad("pixel-shuffle heads require pixel-unshuffled inputs".to_string());
        }
        if self.propagation == Propagation::ImageConcat && self.pixel_unshuffle_inputs {
            return bad("image propagation is defined for plain (not unshuffled) inputs".to_string());
        }
        if self.weight_sharing == WeightSharing::AllStagesAndScales {
            if let ChannelPlan::PerScale(v) = &self.channels {
                if v.windows(2).any(|w| w[0] != w[1]) {
                    return bad("shared weights need identical channels at every scale".to_string());
                }
            }
        }
        Ok(())
    }
}

/// Every name accepted by [`preset`].
pub const PRESETS: &[&str] = &[
    "MSSNet",
    "MSSNet-small",
    "MSSNet-large",
    "MSSNet-WS",
    "MSSNet-Single",
    "MSSNet-Multi",
    "MSSNet-Multi-Small",
    "M123",
    "M123-shared",
    "M552",
    "M321",
    "M222",
    "MSS-ImageConcat",
    "MSS-FeatureSkip",
    "MSS-FeatureConcat",
    "NoPUS-NoPS",
    "PUS-only",
    "PUS-PS",
    "tiny",
];

const BASE: UNetChannels = UNetChannels::new(54, 96, 138);
const SMALL: UNetChannels = UNetChannels::new(20, 60, 100);
const LARGE: UNetChannels = UNetChannels::new(80, 130, 180);
const NARROW: UNetChannels = UNetChannels::new(20, 36, 52);

pub fn preset(name: &str) -> Result<ModelConfig> {
    let shared = |stages: &[usize]| ModelConfig {
        stages_per_scale: stages.to_vec(),
        weight_sharing: WeightSharing::AllStagesAndScales,
        ..ModelConfig::full(SMALL)
    };
    let multi = ModelConfig {
        csff: false,
        ..ModelConfig::full(SMALL)
    };
    let cfg = match name {
        "MSSNet" => ModelConfig::full(BASE),
        "MSSNet-small" => ModelConfig::full(SMALL),
        "MSSNet-large" => ModelConfig::full(LARGE),
        "MSSNet-WS" => ModelConfig {
            weight_sharing: WeightSharing::AllStagesAndScales,
            ..ModelConfig::full(BASE)
        },
        "MSSNet-Single" => ModelConfig::plain(&[4], SMALL),
        "MSSNet-Multi" | "PUS-PS" => multi,
        "MSSNet-Multi-Small" => ModelConfig {
            channels: ChannelPlan::PerScale(vec![NARROW, NARROW, SMALL]),
            ..multi
        },
        "M123" | "MSS-FeatureConcat" | "NoPUS-NoPS" => ModelConfig::plain(&[1, 2, 3], SMALL),
        "M321" => ModelConfig::plain(&[3, 2, 1], SMALL),
        "M222" => ModelConfig::plain(&[2, 2, 2], SMALL),
        "M123-shared" => shared(&[1, 2, 3]),
        "M552" => shared(&[5, 5, 2]),
        "MSS-ImageConcat" => ModelConfig {
            propagation: Propagation::ImageConcat,
            ..ModelConfig::plain(&[1, 2, 3], SMALL)
        },
        "MSS-FeatureSkip" => ModelConfig {
            propagation: Propagation::FeatureSkip,
            ..ModelConfig::plain(&[1, 2, 3], SMALL)
        },
        "PUS-only" => ModelConfig {
            aux_pixel_shuffle_heads: false,
            ..multi
        },
        "tiny" => ModelConfig::tiny(),
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    Ok(cfg)
}

/// 3×3 conv followed by one ResBlock.
#[derive(Debug, Clone, Copy)]
pub struct Extractor {
    pub conv: Conv,
    pub res: ResBlock,
}

impl Extractor {
    fn forward<T: Real, B: Backend<T>>(&self, b: &mut B, x: &B::Value) -> Result<B::Value> {
        let h = self.conv.forward(b, x)?;
        self.res.forward(b, &h)
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Fusion {
    Concat { proj: Conv, merge: Conv },
    Skip { proj: Conv },
}

#[derive(Debug, Clone)]
pub struct ScaleBlock {
    pub extractor: Extractor,
    pub fusion: Option<Fusion>,
    pub stages: Vec<UNet>,
}

/// Layer handles of a built network; the weights live in a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Network {
    pub config: ModelConfig,
    pub scales: Vec<ScaleBlock>,
    pub final_conv: Conv,
    pub heads: BTreeMap<HeadId, Conv>,
}

/// A network together with its weights.
#[derive(Debug, Clone)]
pub struct Model<T> {
    pub net: Network,
    pub store: ParamStore<T>,
}

/// Registers every Variable of `config` in a fresh store.
pub fn build_model<T: Real>(config: &ModelConfig, seed: u64) -> Result<Model<T>> {
    build_model_with(config, Init::new(seed))
}

pub fn build_model_with<T: Real>(config: &ModelConfig, mut init: Init) -> Result<Model<T>> {
    config.validate()?;
    let mut store = ParamStore::new();
    let init = &mut init;
    let x = config.base_channels;

    let shared = match config.weight_sharing {
        WeightSharing::AllStagesAndScales => Some(UNet::new(
            &mut store,
            "shared",
            config.scale_channels(0),
            config.csff,
            init,
        )?),
        WeightSharing::None => None,
    };

    let mut scales = Vec::with_capacity(config.num_scales());
    for (i, &n) in config.stages_per_scale.iter().enumerate() {
        let s = i + 1;
        let cin = config.extractor_input_channels(i);
        let extractor = Extractor {
            conv: Conv::new(&mut store, &format!("s{s}/extract/conv"), ConvSpec::same(3, cin, x), init)?,
            res: ResBlock::new(&mut store, &format!("s{s}/extract/res"), x, init)?,
        };
        let fusion = if i == 0 {
            None
        } else {
            match config.propagation {
                Propagation::FeatureConcat => Some(Fusion::Concat {
                    proj: Conv::new(&mut store, &format!("s{s}/fusion/proj"), ConvSpec::same(1, x, x), init)?,
                    merge: Conv::new(&mut store, &format!("s{s}/fusion/merge"), ConvSpec::same(3, 2 * x, x), init)?,
                }),
                Propagation::FeatureSkip => Some(Fusion::Skip {
                    proj: Conv::residual(&mut store, &format!("s{s}/fusion/proj"), ConvSpec::same(1, x, x), init)?,
                }),
                Propagation::ImageConcat => None,
            }
        };
        let mut stages = Vec::with_capacity(n);
        for j in 0..n {
            let u = match &shared {
                Some(u) => *u,
                None => UNet::new(
                    &mut store,
                    &format!("s{s}/u{}", j + 1),
                    config.scale_channels(i),
                    config.csff && (i, j) != (0, 0),
                    init,
                )?,
            };
            stages.push(u);
        }
        scales.push(ScaleBlock {
            extractor,
            fusion,
            stages,
        });
    }

    let final_conv = Conv::residual(&mut store, "final", ConvSpec::same(3, x, 3), init)?;
    let mut heads = BTreeMap::new();
    for id in config.aux_ids() {
        let g = config.head_geometry(id);
        let conv = Conv::residual(
            &mut store,
            &format!("head/s{}/u{}", id.scale, id.stage),
            ConvSpec::same(3, x, g.conv_out),
            init,
        )?;
        heads.insert(id, conv);
    }

    Ok(Model {
        net: Network {
            config: config.clone(),
            scales,
            final_conv,
            heads,
        },
        store,
    })
}

/// Blurred pyramid and per-scale network inputs.
#[derive(Debug, Clone)]
pub struct ScaleInputs<V> {
    /// `pyramid[d]` is the blurred image downsampled `d` times.
    pub pyramid: Vec<V>,
    /// Extractor inputs (before any image propagation), coarse to fine.
    pub inputs: Vec<V>,
}

/// Builds the blurred pyramid and the per-scale inputs: unshuffled
/// images one level up the pyramid when `pixel_unshuffle_inputs` is set,
/// plain downsampled images otherwise.
pub fn make_inputs<T: Real, B: Backend<T>>(b: &mut B, blurred: &B::Value, config: &ModelConfig) -> Result<ScaleInputs<B::Value>> {
    let shape = b.shape(blurred);
    if shape.c != 3 {
        return Err(Error::contract("make_inputs", format!("expected 3 channels, got {}", shape.c)));
    }
    let m = config.size_multiple();
    if shape.h % m != 0 || shape.w % m != 0 {
        return Err(Error::contract(
            "make_inputs",
            format!("{}x{} is not a multiple of {m} in both dimensions", shape.h, shape.w),
        ));
    }
    let s = config.num_scales();
    let mut pyramid = vec![blurred.clone()];
    for d in 1..s {
        let next = b.resize(&pyramid[d - 1], Resize::Half)?;
        pyramid.push(next);
    }
    let mut inputs = Vec::with_capacity(s);
    for i in 0..s {
        let d = config.depth(i);
        let x = if config.pixel_unshuffle_inputs && d > 0 {
            b.pixel_unshuffle(&pyramid[d - 1], 2)?
        } else {
            pyramid[d].clone()
        };
        inputs.push(x);
    }
    Ok(ScaleInputs { pyramid, inputs })
}

/// Merges the coarse scale's decoder output into the finer extractor
/// features.
pub fn fuse_scale<T: Real, B: Backend<T>>(
    b: &mut B,
    fusion: &Fusion,
    coarse_dec: &B::Value,
    fine_feat: &B::Value,
) -> Result<B::Value> {
    let up = b.resize(coarse_dec, Resize::Double)?;
    match fusion {
        Fusion::Concat { proj, merge } => {
            let p = proj.forward(b, &up)?;
            let cat = b.concat(fine_feat, &p)?;
            merge.forward(b, &cat)
        }
        Fusion::Skip { proj } => {
            let p = proj.forward(b, &up)?;
            b.add(fine_feat, &p)
        }
    }
}

/// Final image, residual and the auxiliary stage outputs.
#[derive(Debug, Clone)]
pub struct ForwardOutputs<V> {
    pub final_image: V,
    pub residual: V,
    pub final_id: HeadId,
    pub aux: BTreeMap<HeadId, V>,
}

impl<V> ForwardOutputs<V> {
    /// Output of any head, the final one included.
    pub fn image(&self, id: HeadId) -> Option<&V> {
        if id == self.final_id {
            Some(&self.final_image)
        } else {
            self.aux.get(&id)
        }
    }

    /// All heads in `(scale, stage)` order.
    pub fn heads(&self) -> impl Iterator<Item = (HeadId, &V)> {
        self.aux
            .iter()
            .map(|(k, v)| (*k, v))
            .chain(core::iter::once((self.final_id, &self.final_image)))
    }
}

fn run_head<T: Real, B: Backend<T>>(
    b: &mut B,
    conv: &Conv,
    g: HeadGeometry,
    feat: &B::Value,
    pyramid: &[B::Value],
) -> Result<B::Value> {
    let mut r = conv.forward(b, feat)?;
    if g.shuffle {
        r = b.pixel_shuffle(&r, 2)?;
    }
    b.add(&r, &pyramid[g.depth])
}

/// Runs the network on a blurred batch. With `train` set, every auxiliary
/// head is evaluated as well.
pub fn model_forward<T: Real, B: Backend<T>>(
    b: &mut B,
    net: &Network,
    blurred: &B::Value,
    train: bool,
) -> Result<ForwardOutputs<B::Value>> {
    let cfg = &net.config;
    let ScaleInputs { pyramid, inputs } = make_inputs(b, blurred, cfg)?;
    let mut aux = BTreeMap::new();
    let mut prev: Option<StageFeatures<B::Value>> = None;
    let mut prev_image: Option<B::Value> = None;

    for (i, block) in net.scales.iter().enumerate() {
        let mut x = inputs[i].clone();
        if let Some(img) = prev_image.take() {
            let up = b.resize(&img, Resize::Double)?;
            x = b.concat(&x, &up)?;
        }
        let mut feat = block.extractor.forward(b, &x)?;
        if let (Some(f), Some(p)) = (&block.fusion, &prev) {
            feat = fuse_scale(b, f, p.head(), &feat)?;
        }
        let mut cross = match (&prev, cfg.csff) {
            (Some(p), true) => Some(p.map(|v| b.resize(v, Resize::Double))?),
            _ => None,
        };
        let mut last: Option<StageFeatures<B::Value>> = None;
        for (j, unet) in block.stages.iter().enumerate() {
            let input = match &last {
                Some(l) => l.head().clone(),
                None => feat.clone(),
            };
            let p = match &last {
                Some(l) if cfg.csff => Some(l),
                Some(_) => None,
                None => cross.as_ref(),
            };
            let out = unet.forward(b, &input, p)?;
            cross = None;
            let id = HeadId::new(i + 1, j + 1);
            if let Some(conv) = net.heads.get(&id) {
                if train || cfg.head_used_at_inference(id) {
                    let img = run_head(b, conv, cfg.head_geometry(id), out.head(), &pyramid)?;
                    if cfg.head_used_at_inference(id) {
                        prev_image = Some(img.clone());
                    }
                    aux.insert(id, img);
                }
            }
            last = Some(out);
        }
        prev = last;
    }

    let last = prev.expect("at least one scale");
    let residual = net.final_conv.forward(b, last.head())?;
    let final_image = b.add(&residual, &pyramid[0])?;
    Ok(ForwardOutputs {
        final_image,
        residual,
        final_id: cfg.final_head(),
        aux,
    })
}

impl<T: Real> Model<T> {
    pub fn config(&self) -> &ModelConfig {
        &self.net.config
    }

    pub fn forward<B: Backend<T>>(&self, b: &mut B, blurred: &B::Value, train: bool) -> Result<ForwardOutputs<B::Value>> {
        model_forward(b, &self.net, blurred, train)
    }

    /// Deblurs a batch without building a graph.
    pub fn infer(&self, blurred: &Tensor<T>) -> Result<Tensor<T>> {
        let mut b = Eager::new(&self.store);
        let x = b.constant(blurred.clone());
        let out = model_forward(&mut b, &self.net, &x, false)?;
        Ok(b.into_tensor(out.final_image))
    }
}
