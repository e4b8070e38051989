//! Symbolic parameter and MAC accounting.
//!
//! The layer table is derived from a [`ModelConfig`] alone, without building
//! the network, so it doubles as an independent check on the builder.
//! MACs count convolution multiply-accumulates only; activations, sums,
//! resampling and shuffles are free, and training-only heads are excluded.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::autodiff::ParamStore;
use crate::error::{Error, Result};
use crate::model::{preset, ModelConfig, Propagation, WeightSharing};
use crate::real::Real;
use crate::unet::UNetChannels;

/// Relative tolerance on parameter totals.
pub const PARAM_TOL: f64 = 0.01;
/// Relative tolerance on MAC totals.
pub const MAC_TOL: f64 = 0.05;
/// Default audit resolution as `(height, width)`.
pub const DEFAULT_RESOLUTION: (usize, usize) = (720, 1280);

/// Convention line printed with every report.
pub const MAC_CONVENTION: &str =
    "MACs = conv multiply-accumulates (k*k*c_in*c_out*H_out*W_out); PReLU, sums, resampling, shuffles excluded; training-only heads excluded";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv { k: usize, c_in: usize, c_out: usize },
    PRelu { channels: usize },
}

impl LayerKind {
    pub fn params(&self) -> u64 {
        match *self {
            LayerKind::Conv { k, c_in, c_out } => (k * k * c_in * c_out) as u64,
            LayerKind::PRelu { channels } => channels as u64,
        }
    }

    fn macs_per_pixel(&self) -> u64 {
        match self {
            LayerKind::Conv { .. } => self.params(),
            LayerKind::PRelu { .. } => 0,
        }
    }
}

/// One application of a layer: output resolution is the input size divided
/// by `2^shift`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerUse {
    pub shift: u32,
    pub train_only: bool,
}

/// A uniquely named parameter tensor and every place it is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub path: String,
    pub kind: LayerKind,
    pub uses: Vec<LayerUse>,
}

impl Layer {
    /// Inference MACs at `h×w`.
    pub fn macs(&self, h: usize, w: usize) -> f64 {
        let px = (h * w) as f64;
        self.uses
            .iter()
            .filter(|u| !u.train_only)
            .map(|u| self.kind.macs_per_pixel() as f64 * px / (1u64 << (2 * u.shift)) as f64)
            .sum()
    }
}

#[derive(Default)]
struct Table {
    layers: Vec<Layer>,
    index: BTreeMap<String, usize>,
}

impl Table {
    /// Registers a parameter tensor without applying it.
    fn declare(&mut self, path: String, kind: LayerKind) -> usize {
        if let Some(&i) = self.index.get(&path) {
            debug_assert_eq!(self.layers[i].kind, kind, "{path}");
            return i;
        }
        self.index.insert(path.clone(), self.layers.len());
        self.layers.push(Layer {
            path,
            kind,
            uses: Vec::new(),
        });
        self.layers.len() - 1
    }

    fn add(&mut self, path: String, kind: LayerKind, shift: u32, train_only: bool) {
        let i = self.declare(path, kind);
        self.layers[i].uses.push(LayerUse { shift, train_only });
    }

    fn conv(&mut self, path: String, k: usize, c_in: usize, c_out: usize, shift: u32, train_only: bool) {
        self.add(path, LayerKind::Conv { k, c_in, c_out }, shift, train_only);
    }

    fn res(&mut self, path: &str, n: usize, shift: u32) {
        self.conv(format!("{path}/conv1"), 3, n, n, shift, false);
        self.add(format!("{path}/prelu"), LayerKind::PRelu { channels: n }, shift, false);
        self.conv(format!("{path}/conv2"), 3, n, n, shift, false);
    }

    /// One application of a UNet whose level 1 runs at `shift`.
    fn unet(&mut self, p: &str, ch: UNetChannels, csff_params: bool, csff_used: bool, shift: u32) {
        let c = ch.levels();
        for l in 0..3u32 {
            let s = shift + l;
            let n = c[l as usize];
            if l > 0 {
                self.conv(format!("{p}/down{l}"), 1, c[l as usize - 1], n, s, false);
            }
            for r in 0..2 {
                self.res(&format!("{p}/enc{}/res{r}", l + 1), n, s);
            }
            if csff_params {
                for kind in ["enc", "dec"] {
                    let path = format!("{p}/csff/{kind}{}", l + 1);
                    let conv = LayerKind::Conv { k: 1, c_in: n, c_out: n };
                    if csff_used {
                        self.add(path, conv, s, false);
                    } else {
                        self.declare(path, conv);
                    }
                }
            }
        }
        for l in (0..3u32).rev() {
            let s = shift + l;
            let n = c[l as usize];
            if l < 2 {
                self.conv(format!("{p}/up{}", l + 2), 1, c[l as usize + 1], n, s, false);
                self.res(&format!("{p}/skip{}", l + 1), n, s);
            }
            for r in 0..2 {
                self.res(&format!("{p}/dec{}/res{r}", l + 1), n, s);
            }
        }
    }
}

/// Every parameter tensor `config` implies, with its applications.
pub fn layer_table(config: &ModelConfig) -> Result<Vec<Layer>> {
    config.validate()?;
    let mut t = Table::default();
    let scales = config.stages_per_scale.len();
    let x = config.base_channels;
    let shared = config.weight_sharing == WeightSharing::AllStagesAndScales;
    let image_prop = config.propagation == Propagation::ImageConcat;

    for (i, &stages) in config.stages_per_scale.iter().enumerate() {
        let s = i + 1;
        let depth = (scales - 1 - i) as u32;
        let unshuffled = config.pixel_unshuffle_inputs && depth > 0;
        let mut c_in = if unshuffled { 12 } else { 3 };
        if image_prop && i > 0 {
            c_in += 3;
        }
        t.conv(format!("s{s}/extract/conv"), 3, c_in, x, depth, false);
        t.res(&format!("s{s}/extract/res"), x, depth);
        if i > 0 {
            match config.propagation {
                Propagation::FeatureConcat => {
                    t.conv(format!("s{s}/fusion/proj"), 1, x, x, depth, false);
                    t.conv(format!("s{s}/fusion/merge"), 3, 2 * x, x, depth, false);
                }
                Propagation::FeatureSkip => t.conv(format!("s{s}/fusion/proj"), 1, x, x, depth, false),
                Propagation::ImageConcat => {}
            }
        }
        let ch = config.scale_channels(i);
        for j in 0..stages {
            let first = i == 0 && j == 0;
            let path = if shared { "shared".to_string() } else { format!("s{s}/u{}", j + 1) };
            let has_csff = config.csff && (shared || !first);
            t.unet(&path, ch, has_csff, config.csff && !first, depth);
        }
    }

    t.conv("final".to_string(), 3, x, 3, 0, false);
    for (i, &stages) in config.stages_per_scale.iter().enumerate() {
        let depth = (scales - 1 - i) as u32;
        for j in 0..stages {
            let last_scale = i + 1 == scales;
            let last_stage = j + 1 == stages;
            if last_scale && last_stage {
                continue;
            }
            let c_out = if depth > 0 && config.aux_pixel_shuffle_heads { 12 } else { 3 };
            let feeds_next = image_prop && last_stage;
            t.conv(format!("head/s{}/u{}", i + 1, j + 1), 3, x, c_out, depth, !feeds_next);
        }
    }
    Ok(t.layers)
}

/// A published reference point for one variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub variant: &'static str,
    pub params_m: f64,
    pub macs_g: f64,
    pub source: &'static str,
}

const MAIN: &str = "main comparison";
const SHARING: &str = "weight-sharing comparison";
const SCALES: &str = "single- vs multi-scale study";
const SHARED_LAYOUT: &str = "stage-layout study (shared weights)";
const LAYOUT: &str = "stage-layout study (unshared)";
const PROPAGATION: &str = "scale-propagation study";
const SHUFFLE: &str = "pixel-shuffle study";

/// Every embedded reference point.
pub const ANCHORS: &[Anchor] = &[
    Anchor { variant: "MSSNet", params_m: 15.59, macs_g: 2159.0, source: MAIN },
    Anchor { variant: "MSSNet-small", params_m: 6.75, macs_g: 634.0, source: MAIN },
    Anchor { variant: "MSSNet-large", params_m: 28.15, macs_g: 4235.0, source: MAIN },
    Anchor { variant: "MSSNet-WS", params_m: 2.85, macs_g: 2057.0, source: SHARING },
    Anchor { variant: "MSSNet-Single", params_m: 4.39, macs_g: 660.69, source: SCALES },
    Anchor { variant: "MSSNet-Multi-Small", params_m: 4.38, macs_g: 574.82, source: SCALES },
    Anchor { variant: "MSSNet-Multi", params_m: 6.61, macs_g: 621.60, source: SCALES },
    Anchor { variant: "M123-shared", params_m: 1.18, macs_g: 521.33, source: SHARED_LAYOUT },
    Anchor { variant: "M552", params_m: 1.18, macs_g: 521.33, source: SHARED_LAYOUT },
    Anchor { variant: "M321", params_m: 6.61, macs_g: 305.14, source: LAYOUT },
    Anchor { variant: "M222", params_m: 6.61, macs_g: 463.14, source: LAYOUT },
    Anchor { variant: "M123", params_m: 6.61, macs_g: 621.14, source: LAYOUT },
    Anchor { variant: "MSS-ImageConcat", params_m: 6.59, macs_g: 613.1, source: PROPAGATION },
    Anchor { variant: "MSS-FeatureSkip", params_m: 6.59, macs_g: 621.8, source: PROPAGATION },
    Anchor { variant: "MSS-FeatureConcat", params_m: 6.61, macs_g: 621.1, source: PROPAGATION },
    Anchor { variant: "NoPUS-NoPS", params_m: 6.61, macs_g: 621.1, source: SHUFFLE },
    Anchor { variant: "PUS-only", params_m: 6.61, macs_g: 621.6, source: SHUFFLE },
    Anchor { variant: "PUS-PS", params_m: 6.61, macs_g: 621.6, source: SHUFFLE },
];

pub fn anchor(variant: &str) -> Result<Anchor> {
    ANCHORS
        .iter()
        .find(|a| a.variant == variant)
        .copied()
        .ok_or_else(|| Error::MissingAnchor(variant.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditRow {
    pub name: String,
    pub params: u64,
    pub macs: f64,
}

/// Signed difference of a measured total against a reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Delta {
    pub expected: f64,
    pub measured: f64,
}

impl Delta {
    pub fn absolute(&self) -> f64 {
        self.measured - self.expected
    }

    pub fn relative(&self) -> f64 {
        self.absolute() / self.expected
    }

    pub fn within(&self, tol: f64) -> bool {
        self.relative().abs() <= tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub variant: Option<String>,
    pub rows: Vec<AuditRow>,
    pub total_params: u64,
    pub total_macs: f64,
    pub height: usize,
    pub width: usize,
    pub anchor: Option<Anchor>,
}

impl AuditReport {
    pub fn params_m(&self) -> f64 {
        self.total_params as f64 / 1e6
    }

    pub fn macs_g(&self) -> f64 {
        self.total_macs / 1e9
    }

    pub fn param_delta(&self) -> Option<Delta> {
        self.anchor.map(|a| Delta {
            expected: a.params_m,
            measured: self.params_m(),
        })
    }

    pub fn mac_delta(&self) -> Option<Delta> {
        self.anchor.map(|a| Delta {
            expected: a.macs_g,
            measured: self.macs_g(),
        })
    }

    pub fn params_pass(&self) -> Option<bool> {
        self.param_delta().map(|d| d.within(PARAM_TOL))
    }

    pub fn macs_pass(&self) -> Option<bool> {
        self.mac_delta().map(|d| d.within(MAC_TOL))
    }

    /// Both totals inside tolerance (vacuously true without an anchor).
    pub fn passed(&self) -> bool {
        self.params_pass().unwrap_or(true) && self.macs_pass().unwrap_or(true)
    }

    /// Rows summed by module (the path up to its second separator).
    pub fn modules(&self) -> Vec<AuditRow> {
        let mut out: Vec<AuditRow> = Vec::new();
        for r in &self.rows {
            let key: String = match r.name.match_indices('/').nth(1) {
                Some((i, _)) => r.name[..i].to_string(),
                None => r.name.clone(),
            };
            match out.last_mut() {
                Some(last) if last.name == key => {
                    last.params += r.params;
                    last.macs += r.macs;
                }
                _ => out.push(AuditRow {
                    name: key,
                    params: r.params,
                    macs: r.macs,
                }),
            }
        }
        out
    }
}

/// Parameters and inference MACs at `h×w`.
pub fn audit(config: &ModelConfig, h: usize, w: usize) -> Result<AuditReport> {
    let rows: Vec<AuditRow> = layer_table(config)?
        .iter()
        .map(|l| AuditRow {
            name: l.path.clone(),
            params: l.kind.params(),
            macs: l.macs(h, w),
        })
        .collect();
    Ok(AuditReport {
        variant: None,
        total_params: rows.iter().map(|r| r.params).sum(),
        total_macs: rows.iter().map(|r| r.macs).sum(),
        rows,
        height: h,
        width: w,
        anchor: None,
    })
}

/// Parameter totals only.
pub fn count_params(config: &ModelConfig) -> Result<AuditReport> {
    let mut r = audit(config, 0, 0)?;
    r.rows.iter_mut().for_each(|row| row.macs = 0.0);
    r.total_macs = 0.0;
    Ok(r)
}

pub fn count_macs(config: &ModelConfig, h: usize, w: usize) -> Result<AuditReport> {
    audit(config, h, w)
}

/// Audits a named preset at the default resolution against its anchor.
pub fn audit_against_reference(variant: &str) -> Result<AuditReport> {
    let (h, w) = DEFAULT_RESOLUTION;
    audit_variant(variant, h, w)
}

pub fn audit_variant(variant: &str, h: usize, w: usize) -> Result<AuditReport> {
    let a = anchor(variant)?;
    let mut r = audit(&preset(variant)?, h, w)?;
    r.variant = Some(variant.to_string());
    r.anchor = Some(a);
    Ok(r)
}

/// Outcome of comparing the symbolic table to a built store.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountCheck {
    pub symbolic: u64,
    pub concrete: u64,
    /// Paths missing on one side or differing in size.
    pub mismatches: Vec<String>,
}

impl CountCheck {
    pub fn passed(&self) -> bool {
        self.symbolic == self.concrete && self.mismatches.is_empty()
    }
}

/// Compares the symbolic per-path counts against the Variables of `store`.
pub fn verify_counts<T: Real>(config: &ModelConfig, store: &ParamStore<T>) -> Result<CountCheck> {
    let table = layer_table(config)?;
    let mut mismatches = Vec::new();
    for l in &table {
        match store.id(&l.path) {
            None => mismatches.push(format!("{}: missing from model", l.path)),
            Some(id) => {
                let n = store.value(id).numel() as u64;
                if n != l.kind.params() {
                    mismatches.push(format!("{}: {} in model, {} expected", l.path, n, l.kind.params()));
                }
            }
        }
    }
    let known: BTreeMap<&str, ()> = table.iter().map(|l| (l.path.as_str(), ())).collect();
    for (_, v) in store.iter() {
        if !known.contains_key(v.name()) {
            mismatches.push(format!("{}: not in layer table", v.name()));
        }
    }
    Ok(CountCheck {
        symbolic: table.iter().map(|l| l.kind.params()).sum(),
        concrete: store.numel() as u64,
        mismatches,
    })
}

/// Builds `config` and checks it against the symbolic table.
pub fn verify_counts_against_built_model(config: &ModelConfig) -> Result<CountCheck> {
    let model = crate::model::build_model::<f32>(config, 0)?;
    verify_counts(config, &model.store)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn res(n: u64) -> u64 {
        18 * n * n + n
    }

    #[test]
    fn unet_closed_form() {
        let cfg = ModelConfig::plain(&[1], UNetChannels::new(54, 96, 138));
        let r = count_params(&cfg).unwrap();
        let unet: u64 = r.rows.iter().filter(|r| r.name.starts_with("s1/u1/")).map(|r| r.params).sum();
        let (x, y, z) = (54, 96, 138);
        assert_eq!(unet, 5 * res(x) + 5 * res(y) + 4 * res(z) + 2 * x * y + 2 * y * z);
    }

    #[test]
    fn totals_are_row_sums() {
        let r = audit(&preset("MSSNet").unwrap(), 720, 1280).unwrap();
        assert_eq!(r.total_params, r.rows.iter().map(|x| x.params).sum::<u64>());
        let m: f64 = r.modules().iter().map(|x| x.macs).sum();
        assert!((m - r.total_macs).abs() < 1.0);
    }

    #[test]
    fn macs_scale_with_area() {
        let cfg = preset("MSSNet-small").unwrap();
        let a = audit(&cfg, 720, 1280).unwrap();
        let b = audit(&cfg, 360, 640).unwrap();
        assert_eq!(a.total_macs, 4.0 * b.total_macs);
        assert_eq!(a.total_params, b.total_params);
    }

    #[test]
    fn missing_anchor() {
        assert!(matches!(anchor("tiny"), Err(Error::MissingAnchor(_))));
    }

    #[test]
    fn tiny_counts_match_builder() {
        let c = verify_counts_against_built_model(&ModelConfig::tiny()).unwrap();
        assert!(c.passed(), "{:?}", c.mismatches);
    }
}
