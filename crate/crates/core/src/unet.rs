//! The three-level UNet used for every stage, with optional cross-stage
//! feature fusion (CSFF) from a previous stage or scale.

use alloc::format;

use crate::autodiff::{Backend, ParamStore};
use crate::error::{Error, Result};
use crate::kernels::Resize;
use crate::layers::{Conv, ConvSpec, Init, ResBlock};
use crate::real::Real;

/// Channel widths at encoder/decoder levels 1, 2 and 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct UNetChannels {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl UNetChannels {
    pub const fn new(x: usize, y: usize, z: usize) -> Self {
        UNetChannels { x, y, z }
    }

    pub const fn levels(&self) -> [usize; 3] {
        [self.x, self.y, self.z]
    }
}

impl core::fmt::Display for UNetChannels {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// Encoder outputs `el_1..el_3` and decoder outputs `dl_1..dl_3` of one stage.
#[derive(Debug, Clone)]
pub struct StageFeatures<V> {
    pub enc: [V; 3],
    pub dec: [V; 3],
}

impl<V: Clone> StageFeatures<V> {
    /// Decoder level-1 features, the stage's main output.
    pub fn head(&self) -> &V {
        &self.dec[0]
    }

    pub fn map<W>(&self, mut f: impl FnMut(&V) -> Result<W>) -> Result<StageFeatures<W>> {
        let [e1, e2, e3] = &self.enc;
        let [d1, d2, d3] = &self.dec;
        Ok(StageFeatures {
            enc: [f(e1)?, f(e2)?, f(e3)?],
            dec: [f(d1)?, f(d2)?, f(d3)?],
        })
    }
}

/// 1×1 projections of previous encoder and decoder features.
#[derive(Debug, Clone, Copy)]
pub struct Csff {
    pub enc: [Conv; 3],
    pub dec: [Conv; 3],
}

#[derive(Debug, Clone, Copy)]
pub struct UNet {
    pub channels: UNetChannels,
    pub enc: [[ResBlock; 2]; 3],
    /// 1×1 convs after each bi-down (x→y, y→z).
    pub down: [Conv; 2],
    /// Decoder blocks, indexed by level (0 is level 1).
    pub dec: [[ResBlock; 2]; 3],
    /// 1×1 convs after each bi-up (y→x, z→y), indexed by target level.
    pub up: [Conv; 2],
    /// Skip ResBlocks on `el_1` and `el_2`.
    pub skip: [ResBlock; 2],
    pub csff: Option<Csff>,
}

impl UNet {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        path: &str,
        channels: UNetChannels,
        csff: bool,
        init: &mut Init,
    ) -> Result<Self> {
        let c = channels.levels();
        let pair = |store: &mut ParamStore<T>, part: &str, level: usize, init: &mut Init| -> Result<[ResBlock; 2]> {
            Ok([
                ResBlock::new(store, &format!("{path}/{part}{}/res0", level + 1), c[level], init)?,
                ResBlock::new(store, &format!("{path}/{part}{}/res1", level + 1), c[level], init)?,
            ])
        };
        let enc0 = pair(store, "enc", 0, init)?;
        let down0 = Conv::new(store, &format!("{path}/down1"), ConvSpec::same(1, c[0], c[1]), init)?;
        let enc1 = pair(store, "enc", 1, init)?;
        let down1 = Conv::new(store, &format!("{path}/down2"), ConvSpec::same(1, c[1], c[2]), init)?;
        let enc2 = pair(store, "enc", 2, init)?;
        let dec2 = pair(store, "dec", 2, init)?;
        let up1 = Conv::residual(store, &format!("{path}/up3"), ConvSpec::same(1, c[2], c[1]), init)?;
        let skip1 = ResBlock::new(store, &format!("{path}/skip2"), c[1], init)?;
        let dec1 = pair(store, "dec", 1, init)?;
        let up0 = Conv::residual(store, &format!("{path}/up2"), ConvSpec::same(1, c[1], c[0]), init)?;
        let skip0 = ResBlock::new(store, &format!("{path}/skip1"), c[0], init)?;
        let dec0 = pair(store, "dec", 0, init)?;
        let csff = if csff {
            let mut proj = |kind: &str, level: usize, init: &mut Init| {
                Conv::residual(
                    store,
                    &format!("{path}/csff/{kind}{}", level + 1),
                    ConvSpec::same(1, c[level], c[level]),
                    init,
                )
            };
            let enc = [proj("enc", 0, init)?, proj("enc", 1, init)?, proj("enc", 2, init)?];
            let dec = [proj("dec", 0, init)?, proj("dec", 1, init)?, proj("dec", 2, init)?];
            Some(Csff { enc, dec })
        } else {
            None
        };
        Ok(UNet {
            channels,
            enc: [enc0, enc1, enc2],
            down: [down0, down1],
            dec: [dec0, dec1, dec2],
            up: [up0, up1],
            skip: [skip0, skip1],
            csff,
        })
    }

    /// Runs the stage on `feat` (x channels). `prev` supplies the previous
    /// stage's or scale's features and requires a CSFF-enabled stage.
    pub fn forward<T: Real, B: Backend<T>>(
        &self,
        b: &mut B,
        feat: &B::Value,
        prev: Option<&StageFeatures<B::Value>>,
    ) -> Result<StageFeatures<B::Value>> {
        let fs = b.shape(feat);
        if fs.c != self.channels.x {
            return Err(Error::contract(
                "unet",
                format!("input has {} channels, stage expects {}", fs.c, self.channels.x),
            ));
        }
        if fs.h % 4 != 0 || fs.w % 4 != 0 {
            return Err(Error::contract("unet", format!("spatial size {}x{} is not divisible by 4", fs.h, fs.w)));
        }
        let fusion = match (prev, &self.csff) {
            (Some(p), Some(c)) => Some((p, c)),
            (None, _) => None,
            (Some(_), None) => return Err(Error::contract("unet", "previous features supplied to a stage without CSFF")),
        };
        let levels = self.channels.levels();
        if let Some((p, _)) = fusion {
            for (l, &c) in levels.iter().enumerate() {
                let want = fs.with_channels(c).with_spatial(fs.h >> l, fs.w >> l);
                for (kind, v) in [("enc", &p.enc[l]), ("dec", &p.dec[l])] {
                    let got = b.shape(v);
                    if got != want {
                        return Err(Error::contract(
                            "unet",
                            format!("previous {kind} level {} is {got}, expected {want}", l + 1),
                        ));
                    }
                }
            }
        }

        let mut enc: [Option<B::Value>; 3] = [None, None, None];
        let mut h = feat.clone();
        for (l, blocks) in self.enc.iter().enumerate() {
            if l > 0 {
                h = b.resize(&h, Resize::Half)?;
                h = self.down[l - 1].forward(b, &h)?;
            }
            for rb in blocks {
                h = rb.forward(b, &h)?;
            }
            if let Some((p, c)) = fusion {
                let pe = c.enc[l].forward(b, &p.enc[l])?;
                let pd = c.dec[l].forward(b, &p.dec[l])?;
                h = b.add(&h, &pe)?;
                h = b.add(&h, &pd)?;
            }
            enc[l] = Some(h.clone());
        }
        let [e1, e2, e3] = enc.map(|v| v.expect("all levels visited"));

        let mut dec: [Option<B::Value>; 3] = [None, None, None];
        let mut h = e3.clone();
        for l in (0..3).rev() {
            if l < 2 {
                h = b.resize(&h, Resize::Double)?;
                h = self.up[l].forward(b, &h)?;
                let skip_in = if l == 0 { &e1 } else { &e2 };
                let s = self.skip[l].forward(b, skip_in)?;
                h = b.add(&s, &h)?;
            }
            for rb in &self.dec[l] {
                h = rb.forward(b, &h)?;
            }
            dec[l] = Some(h.clone());
        }
        let dec = dec.map(|v| v.expect("all levels visited"));
        Ok(StageFeatures { enc: [e1, e2, e3], dec })
    }
}

/// Free-function form of [`UNet::forward`].
pub fn unet_forward<T: Real, B: Backend<T>>(
    b: &mut B,
    unet: &UNet,
    feat: &B::Value,
    prev: Option<&StageFeatures<B::Value>>,
) -> Result<StageFeatures<B::Value>> {
    unet.forward(b, feat, prev)
}
