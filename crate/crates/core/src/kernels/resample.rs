use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{Shape, Tensor};

/// Bilinear resampling ratio used by the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Resize {
    Half,
    Double,
}

impl Resize {
    pub fn apply(self, len: usize) -> usize {
        match self {
            Resize::Half => len / 2,
            Resize::Double => len * 2,
        }
    }
}

/// Two-tap interpolation weights for one output index.
#[derive(Debug, Clone, Copy)]
struct Tap {
    i0: usize,
    i1: usize,
    w1: f64,
}

/// Half-pixel-center taps, clamped at the borders, no antialiasing.
fn axis_taps(in_len: usize, out_len: usize) -> Vec<Tap> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src as usize).min(in_len - 1);
            let i1 = (i0 + 1).min(in_len - 1);
            let w1 = if i1 == i0 { 0.0 } else { src - i0 as f64 };
            Tap { i0, i1, w1 }
        })
        .collect()
}

/// Bilinear resize of every plane to `out_h × out_w`.
pub fn resize_bilinear<T: Real>(x: &Tensor<T>, out_h: usize, out_w: usize) -> Tensor<T> {
    let s = x.shape();
    let ty = axis_taps(s.h, out_h);
    let tx = axis_taps(s.w, out_w);
    let out = s.with_spatial(out_h, out_w);
    let mut data = Vec::with_capacity(out.numel());
    for plane in x.data().chunks(s.plane()) {
        for t in &ty {
            let (r0, r1) = (&plane[t.i0 * s.w..][..s.w], &plane[t.i1 * s.w..][..s.w]);
            let wy1 = T::from_f64(t.w1);
            let wy0 = T::one() - wy1;
            for u in &tx {
                let wx1 = T::from_f64(u.w1);
                let wx0 = T::one() - wx1;
                let top = r0[u.i0] * wx0 + r0[u.i1] * wx1;
                let bot = r1[u.i0] * wx0 + r1[u.i1] * wx1;
                data.push(top * wy0 + bot * wy1);
            }
        }
    }
    Tensor::from_parts(out, data)
}

/// Adjoint of [`resize_bilinear`]: scatters output gradients to `in_shape`.
pub fn resize_bilinear_backward<T: Real>(gy: &Tensor<T>, in_shape: Shape) -> Tensor<T> {
    let gs = gy.shape();
    let ty = axis_taps(in_shape.h, gs.h);
    let tx = axis_taps(in_shape.w, gs.w);
    let mut gx = Tensor::zeros(in_shape);
    let ip = in_shape.plane();
    let w = in_shape.w;
    for (gplane, xplane) in gy.data().chunks(gs.plane()).zip(gx.data_mut().chunks_mut(ip)) {
        for (oy, t) in ty.iter().enumerate() {
            let wy1 = T::from_f64(t.w1);
            let wy0 = T::one() - wy1;
            for (ox, u) in tx.iter().enumerate() {
                let g = gplane[oy * gs.w + ox];
                let wx1 = T::from_f64(u.w1);
                let wx0 = T::one() - wx1;
                xplane[t.i0 * w + u.i0] = xplane[t.i0 * w + u.i0] + g * wy0 * wx0;
                xplane[t.i0 * w + u.i1] = xplane[t.i0 * w + u.i1] + g * wy0 * wx1;
                xplane[t.i1 * w + u.i0] = xplane[t.i1 * w + u.i0] + g * wy1 * wx0;
                xplane[t.i1 * w + u.i1] = xplane[t.i1 * w + u.i1] + g * wy1 * wx1;
            }
        }
    }
    gx
}

/// The network's `bi-down` (×0.5) / `bi-up` (×2) operation.
pub fn bilinear_resize<T: Real>(x: &Tensor<T>, ratio: Resize) -> Result<Tensor<T>> {
    let s = x.shape();
    if ratio == Resize::Half && (!s.h.is_multiple_of(2) || !s.w.is_multiple_of(2)) {
        return Err(Error::contract(
            "bilinear_resize",
            format!("cannot halve odd spatial size {}x{}", s.h, s.w),
        ));
    }
    Ok(resize_bilinear(x, ratio.apply(s.h), ratio.apply(s.w)))
}
