use alloc::format;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{Shape, Tensor};

/// Space-to-channel rearrangement.
///
/// Output channel `c·r² + dy·r + dx` at `(i, j)` holds input channel `c` at
/// `(i·r + dy, j·r + dx)`.
pub fn pixel_unshuffle<T: Real>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if r == 0 || !s.h.is_multiple_of(r) || !s.w.is_multiple_of(r) {
        return Err(Error::contract(
            "pixel_unshuffle",
            format!("spatial size {}x{} not divisible by {r}", s.h, s.w),
        ));
    }
    let out = Shape::new(s.n, s.c * r * r, s.h / r, s.w / r);
    let mut t = Tensor::zeros(out);
    let d = t.data_mut();
    for n in 0..s.n {
        for c in 0..s.c {
            let src = x.plane(n, c);
            for dy in 0..r {
                for dx in 0..r {
                    let oc = c * r * r + dy * r + dx;
                    let base = out.offset(n, oc, 0, 0);
                    for i in 0..out.h {
                        for j in 0..out.w {
                            d[base + i * out.w + j] = src[(i * r + dy) * s.w + j * r + dx];
                        }
                    }
                }
            }
        }
    }
    Ok(t)
}

/// Exact inverse of [`pixel_unshuffle`].
pub fn pixel_shuffle<T: Real>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if r == 0 || !s.c.is_multiple_of(r * r) {
        return Err(Error::contract(
            "pixel_shuffle",
            format!("{} channels not divisible by {}", s.c, r * r),
        ));
    }
    let out = Shape::new(s.n, s.c / (r * r), s.h * r, s.w * r);
    let mut t = Tensor::zeros(out);
    let d = t.data_mut();
    for n in 0..out.n {
        for c in 0..out.c {
            let base = out.offset(n, c, 0, 0);
            for dy in 0..r {
                for dx in 0..r {
                    let src = x.plane(n, c * r * r + dy * r + dx);
                    for i in 0..s.h {
                        for j in 0..s.w {
                            d[base + (i * r + dy) * out.w + j * r + dx] = src[i * s.w + j];
                        }
                    }
                }
            }
        }
    }
    Ok(t)
}
