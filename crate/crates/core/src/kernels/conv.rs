use alloc::format;

use super::for_each_chunk;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{Shape, Tensor};

/// Output length of a stride-1 convolution.
pub fn conv_output_len(input: usize, kernel: usize, pad: usize) -> Option<usize> {
    (input + 2 * pad).checked_sub(kernel).map(|v| v + 1)
}

/// Output positions `[start, end)` whose tap at offset `k_off` lands inside
/// an input of length `in_len`.
#[inline]
fn valid_range(k_off: usize, pad: usize, in_len: usize, out_len: usize) -> (usize, usize) {
    let start = pad.saturating_sub(k_off);
    let end = (in_len + pad).saturating_sub(k_off).min(out_len);
    (start, end.max(start))
}

fn check(x: Shape, w: Shape, pad: usize) -> Result<(usize, usize, usize)> {
    if w.c != x.c {
        return Err(Error::contract(
            "conv2d",
            format!("input has {} channels, weight expects {}", x.c, w.c),
        ));
    }
    if w.h != w.w {
        return Err(Error::contract("conv2d", format!("non-square kernel {}x{}", w.h, w.w)));
    }
    let k = w.h;
    let ho = conv_output_len(x.h, k, pad);
    let wo = conv_output_len(x.w, k, pad);
    match (ho, wo) {
        (Some(ho), Some(wo)) if ho > 0 && wo > 0 => Ok((k, ho, wo)),
        _ => Err(Error::contract(
            "conv2d",
            format!("kernel {k} with padding {pad} does not fit input {x}"),
        )),
    }
}

/// Stride-1, zero-padded, bias-free 2-D convolution.
///
/// `x` is `N×Ci×H×W`, `w` is `Co×Ci×k×k`; the result is `N×Co×H'×W'` with
/// `H' = H + 2·pad − k + 1`.
pub fn conv2d<T: Real>(x: &Tensor<T>, w: &Tensor<T>, pad: usize) -> Result<Tensor<T>> {
    let xs = x.shape();
    let ws = w.shape();
    let (k, ho, wo) = check(xs, ws, pad)?;
    let out_shape = Shape::new(xs.n, ws.n, ho, wo);
    let mut out = Tensor::zeros(out_shape);
    let (ci_n, co_n) = (xs.c, ws.n);
    let (xd, wd) = (x.data(), w.data());
    let (h, wi) = (xs.h, xs.w);
    for_each_chunk(out.data_mut(), ho * wo, |plane, o| {
        let (n, co) = (plane / co_n, plane % co_n);
        for ci in 0..ci_n {
            let xin = &xd[(n * ci_n + ci) * h * wi..][..h * wi];
            for ky in 0..k {
                let (y0, y1) = valid_range(ky, pad, h, ho);
                for kx in 0..k {
                    let wv = wd[((co * ci_n + ci) * k + ky) * k + kx];
                    let (x0, x1) = valid_range(kx, pad, wi, wo);
                    if x1 == x0 {
                        continue;
                    }
                    let shift = x0 + kx - pad;
                    for oy in y0..y1 {
                        let iy = oy + ky - pad;
                        let orow = &mut o[oy * wo + x0..oy * wo + x1];
                        let irow = &xin[iy * wi + shift..iy * wi + shift + (x1 - x0)];
                        for (ov, &iv) in orow.iter_mut().zip(irow) {
                            *ov = *ov + wv * iv;
                        }
                    }
                }
            }
        }
    });
    Ok(out)
}

/// Gradient of [`conv2d`] with respect to its input.
pub fn conv2d_backward_input<T: Real>(gy: &Tensor<T>, w: &Tensor<T>, x_shape: Shape, pad: usize) -> Tensor<T> {
    let ws = w.shape();
    let gs = gy.shape();
    let k = ws.h;
    let (ho, wo) = (gs.h, gs.w);
    let (h, wi) = (x_shape.h, x_shape.w);
    let (ci_n, co_n) = (x_shape.c, ws.n);
    let mut gx = Tensor::zeros(x_shape);
    let (gd, wd) = (gy.data(), w.data());
    for_each_chunk(gx.data_mut(), h * wi, |plane, g| {
        let (n, ci) = (plane / ci_n, plane % ci_n);
        for co in 0..co_n {
            let gin = &gd[(n * co_n + co) * ho * wo..][..ho * wo];
            for ky in 0..k {
                let (y0, y1) = valid_range(ky, pad, h, ho);
                for kx in 0..k {
                    let wv = wd[((co * ci_n + ci) * k + ky) * k + kx];
                    let (x0, x1) = valid_range(kx, pad, wi, wo);
                    if x1 == x0 {
                        continue;
                    }
                    let shift = x0 + kx - pad;
                    for oy in y0..y1 {
                        let iy = oy + ky - pad;
                        let grow = &gin[oy * wo + x0..oy * wo + x1];
                        let xrow = &mut g[iy * wi + shift..iy * wi + shift + (x1 - x0)];
                        for (xv, &gv) in xrow.iter_mut().zip(grow) {
                            *xv = *xv + wv * gv;
                        }
                    }
                }
            }
        }
    });
    gx
}

/// Gradient of [`conv2d`] with respect to its weight.
pub fn conv2d_backward_weight<T: Real>(gy: &Tensor<T>, x: &Tensor<T>, w_shape: Shape, pad: usize) -> Tensor<T> {
    let xs = x.shape();
    let gs = gy.shape();
    let k = w_shape.h;
    let (ho, wo) = (gs.h, gs.w);
    let (h, wi) = (xs.h, xs.w);
    let (ci_n, co_n) = (xs.c, w_shape.n);
    let mut gw = Tensor::zeros(w_shape);
    let (gd, xd) = (gy.data(), x.data());
    for_each_chunk(gw.data_mut(), ci_n * k * k, |co, gwc| {
        for ci in 0..ci_n {
            for ky in 0..k {
                let (y0, y1) = valid_range(ky, pad, h, ho);
                for kx in 0..k {
                    let (x0, x1) = valid_range(kx, pad, wi, wo);
                    if x1 == x0 {
                        continue;
                    }
                    let shift = x0 + kx - pad;
                    let mut acc = T::zero();
                    for n in 0..xs.n {
                        let gin = &gd[(n * co_n + co) * ho * wo..][..ho * wo];
                        let xin = &xd[(n * ci_n + ci) * h * wi..][..h * wi];
                        for oy in y0..y1 {
                            let iy = oy + ky - pad;
                            let grow = &gin[oy * wo + x0..oy * wo + x1];
                            let xrow = &xin[iy * wi + shift..iy * wi + shift + (x1 - x0)];
                            acc = acc + grow.iter().zip(xrow).fold(T::zero(), |s, (&a, &b)| s + a * b);
                        }
                    }
                    gwc[(ci * k + ky) * k + kx] = acc;
                }
            }
        }
    });
    gw
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct seven-loop convolution used as a reference.
    fn naive(x: &Tensor<f64>, w: &Tensor<f64>, pad: usize) -> Tensor<f64> {
        let (xs, ws) = (x.shape(), w.shape());
        let k = ws.h;
        let ho = xs.h + 2 * pad + 1 - k;
        let wo = xs.w + 2 * pad + 1 - k;
        Tensor::from_fn([xs.n, ws.n, ho, wo], |n, co, oy, ox| {
            let mut s = 0.0;
            for ci in 0..xs.c {
                for ky in 0..k {
                    for kx in 0..k {
                        let iy = oy as isize + ky as isize - pad as isize;
                        let ix = ox as isize + kx as isize - pad as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < xs.h && (ix as usize) < xs.w {
                            s += w.get(co, ci, ky, kx) * x.get(n, ci, iy as usize, ix as usize);
                        }
                    }
                }
            }
            s
        })
    }

    fn lcg(seed: u64) -> impl FnMut() -> f64 {
        let mut s = seed;
        move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        }
    }

    #[test]
    fn matches_naive_loops() {
        let mut r = lcg(7);
        for &(k, pad) in &[(3, 1), (1, 0), (3, 0)] {
            let x = Tensor::from_fn([2, 3, 5, 6], |_, _, _, _| r());
            let w = Tensor::from_fn([4, 3, k, k], |_, _, _, _| r());
            let got = conv2d(&x, &w, pad).unwrap();
            let want = naive(&x, &w, pad);
            assert_eq!(got.shape(), want.shape());
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_law() {
        let x = Tensor::<f32>::zeros([1, 3, 8, 8]);
        let w = Tensor::<f32>::zeros([54, 3, 3, 3]);
        assert_eq!(conv2d(&x, &w, 1).unwrap().shape(), Shape::new(1, 54, 8, 8));
        let x = Tensor::<f32>::zeros([1, 54, 8, 8]);
        let w = Tensor::<f32>::zeros([96, 54, 1, 1]);
        assert_eq!(conv2d(&x, &w, 0).unwrap().shape(), Shape::new(1, 96, 8, 8));
    }

    #[test]
    fn identity_kernel() {
        let mut r = lcg(3);
        let x = Tensor::from_fn([1, 2, 4, 5], |_, _, _, _| r());
        let w = Tensor::from_fn([2, 2, 3, 3], |co, ci, y, xx| if co == ci && y == 1 && xx == 1 { 1.0 } else { 0.0 });
        assert_eq!(conv2d(&x, &w, 1).unwrap(), x);
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let x = Tensor::<f32>::zeros([1, 4, 8, 8]);
        let w = Tensor::<f32>::zeros([2, 3, 3, 3]);
        assert!(conv2d(&x, &w, 1).is_err());
    }

    #[test]
    fn adjoint_identities() {
        // <conv(x, w), g> = <x, conv_bwd_input(g, w)> = <w, conv_bwd_weight(g, x)>
        let mut r = lcg(11);
        for &(k, pad) in &[(3, 1), (1, 0)] {
            let x = Tensor::from_fn([2, 3, 4, 5], |_, _, _, _| r());
            let w = Tensor::from_fn([2, 3, k, k], |_, _, _, _| r());
            let y = conv2d(&x, &w, pad).unwrap();
            let g = Tensor::from_fn(y.shape(), |_, _, _, _| r());
            let lhs: f64 = y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
            let gx = conv2d_backward_input(&g, &w, x.shape(), pad);
            let gw = conv2d_backward_weight(&g, &x, w.shape(), pad);
            let rx: f64 = x.data().iter().zip(gx.data()).map(|(a, b)| a * b).sum();
            let rw: f64 = w.data().iter().zip(gw.data()).map(|(a, b)| a * b).sum();
            assert!((lhs - rx).abs() < 1e-10, "{lhs} {rx}");
            assert!((lhs - rw).abs() < 1e-10, "{lhs} {rw}");
        }
    }
}
