//! Unnormalized 2-D discrete Fourier transform.
//!
//! Power-of-two lengths use an iterative radix-2 Cooley–Tukey transform;
//! other lengths fall back to a direct `O(n²)` DFT.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex;

use crate::error::Result;
use crate::real::Real;
use crate::tensor::{Shape, Tensor};

/// Real and imaginary parts of a transformed tensor, same shape each.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexPair<T> {
    pub re: Tensor<T>,
    pub im: Tensor<T>,
}

/// Precomputed twiddles for one transform length.
struct Plan<T> {
    n: usize,
    /// `exp(-2πi·k/n)` for `k < n`.
    twiddles: Vec<Complex<T>>,
}

impl<T: Real> Plan<T> {
    fn new(n: usize) -> Self {
        let twiddles = (0..n)
            .map(|k| {
                let a = -2.0 * PI * k as f64 / n as f64;
                Complex::new(T::from_f64(libm_cos(a)), T::from_f64(libm_sin(a)))
            })
            .collect();
        Plan { n, twiddles }
    }

    fn twiddle(&self, k: usize, inverse: bool) -> Complex<T> {
        let t = self.twiddles[k % self.n];
        if inverse {
            t.conj()
        } else {
            t
        }
    }

    /// In-place transform of `buf` (length `n`); `scratch` is reused storage.
    fn run(&self, buf: &mut [Complex<T>], scratch: &mut Vec<Complex<T>>, inverse: bool) {
        let n = self.n;
        if n == 1 {
            return;
        }
        if n.is_power_of_two() {
            let bits = n.trailing_zeros();
            for i in 0..n {
                let j = i.reverse_bits() >> (usize::BITS - bits);
                if j > i {
                    buf.swap(i, j);
                }
            }
            let mut len = 2;
            while len <= n {
                let step = n / len;
                for start in (0..n).step_by(len) {
                    for k in 0..len / 2 {
                        let w = self.twiddle(k * step, inverse);
                        let a = buf[start + k];
                        let b = buf[start + k + len / 2] * w;
                        buf[start + k] = a + b;
                        buf[start + k + len / 2] = a - b;
                    }
                }
                len <<= 1;
            }
        } else {
            scratch.clear();
            scratch.extend((0..n).map(|k| {
                buf.iter()
                    .enumerate()
                    .fold(Complex::new(T::zero(), T::zero()), |acc, (j, &v)| acc + v * self.twiddle(k * j, inverse))
            }));
            buf.copy_from_slice(scratch);
        }
    }
}

fn libm_cos(a: f64) -> f64 {
    num_traits::Float::cos(a)
}

fn libm_sin(a: f64) -> f64 {
    num_traits::Float::sin(a)
}

/// 2-D transform of every `h × w` plane in `planes` (row-major, in place).
fn transform_planes<T: Real>(planes: &mut [Complex<T>], h: usize, w: usize, inverse: bool) {
    let rows = Plan::new(w);
    let cols = Plan::new(h);
    let mut scratch = Vec::new();
    let mut column = alloc::vec![Complex::new(T::zero(), T::zero()); h];
    for plane in planes.chunks_mut(h * w) {
        for row in plane.chunks_mut(w) {
            rows.run(row, &mut scratch, inverse);
        }
        for x in 0..w {
            for y in 0..h {
                column[y] = plane[y * w + x];
            }
            cols.run(&mut column, &mut scratch, inverse);
            for y in 0..h {
                plane[y * w + x] = column[y];
            }
        }
    }
}

fn split<T: Real>(shape: Shape, buf: Vec<Complex<T>>) -> ComplexPair<T> {
    let re = buf.iter().map(|c| c.re).collect();
    let im = buf.iter().map(|c| c.im).collect();
    ComplexPair {
        re: Tensor::from_parts(shape, re),
        im: Tensor::from_parts(shape, im),
    }
}

/// Forward DFT over `H × W` of every (batch, channel) plane, no normalization.
pub fn dft2<T: Real>(x: &Tensor<T>) -> ComplexPair<T> {
    let s = x.shape();
    let mut buf: Vec<Complex<T>> = x.data().iter().map(|&v| Complex::new(v, T::zero())).collect();
    transform_planes(&mut buf, s.h, s.w, false);
    split(s, buf)
}

/// Inverse of [`dft2`] including the `1/(H·W)` factor.
pub fn idft2<T: Real>(pair: &ComplexPair<T>) -> Result<ComplexPair<T>> {
    pair.re.expect_shape(&pair.im, "idft2")?;
    let s = pair.re.shape();
    let mut buf: Vec<Complex<T>> = pair
        .re
        .data()
        .iter()
        .zip(pair.im.data())
        .map(|(&r, &i)| Complex::new(r, i))
        .collect();
    transform_planes(&mut buf, s.h, s.w, true);
    let k = T::one() / T::from_usize(s.plane());
    buf.iter_mut().for_each(|c| *c = *c * k);
    Ok(split(s, buf))
}

/// [`dft2`] with the real parts in channels `0..C` and the imaginary parts
/// in channels `C..2C`.
pub fn dft2_stacked<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let pair = dft2(x);
    super::concat_channels(&pair.re, &pair.im).expect("re and im share a shape")
}

/// Adjoint of [`dft2_stacked`] applied to a real `N×2C×H×W` gradient.
///
/// With `F = C + iS` the stacked map is `x ↦ [Cx; Sx]`; both `C` and `S`
/// are symmetric, so the adjoint is `Re(F(g_re − i·g_im))`.
pub fn dft2_adjoint<T: Real>(g: &Tensor<T>) -> Tensor<T> {
    let s = g.shape();
    let c = s.c / 2;
    let out = s.with_channels(c);
    let p = s.plane();
    let mut buf = Vec::with_capacity(out.numel());
    for n in 0..s.n {
        let base = n * s.c * p;
        let re = &g.data()[base..base + c * p];
        let im = &g.data()[base + c * p..base + 2 * c * p];
        buf.extend(re.iter().zip(im).map(|(&r, &i)| Complex::new(r, -i)));
    }
    transform_planes(&mut buf, s.h, s.w, false);
    Tensor::from_parts(out, buf.into_iter().map(|v| v.re).collect())
}
