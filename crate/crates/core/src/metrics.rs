//! Image quality metrics on `[0, 1]` images.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Reported when two images are identical.
pub const PSNR_CAP: f64 = 100.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// `10·log10(1/MSE)`, capped at [`PSNR_CAP`].
pub fn psnr<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op: "psnr",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let sse: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = Real::to_f64(x) - Real::to_f64(y);
            d * d
        })
        .sum();
    let mse = sse / a.numel() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * Float::log10(1.0 / mse)).min(PSNR_CAP))
}

/// How colour images are reduced before SSIM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SsimMode {
    /// Channel mean as a single grey plane.
    #[default]
    Grayscale,
    /// SSIM per channel, then averaged.
    PerChannel,
}

/// Normalized 1-D Gaussian taps of the SSIM window.
pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = Float::exp(-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA));
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable valid-position filter of one `h×w` plane.
fn blur_valid(p: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * p[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM of two planes over valid window positions.
pub fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let k = gaussian_window();
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let mu_a = blur_valid(a, h, w, &k);
    let mu_b = blur_valid(b, h, w, &k);
    let e_aa = blur_valid(&aa, h, w, &k);
    let e_bb = blur_valid(&bb, h, w, &k);
    let e_ab = blur_valid(&ab, h, w, &k);
    let n = mu_a.len();
    let mut acc = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    acc / n as f64
}

/// SSIM with the default grayscale reduction.
pub fn ssim<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    ssim_with(a, b, SsimMode::Grayscale)
}

/// SSIM averaged over the batch (and channels in per-channel mode).
pub fn ssim_with<T: Real>(a: &Tensor<T>, b: &Tensor<T>, mode: SsimMode) -> Result<f64> {
    let s = a.shape();
    if s != b.shape() {
        return Err(Error::ShapeMismatch {
            op: "ssim",
            lhs: s,
            rhs: b.shape(),
        });
    }
    if s.h < SSIM_WINDOW || s.w < SSIM_WINDOW {
        return Err(Error::contract(
            "ssim",
            format!("{}x{} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window", s.h, s.w),
        ));
    }
    let plane = |t: &Tensor<T>, n: usize, c: usize| -> Vec<f64> { t.plane(n, c).iter().map(|&v| Real::to_f64(v)).collect() };
    let grey = |t: &Tensor<T>, n: usize| -> Vec<f64> {
        let mut g = vec![0.0; s.plane()];
        for c in 0..s.c {
            for (acc, v) in g.iter_mut().zip(t.plane(n, c)) {
                *acc += Real::to_f64(*v);
            }
        }
        g.iter_mut().for_each(|v| *v /= s.c as f64);
        g
    };
    let mut total = 0.0;
    let mut count = 0usize;
    for n in 0..s.n {
        match mode {
            SsimMode::Grayscale => {
                total += ssim_plane(&grey(a, n), &grey(b, n), s.h, s.w);
                count += 1;
            }
            SsimMode::PerChannel => {
                for c in 0..s.c {
                    total += ssim_plane(&plane(a, n, c), &plane(b, n, c), s.h, s.w);
                    count += 1;
                }
            }
        }
    }
    Ok(total / count as f64)
}
