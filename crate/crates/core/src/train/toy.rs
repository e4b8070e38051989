//! Synthetic sharp images and linear motion blur for toy datasets.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;

use crate::real::Real;
use crate::tensor::Tensor;

/// A normalized square blur kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionKernel {
    pub size: usize,
    pub taps: Vec<f64>,
}

/// Line of `len` pixels at `angle_deg`, rasterized with bilinear splats and
/// normalized to unit sum. Length 1 gives the identity kernel.
pub fn motion_kernel(len: usize, angle_deg: f64) -> MotionKernel {
    let len = len.max(1);
    let half = (len - 1) as f64 / 2.0;
    let size = 2 * Float::ceil(half) as usize + 1;
    let c = (size / 2) as f64;
    let mut taps = vec![0.0; size * size];
    if len == 1 {
        taps[size * size / 2] = 1.0;
        return MotionKernel { size, taps };
    }
    let (s, co) = Float::sin_cos(angle_deg.to_radians());
    let samples = 8 * len;
    for i in 0..=samples {
        let r = -half + 2.0 * half * i as f64 / samples as f64;
        let x = c + r * co;
        let y = c - r * s;
        let (x0, y0) = (Float::floor(x), Float::floor(y));
        let (fx, fy) = (x - x0, y - y0);
        for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
            for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
                let (yy, xx) = (y0 as isize + dy, x0 as isize + dx);
                if yy >= 0 && xx >= 0 && (yy as usize) < size && (xx as usize) < size {
                    taps[yy as usize * size + xx as usize] += wy * wx;
                }
            }
        }
    }
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    MotionKernel { size, taps }
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

/// Correlates every plane with `k` under reflection padding.
pub fn blur<T: Real>(img: &Tensor<T>, k: &MotionKernel) -> Tensor<T> {
    let s = img.shape();
    let r = (k.size / 2) as isize;
    Tensor::from_fn(s, |n, c, y, x| {
        let p = img.plane(n, c);
        let mut acc = 0.0;
        for ky in 0..k.size {
            let yy = reflect(y as isize + ky as isize - r, s.h);
            for kx in 0..k.size {
                let t = k.taps[ky * k.size + kx];
                if t != 0.0 {
                    let xx = reflect(x as isize + kx as isize - r, s.w);
                    acc += t * p[yy * s.w + xx].to_f64();
                }
            }
        }
        T::from_f64(acc)
    })
}

/// A `1×3×h×w` image of overlapping shaded rectangles and discs over a
/// smooth gradient, values in `[0, 1]`.
pub fn synthetic_image<T: Real, R: Rng + ?Sized>(h: usize, w: usize, rng: &mut R) -> Tensor<T> {
    let mut img = vec![0.0f64; 3 * h * w];
    let base: [f64; 3] = [rng.random(), rng.random(), rng.random()];
    let tilt: [f64; 2] = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                let g = base[c] + tilt[0] * y as f64 / h as f64 + tilt[1] * x as f64 / w as f64;
                img[(c * h + y) * w + x] = g;
            }
        }
    }
    let shapes = 6 + (h * w) / 512;
    for _ in 0..shapes {
        let colour: [f64; 3] = [rng.random(), rng.random(), rng.random()];
        let cy = rng.random_range(0.0..h as f64);
        let cx = rng.random_range(0.0..w as f64);
        let ry = rng.random_range(2.0..(h as f64 / 3.0).max(3.0));
        let rx = rng.random_range(2.0..(w as f64 / 3.0).max(3.0));
        let disc = rng.random_bool(0.5);
        let stripes = rng.random_bool(0.3);
        for y in 0..h {
            for x in 0..w {
                let dy = (y as f64 - cy) / ry;
                let dx = (x as f64 - cx) / rx;
                let inside = if disc {
                    dx * dx + dy * dy <= 1.0
                } else {
                    dx.abs() <= 1.0 && dy.abs() <= 1.0
                };
                if !inside {
                    continue;
                }
                let shade = if stripes && (x / 3) % 2 == 0 { 0.6 } else { 1.0 };
                for c in 0..3 {
                    img[(c * h + y) * w + x] = colour[c] * shade;
                }
            }
        }
    }
    let data = img.into_iter().map(|v| T::from_f64(v.clamp(0.0, 1.0))).collect();
    Tensor::new([1, 3, h, w], data).expect("length matches shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_length_is_identity() {
        let k = motion_kernel(1, 37.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img: Tensor<f64> = synthetic_image(16, 20, &mut rng);
        assert_eq!(blur(&img, &k), img);
    }

    #[test]
    fn kernel_normalized() {
        for (len, a) in [(9, 0.0), (9, 45.0), (15, 100.0), (4, 10.0)] {
            let k = motion_kernel(len, a);
            assert!((k.taps.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(k.taps.iter().all(|&t| t >= 0.0));
        }
    }

    #[test]
    fn constant_image_unchanged() {
        let img = Tensor::<f64>::full([1, 3, 12, 12], 0.375);
        let out = blur(&img, &motion_kernel(9, 30.0));
        assert!(out.data().iter().all(|&v| (v - 0.375).abs() < 1e-12));
    }

    #[test]
    fn reflection_indices() {
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(-2, 5), 2);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(6, 5), 2);
        assert_eq!(reflect(3, 1), 0);
    }
}
