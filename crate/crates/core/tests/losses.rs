use std::f64::consts::PI;

use mssnet_core::autodiff::{Backend, Eager};
use mssnet_core::loss::{total_loss, LossConfig, LAMBDA};
use mssnet_core::metrics::{gaussian_window, psnr, ssim, ssim_with, SsimMode, PSNR_CAP, SSIM_K1, SSIM_K2, SSIM_WINDOW};
use mssnet_core::model::{build_model, model_forward, ForwardOutputs, ModelConfig};
use mssnet_core::unet::UNetChannels;
use mssnet_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random(shape: [usize; 4], seed: u64, lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::uniform(shape, lo, hi, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn oracle_content(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    let mut s = 0.0;
    for i in 0..a.numel() {
        s += (a.data()[i] - b.data()[i]).abs();
    }
    s / a.numel() as f64
}

fn oracle_frequency(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    let s = a.shape();
    let mut total = 0.0;
    for n in 0..s.n {
        for c in 0..s.c {
            for u in 0..s.h {
                for v in 0..s.w {
                    let (mut re, mut im) = (0.0, 0.0);
                    for y in 0..s.h {
                        for x in 0..s.w {
                            let t = -2.0 * PI * ((u * y) as f64 / s.h as f64 + (v * x) as f64 / s.w as f64);
                            let d = a.get(n, c, y, x) - b.get(n, c, y, x);
                            re += d * t.cos();
                            im += d * t.sin();
                        }
                    }
                    total += re.abs() + im.abs();
                }
            }
        }
    }
    total / a.numel() as f64
}

fn box_half(t: &Tensor<f64>) -> Tensor<f64> {
    let s = t.shape();
    Tensor::from_fn([s.n, s.c, s.h / 2, s.w / 2], |n, c, y, x| {
        (t.get(n, c, 2 * y, 2 * x) + t.get(n, c, 2 * y + 1, 2 * x) + t.get(n, c, 2 * y, 2 * x + 1) + t.get(n, c, 2 * y + 1, 2 * x + 1))
            / 4.0
    })
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn single_head_matches_straight_line_oracles() {
    let cfg = ModelConfig::plain(&[1], UNetChannels::new(4, 6, 8));
    for seed in 0..5 {
        let pred = random([1, 3, 8, 8], seed, 0.0, 1.0);
        let sharp = random([1, 3, 8, 8], seed + 100, 0.0, 1.0);
        let store = Default::default();
        let mut b = Eager::new(&store);
        let p = b.constant(pred.clone());
        let out = ForwardOutputs {
            final_image: p.clone(),
            residual: p,
            final_id: cfg.final_head(),
            aux: Default::default(),
        };
        let s = b.constant(sharp.clone());
        let r = total_loss(&mut b, &out, &s, &cfg, &LossConfig::default()).unwrap().report;
        let (c, f) = (oracle_content(&pred, &sharp), oracle_frequency(&pred, &sharp));
        assert!(relative(r.cont, c) <= 1e-8);
        assert!(relative(r.freq, f) <= 1e-8);
        assert!(relative(r.total, c + LAMBDA * f) <= 1e-12);
    }
}

#[test]
fn every_head_of_the_tiny_network() {
    let cfg = ModelConfig::tiny();
    let model = build_model::<f64>(&cfg, 3).unwrap();
    let x = random([1, 3, 16, 16], 1, 0.0, 1.0);
    let sharp = random([1, 3, 16, 16], 2, 0.0, 1.0);
    let mut b = Eager::new(&model.store);
    let xv = b.constant(x);
    let out = model_forward(&mut b, &model.net, &xv, true).unwrap();
    let sv = b.constant(sharp.clone());
    let r = total_loss(&mut b, &out, &sv, &cfg, &LossConfig::default()).unwrap().report;
    assert_eq!(r.per_head.len(), cfg.head_ids().len());

    let (mut cont, mut freq) = (0.0, 0.0);
    for (id, img) in out.heads() {
        let mut target = sharp.clone();
        for _ in 0..cfg.head_geometry(id).depth {
            target = box_half(&target);
        }
        let img = b.tensor(img);
        let (c, f) = (oracle_content(img, &target), oracle_frequency(img, &target));
        assert!(relative(r.per_head[&id].cont, c) <= 1e-8, "{id}");
        assert!(relative(r.per_head[&id].freq, f) <= 1e-8, "{id}");
        cont += c;
        freq += f;
    }
    assert!(relative(r.cont, cont) <= 1e-8);
    assert!(relative(r.freq, freq) <= 1e-8);
    assert!(relative(r.total, r.cont + 0.1 * r.freq) <= 1e-12);
}

/// SSIM from explicit 2-D windows, one position at a time.
fn naive_ssim(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let g = gaussian_window();
    let (c1, c2) = (SSIM_K1 * SSIM_K1, SSIM_K2 * SSIM_K2);
    let mut acc = 0.0;
    let mut count = 0;
    for y in 0..=h - SSIM_WINDOW {
        for x in 0..=w - SSIM_WINDOW {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..SSIM_WINDOW {
                for j in 0..SSIM_WINDOW {
                    let k = g[i] * g[j];
                    let (p, q) = (a[(y + i) * w + x + j], b[(y + i) * w + x + j]);
                    ma += k * p;
                    mb += k * q;
                    saa += k * p * p;
                    sbb += k * q * q;
                    sab += k * p * q;
                }
            }
            let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
            acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    acc / count as f64
}

#[test]
fn ssim_matches_windowed_oracle() {
    let a = random([1, 3, 20, 17], 5, 0.0, 1.0);
    let b = a.zip_map(&random([1, 3, 20, 17], 6, -0.2, 0.2), "noise", |x, n| (x + n).clamp(0.0, 1.0)).unwrap();
    let grey = |t: &Tensor<f64>| -> Vec<f64> {
        (0..20 * 17).map(|i| (0..3).map(|c| t.plane(0, c)[i]).sum::<f64>() / 3.0).collect()
    };
    let expect = naive_ssim(&grey(&a), &grey(&b), 20, 17);
    assert!((ssim(&a, &b).unwrap() - expect).abs() < 1e-10);

    let per: f64 = (0..3).map(|c| naive_ssim(a.plane(0, c), b.plane(0, c), 20, 17)).sum::<f64>() / 3.0;
    assert!((ssim_with(&a, &b, SsimMode::PerChannel).unwrap() - per).abs() < 1e-10);
}

#[test]
fn identical_images_hit_the_caps() {
    let a = random([2, 3, 16, 16], 7, 0.0, 1.0);
    assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
    assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
}
