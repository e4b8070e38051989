//! 8-bit RGB PNG images as `1×3×H×W` tensors in `[0, 1]`.

use std::path::Path;

use image::{ImageReader, RgbImage};
use mssnet_core::{Real, Tensor};

use crate::error::{CliError, Result};

pub fn load_image<T: Real>(path: &Path) -> Result<Tensor<T>> {
    let img = ImageReader::open(path)
        .map_err(|e| CliError::io(path, e))?
        .with_guessed_format()
        .map_err(|e| CliError::io(path, e))?
        .decode()
        .map_err(|source| CliError::Image {
            path: path.into(),
            source,
        })?
        .to_rgb8();
    Ok(from_rgb(&img))
}

pub fn from_rgb<T: Real>(img: &RgbImage) -> Tensor<T> {
    let (w, h) = img.dimensions();
    Tensor::from_fn([1, 3, h as usize, w as usize], |_, c, y, x| {
        T::from_f64(img.get_pixel(x as u32, y as u32)[c] as f64 / 255.0)
    })
}

/// Quantizes the first batch item, clamping to `[0, 1]` and rounding.
pub fn to_rgb<T: Real>(t: &Tensor<T>) -> RgbImage {
    let s = t.shape();
    assert_eq!(s.c, 3, "RGB tensors only");
    RgbImage::from_fn(s.w as u32, s.h as u32, |x, y| {
        let px = |c| {
            let v = Real::to_f64(t.get(0, c, y as usize, x as usize)).clamp(0.0, 1.0);
            (v * 255.0).round() as u8
        };
        image::Rgb([px(0), px(1), px(2)])
    })
}

pub fn save_image<T: Real>(t: &Tensor<T>, path: &Path) -> Result<()> {
    if t.shape().c != 3 || t.shape().n != 1 {
        return Err(CliError::Failed(format!("cannot save a {} tensor as an RGB image", t.shape())));
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    to_rgb(t)
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| CliError::Image {
            path: path.into(),
            source,
        })
}
