use image::{GrayImage, RgbImage};

use super::{ImageMetric, ImageMetricError, ImageScore};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
const L: f64 = 255.0;

/// ITU-R BT.601 luma, kept in floating point.
pub fn luma(img: &RgbImage) -> Vec<f64> {
    img.pixels()
        .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
        .collect()
}

fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let k: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering: output is (w-k+1)×(h-k+1).
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let ow = w - n + 1;
    let oh = h - n + 1;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let line = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = k.iter().zip(&line[x..x + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k.iter().enumerate().map(|(i, a)| a * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM of two equally sized luma planes.
///
/// Images smaller than the window use the largest odd window that fits.
pub fn ssim_planes(a: &[f64], b: &[f64], w: usize, h: usize) -> Result<f64, ImageMetricError> {
    if a.len() != w * h || b.len() != w * h {
        return Err(ImageMetricError::DimensionMismatch);
    }
    if w == 0 || h == 0 {
        return Err(ImageMetricError::DegenerateInput("empty image".into()));
    }
    let mut size = SSIM_WINDOW.min(w).min(h);
    if size % 2 == 0 {
        size -= 1;
    }
    let k = gaussian_kernel(size, SSIM_SIGMA);
    let c1 = (K1 * L).powi(2);
    let c2 = (K2 * L).powi(2);

    let prod = |f: fn(f64, f64) -> f64| -> Vec<f64> { a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect() };
    let mu_a = filter_valid(a, w, h, &k);
    let mu_b = filter_valid(b, w, h, &k);
    let aa = filter_valid(&prod(|x, _| x * x), w, h, &k);
    let bb = filter_valid(&prod(|_, y| y * y), w, h, &k);
    let ab = filter_valid(&prod(|x, y| x * y), w, h, &k);

    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok((total / mu_a.len() as f64).clamp(-1.0, 1.0))
}

/// Windowed SSIM on the luma of two RGB images.
pub fn ssim(a: &RgbImage, b: &RgbImage) -> Result<ImageScore, ImageMetricError> {
    if a.dimensions() != b.dimensions() {
        return Err(ImageMetricError::DimensionMismatch);
    }
    let (w, h) = a.dimensions();
    let v = ssim_planes(&luma(a), &luma(b), w as usize, h as usize)?;
    Ok(ImageScore::new(ImageMetric::Ssim, v))
}

pub fn ssim_gray(a: &GrayImage, b: &GrayImage) -> Result<ImageScore, ImageMetricError> {
    if a.dimensions() != b.dimensions() {
        return Err(ImageMetricError::DimensionMismatch);
    }
    let (w, h) = a.dimensions();
    let pa: Vec<f64> = a.as_raw().iter().map(|&v| v as f64).collect();
    let pb: Vec<f64> = b.as_raw().iter().map(|&v| v as f64).collect();
    let v = ssim_planes(&pa, &pb, w as usize, h as usize)?;
    Ok(ImageScore::new(ImageMetric::Ssim, v))
}
