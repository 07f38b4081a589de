//! Raster preprocessing for dataset images.

use image::imageops::{self, FilterType};
use image::{Rgb, RgbImage};

pub const TARGET_WIDTH: u32 = 800;
pub const TARGET_HEIGHT: u32 = 600;
/// Pixels with any channel below this count as ink.
pub const INK_THRESHOLD: u8 = 250;
pub const CROP_MARGIN: u32 = 4;
/// Luma below this becomes black in the sketch rendition.
pub const SKETCH_THRESHOLD: f64 = 200.0;

const WHITE: Rgb<u8> = Rgb([255, 255, 255]);

pub fn is_ink(p: &Rgb<u8>, threshold: u8) -> bool {
    p.0.iter().any(|&c| c < threshold)
}

/// Tight bounding box of ink pixels as `(x0, y0, x1, y1)`, inclusive.
pub fn ink_bounds(img: &RgbImage, threshold: u8) -> Option<(u32, u32, u32, u32)> {
    let mut b: Option<(u32, u32, u32, u32)> = None;
    for (x, y, p) in img.enumerate_pixels() {
        if is_ink(p, threshold) {
            b = Some(match b {
                None => (x, y, x, y),
                Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
            });
        }
    }
    b
}

/// Crops to the ink bounding box plus `margin`, clamped to the image. An image
/// without ink becomes a single white pixel.
pub fn crop_whitespace(img: &RgbImage, threshold: u8, margin: u32) -> RgbImage {
    let Some((x0, y0, x1, y1)) = ink_bounds(img, threshold) else {
        return RgbImage::from_pixel(1, 1, WHITE);
    };
    let x0 = x0.saturating_sub(margin);
    let y0 = y0.saturating_sub(margin);
    let x1 = (x1 + margin).min(img.width() - 1);
    let y1 = (y1 + margin).min(img.height() - 1);
    imageops::crop_imm(img, x0, y0, x1 - x0 + 1, y1 - y0 + 1).to_image()
}

/// Scales to fit 800×600 keeping the aspect ratio, then pads with white,
/// centered. Input already at the target size is returned unchanged.
pub fn normalize_size(img: &RgbImage) -> RgbImage {
    let (w, h) = img.dimensions();
    if (w, h) == (TARGET_WIDTH, TARGET_HEIGHT) {
        return img.clone();
    }
    let scale = (TARGET_WIDTH as f64 / w as f64).min(TARGET_HEIGHT as f64 / h as f64);
    let nw = ((w as f64 * scale).round() as u32).clamp(1, TARGET_WIDTH);
    let nh = ((h as f64 * scale).round() as u32).clamp(1, TARGET_HEIGHT);
    let resized = if (nw, nh) == (w, h) {
        img.clone()
    } else {
        imageops::resize(img, nw, nh, FilterType::Triangle)
    };
    let mut out = RgbImage::from_pixel(TARGET_WIDTH, TARGET_HEIGHT, WHITE);
    let ox = (TARGET_WIDTH - nw) / 2;
    let oy = (TARGET_HEIGHT - nh) / 2;
    imageops::replace(&mut out, &resized, ox as i64, oy as i64);
    out
}

/// Grayscale then binarize: strips color and fine shading. Deterministic.
pub fn sketchify(img: &RgbImage) -> RgbImage {
    let mut out = img.clone();
    for p in out.pixels_mut() {
        let l = 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64;
        let v = if l < SKETCH_THRESHOLD { 0 } else { 255 };
        *p = Rgb([v, v, v]);
    }
    out
}

/// Variance of the 4-neighbour Laplacian over the luma plane: a sharpness
/// proxy that is near zero for blurred or empty images.
pub fn laplacian_variance(img: &RgbImage) -> f64 {
    let (w, h) = img.dimensions();
    if w < 3 || h < 3 {
        return 0.0;
    }
    let l: Vec<f64> = img
        .pixels()
        .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
        .collect();
    let at = |x: u32, y: u32| l[(y * w + x) as usize];
    let mut sum = 0.0;
    let mut sq = 0.0;
    let mut n = 0.0;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let v = at(x - 1, y) + at(x + 1, y) + at(x, y - 1) + at(x, y + 1) - 4.0 * at(x, y);
            sum += v;
            sq += v * v;
            n += 1.0;
        }
    }
    let mean = sum / n;
    sq / n - mean * mean
}

/// Whether any ink pixel lies on the outermost row or column.
pub fn touches_border(img: &RgbImage, threshold: u8) -> bool {
    let (w, h) = img.dimensions();
    img.enumerate_pixels()
        .any(|(x, y, p)| (x == 0 || y == 0 || x == w - 1 || y == h - 1) && is_ink(p, threshold))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(size: u32, border: u32, color: Rgb<u8>) -> RgbImage {
        RgbImage::from_fn(size + 2 * border, size + 2 * border, |x, y| {
            if x >= border && y >= border && x < border + size && y < border + size {
                color
            } else {
                WHITE
            }
        })
    }

    #[test]
    fn crop_exact_square() {
        let img = square(20, 10, Rgb([0, 0, 0]));
        let c = crop_whitespace(&img, INK_THRESHOLD, 0);
        assert_eq!(c.dimensions(), (20, 20));
        assert!(c.pixels().all(|p| p.0 == [0, 0, 0]));
    }

    #[test]
    fn crop_all_white() {
        let c = crop_whitespace(&RgbImage::from_pixel(30, 20, WHITE), INK_THRESHOLD, CROP_MARGIN);
        assert_eq!(c.dimensions(), (1, 1));
        assert_eq!(c.get_pixel(0, 0), &WHITE);
    }

    #[test]
    fn crop_tight_is_unchanged() {
        let img = square(12, 0, Rgb([10, 10, 10]));
        assert_eq!(crop_whitespace(&img, INK_THRESHOLD, CROP_MARGIN).dimensions(), (12, 12));
    }

    #[test]
    fn normalize_cases() {
        let big = RgbImage::from_pixel(1600, 1200, Rgb([0, 0, 0]));
        let n = normalize_size(&big);
        assert_eq!(n.dimensions(), (800, 600));
        assert!(n.pixels().all(|p| p.0 == [0, 0, 0]));

        let same = RgbImage::from_fn(800, 600, |x, y| Rgb([(x % 256) as u8, (y % 256) as u8, 3]));
        assert_eq!(normalize_size(&same).as_raw(), same.as_raw());

        let narrow = RgbImage::from_pixel(100, 600, Rgb([0, 0, 0]));
        let n = normalize_size(&narrow);
        // 700 px of padding split evenly
        assert_eq!(n.get_pixel(349, 300), &WHITE);
        assert_eq!(n.get_pixel(350, 300).0, [0, 0, 0]);
        assert_eq!(n.get_pixel(449, 300).0, [0, 0, 0]);
        assert_eq!(n.get_pixel(450, 300), &WHITE);
    }

    #[test]
    fn sketchify_red_square() {
        let img = square(10, 5, Rgb([255, 0, 0]));
        let s = sketchify(&img);
        assert_eq!(s.get_pixel(10, 10).0, [0, 0, 0]);
        assert_eq!(s.get_pixel(0, 0), &WHITE);
        assert_eq!(sketchify(&img).as_raw(), s.as_raw());
        let white = RgbImage::from_pixel(5, 5, WHITE);
        assert_eq!(sketchify(&white), white);
    }

    #[test]
    fn border_and_sharpness() {
        let mut img = RgbImage::from_pixel(20, 20, WHITE);
        assert!(!touches_border(&img, INK_THRESHOLD));
        assert_eq!(laplacian_variance(&img), 0.0);
        img.put_pixel(19, 10, Rgb([0, 0, 0]));
        assert!(touches_border(&img, INK_THRESHOLD));
        assert!(laplacian_variance(&img) > 0.0);
    }
}
