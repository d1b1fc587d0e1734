//! Bicubic resizing (the baseline and the degradation model) and bilinear
//! sampling at continuous coordinates (the LR skip path).
//!
//! Both use half-pixel-center alignment and clamp samples at the border.

use crate::error::{Error, Result};
use crate::image::Image;

/// Keys cubic convolution kernel with `a = -0.5`.
pub fn cubic(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

/// Output size for a real scale factor: `⌊r·n⌋`.
pub fn scaled_extent(n: usize, r: f64) -> usize {
    // the epsilon absorbs representation error, e.g. 2.3·10 = 22.999…
    (r * n as f64 + 1e-9).floor() as usize
}

struct AxisTaps {
    start: Vec<isize>,
    weights: Vec<Vec<f64>>,
}

/// One-dimensional resampling taps from `n_in` to `n_out` samples. When
/// shrinking, the kernel is stretched by the ratio (antialiasing).
fn axis_taps(n_in: usize, n_out: usize) -> AxisTaps {
    let ratio = n_in as f64 / n_out as f64;
    let stretch = ratio.max(1.0);
    let support = 2.0 * stretch;
    let mut start = Vec::with_capacity(n_out);
    let mut weights = Vec::with_capacity(n_out);
    for i in 0..n_out {
        let center = (i as f64 + 0.5) * ratio - 0.5;
        let lo = (center - support).floor() as isize + 1;
        let hi = (center + support).ceil() as isize - 1;
        let w: Vec<f64> = (lo..=hi).map(|j| cubic((j as f64 - center) / stretch)).collect();
        let total: f64 = w.iter().sum();
        start.push(lo);
        weights.push(w.into_iter().map(|v| v / total).collect());
    }
    AxisTaps { start, weights }
}

fn clamp_index(j: isize, n: usize) -> usize {
    j.clamp(0, n as isize - 1) as usize
}

/// Separable bicubic resize to an explicit output size.
pub fn resize_bicubic(img: &Image, out_h: usize, out_w: usize) -> Result<Image> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::contract("resize_bicubic", format!("empty target {out_h}x{out_w}")));
    }
    let (h, w, c) = img.dims();
    let cols = axis_taps(w, out_w);
    let rows = axis_taps(h, out_h);
    let mut tmp = Image::zeros(h, out_w, c);
    for y in 0..h {
        for x in 0..out_w {
            for ch in 0..c {
                let v = cols.weights[x]
                    .iter()
                    .enumerate()
                    .map(|(t, wt)| wt * img.get(y, clamp_index(cols.start[x] + t as isize, w), ch))
                    .sum();
                tmp.set(y, x, ch, v);
            }
        }
    }
    let mut out = Image::zeros(out_h, out_w, c);
    for y in 0..out_h {
        for x in 0..out_w {
            for ch in 0..c {
                let v = rows.weights[y]
                    .iter()
                    .enumerate()
                    .map(|(t, wt)| wt * tmp.get(clamp_index(rows.start[y] + t as isize, h), x, ch))
                    .sum();
                out.set(y, x, ch, v);
            }
        }
    }
    Ok(out)
}

/// Bicubic upsampling by `(r_y, r_x)` along (height, width) to `⌊r·H⌋×⌊r·W⌋`.
pub fn upsample_bicubic(lr: &Image, scale: (f64, f64)) -> Result<Image> {
    if !(scale.0 >= 1.0 && scale.1 >= 1.0) {
        return Err(Error::contract("upsample_bicubic", format!("scale {scale:?} below 1")));
    }
    resize_bicubic(lr, scaled_extent(lr.height(), scale.0), scaled_extent(lr.width(), scale.1))
}

/// Antialiased bicubic downsampling to an explicit size.
pub fn downsample_bicubic(hr: &Image, out_h: usize, out_w: usize) -> Result<Image> {
    if out_h > hr.height() || out_w > hr.width() {
        return Err(Error::contract(
            "downsample_bicubic",
            format!("{out_h}x{out_w} is larger than {}x{}", hr.height(), hr.width()),
        ));
    }
    resize_bicubic(hr, out_h, out_w)
}

/// Bilinear samples of `img` at normalized coordinates `(row, col)` in
/// `[-1,1]²`, pixel centers at `-1 + (2i+1)/n`. Returns `[Q·C]` values.
pub fn sample_bilinear(img: &Image, coords: &[[f64; 2]]) -> Vec<f64> {
    let (h, w, c) = img.dims();
    let mut out = Vec::with_capacity(coords.len() * c);
    for &[cy, cx] in coords {
        let py = ((cy + 1.0) * 0.5 * h as f64 - 0.5).clamp(0.0, (h - 1) as f64);
        let px = ((cx + 1.0) * 0.5 * w as f64 - 0.5).clamp(0.0, (w - 1) as f64);
        let (y0, x0) = (py.floor() as usize, px.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
        let (fy, fx) = (py - y0 as f64, px - x0 as f64);
        for ch in 0..c {
            let top = img.get(y0, x0, ch) * (1.0 - fx) + img.get(y0, x1, ch) * fx;
            let bottom = img.get(y1, x0, ch) * (1.0 - fx) + img.get(y1, x1, ch) * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}
