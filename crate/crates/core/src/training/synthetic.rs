//! Procedural texture corpus for desk-scale training and evaluation:
//! stripes, checkerboards, bubbles, plaid sinusoids and blocks, with random
//! orientation, period and colors. Rendered with 4×4 supersampling.

use std::f64::consts::PI;

use rand::Rng;

use crate::image::Image;
use crate::numerics::{prng, Prng};

const SUPERSAMPLE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TextureKind {
    Stripes,
    Checker,
    Bubbles,
    Plaid,
    Blocks,
}

impl TextureKind {
    pub const ALL: [TextureKind; 5] =
        [TextureKind::Stripes, TextureKind::Checker, TextureKind::Bubbles, TextureKind::Plaid, TextureKind::Blocks];
}

fn color(rng: &mut Prng) -> [f64; 3] {
    [rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95)]
}

fn mix(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t]
}

type Shader = Box<dyn Fn(f64, f64) -> [f64; 3]>;

fn shader(kind: TextureKind, size: usize, rng: &mut Prng) -> Shader {
    let (c0, c1) = (color(rng), color(rng));
    match kind {
        TextureKind::Stripes => {
            let theta = rng.gen_range(0.0..PI);
            let period = rng.gen_range(3.0..9.0);
            let (s, c) = theta.sin_cos();
            Box::new(move |y, x| if ((x * c + y * s) / period).rem_euclid(1.0) < 0.5 { c0 } else { c1 })
        }
        TextureKind::Checker => {
            let theta = rng.gen_range(0.0..PI / 2.0);
            let period = rng.gen_range(4.0..12.0);
            let (s, c) = theta.sin_cos();
            Box::new(move |y, x| {
                let u = ((x * c + y * s) / period).floor() as i64;
                let v = ((-x * s + y * c) / period).floor() as i64;
                if (u + v).rem_euclid(2) == 0 { c0 } else { c1 }
            })
        }
        TextureKind::Bubbles => {
            let n = rng.gen_range(8..20) * size * size / (64 * 64);
            let circles: Vec<(f64, f64, f64, [f64; 3])> = (0..n.max(4))
                .map(|_| {
                    let r = rng.gen_range(2.0..9.0);
                    (rng.gen_range(0.0..size as f64), rng.gen_range(0.0..size as f64), r, color(rng))
                })
                .collect();
            Box::new(move |y, x| {
                let mut out = c0;
                for &(cy, cx, r, col) in &circles {
                    let d = ((y - cy).powi(2) + (x - cx).powi(2)).sqrt();
                    if d < r {
                        // bright rim, darker interior
                        out = if d > 0.7 * r { col } else { mix(col, c1, 0.5) };
                    }
                }
                out
            })
        }
        TextureKind::Plaid => {
            let waves: Vec<(f64, f64, f64)> = (0..3)
                .map(|_| {
                    let f = rng.gen_range(0.06..0.3);
                    let th = rng.gen_range(0.0..PI);
                    (f * th.cos(), f * th.sin(), rng.gen_range(0.0..2.0 * PI))
                })
                .collect();
            Box::new(move |y, x| {
                let s: f64 = waves.iter().map(|&(fx, fy, ph)| (2.0 * PI * (fx * x + fy * y) + ph).cos()).sum();
                mix(c0, c1, 0.5 + s / 6.0)
            })
        }
        TextureKind::Blocks => {
            let cell = rng.gen_range(5.0..14.0);
            let n = (size as f64 / cell).ceil() as usize + 1;
            let palette: Vec<[f64; 3]> = (0..n * n).map(|_| color(rng)).collect();
            let edge = rng.gen_range(1.0..2.5);
            Box::new(move |y, x| {
                let (i, j) = ((y / cell) as usize, (x / cell) as usize);
                let (fy, fx) = (y - i as f64 * cell, x - j as f64 * cell);
                if fy < edge || fx < edge {
                    c1
                } else {
                    palette[(i * n + j) % palette.len()]
                }
            })
        }
    }
}

pub fn render_texture(kind: TextureKind, size: usize, rng: &mut Prng) -> Image {
    let f = shader(kind, size, rng);
    let step = 1.0 / SUPERSAMPLE as f64;
    let norm = (SUPERSAMPLE * SUPERSAMPLE) as f64;
    let mut img = Image::zeros(size, size, 3);
    for y in 0..size {
        for x in 0..size {
            let mut acc = [0.0; 3];
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let c = f(y as f64 + (sy as f64 + 0.5) * step, x as f64 + (sx as f64 + 0.5) * step);
                    acc.iter_mut().zip(c).for_each(|(a, v)| *a += v);
                }
            }
            for (ch, a) in acc.iter().enumerate() {
                img.set(y, x, ch, a / norm);
            }
        }
    }
    img
}

/// `count` textures cycling through every kind, deterministic in `seed`.
pub fn texture_corpus(count: usize, size: usize, seed: u64) -> Vec<Image> {
    let mut rng = prng(seed);
    (0..count).map(|i| render_texture(TextureKind::ALL[i % TextureKind::ALL.len()], size, &mut rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_is_deterministic_and_in_range() {
        let a = texture_corpus(5, 24, 7);
        let b = texture_corpus(5, 24, 7);
        assert_eq!(a, b);
        for img in &a {
            assert_eq!(img.dims(), (24, 24, 3));
            assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
            let mean = img.data().iter().sum::<f64>() / img.data().len() as f64;
            let var = img.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / img.data().len() as f64;
            assert!(var > 1e-4, "texture is flat");
        }
        assert_ne!(texture_corpus(5, 24, 8), a);
    }
}
