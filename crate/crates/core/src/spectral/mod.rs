//! 2D orthonormal DCT-II and DFT magnitude spectra, with CSV/PGM export.

pub mod basis;
pub mod export;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use basis::{dct2_interleaved, dft2_plane, extract_plane, idct2_interleaved, store_plane};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumKind {
    Dct,
    DftMagnitude,
}

impl SpectrumKind {
    pub fn name(self) -> &'static str {
        match self {
            SpectrumKind::Dct => "DCT",
            SpectrumKind::DftMagnitude => "DFT magnitude",
        }
    }
}

/// Per-channel frequency coefficients laid out like the source image:
/// `coeffs[(u·width + v)·channels + c]`, with `u` the vertical frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub kind: SpectrumKind,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub coeffs: Vec<f64>,
}

impl Spectrum {
    pub fn new(kind: SpectrumKind, height: usize, width: usize, channels: usize, coeffs: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 || coeffs.len() != height * width * channels {
            return Err(Error::shape(
                "spectrum",
                format!("{height}x{width}x{channels} with {} coefficients", coeffs.len()),
            ));
        }
        Ok(Self { kind, height, width, channels, coeffs })
    }

    pub fn get(&self, u: usize, v: usize, c: usize) -> f64 {
        self.coeffs[(u * self.width + v) * self.channels + c]
    }

    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|v| v * v).sum()
    }

    pub fn same_layout(&self, other: &Spectrum) -> bool {
        self.kind == other.kind
            && self.height == other.height
            && self.width == other.width
            && self.channels == other.channels
    }
}

/// Orthonormal type-II DCT of every channel (rows, then columns).
pub fn dct2(image: &Image) -> Spectrum {
    let (h, w, c) = image.dims();
    Spectrum { kind: SpectrumKind::Dct, height: h, width: w, channels: c, coeffs: dct2_interleaved(image.data(), h, w, c) }
}

pub fn idct2(spectrum: &Spectrum) -> Result<Image> {
    if spectrum.kind != SpectrumKind::Dct {
        return Err(Error::UnsupportedInverse(spectrum.kind.name()));
    }
    let (h, w, c) = (spectrum.height, spectrum.width, spectrum.channels);
    Image::new(h, w, c, idct2_interleaved(&spectrum.coeffs, h, w, c))
}

/// Magnitude of the unnormalized 2D DFT of every channel.
pub fn dft_magnitude2(image: &Image) -> Spectrum {
    let (h, w, c) = image.dims();
    let zeros = vec![0.0; h * w];
    let mut out = vec![0.0; h * w * c];
    for ch in 0..c {
        let plane = extract_plane(image.data(), h, w, c, ch);
        let (re, im) = dft2_plane(&plane, &zeros, h, w);
        let mag: Vec<f64> = re.iter().zip(&im).map(|(r, i)| r.hypot(*i)).collect();
        store_plane(&mag, &mut out, c, ch);
    }
    Spectrum { kind: SpectrumKind::DftMagnitude, height: h, width: w, channels: c, coeffs: out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::prng;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_image(h: usize, w: usize, c: usize, seed: u64) -> Image {
        let mut rng = prng(seed);
        Image::from_fn(h, w, c, |_, _, _| rng.gen::<f64>())
    }

    /// `F(u,v) = C(u)C(v)·(2/√(MN))·ΣΣ f·cos·cos`, evaluated point by point.
    fn dct_double_sum(img: &Image, ch: usize) -> Vec<f64> {
        let (m, n, _) = img.dims();
        let c = |k: usize| if k == 0 { std::f64::consts::FRAC_1_SQRT_2 } else { 1.0 };
        let pi = std::f64::consts::PI;
        let mut out = vec![0.0; m * n];
        for u in 0..m {
            for v in 0..n {
                let mut acc = 0.0;
                for x in 0..m {
                    for y in 0..n {
                        acc += img.get(x, y, ch)
                            * (pi / m as f64 * u as f64 * (x as f64 + 0.5)).cos()
                            * (pi / n as f64 * v as f64 * (y as f64 + 0.5)).cos();
                    }
                }
                out[u * n + v] = c(u) * c(v) * (2.0 / m as f64).sqrt() * (2.0 / n as f64).sqrt() * acc;
            }
        }
        out
    }

    #[test]
    fn constant_two_by_two_has_only_dc() {
        let s = dct2(&Image::filled(2, 2, 1, 1.0));
        assert!((s.get(0, 0, 0) - 2.0).abs() < 1e-12);
        for (i, v) in s.coeffs.iter().enumerate().skip(1) {
            assert!(v.abs() < 1e-12, "coefficient {i} = {v}");
        }
    }

    #[test]
    fn single_pixel_is_identity() {
        let s = dct2(&Image::filled(1, 1, 1, 5.0));
        assert!((s.coeffs[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn matches_double_sum_on_rectangles() {
        let img = random_image(5, 3, 2, 11);
        let s = dct2(&img);
        for ch in 0..2 {
            let want = dct_double_sum(&img, ch);
            for u in 0..5 {
                for v in 0..3 {
                    assert!((s.get(u, v, ch) - want[u * 3 + v]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn inverse_of_dc_only_spectrum() {
        let s = Spectrum::new(SpectrumKind::Dct, 2, 2, 1, vec![2.0, 0.0, 0.0, 0.0]).unwrap();
        let img = idct2(&s).unwrap();
        assert!(img.data().iter().all(|v| (v - 1.0).abs() < 1e-12));
        let zero = Spectrum::new(SpectrumKind::Dct, 3, 4, 3, vec![0.0; 36]).unwrap();
        assert!(idct2(&zero).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dft_magnitude_has_no_inverse() {
        let s = dft_magnitude2(&random_image(4, 4, 1, 3));
        assert!(matches!(idct2(&s), Err(Error::UnsupportedInverse(_))));
    }

    #[test]
    fn dft_of_constant_and_impulse() {
        let s = dft_magnitude2(&Image::filled(3, 5, 1, 0.4));
        assert!((s.get(0, 0, 0) - 15.0 * 0.4).abs() < 1e-12);
        assert!(s.coeffs.iter().skip(1).all(|v| v.abs() < 1e-12));
        let mut imp = Image::zeros(4, 6, 1);
        imp.set(1, 2, 0, 1.0);
        assert!(dft_magnitude2(&imp).coeffs.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn constant_image_has_single_nonzero_dct_coefficient() {
        let s = dct2(&Image::filled(7, 6, 3, 0.3));
        let nonzero = s.coeffs.iter().filter(|v| v.abs() > 1e-12).count();
        assert_eq!(nonzero, 3);
        for c in 0..3 {
            assert!(s.get(0, 0, c).abs() > 0.0);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn parseval_and_roundtrip(h in 1usize..33, w in 1usize..33, seed in any::<u64>()) {
            let img = random_image(h, w, 3, seed);
            let s = dct2(&img);
            let pixel_energy: f64 = img.data().iter().map(|v| v * v).sum();
            prop_assert!((s.energy() - pixel_energy).abs() / pixel_energy.max(1e-300) < 1e-5);
            let back = idct2(&s).unwrap();
            let err = back.data().iter().zip(img.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(err < 1e-5);
        }

        #[test]
        fn linearity(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let x = random_image(6, 9, 2, seed);
            let y = random_image(6, 9, 2, seed.wrapping_add(1));
            let mix = Image::new(6, 9, 2, x.data().iter().zip(y.data()).map(|(p, q)| a * p + b * q).collect()).unwrap();
            let (sx, sy, sm) = (dct2(&x), dct2(&y), dct2(&mix));
            for i in 0..sm.coeffs.len() {
                prop_assert!((sm.coeffs[i] - (a * sx.coeffs[i] + b * sy.coeffs[i])).abs() < 1e-5);
            }
        }
    }
}
