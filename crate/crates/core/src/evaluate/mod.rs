//! Boundary-cropped PSNR, scale sweeps against the bicubic baseline and
//! banded spectral distances.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::inr::{downsample_bicubic, scaled_extent, upsample_bicubic, LocalInr, QueryGrid};
use crate::spectral::dct2;

pub const BANDS: usize = 4;

/// PSNR in dB; `+∞` marks identical rasters.
pub fn psnr(reference: &Image, generated: &Image, crop: usize) -> Result<f64> {
    if reference.dims() != generated.dims() {
        return Err(Error::contract("psnr", format!("{:?} vs {:?}", reference.dims(), generated.dims())));
    }
    let (h, w, c) = reference.dims();
    if 2 * crop >= h || 2 * crop >= w {
        return Err(Error::contract("psnr", format!("crop {crop} leaves nothing of {h}x{w}")));
    }
    let mut sum = 0.0;
    for y in crop..h - crop {
        for x in crop..w - crop {
            for ch in 0..c {
                let d = reference.get(y, x, ch) - generated.get(y, x, ch);
                sum += d * d;
            }
        }
    }
    let mse = sum / ((h - 2 * crop) * (w - 2 * crop) * c) as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() })
}

fn format_db(v: f64) -> String {
    if v.is_infinite() { "IDENTICAL".into() } else { format!("{v:.4}") }
}

fn serialize_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() { s.serialize_f64(*v) } else { s.serialize_str("IDENTICAL") }
}

/// Mean `|ΔF|` of the DCT spectra in four bands of `max(u/M, v/N)`:
/// `[0,.25)`, `[.25,.5)`, `[.5,.75)`, `[.75,1)`.
pub fn spectral_report(reference: &Image, generated: &Image) -> Result<[f64; BANDS]> {
    if reference.dims() != generated.dims() {
        return Err(Error::contract("spectral_report", format!("{:?} vs {:?}", reference.dims(), generated.dims())));
    }
    let (h, w, c) = reference.dims();
    let (a, b) = (dct2(reference), dct2(generated));
    let mut sum = [0.0; BANDS];
    let mut count = [0usize; BANDS];
    for u in 0..h {
        for v in 0..w {
            let band = band_of(u, v, h, w);
            for ch in 0..c {
                sum[band] += (a.get(u, v, ch) - b.get(u, v, ch)).abs();
            }
            count[band] += c;
        }
    }
    // tiny rasters may leave a band empty; report 0 there
    Ok(std::array::from_fn(|i| if count[i] == 0 { 0.0 } else { sum[i] / count[i] as f64 }))
}

pub fn band_of(u: usize, v: usize, h: usize, w: usize) -> usize {
    let r = (u as f64 / h as f64).max(v as f64 / w as f64);
    ((r * BANDS as f64).floor() as usize).min(BANDS - 1)
}

/// Border pixels excluded from PSNR.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CropRule {
    /// `⌈scale⌉` pixels.
    #[default]
    Scale,
    Pixels(usize),
}

impl CropRule {
    pub fn pixels(self, scale: f64) -> usize {
        match self {
            CropRule::Scale => scale.ceil() as usize,
            CropRule::Pixels(n) => n,
        }
    }
}

/// HR/LR pair for one evaluation image: `lr` is `⌊H/r⌋×⌊W/r⌋` and `hr` the
/// top-left `⌊r·h⌋×⌊r·w⌋` crop it was downsampled from.
pub fn degrade(image: &Image, scale: f64) -> Result<(Image, Image)> {
    if !(scale >= 1.0 && scale.is_finite()) {
        return Err(Error::contract("degrade", format!("scale {scale} below 1")));
    }
    let lh = (image.height() as f64 / scale + 1e-9).floor() as usize;
    let lw = (image.width() as f64 / scale + 1e-9).floor() as usize;
    if lh == 0 || lw == 0 {
        return Err(Error::contract("degrade", format!("{}x{} is too small for x{scale}", image.height(), image.width())));
    }
    let (th, tw) = (scaled_extent(lh, scale).min(image.height()), scaled_extent(lw, scale).min(image.width()));
    let hr = image.crop(0, 0, th, tw)?;
    let lr = downsample_bicubic(&hr, lh, lw)?;
    Ok((lr, hr))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Bicubic,
    Model,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Bicubic => "Bicubic",
            Method::Model => "LocalINR",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScaleResult {
    pub scale: f64,
    pub crop: usize,
    pub method: Method,
    #[serde(serialize_with = "serialize_db")]
    pub mean_psnr: f64,
    pub per_image_psnr: Vec<PerImage>,
    /// Mean of the per-image band distances.
    pub band_distance: [f64; BANDS],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerImage {
    pub index: usize,
    #[serde(serialize_with = "serialize_db")]
    pub psnr: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EvalReport {
    pub results: Vec<ScaleResult>,
    /// Skipped (image, scale) combinations with the reason.
    pub notes: Vec<String>,
    /// Seconds per image per method, kept out of the report files so that
    /// they stay byte-identical across runs.
    #[serde(skip)]
    pub timing: Vec<Timing>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Timing {
    pub scale: f64,
    pub method: Method,
    pub seconds_per_image: f64,
}

impl EvalReport {
    pub fn get(&self, scale: f64, method: Method) -> Option<&ScaleResult> {
        self.results.iter().find(|r| r.scale == scale && r.method == method)
    }

    /// Plain-text table: one row per method, one column per scale.
    pub fn table(&self) -> String {
        let mut scales: Vec<f64> = Vec::new();
        for r in &self.results {
            if !scales.contains(&r.scale) {
                scales.push(r.scale);
            }
        }
        let mut out = format!("{:<10}", "Method");
        for s in &scales {
            let _ = write!(out, " {:>10}", format!("x{s}"));
        }
        out.push('\n');
        for m in [Method::Bicubic, Method::Model] {
            if !self.results.iter().any(|r| r.method == m) {
                continue;
            }
            let _ = write!(out, "{:<10}", m.name());
            for &s in &scales {
                let cell = self.get(s, m).map_or_else(|| "-".into(), |r| format_db(r.mean_psnr));
                let _ = write!(out, " {cell:>10}");
            }
            out.push('\n');
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }

    /// Writes `report.json`, `report.txt` and `timing.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: &str, text: String| {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        put("report.json", serde_json::to_string_pretty(self)? + "\n")?;
        put("report.txt", self.table())?;
        put("timing.json", serde_json::to_string_pretty(&self.timing)? + "\n")
    }
}

/// PSNR of the model (if given) and of bicubic upsampling at every scale.
pub fn benchmark(model: Option<&LocalInr>, images: &[Image], scales: &[f64], crop: CropRule) -> Result<EvalReport> {
    let mut report = EvalReport::default();
    for &scale in scales {
        if !(scale >= 1.0 && scale.is_finite()) {
            return Err(Error::contract("benchmark", format!("scale {scale} below 1")));
        }
        let px = crop.pixels(scale);
        let mut pairs = Vec::new();
        for (i, img) in images.iter().enumerate() {
            match degrade(img, scale) {
                Ok((lr, hr)) if 2 * px < hr.height().min(hr.width()) => pairs.push((i, lr, hr)),
                Ok(_) | Err(Error::Contract { .. }) => {
                    report.notes.push(format!("image {i} ({}x{}) skipped at x{scale}: too small", img.height(), img.width()))
                }
                Err(e) => return Err(e),
            }
        }
        if pairs.is_empty() {
            continue;
        }
        let methods: &[Method] = if model.is_some() { &[Method::Bicubic, Method::Model] } else { &[Method::Bicubic] };
        for &method in methods {
            let started = Instant::now();
            let mut per = Vec::with_capacity(pairs.len());
            let mut bands = [0.0; BANDS];
            for (i, lr, hr) in &pairs {
                let sr = match (method, model) {
                    (Method::Model, Some(m)) => m.render(lr, &QueryGrid::for_target(hr.height(), hr.width(), (scale, scale)))?,
                    _ => upsample_bicubic(lr, (scale, scale))?,
                };
                // bicubic can overshoot; both methods are judged on a valid image
                let sr = sr.clamp01();
                let sr = if sr.dims() == hr.dims() { sr } else { sr.crop(0, 0, hr.height(), hr.width())? };
                per.push(PerImage { index: *i, psnr: psnr(hr, &sr, px)? });
                for (b, d) in bands.iter_mut().zip(spectral_report(hr, &sr)?) {
                    *b += d / pairs.len() as f64;
                }
            }
            let seconds = started.elapsed().as_secs_f64() / pairs.len() as f64;
            report.timing.push(Timing { scale, method, seconds_per_image: seconds });
            report.results.push(ScaleResult {
                scale,
                crop: px,
                method,
                mean_psnr: mean_psnr(per.iter().map(|p| p.psnr)),
                per_image_psnr: per,
                band_distance: bands,
            });
        }
    }
    Ok(report)
}

/// Mean over images. Identical (`+∞`) entries are left out unless every
/// image is identical.
fn mean_psnr(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let finite: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
    if finite.is_empty() {
        f64::INFINITY
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::prng;
    use crate::spectral::dct2 as spectrum;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_image(h: usize, w: usize, seed: u64) -> Image {
        let mut rng = prng(seed);
        Image::from_fn(h, w, 3, |_, _, _| rng.gen::<f64>())
    }

    #[test]
    fn psnr_examples() {
        let a = random_image(8, 8, 0);
        assert_eq!(psnr(&a, &a, 0).unwrap(), f64::INFINITY);
        let b = a.map(|v| v + 0.1);
        assert!((psnr(&a, &b, 1).unwrap() - 20.0).abs() < 1e-9);
        assert!(matches!(psnr(&a, &random_image(8, 7, 0), 0), Err(Error::Contract { .. })));
        assert!(matches!(psnr(&a, &b, 4), Err(Error::Contract { .. })));
    }

    #[test]
    fn psnr_matches_double_loop_oracle() {
        let (a, b) = (random_image(9, 11, 1), random_image(9, 11, 2));
        let crop = 2;
        let mut se = 0.0;
        let mut n = 0.0;
        for y in crop..9 - crop {
            for x in crop..11 - crop {
                for c in 0..3 {
                    se += (a.get(y, x, c) - b.get(y, x, c)).powi(2);
                    n += 1.0;
                }
            }
        }
        let oracle = 10.0 * (1.0 / (se / n)).log10();
        assert!((psnr(&a, &b, crop).unwrap() - oracle).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn psnr_symmetric_and_monotone(seed in 0u64..1000, t in 1.01f64..4.0) {
            let a = random_image(6, 6, seed);
            let noise = random_image(6, 6, seed + 1).map(|v| (v - 0.5) * 0.1);
            let b = Image::new(6, 6, 3, a.data().iter().zip(noise.data()).map(|(x, n)| x + n).collect()).unwrap();
            let c = Image::new(6, 6, 3, a.data().iter().zip(noise.data()).map(|(x, n)| x + t * n).collect()).unwrap();
            prop_assert_eq!(psnr(&a, &b, 1).unwrap(), psnr(&b, &a, 1).unwrap());
            prop_assert!(psnr(&a, &c, 1).unwrap() < psnr(&a, &b, 1).unwrap());
        }
    }

    #[test]
    fn bands_of_identical_and_shifted_images() {
        let a = random_image(12, 10, 3);
        assert_eq!(spectral_report(&a, &a).unwrap(), [0.0; BANDS]);
        let b = a.map(|v| v + 0.2);
        let r = spectral_report(&a, &b).unwrap();
        assert!(r[0] > 0.0);
        assert!(r[1..].iter().all(|&v| v < 1e-12), "{r:?}");
    }

    #[test]
    fn bands_match_partition_oracle() {
        let (a, b) = (random_image(8, 12, 4), random_image(8, 12, 5));
        let (fa, fb) = (spectrum(&a), spectrum(&b));
        let mut cells: Vec<Vec<f64>> = vec![Vec::new(); 4];
        for u in 0..8 {
            for v in 0..12 {
                let r = f64::max(u as f64 / 8.0, v as f64 / 12.0);
                let band = if r < 0.25 { 0 } else if r < 0.5 { 1 } else if r < 0.75 { 2 } else { 3 };
                for c in 0..3 {
                    cells[band].push((fa.get(u, v, c) - fb.get(u, v, c)).abs());
                }
            }
        }
        let got = spectral_report(&a, &b).unwrap();
        for (g, c) in got.iter().zip(&cells) {
            assert!((g - c.iter().sum::<f64>() / c.len() as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn degrade_protocol() {
        let img = random_image(21, 17, 6);
        let (lr, hr) = degrade(&img, 2.5).unwrap();
        assert_eq!((lr.height(), lr.width()), (8, 6));
        assert_eq!((hr.height(), hr.width()), (20, 15));
        assert_eq!(hr.get(3, 4, 1), img.get(3, 4, 1));
    }

    #[test]
    fn benchmark_edge_cases() {
        let imgs = vec![random_image(16, 16, 7), random_image(3, 3, 8)];
        assert!(benchmark(None, &imgs, &[], CropRule::Scale).unwrap().results.is_empty());
        let r = benchmark(None, &imgs, &[1.0, 4.0], CropRule::Scale).unwrap();
        assert_eq!(r.get(1.0, Method::Bicubic).unwrap().mean_psnr, f64::INFINITY);
        assert!(r.get(4.0, Method::Bicubic).unwrap().mean_psnr.is_finite());
        assert!(r.notes.iter().any(|n| n.contains("image 1")));
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"IDENTICAL\""));
        assert!(r.table().contains("IDENTICAL"));
        assert!(benchmark(None, &imgs, &[0.5], CropRule::Scale).is_err());
    }

    #[test]
    fn report_files_are_deterministic() {
        let imgs = vec![random_image(16, 16, 9)];
        let dir = tempfile::tempdir().unwrap();
        let (d1, d2) = (dir.path().join("a"), dir.path().join("b"));
        benchmark(None, &imgs, &[2.0], CropRule::Scale).unwrap().write(&d1).unwrap();
        benchmark(None, &imgs, &[2.0], CropRule::Scale).unwrap().write(&d2).unwrap();
        for f in ["report.json", "report.txt"] {
            assert_eq!(fs::read(d1.join(f)).unwrap(), fs::read(d2.join(f)).unwrap());
        }
    }
}
