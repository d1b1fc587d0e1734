//! Dense `H×W×C` rasters with values in `[0,1]`, plus 8-bit PNG IO.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ExtendedColorType, ImageEncoder};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Interleaved (`[y][x][c]`) image raster.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::shape("image", format!("zero-sized {height}x{width}x{channels}")));
        }
        if data.len() != height * width * channels {
            return Err(Error::shape(
                "image",
                format!("{height}x{width}x{channels} needs {} values, got {}", height * width * channels, data.len()),
            ));
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0 && channels > 0, "zero-sized image");
        Self { height, width, channels, data: vec![value; height * width * channels] }
    }

    pub fn from_fn(height: usize, width: usize, channels: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut img = Self::zeros(height, width, channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    img.data[(y * width + x) * channels + c] = f(y, x, c);
                }
            }
        }
        img
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { data: self.data.iter().map(|&v| f(v)).collect(), ..self.clone() }
    }

    /// Top-left anchored crop.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 || top + height > self.height || left + width > self.width {
            return Err(Error::contract(
                "crop",
                format!("{height}x{width} at ({top},{left}) outside {}x{}", self.height, self.width),
            ));
        }
        Ok(Self::from_fn(height, width, self.channels, |y, x, c| self.get(top + y, left + x, c)))
    }

    pub fn flip_horizontal(&self) -> Self {
        Self::from_fn(self.height, self.width, self.channels, |y, x, c| self.get(y, self.width - 1 - x, c))
    }

    /// `[H,W,C]` tensor view (copy).
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![self.height, self.width, self.channels], self.data.clone()).expect("image values are finite")
    }

    /// Channel-planar `[C,H,W]` copy for convolutions.
    pub fn to_chw_tensor(&self) -> Tensor {
        let (h, w, c) = self.dims();
        let mut out = vec![0.0; h * w * c];
        for p in 0..h * w {
            for ch in 0..c {
                out[ch * h * w + p] = self.data[p * c + ch];
            }
        }
        Tensor::new(vec![c, h, w], out).expect("image values are finite")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match *t.shape() {
            [h, w, c] => Self::new(h, w, c, t.data().to_vec()),
            [h, w] => Self::new(h, w, 1, t.data().to_vec()),
            ref s => Err(Error::shape("image", format!("expected [H,W,C], got {s:?}"))),
        }
    }

    pub fn clamp01(&self) -> Self {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    /// Quantizes to 8 bits and back.
    pub fn quantize8(&self) -> Self {
        self.map(|v| to_u8(v) as f64 / 255.0)
    }

    /// Decodes an 8-bit PNG (or any format the decoder recognizes). Gray
    /// inputs are replicated to three channels; alpha is dropped.
    pub fn load(path: &Path) -> Result<Self> {
        let dynimg = image::ImageReader::open(path)
            .map_err(|e| Error::io(path, e))?
            .with_guessed_format()
            .map_err(|e| Error::io(path, e))?
            .decode()
            .map_err(|source| Error::Decode { path: path.to_path_buf(), source })?;
        let rgb = dynimg.to_rgb8();
        let (w, h) = rgb.dimensions();
        let data = rgb.into_raw().into_iter().map(|b| b as f64 / 255.0).collect();
        Self::new(h as usize, w as usize, 3, data)
    }

    /// Writes an 8-bit RGB (or gray, for one channel) PNG with fixed encoder
    /// settings so identical rasters give identical files.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self.data.iter().map(|&v| to_u8(v)).collect();
        let color = match self.channels {
            1 => ExtendedColorType::L8,
            3 => ExtendedColorType::Rgb8,
            c => return Err(Error::contract("save_png", format!("{c}-channel images are not supported"))),
        };
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let enc = PngEncoder::new_with_quality(BufWriter::new(file), CompressionType::Default, FilterType::Adaptive);
        enc.write_image(&bytes, self.width as u32, self.height as u32, color)
            .map_err(|source| Error::Decode { path: path.to_path_buf(), source })
    }
}

pub fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_roundtrip_and_normalization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = Image::from_fn(4, 5, 3, |y, x, c| ((y * 5 + x) * 3 + c) as f64 / 59.0).quantize8();
        img.save_png(&path).unwrap();
        let back = Image::load(&path).unwrap();
        assert_eq!(back, img);

        let white = Image::filled(2, 2, 3, 1.0);
        white.save_png(&path).unwrap();
        assert!(Image::load(&path).unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn grayscale_is_replicated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        let gray = Image::from_fn(3, 3, 1, |y, x, _| (y * 3 + x) as f64 / 8.0).quantize8();
        gray.save_png(&path).unwrap();
        let back = Image::load(&path).unwrap();
        assert_eq!(back.dims(), (3, 3, 3));
        for y in 0..3 {
            for x in 0..3 {
                for c in 0..3 {
                    assert_eq!(back.get(y, x, c), gray.get(y, x, 0));
                }
            }
        }
    }

    #[test]
    fn chw_layout() {
        let img = Image::from_fn(2, 3, 2, |y, x, c| (100 * c + 10 * y + x) as f64);
        let t = img.to_chw_tensor();
        assert_eq!(t.shape(), &[2, 2, 3]);
        assert_eq!(t.data()[6 + 3 + 2], 112.0);
    }
}
