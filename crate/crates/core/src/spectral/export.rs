//! Plain-text CSV and binary PGM (P5) dumps of single-channel rasters.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::spectral::Spectrum;

/// Row-major CSV, one raster row per line.
pub fn raster_csv(plane: &[f64], height: usize, width: usize) -> String {
    let mut out = String::with_capacity(plane.len() * 12);
    for row in plane.chunks(width).take(height) {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

pub fn write_csv(path: &Path, plane: &[f64], height: usize, width: usize) -> Result<()> {
    check_plane("write_csv", plane, height, width)?;
    fs::write(path, raster_csv(plane, height, width)).map_err(|e| Error::io(path, e))
}

/// 8-bit PGM of `ln(1+|x|)` rescaled so the largest entry maps to 255.
pub fn log_magnitude_pgm(plane: &[f64], height: usize, width: usize) -> Vec<u8> {
    let logs: Vec<f64> = plane.iter().map(|v| v.abs().ln_1p()).collect();
    let peak = logs.iter().cloned().fold(0.0, f64::max);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(logs.iter().map(|&l| if peak > 0.0 { (l / peak * 255.0).round() as u8 } else { 0 }));
    out
}

pub fn write_log_pgm(path: &Path, plane: &[f64], height: usize, width: usize) -> Result<()> {
    check_plane("write_log_pgm", plane, height, width)?;
    fs::write(path, log_magnitude_pgm(plane, height, width)).map_err(|e| Error::io(path, e))
}

/// One channel of a spectrum as an `height×width` plane.
pub fn channel_plane(spectrum: &Spectrum, channel: usize) -> Result<Vec<f64>> {
    if channel >= spectrum.channels {
        return Err(Error::contract("channel_plane", format!("channel {channel} of {}", spectrum.channels)));
    }
    Ok(spectrum.coeffs.iter().skip(channel).step_by(spectrum.channels).copied().collect())
}

fn check_plane(op: &'static str, plane: &[f64], height: usize, width: usize) -> Result<()> {
    if plane.len() != height * width || height == 0 || width == 0 {
        return Err(Error::shape(op, format!("{} values for {height}x{width}", plane.len())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        assert_eq!(raster_csv(&[1.0, 2.5, -0.0, 4.0], 2, 2), "1,2.5\n-0,4\n");
    }

    #[test]
    fn pgm_header_and_scaling() {
        let bytes = log_magnitude_pgm(&[0.0, 1.0, -1.0, 3.0], 2, 2);
        let header = b"P5\n2 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        let px = &bytes[header.len()..];
        assert_eq!(px[0], 0);
        assert_eq!(px[3], 255);
        assert_eq!(px[1], px[2]);
    }
}
