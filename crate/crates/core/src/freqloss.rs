//! Adaptive DCT frequency loss.
//!
//! Both images are mapped to the frequency domain; the per-frequency distance
//! `d(u,v) = mean_c |F_ref − F_gen|` drives a log-distance weight
//! `w0 = |ln max(d, ε)|^α`, normalized to `wn`. The mask zeroes a
//! low-frequency corner (upper-left, where the DCT puts the DC term) and a
//! high-frequency noise corner, and scales the rest by `β`.
//!
//! Three loss modes are offered:
//!
//! * [`LossMode::AdflLiteral`]: `(1/HW)·Σ w0(d)·mask`, the gradient flowing
//!   through the distance inside `w0` only.
//! * [`LossMode::AdflFflStyle`]: `(1/HW)·Σ mask·d²` with a detached mask.
//!   This is the training default.
//! * [`LossMode::DftFfl`]: the FFL-style loss over orthonormally scaled DFT
//!   magnitudes, with no zeroed corners.
//!
//! Weight rasters are recomputed every pass and never receive gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::numerics::{Graph, Tensor, Var};
use crate::spectral::{dct2, dft_magnitude2, Spectrum};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    AdflLiteral,
    AdflFflStyle,
    DftFfl,
}

impl LossMode {
    pub fn name(self) -> &'static str {
        match self {
            LossMode::AdflLiteral => "adfl_literal",
            LossMode::AdflFflStyle => "adfl_ffl_style",
            LossMode::DftFfl => "dft_ffl",
        }
    }

    pub fn uses_dct(self) -> bool {
        !matches!(self, LossMode::DftFfl)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FreqLossConfig {
    /// Exponent on the log-distance weight.
    pub alpha: f64,
    /// Mask gain outside the zeroed regions.
    pub beta: f64,
    /// Fraction of each axis covered by the zeroed low-frequency corner.
    pub lf_fraction: f64,
    /// Fraction of each axis covered by the zeroed highest-frequency corner.
    pub noise_fraction: f64,
    /// Weight of the frequency term in the combined objective.
    pub lambda: f64,
    pub mode: LossMode,
    /// Floor applied to distances before taking the logarithm.
    pub distance_epsilon: f64,
}

impl Default for FreqLossConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            lf_fraction: 0.1,
            noise_fraction: 0.1,
            lambda: 0.05,
            mode: LossMode::AdflFflStyle,
            distance_epsilon: 1e-8,
        }
    }
}

impl FreqLossConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.alpha > 0.0) || !(self.beta > 0.0) {
            return bad(format!("alpha ({}) and beta ({}) must be positive", self.alpha, self.beta));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda ({}) must be a finite nonnegative number", self.lambda));
        }
        if !(self.distance_epsilon > 0.0) {
            return bad(format!("distance_epsilon ({}) must be positive", self.distance_epsilon));
        }
        for (name, f) in [("lf_fraction", self.lf_fraction), ("noise_fraction", self.noise_fraction)] {
            if !(0.0..1.0).contains(&f) {
                return bad(format!("{name} ({f}) must lie in [0, 1)"));
            }
        }
        if self.lf_fraction + self.noise_fraction >= 1.0 {
            return bad("lf_fraction + noise_fraction must be below 1".into());
        }
        Ok(())
    }
}

/// Number of cells covered along an axis of length `n` by a fractional
/// corner; a tiny slack keeps values like `0.1·30` from rounding up.
fn corner_extent(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// `true` where the mask is forced to zero for an `h×w` raster.
pub fn zeroed_cells(h: usize, w: usize, cfg: &FreqLossConfig) -> Vec<bool> {
    let mut out = vec![false; h * w];
    if !cfg.mode.uses_dct() {
        return out;
    }
    let (lf_h, lf_w) = (corner_extent(cfg.lf_fraction, h), corner_extent(cfg.lf_fraction, w));
    let (nz_h, nz_w) = (corner_extent(cfg.noise_fraction, h), corner_extent(cfg.noise_fraction, w));
    for u in 0..h {
        for v in 0..w {
            let lf = u < lf_h && v < lf_w;
            let noise = u >= h - nz_h && v >= w - nz_w;
            out[u * w + v] = lf || noise;
        }
    }
    out
}

/// Raw and normalized frequency distance weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Fdm {
    pub w0: Tensor,
    pub wn: Tensor,
}

/// Per-frequency weight rasters, all `[H,W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FreqWeight {
    pub w0: Tensor,
    pub wn: Tensor,
    pub mask: Tensor,
}

impl FreqWeight {
    pub fn height(&self) -> usize {
        self.mask.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.mask.shape()[1]
    }
}

fn plane_dims(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    match *t.shape() {
        [h, w] => Ok((h, w)),
        ref s => Err(Error::shape(op, format!("expected an [H,W] raster, got {s:?}"))),
    }
}

/// `d(u,v)`: absolute spectral difference averaged over channels.
pub fn frequency_distance(reference: &Spectrum, generated: &Spectrum) -> Result<Tensor> {
    if !reference.same_layout(generated) {
        return Err(Error::shape(
            "frequency_distance",
            format!(
                "{} {}x{}x{} vs {} {}x{}x{}",
                reference.kind.name(),
                reference.height,
                reference.width,
                reference.channels,
                generated.kind.name(),
                generated.height,
                generated.width,
                generated.channels
            ),
        ));
    }
    let c = reference.channels;
    let d = reference
        .coeffs
        .chunks(c)
        .zip(generated.coeffs.chunks(c))
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / c as f64)
        .collect();
    Tensor::new(vec![reference.height, reference.width], d)
}

/// `w0 = |ln max(d, ε)|^α` and `wn = w0 / max(w0)`.
///
/// The maximum is taken over cells the mask can reach (every cell when no
/// corner is zeroed), so the normalization ignores the DC term whenever it
/// is masked out. Masked cells are clipped to 1.
pub fn build_fdm(d: &Tensor, cfg: &FreqLossConfig) -> Result<Fdm> {
    let (h, w) = plane_dims("build_fdm", d)?;
    if let Some(bad) = d.data().iter().find(|&&v| v < 0.0) {
        return Err(Error::contract("build_fdm", format!("negative distance {bad}")));
    }
    let w0: Vec<f64> = d.data().iter().map(|&v| v.max(cfg.distance_epsilon).ln().abs().powf(cfg.alpha)).collect();
    let zeroed = zeroed_cells(h, w, cfg);
    let peak = w0.iter().zip(&zeroed).filter(|(_, &z)| !z).map(|(v, _)| *v).fold(0.0, f64::max);
    let wn: Vec<f64> = w0.iter().map(|&v| if peak > 0.0 { (v / peak).min(1.0) } else { 0.0 }).collect();
    Ok(Fdm { w0: Tensor::new(vec![h, w], w0)?, wn: Tensor::new(vec![h, w], wn)? })
}

/// `0` in the low-frequency and noise corners, `β·wn` elsewhere.
pub fn build_mask(wn: &Tensor, cfg: &FreqLossConfig) -> Result<Tensor> {
    let (h, w) = plane_dims("build_mask", wn)?;
    let zeroed = zeroed_cells(h, w, cfg);
    let mask = wn.data().iter().zip(&zeroed).map(|(&v, &z)| if z { 0.0 } else { cfg.beta * v }).collect();
    Tensor::new(vec![h, w], mask)
}

pub fn frequency_weight(d: &Tensor, cfg: &FreqLossConfig) -> Result<FreqWeight> {
    let Fdm { w0, wn } = build_fdm(d, cfg)?;
    let mask = build_mask(&wn, cfg)?;
    Ok(FreqWeight { w0, wn, mask })
}

/// Spectrum used by a loss mode, as an `[H,W,C]` tensor. The DFT path is
/// scaled by `1/√(HW)` so its magnitudes live on the same scale as the
/// orthonormal DCT.
pub fn loss_spectrum(image: &Image, mode: LossMode) -> Tensor {
    let (h, w, c) = image.dims();
    let s = if mode.uses_dct() {
        dct2(image)
    } else {
        let mut s = dft_magnitude2(image);
        let k = dft_norm(h, w);
        s.coeffs.iter_mut().for_each(|v| *v *= k);
        s
    };
    Tensor::new(vec![h, w, c], s.coeffs).expect("spectrum of a finite image is finite")
}

fn dft_norm(h: usize, w: usize) -> f64 {
    1.0 / ((h * w) as f64).sqrt()
}

fn check_image_var(op: &'static str, g: &Graph, reference: &Image, gen: Var) -> Result<()> {
    let (h, w, c) = reference.dims();
    if g.shape(gen) != [h, w, c] {
        return Err(Error::shape(op, format!("reference {h}x{w}x{c}, generated {:?}", g.shape(gen))));
    }
    Ok(())
}

/// Records `d(u,v)` for `gen` against a constant reference.
pub fn distance_graph(g: &mut Graph, reference: &Image, gen: Var, cfg: &FreqLossConfig) -> Result<Var> {
    check_image_var("adfl", g, reference, gen)?;
    let (h, w, _) = reference.dims();
    let ref_spec = g.constant(loss_spectrum(reference, cfg.mode));
    let gen_spec = if cfg.mode.uses_dct() { g.dct2(gen)? } else { g.dft_magnitude(gen, dft_norm(h, w))? };
    let diff = g.sub(gen_spec, ref_spec)?;
    let abs = g.abs(diff);
    g.mean_last_axis(abs)
}

/// Frequency loss with caller-supplied (frozen) weight rasters.
pub fn adfl_graph_frozen(g: &mut Graph, reference: &Image, gen: Var, cfg: &FreqLossConfig, weights: &FreqWeight) -> Result<Var> {
    let d = distance_graph(g, reference, gen, cfg)?;
    loss_from_distance(g, d, cfg, weights)
}

fn loss_from_distance(g: &mut Graph, d: Var, cfg: &FreqLossConfig, weights: &FreqWeight) -> Result<Var> {
    let (h, w) = (g.shape(d)[0], g.shape(d)[1]);
    if weights.mask.shape() != [h, w] {
        return Err(Error::shape("adfl", format!("mask {:?} for distance {h}x{w}", weights.mask.shape())));
    }
    let per_cell = match cfg.mode {
        LossMode::AdflLiteral => {
            let log = g.log_clamped(d, cfg.distance_epsilon)?;
            let abs = g.abs(log);
            g.pow(abs, cfg.alpha)?
        }
        LossMode::AdflFflStyle | LossMode::DftFfl => g.square(d),
    };
    let weighted = g.mul_const(per_cell, weights.mask.data().to_vec())?;
    let total = g.sum(weighted);
    Ok(g.scale(total, 1.0 / (h * w) as f64))
}

/// Records the frequency loss of `gen` and returns it with the weights
/// derived from the current spectra.
pub fn adfl_graph(g: &mut Graph, reference: &Image, gen: Var, cfg: &FreqLossConfig) -> Result<(Var, FreqWeight)> {
    cfg.validate()?;
    let d = distance_graph(g, reference, gen, cfg)?;
    let weights = frequency_weight(g.value(d), cfg)?;
    let loss = loss_from_distance(g, d, cfg, &weights)?;
    Ok((loss, weights))
}

/// Weight rasters for a pair of images.
pub fn weights_at(reference: &Image, gen: &Image, cfg: &FreqLossConfig) -> Result<FreqWeight> {
    check_images("adfl", reference, gen)?;
    let mut g = Graph::new();
    let v = g.constant(gen.to_tensor());
    let d = distance_graph(&mut g, reference, v, cfg)?;
    frequency_weight(g.value(d), cfg)
}

/// Mean absolute pixel difference.
pub fn spatial_l1_graph(g: &mut Graph, reference: &Image, gen: Var) -> Result<Var> {
    check_image_var("spatial_l1", g, reference, gen)?;
    let r = g.constant(reference.to_tensor());
    let diff = g.sub(gen, r)?;
    let abs = g.abs(diff);
    Ok(g.mean(abs))
}

/// Nodes of the combined objective `L_spatial + λ·L_ADFL`.
pub struct LossNodes {
    pub total: Var,
    pub spatial: Var,
    pub adfl: Var,
    pub weights: FreqWeight,
}

/// With `λ = 0` the frequency term is still evaluated (for logging) but is
/// not connected to `total`, so the backward pass matches a pure L1 run.
pub fn total_loss_graph(g: &mut Graph, reference: &Image, gen: Var, cfg: &FreqLossConfig) -> Result<LossNodes> {
    total_loss_graph_with(g, reference, gen, cfg, None)
}

/// As [`total_loss_graph`], optionally with frozen weight rasters instead
/// of weights derived from the current spectra.
pub fn total_loss_graph_with(
    g: &mut Graph,
    reference: &Image,
    gen: Var,
    cfg: &FreqLossConfig,
    frozen: Option<&FreqWeight>,
) -> Result<LossNodes> {
    let spatial = spatial_l1_graph(g, reference, gen)?;
    let (adfl, weights) = match frozen {
        Some(w) => {
            cfg.validate()?;
            (adfl_graph_frozen(g, reference, gen, cfg, w)?, w.clone())
        }
        None => adfl_graph(g, reference, gen, cfg)?,
    };
    let total = if cfg.lambda == 0.0 {
        spatial
    } else {
        let weighted = g.scale(adfl, cfg.lambda);
        g.add(spatial, weighted)?
    };
    Ok(LossNodes { total, spatial, adfl, weights })
}

fn check_images(op: &'static str, a: &Image, b: &Image) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

pub fn adfl(reference: &Image, gen: &Image, cfg: &FreqLossConfig) -> Result<f64> {
    check_images("adfl", reference, gen)?;
    let mut g = Graph::new();
    let v = g.constant(gen.to_tensor());
    let (loss, _) = adfl_graph(&mut g, reference, v, cfg)?;
    Ok(g.scalar(loss))
}

pub fn spatial_l1(reference: &Image, gen: &Image) -> Result<f64> {
    check_images("spatial_l1", reference, gen)?;
    let n = reference.data().len() as f64;
    Ok(reference.data().iter().zip(gen.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / n)
}

/// Scalar values of the combined objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LossValues {
    pub spatial: f64,
    pub adfl: f64,
    pub total: f64,
}

pub fn total_loss(reference: &Image, gen: &Image, cfg: &FreqLossConfig) -> Result<LossValues> {
    Ok(total_loss_with_grad(reference, gen, cfg)?.0)
}

/// Loss values plus the gradient of the total with respect to `gen`.
pub fn total_loss_with_grad(reference: &Image, gen: &Image, cfg: &FreqLossConfig) -> Result<(LossValues, Vec<f64>)> {
    check_images("total_loss", reference, gen)?;
    let mut g = Graph::new();
    let v = g.param(&gen.to_tensor());
    let nodes = total_loss_graph(&mut g, reference, v, cfg)?;
    let values = LossValues { spatial: g.scalar(nodes.spatial), adfl: g.scalar(nodes.adfl), total: g.scalar(nodes.total) };
    let mut grads = g.backward(nodes.total)?;
    let grad = grads.take(v).unwrap_or_else(|| vec![0.0; gen.data().len()]);
    Ok((values, grad))
}
