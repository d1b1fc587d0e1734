//! Local implicit image function: encoder features are unfolded, the nearest
//! latent(s) to each query are decoded by an MLP together with the relative
//! coordinate and the cell size, and a bilinear LR skip is added.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::inr::encoder::{self, EncoderConfig};
use crate::inr::grid::{pixel_center, QueryGrid};
use crate::inr::resample::sample_bilinear;
use crate::numerics::{kaiming_uniform, prng, Graph, Tensor, Var};

pub const RGB: usize = 3;
/// Relative coordinate (2) plus cell size (2).
pub const POSITION_FEATURES: usize = 4;

const ENSEMBLE_SHIFT: f64 = 1e-6;
const INFERENCE_CHUNK: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoderConfig {
    pub hidden: usize,
    /// Linear layers including the output layer.
    pub layers: usize,
    pub unfold_radius: usize,
    pub ensemble: bool,
    pub lr_skip: bool,
    /// Start the output layer at zero so that an untrained model equals
    /// its skip path; other layers keep Kaiming init.
    pub zero_init_output: bool,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self { hidden: 256, layers: 5, unfold_radius: 1, ensemble: true, lr_skip: true, zero_init_output: true }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.decoder.hidden == 0 || self.decoder.layers == 0 {
            return Err(Error::Config("decoder hidden width and layer count must be positive".into()));
        }
        Ok(())
    }

    /// Width of one unfolded latent vector.
    pub fn unfolded_width(&self) -> usize {
        let k = 2 * self.decoder.unfold_radius + 1;
        self.encoder.channels * k * k
    }

    /// Width of the decoder input row.
    pub fn decoder_input_width(&self) -> usize {
        self.unfolded_width() + POSITION_FEATURES
    }
}

/// How each query is decoded: which latent rows feed it, the position
/// features appended to them, and the blend weights.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryPlan {
    /// Latent index per (query, member) row.
    pub latent: Vec<usize>,
    /// `[rows, 4]`: relative coordinate then cell, both in feature-grid units.
    pub position: Vec<f64>,
    /// Blend weight per row; each group of `group` rows sums to one.
    pub weights: Vec<f64>,
    pub group: usize,
}

/// Latent selection for every query. With `ensemble`, the four latents
/// around the query are used and blended by the area of the opposite
/// sub-rectangle; otherwise only the nearest latent is used.
pub fn query_plan(grid: &QueryGrid, feat_h: usize, feat_w: usize, ensemble: bool) -> QueryPlan {
    let shifts: &[(f64, f64)] =
        if ensemble { &[(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)] } else { &[(0.0, 0.0)] };
    let group = shifts.len();
    let (half_h, half_w) = (1.0 / feat_h as f64, 1.0 / feat_w as f64);
    let nearest = |c: f64, n: usize| (((c + 1.0) * 0.5 * n as f64).floor().max(0.0) as usize).min(n - 1);
    let mut plan = QueryPlan {
        latent: Vec::with_capacity(grid.len() * group),
        position: Vec::with_capacity(grid.len() * group * POSITION_FEATURES),
        weights: Vec::with_capacity(grid.len() * group),
        group,
    };
    let mut areas = Vec::with_capacity(group);
    for (coord, cell) in grid.coords.iter().zip(&grid.cells) {
        areas.clear();
        for &(vy, vx) in shifts {
            let (sy, sx) = if ensemble { (ENSEMBLE_SHIFT, ENSEMBLE_SHIFT) } else { (0.0, 0.0) };
            let cy = (coord[0] + vy * half_h + sy).clamp(-1.0 + 1e-6, 1.0 - 1e-6);
            let cx = (coord[1] + vx * half_w + sx).clamp(-1.0 + 1e-6, 1.0 - 1e-6);
            let (iy, ix) = (nearest(cy, feat_h), nearest(cx, feat_w));
            let rel_y = (coord[0] - pixel_center(iy, feat_h)) * feat_h as f64;
            let rel_x = (coord[1] - pixel_center(ix, feat_w)) * feat_w as f64;
            plan.latent.push(iy * feat_w + ix);
            plan.position.extend_from_slice(&[rel_y, rel_x, cell[0] * feat_h as f64, cell[1] * feat_w as f64]);
            areas.push((rel_y * rel_x).abs() + 1e-9);
        }
        let total: f64 = areas.iter().sum();
        // each prediction is weighted by the area diagonally opposite to it
        for k in 0..group {
            plan.weights.push(areas[group - 1 - k] / total);
        }
    }
    plan
}

/// Encoder plus implicit decoder with trainable parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalInr {
    pub config: ModelConfig,
    pub seed: u64,
    params: Vec<(String, Tensor)>,
}

impl LocalInr {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = prng(seed);
        let mut params = encoder::init_params(&config.encoder, &mut rng);
        let d = &config.decoder;
        let out_of = |layer: usize| if layer + 1 == d.layers { RGB } else { d.hidden };
        let first_out = out_of(0);
        let fan_in = config.decoder_input_width();
        params.push(("decoder.l0.w_feat".into(), kaiming_uniform(&[config.unfolded_width(), first_out], fan_in, &mut rng)));
        params.push(("decoder.l0.w_pos".into(), kaiming_uniform(&[POSITION_FEATURES, first_out], fan_in, &mut rng)));
        params.push(("decoder.l0.b".into(), Tensor::zeros(&[first_out])));
        for layer in 1..d.layers {
            params.push((format!("decoder.l{layer}.w"), kaiming_uniform(&[d.hidden, out_of(layer)], d.hidden, &mut rng)));
            params.push((format!("decoder.l{layer}.b"), Tensor::zeros(&[out_of(layer)])));
        }
        let mut model = Self { config, seed, params };
        if model.config.decoder.zero_init_output {
            model.zero_decoder_output();
        }
        Ok(model)
    }

    /// Rebuilds a model from named tensors, checking names and shapes
    /// against a freshly initialized model of the same config.
    pub fn from_params(config: ModelConfig, seed: u64, params: Vec<(String, Tensor)>) -> Result<Self> {
        let template = Self::new(config, seed)?;
        if template.params.len() != params.len() {
            return Err(Error::shape("load_params", format!("expected {} tensors, got {}", template.params.len(), params.len())));
        }
        for ((tn, tt), (n, t)) in template.params.iter().zip(&params) {
            if tn != n || tt.shape() != t.shape() {
                return Err(Error::shape("load_params", format!("{n} {:?} where {tn} {:?} was expected", t.shape(), tt.shape())));
            }
        }
        Ok(Self { params, ..template })
    }

    pub fn params(&self) -> &[(String, Tensor)] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [(String, Tensor)] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|(_, t)| t.len()).sum()
    }

    /// Zeroes the output layer so the decoder predicts 0 everywhere.
    pub fn zero_decoder_output(&mut self) {
        let last = self.config.decoder.layers - 1;
        let names: Vec<String> = if last == 0 {
            vec!["decoder.l0.w_feat".into(), "decoder.l0.w_pos".into(), "decoder.l0.b".into()]
        } else {
            vec![format!("decoder.l{last}.w"), format!("decoder.l{last}.b")]
        };
        for n in names {
            if let Some(t) = self.param_mut(&n) {
                t.data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    /// Zeroes every residual block so the encoder reduces to its embedding.
    pub fn zero_encoder_blocks(&mut self) {
        for (n, t) in &mut self.params {
            if n.starts_with("encoder.block") {
                t.data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    /// Inserts every parameter as a trainable leaf.
    pub fn insert_params(&self, g: &mut Graph) -> Vec<Var> {
        self.params.iter().map(|(_, t)| g.param(t)).collect()
    }

    fn insert_constants(&self, g: &mut Graph) -> Vec<Var> {
        self.params.iter().map(|(_, t)| g.constant(t.clone())).collect()
    }

    fn split_vars<'a>(&self, vars: &'a [Var]) -> (&'a [Var], &'a [Var]) {
        vars.split_at(encoder::param_count(&self.config.encoder))
    }

    fn check_lr(&self, lr: &Image) -> Result<()> {
        if lr.channels() != encoder::IN_CHANNELS {
            return Err(Error::shape("encode", format!("expected RGB input, got {} channels", lr.channels())));
        }
        Ok(())
    }

    /// Records encoder and decoder; returns the `[Q,3]` prediction.
    pub fn forward(&self, g: &mut Graph, vars: &[Var], lr: &Image, grid: &QueryGrid) -> Result<Var> {
        self.check_lr(lr)?;
        grid.validate()?;
        if grid.is_empty() {
            return Err(Error::contract("query_rgb", "empty query grid"));
        }
        let (enc, dec) = self.split_vars(vars);
        let input = g.constant(lr.to_chw_tensor());
        let feat = encoder::forward(g, &self.config.encoder, enc, input)?;
        let proj = self.project_latents(g, dec, feat)?;
        self.decode(g, dec, proj, lr, grid)
    }

    /// `[Q,3]` forward reshaped to the grid's `[H',W',3]` raster.
    pub fn forward_raster(&self, g: &mut Graph, vars: &[Var], lr: &Image, grid: &QueryGrid) -> Result<Var> {
        let (th, tw) = grid
            .target
            .ok_or_else(|| Error::contract("forward_raster", "query grid does not cover a full raster"))?;
        let out = self.forward(g, vars, lr, grid)?;
        g.reshape(out, vec![th, tw, RGB])
    }

    /// First decoder layer applied to every unfolded latent once; queries
    /// then gather rows of this projection. This equals applying the layer
    /// to the gathered unfolded vectors since the layer is linear.
    fn project_latents(&self, g: &mut Graph, dec: &[Var], feat: Var) -> Result<Var> {
        let unfolded = g.unfold(feat, self.config.decoder.unfold_radius)?;
        g.matmul(unfolded, dec[0])
    }

    fn decode(&self, g: &mut Graph, dec: &[Var], proj: Var, lr: &Image, grid: &QueryGrid) -> Result<Var> {
        let d = &self.config.decoder;
        let plan = query_plan(grid, lr.height(), lr.width(), d.ensemble);
        let rows = plan.latent.len();
        let gathered = g.gather_rows(proj, plan.latent)?;
        let pos = g.constant(Tensor::new(vec![rows, POSITION_FEATURES], plan.position)?);
        let pos_proj = g.matmul(pos, dec[1])?;
        let mut h = g.add(gathered, pos_proj)?;
        h = g.add_row_bias(h, dec[2])?;
        for layer in 1..d.layers {
            h = g.relu(h);
            h = g.matmul(h, dec[1 + 2 * layer])?;
            h = g.add_row_bias(h, dec[2 + 2 * layer])?;
        }
        let mut out = g.group_weighted_sum(h, plan.weights, plan.group)?;
        if d.lr_skip {
            let skip = Tensor::new(vec![grid.len(), RGB], sample_bilinear(lr, &grid.coords))?;
            let skip = g.constant(skip);
            out = g.add(out, skip)?;
        }
        Ok(out)
    }

    /// Encoder feature map `[C,H,W]` of an LR image.
    pub fn encode(&self, lr: &Image) -> Result<Tensor> {
        self.check_lr(lr)?;
        let mut g = Graph::new();
        let vars = self.insert_constants(&mut g);
        let (enc, _) = self.split_vars(&vars);
        let input = g.constant(lr.to_chw_tensor());
        let feat = encoder::forward(&mut g, &self.config.encoder, enc, input)?;
        Ok(g.value(feat).clone())
    }

    /// RGB predictions for every query, decoded from precomputed features.
    /// An empty grid yields an empty result.
    pub fn query_rgb(&self, features: &Tensor, lr: &Image, grid: &QueryGrid) -> Result<Vec<[f64; RGB]>> {
        grid.validate()?;
        if features.shape() != [self.config.encoder.channels, lr.height(), lr.width()] {
            return Err(Error::shape(
                "query_rgb",
                format!("features {:?} for a {}x{} input", features.shape(), lr.height(), lr.width()),
            ));
        }
        if grid.is_empty() {
            return Ok(Vec::new());
        }
        let proj = {
            let mut g = Graph::new();
            let vars = self.insert_constants(&mut g);
            let (_, dec) = self.split_vars(&vars);
            let feat = g.constant(features.clone());
            let p = self.project_latents(&mut g, dec, feat)?;
            g.value(p).clone()
        };
        let mut out = Vec::with_capacity(grid.len());
        for start in (0..grid.len()).step_by(INFERENCE_CHUNK) {
            let idx: Vec<usize> = (start..(start + INFERENCE_CHUNK).min(grid.len())).collect();
            let chunk = grid.subset(&idx);
            let mut g = Graph::new();
            let vars = self.insert_constants(&mut g);
            let (_, dec) = self.split_vars(&vars);
            let p = g.constant(proj.clone());
            let rgb = self.decode(&mut g, dec, p, lr, &chunk)?;
            out.extend(g.value(rgb).data().chunks(RGB).map(|c| [c[0], c[1], c[2]]));
        }
        Ok(out)
    }

    /// Super-resolves `lr` to `⌊r_y·H⌋×⌊r_x·W⌋`.
    pub fn upscale(&self, lr: &Image, scale: (f64, f64)) -> Result<Image> {
        if !(scale.0 >= 1.0 && scale.1 >= 1.0) {
            return Err(Error::contract("upscale", format!("scale {scale:?} below 1")));
        }
        let grid = QueryGrid::full(lr.height(), lr.width(), scale)?;
        self.render(lr, &grid)
    }

    pub fn render(&self, lr: &Image, grid: &QueryGrid) -> Result<Image> {
        let (th, tw) = grid.target.ok_or_else(|| Error::contract("render", "query grid does not cover a full raster"))?;
        let features = self.encode(lr)?;
        let rgb = self.query_rgb(&features, lr, grid)?;
        Image::new(th, tw, RGB, rgb.into_iter().flatten().collect())
    }
}
