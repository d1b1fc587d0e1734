use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{kaiming_uniform, Graph, Prng, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RfMode {
    /// Every block uses the configured dilation.
    Baseline,
    /// Even-indexed blocks use twice the configured dilation.
    Extended,
}

/// Residual convolutional feature encoder: a 1×1 pixel embedding followed by
/// `depth` pre-activation residual blocks `x ← x + conv(relu(x))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub channels: usize,
    pub depth: usize,
    pub kernel: usize,
    pub dilation: usize,
    pub rf_mode: RfMode,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { channels: 64, depth: 8, kernel: 3, dilation: 1, rf_mode: RfMode::Baseline }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.depth == 0 || self.dilation == 0 {
            return Err(Error::Config("encoder channels, depth and dilation must be positive".into()));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::Config(format!("encoder kernel {} must be odd", self.kernel)));
        }
        Ok(())
    }

    pub fn block_dilations(&self) -> Vec<usize> {
        (0..self.depth)
            .map(|i| match self.rf_mode {
                RfMode::Baseline => self.dilation,
                RfMode::Extended if i % 2 == 0 => 2 * self.dilation,
                RfMode::Extended => self.dilation,
            })
            .collect()
    }
}

/// Analytic receptive field in pixels: `1 + Σ (kernel−1)·dilation`.
pub fn receptive_field(cfg: &EncoderConfig) -> usize {
    1 + cfg.block_dilations().iter().map(|d| (cfg.kernel - 1) * d).sum::<usize>()
}

pub(crate) const IN_CHANNELS: usize = 3;

pub(crate) fn init_params(cfg: &EncoderConfig, rng: &mut Prng) -> Vec<(String, Tensor)> {
    let c = cfg.channels;
    let k = cfg.kernel;
    let mut p = vec![
        ("encoder.stem.w".to_string(), kaiming_uniform(&[c, IN_CHANNELS, 1, 1], IN_CHANNELS, rng)),
        ("encoder.stem.b".to_string(), Tensor::zeros(&[c])),
    ];
    for i in 0..cfg.depth {
        p.push((format!("encoder.block{i}.w"), kaiming_uniform(&[c, c, k, k], c * k * k, rng)));
        p.push((format!("encoder.block{i}.b"), Tensor::zeros(&[c])));
    }
    p
}

pub(crate) fn param_count(cfg: &EncoderConfig) -> usize {
    2 + 2 * cfg.depth
}

/// Records the encoder on `g`; `params` are the vars of [`init_params`] in
/// order and `lr` is a `[3,H,W]` var. Output is `[C,H,W]`.
pub(crate) fn forward(g: &mut Graph, cfg: &EncoderConfig, params: &[Var], lr: Var) -> Result<Var> {
    let mut x = g.conv2d(lr, params[0], Some(params[1]), 1, 0)?;
    for (i, d) in cfg.block_dilations().into_iter().enumerate() {
        let act = g.relu(x);
        let pad = d * (cfg.kernel - 1) / 2;
        let y = g.conv2d(act, params[2 + 2 * i], Some(params[3 + 2 * i]), d, pad)?;
        x = g.add(x, y)?;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(depth: usize, dilation: usize, rf_mode: RfMode) -> EncoderConfig {
        EncoderConfig { channels: 4, depth, kernel: 3, dilation, rf_mode }
    }

    #[test]
    fn analytic_receptive_field_examples() {
        assert_eq!(receptive_field(&cfg(1, 1, RfMode::Baseline)), 3);
        for l in 1..10 {
            assert_eq!(receptive_field(&cfg(l, 1, RfMode::Baseline)), 2 * l + 1);
        }
        assert_eq!(receptive_field(&cfg(4, 2, RfMode::Baseline)), 17);
        assert_eq!(receptive_field(&cfg(4, 1, RfMode::Extended)), 13);
    }

    #[test]
    fn extended_is_strictly_wider_at_equal_depth() {
        for depth in 1..10 {
            for d in 1..4 {
                assert!(receptive_field(&cfg(depth, d, RfMode::Extended)) > receptive_field(&cfg(depth, d, RfMode::Baseline)));
            }
        }
    }

    #[test]
    fn rejects_even_kernels() {
        assert!(EncoderConfig { kernel: 4, ..Default::default() }.validate().is_err());
    }
}
