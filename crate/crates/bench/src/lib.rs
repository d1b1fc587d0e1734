//! Shared fixtures for the criterion benches.

use freqinr_core::inr::{DecoderConfig, EncoderConfig, LocalInr, ModelConfig};
use freqinr_core::numerics::prng;
use freqinr_core::training::{texture_corpus, TrainConfig};
use freqinr_core::Image;
use rand::Rng;

pub fn random_image(h: usize, w: usize, seed: u64) -> Image {
    let mut rng = prng(seed);
    Image::from_fn(h, w, 3, |_, _, _| rng.gen::<f64>())
}

/// The desk-scale model used by the acceptance runs.
pub fn toy_model(seed: u64) -> LocalInr {
    let config = ModelConfig {
        encoder: EncoderConfig { channels: 16, depth: 4, ..Default::default() },
        decoder: DecoderConfig { hidden: 48, layers: 4, ..Default::default() },
    };
    LocalInr::new(config, seed).expect("valid toy config")
}

pub fn toy_training() -> (Vec<Image>, TrainConfig) {
    let cfg = TrainConfig { lr_patch: 10, batch: 4, scale_max: 3.0, steps: 1, milestones: vec![], ..Default::default() };
    (texture_corpus(4, 32, 1), cfg)
}
