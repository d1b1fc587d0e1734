//! Arbitrary-scale super-resolution with a local implicit image function
//! trained under an adaptive DCT-domain frequency loss.
//!
//! The crate is organized bottom-up:
//!
//! * [`numerics`]: tensors, the reverse-mode tape, initialization, Adam.
//! * [`spectral`]: orthonormal 2D DCT-II and DFT magnitude spectra.
//! * [`freqloss`]: frequency distance weights, the adaptive mask and the
//!   combined spatial + frequency objective.
//! * [`inr`]: residual encoder, local implicit decoder, resampling and
//!   checkpoints.
//! * [`training`]: patch sampling, synthetic textures and the optimizer loop.
//! * [`evaluate`]: PSNR, spectral band distances and the bicubic benchmark.
//! * [`config`]: the JSON run configuration shared by the CLI.
//! * [`selfcheck`]: the finite-difference gradient suite.

pub mod config;
pub mod error;
pub mod evaluate;
pub mod freqloss;
pub mod image;
pub mod inr;
pub mod numerics;
pub mod selfcheck;
pub mod spectral;
pub mod training;

pub use error::{Error, Result};
pub use image::Image;
