//! JSON run configuration shared by every command, with `key=value`
//! overrides addressed by dotted paths (`loss.lambda=0`).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::evaluate::CropRule;
use crate::freqloss::FreqLossConfig;
use crate::image::Image;
use crate::inr::ModelConfig;
use crate::training::{load_dataset, texture_corpus, TrainConfig};

const HELD_OUT_SEED_OFFSET: u64 = 1_000_003;

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "FREQINR_OUT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub train_count: usize,
    pub eval_count: usize,
    pub size: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self { train_count: 16, eval_count: 10, size: 64, seed: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub scales: Vec<f64>,
    pub crop: CropRule,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { scales: vec![2.0, 3.0, 4.0, 6.0, 8.0], crop: CropRule::Scale }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// PNG directory for training; synthetic textures when absent.
    pub train_dir: Option<PathBuf>,
    /// PNG directory for evaluation; held-out synthetic textures when absent.
    pub eval_dir: Option<PathBuf>,
    pub synthetic: SyntheticConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub loss: FreqLossConfig,
    pub eval: EvalConfig,
    /// Falls back to `$FREQINR_OUT`, then `runs`.
    pub output_dir: Option<PathBuf>,
    /// Gradient-check tolerance override.
    pub tol: Option<f64>,
}

impl RunConfig {
    /// Reads `path` (or starts from defaults) and applies `KEY=VALUE`
    /// overrides in order. Unknown keys are errors.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut value = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => serde_json::to_value(Self::default())?,
        };
        // fill in defaults so that overrides can address any schema key
        let mut full: Self = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        value = serde_json::to_value(&full)?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        full = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        full.validate()?;
        Ok(full)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train_config().validate()?;
        if self.eval.scales.iter().any(|s| !(*s >= 1.0 && s.is_finite())) {
            return Err(Error::Config(format!("eval scales {:?} must all be >= 1", self.eval.scales)));
        }
        if self.tol.is_some_and(|t| !(t > 0.0)) {
            return Err(Error::Config("tol must be positive".into()));
        }
        Ok(())
    }

    /// Training settings with the loss section folded in.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { loss: self.loss.clone(), ..self.train.clone() }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs"))
    }

    /// Training images: the PNGs of `train_dir`, or the synthetic corpus.
    pub fn train_images(&self) -> Result<Vec<Image>> {
        match &self.train_dir {
            Some(dir) => load_dataset(dir),
            None => Ok(texture_corpus(self.synthetic.train_count, self.synthetic.size, self.synthetic.seed)),
        }
    }

    /// Evaluation images: the PNGs of `eval_dir`, or synthetic textures
    /// from a seed disjoint from the training corpus.
    pub fn eval_images(&self) -> Result<Vec<Image>> {
        match &self.eval_dir {
            Some(dir) => load_dataset(dir),
            None => Ok(texture_corpus(
                self.synthetic.eval_count,
                self.synthetic.size,
                self.synthetic.seed.wrapping_add(HELD_OUT_SEED_OFFSET),
            )),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Sets `a.b.c=value` in a JSON tree. The value is parsed as JSON when
/// possible (`0`, `true`, `[2,4]`, `null`) and taken as a string otherwise.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not KEY=VALUE")))?;
    let key = key.trim();
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("`{}` is not a section", parts[..i].join("."))))?;
        node = obj.get_mut(*part).ok_or_else(|| Error::Config(format!("unknown configuration key `{key}`")))?;
    }
    *node = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    Ok(())
}
