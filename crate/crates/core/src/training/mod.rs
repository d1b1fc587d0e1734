//! Random-scale patch training.
//!
//! Each step draws `batch` items. An item picks an image, a scale
//! `r ~ U[scale_min, scale_max]`, crops an HR patch of side `⌊r·P⌋` and
//! bicubic-downsamples it to the `P×P` LR input. The loss of a step is the
//! batch mean of `L_spatial + λ·L_ADFL`, each term taken over the item's
//! full HR raster.

mod dataset;
mod synthetic;

pub use dataset::{list_pngs, load_dataset, save_dataset};
pub use synthetic::{render_texture, texture_corpus, TextureKind};

use std::fmt;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::freqloss::{spatial_l1_graph, total_loss_graph, FreqLossConfig};
use crate::image::Image;
use crate::inr::{downsample_bicubic, scaled_extent, LocalInr, QueryGrid};
use crate::numerics::{prng, Adam, Graph, Prng, Var};

/// Which HR pixels supervise an item.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum QuerySampling {
    /// Every pixel of the HR patch.
    #[default]
    Full,
    /// A random subset of this many pixels. Only honored when the
    /// frequency term is off, since the spectrum needs the whole raster.
    Count(usize),
}

impl fmt::Display for QuerySampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuerySampling::Full => f.write_str("full"),
            QuerySampling::Count(n) => write!(f, "{n}"),
        }
    }
}

impl Serialize for QuerySampling {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            QuerySampling::Full => s.serialize_str("full"),
            QuerySampling::Count(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for QuerySampling {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(usize),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(0) => Err(serde::de::Error::custom("sample_q must be positive")),
            Raw::Count(n) => Ok(QuerySampling::Count(n)),
            Raw::Word(w) if w.eq_ignore_ascii_case("full") => Ok(QuerySampling::Full),
            Raw::Word(w) => Err(serde::de::Error::custom(format!("sample_q must be `full` or a count, got `{w}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// LR patch side `P`.
    pub lr_patch: usize,
    pub scale_min: f64,
    pub scale_max: f64,
    pub batch: usize,
    pub steps: usize,
    pub learning_rate: f64,
    /// Steps at which the learning rate is multiplied by `gamma`.
    pub milestones: Vec<usize>,
    pub gamma: f64,
    pub seed: u64,
    pub sample_q: QuerySampling,
    /// Random horizontal flips.
    pub flip: bool,
    /// Checkpoint period in steps; 0 writes only milestones and the end.
    pub checkpoint_every: usize,
    /// Set from the run configuration's top-level `loss` section.
    #[serde(skip)]
    pub loss: FreqLossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_patch: 48,
            scale_min: 1.0,
            scale_max: 4.0,
            batch: 8,
            steps: 20_000,
            learning_rate: 1e-4,
            milestones: vec![10_000, 15_000],
            gamma: 0.5,
            seed: 0,
            sample_q: QuerySampling::Full,
            flip: true,
            checkpoint_every: 0,
            loss: FreqLossConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.lr_patch == 0 || self.batch == 0 {
            return bad(format!("lr_patch ({}) and batch ({}) must be positive", self.lr_patch, self.batch));
        }
        if !(self.scale_min >= 1.0 && self.scale_max >= self.scale_min && self.scale_max.is_finite()) {
            return bad(format!("scale range [{}, {}] must satisfy 1 <= min <= max", self.scale_min, self.scale_max));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if self.milestones.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("milestones {:?} must be strictly increasing", self.milestones));
        }
        self.loss.validate()
    }

    /// Learning rate in effect for 0-based step `step`.
    pub fn learning_rate_at(&self, step: usize) -> f64 {
        let decays = self.milestones.iter().filter(|&&m| step >= m).count();
        self.learning_rate * self.gamma.powi(decays as i32)
    }

    /// Largest HR side a sample can request.
    pub fn max_hr_side(&self) -> usize {
        scaled_extent(self.lr_patch, self.scale_max)
    }

    fn subsample(&self) -> Option<usize> {
        match self.sample_q {
            QuerySampling::Count(n) if self.loss.lambda == 0.0 => Some(n),
            _ => None,
        }
    }
}

/// One supervised item.
#[derive(Clone, Debug)]
pub struct TrainItem {
    pub image_index: usize,
    pub scale: f64,
    pub lr: Image,
    pub hr: Image,
    pub grid: QueryGrid,
    /// Supervised pixels when the grid was subsampled: a `[q,1,3]` image
    /// aligned with `grid`.
    pub target_subset: Option<Image>,
}

/// Draws `cfg.batch` items. Images smaller than a requested HR patch are
/// skipped (another image is drawn); it is an error if none fits.
pub fn sample_batch(data: &[Image], cfg: &TrainConfig, rng: &mut Prng) -> Result<Vec<TrainItem>> {
    if data.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    let need = cfg.max_hr_side();
    if !data.iter().any(|img| img.height() >= need && img.width() >= need) {
        return Err(Error::Config(format!("no training image is at least {need}x{need}")));
    }
    (0..cfg.batch).map(|_| sample_item(data, cfg, rng)).collect()
}

fn sample_item(data: &[Image], cfg: &TrainConfig, rng: &mut Prng) -> Result<TrainItem> {
    let p = cfg.lr_patch;
    let scale = if cfg.scale_max > cfg.scale_min { rng.gen_range(cfg.scale_min..=cfg.scale_max) } else { cfg.scale_min };
    let side = scaled_extent(p, scale);
    let image_index = loop {
        let i = rng.gen_range(0..data.len());
        if data[i].height() >= side && data[i].width() >= side {
            break i;
        }
        log::debug!("image {i} is smaller than a {side}x{side} patch; redrawing");
    };
    let img = &data[image_index];
    let top = rng.gen_range(0..=img.height() - side);
    let left = rng.gen_range(0..=img.width() - side);
    let mut hr = img.crop(top, left, side, side)?;
    if cfg.flip && rng.gen::<bool>() {
        hr = hr.flip_horizontal();
    }
    let lr = downsample_bicubic(&hr, p, p)?;
    let full = QueryGrid::full(p, p, (scale, scale))?;
    debug_assert_eq!(full.target, Some((side, side)));
    let (grid, target_subset) = match cfg.subsample() {
        Some(q) if q < full.len() => {
            let mut idx = sample_indices(rng, full.len(), q).into_vec();
            idx.sort_unstable();
            let channels = hr.channels();
            let values = idx.iter().flat_map(|&i| hr.data()[i * channels..(i + 1) * channels].iter().copied()).collect();
            (full.subset(&idx), Some(Image::new(q, 1, channels, values)?))
        }
        _ => (full, None),
    };
    Ok(TrainItem { image_index, scale, lr, hr, grid, target_subset })
}

/// One line of the JSON-lines training log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub l_spatial: f64,
    /// `None` when every item was supervised on a pixel subset.
    pub l_adfl: Option<f64>,
    pub l_total: f64,
    pub lr: f64,
}

/// Everything observable about one optimizer step.
#[derive(Clone, Debug)]
pub struct StepReport {
    pub metrics: StepMetrics,
    pub scales: Vec<f64>,
    /// Frequency weight raster `(H', W')` per item, if computed.
    pub weight_shapes: Vec<Option<(usize, usize)>>,
}

/// Stateful optimizer loop over a fixed dataset.
pub struct Trainer<'a> {
    cfg: TrainConfig,
    data: &'a [Image],
    rng: Prng,
    adam: Adam,
    step: usize,
}

// Keeps the sampling stream independent of the initialization stream,
// which is seeded with the same user seed.
const SAMPLER_STREAM: u64 = 0x05ee_d0fb_a7c4;

/// The batch-sampling generator a [`Trainer`] with this seed uses.
pub fn sampler_rng(seed: u64) -> Prng {
    prng(seed ^ SAMPLER_STREAM)
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: TrainConfig, data: &'a [Image]) -> Result<Self> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(Error::Config("empty training set".into()));
        }
        let rng = sampler_rng(cfg.seed);
        let adam = Adam::new(cfg.learning_rate);
        Ok(Self { cfg, data, rng, adam, step: 0 })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// Steps completed so far.
    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn step(&mut self, model: &mut LocalInr) -> Result<StepReport> {
        let step = self.step;
        let lr = self.cfg.learning_rate_at(step);
        let items = sample_batch(self.data, &self.cfg, &mut self.rng)?;
        let mut g = Graph::new();
        let vars = model.insert_params(&mut g);
        let inv = 1.0 / items.len() as f64;
        let (mut l_spatial, mut l_adfl, mut l_total) = (0.0, 0.0, 0.0);
        let mut any_adfl = false;
        let mut total: Option<Var> = None;
        let mut weight_shapes = Vec::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            let (item_total, spatial, adfl) = match &item.target_subset {
                Some(target) => {
                    let out = model.forward(&mut g, &vars, &item.lr, &item.grid)?;
                    let out = g.reshape(out, vec![target.height(), 1, target.channels()])?;
                    let s = spatial_l1_graph(&mut g, target, out)?;
                    weight_shapes.push(None);
                    (s, g.scalar(s), None)
                }
                None => {
                    let out = model.forward_raster(&mut g, &vars, &item.lr, &item.grid)?;
                    let nodes = total_loss_graph(&mut g, &item.hr, out, &self.cfg.loss)?;
                    weight_shapes.push(Some((nodes.weights.height(), nodes.weights.width())));
                    (nodes.total, g.scalar(nodes.spatial), Some(g.scalar(nodes.adfl)))
                }
            };
            let value = g.scalar(item_total);
            if !value.is_finite() || !spatial.is_finite() || adfl.is_some_and(|a| !a.is_finite()) {
                log::error!(
                    "non-finite loss at step {step}, item {i} (image {}, scale {:.4}), seed {}",
                    item.image_index,
                    item.scale,
                    self.cfg.seed
                );
                return Err(Error::NonFiniteLoss { step, item: i, seed: self.cfg.seed });
            }
            l_spatial += spatial * inv;
            l_total += value * inv;
            if let Some(a) = adfl {
                l_adfl += a * inv;
                any_adfl = true;
            }
            let scaled = g.scale(item_total, inv);
            total = Some(match total {
                Some(t) => g.add(t, scaled)?,
                None => scaled,
            });
        }
        let total = total.expect("batch is non-empty");
        let mut grads = g.backward(total)?;
        for ((_, param), var) in model.params_mut().iter_mut().zip(&vars) {
            match grads.take(*var) {
                Some(grad) => param.accumulate_grad(&grad)?,
                None => param.zero_grad(),
            }
        }
        self.adam.lr = lr;
        let mut named: Vec<(&str, &mut _)> = model.params_mut().iter_mut().map(|(n, t)| (n.as_str(), t)).collect();
        self.adam.step(&mut named)?;
        self.step += 1;
        let metrics = StepMetrics { step, l_spatial, l_adfl: any_adfl.then_some(l_adfl), l_total, lr };
        Ok(StepReport { metrics, scales: items.iter().map(|it| it.scale).collect(), weight_shapes })
    }
}

/// Runs `cfg.steps` steps, handing each report to `observe` (logging,
/// checkpointing). Returns the per-step metrics.
pub fn train(
    model: &mut LocalInr,
    data: &[Image],
    cfg: &TrainConfig,
    mut observe: impl FnMut(&StepReport, &LocalInr) -> Result<()>,
) -> Result<Vec<StepMetrics>> {
    let mut trainer = Trainer::new(cfg.clone(), data)?;
    let mut log = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let report = trainer.step(model)?;
        observe(&report, model)?;
        log.push(report.metrics);
    }
    Ok(log)
}

/// Whether a checkpoint is due after 0-based step `step` completes.
pub fn checkpoint_due(cfg: &TrainConfig, step: usize) -> bool {
    let done = step + 1;
    done == cfg.steps
        || cfg.milestones.contains(&done)
        || (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0)
}
