//! Seeded finite-difference suite over the differentiable ops, the loss
//! terms and the full model. Backs the `gradcheck` command.

use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::freqloss::{adfl_graph_frozen, spatial_l1_graph, total_loss_graph_with, weights_at, FreqLossConfig, LossMode};
use crate::image::Image;
use crate::inr::{DecoderConfig, EncoderConfig, LocalInr, ModelConfig, QueryGrid, RfMode};
use crate::numerics::{check_gradient, prng, GradCheckOptions, GradCheckReport, Graph, Prng, Tensor, Var};

/// Relative tolerance for single ops and loss terms.
pub const LOSS_TOLERANCE: f64 = 1e-3;
/// Relative tolerance for gradients through the whole model.
pub const END_TO_END_TOLERANCE: f64 = 1e-2;

/// Deliberate defects for exercising the failure path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Negates the gradient flowing into the frequency loss.
    FlipAdflGradient,
}

#[derive(Clone, Debug, Default)]
pub struct SelfCheckOptions {
    pub seed: u64,
    /// Replaces every tolerance when set.
    pub tolerance: Option<f64>,
    pub fault: Option<Fault>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub checks: Vec<GradCheckReport>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &GradCheckReport> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn lines(&self) -> Vec<String> {
        self.checks
            .iter()
            .map(|c| {
                format!(
                    "{} {:<34} max rel err {:.3e} (tol {:.0e}, {} coords)",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.max_rel_err,
                    c.tolerance,
                    c.checked
                )
            })
            .collect()
    }
}

fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut Prng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).expect("finite values")
}

/// Values bounded away from zero, for ops with a kink there.
fn off_kink(shape: &[usize], rng: &mut Prng) -> Tensor {
    let mut t = uniform(shape, -1.0, 1.0, rng);
    t.data_mut().iter_mut().for_each(|v| *v = v.signum() * (0.05 + v.abs()));
    t
}

fn random_image(h: usize, w: usize, rng: &mut Prng) -> Image {
    Image::from_fn(h, w, 3, |_, _, _| rng.gen::<f64>())
}

/// `Σ r ⊙ y` with a fixed random `r`, so every output element matters.
fn probe(g: &mut Graph, y: Var, rng_seed: u64) -> Result<Var> {
    let n = g.value(y).len();
    let mut rng = prng(rng_seed);
    let r = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let weighted = g.mul_const(y, r)?;
    Ok(g.sum(weighted))
}

struct Runner {
    opts: SelfCheckOptions,
    rng: Prng,
    reports: Vec<GradCheckReport>,
}

impl Runner {
    fn check<F>(&mut self, name: &str, x: &Tensor, tol: f64, samples: usize, f: F) -> Result<()>
    where
        F: Fn(&mut Graph, Var) -> Result<Var>,
    {
        let opts = GradCheckOptions { rel_tol: self.opts.tolerance.unwrap_or(tol), samples, ..Default::default() };
        let report = check_gradient(name, x, f, &opts, &mut self.rng)?;
        self.reports.push(report);
        Ok(())
    }

    fn op<F>(&mut self, name: &str, x: &Tensor, f: F) -> Result<()>
    where
        F: Fn(&mut Graph, Var) -> Result<Var>,
    {
        let seed = self.rng.gen();
        self.check(&format!("numerics.{name}"), x, LOSS_TOLERANCE, 100, move |g, v| {
            let y = f(g, v)?;
            probe(g, y, seed)
        })
    }
}

pub fn run(opts: &SelfCheckOptions) -> Result<SuiteReport> {
    let mut r = Runner { opts: opts.clone(), rng: prng(opts.seed), reports: Vec::new() };
    numerics_suite(&mut r)?;
    freqloss_suite(&mut r)?;
    inr_suite(&mut r)?;
    Ok(SuiteReport { seed: opts.seed, checks: r.reports })
}

fn numerics_suite(r: &mut Runner) -> Result<()> {
    let rng = &mut r.rng;
    let x = uniform(&[4, 5], -1.0, 1.0, rng);
    let c = uniform(&[4, 5], -1.0, 1.0, rng);
    let w = uniform(&[5, 3], -1.0, 1.0, rng);
    let lhs = uniform(&[3, 4], -1.0, 1.0, rng);
    let bias = uniform(&[5], -1.0, 1.0, rng);
    let img = uniform(&[2, 6, 7], -1.0, 1.0, rng);
    let kernel = uniform(&[3, 2, 3, 3], -0.5, 0.5, rng);
    let kink = off_kink(&[4, 5], rng);
    let positive = uniform(&[4, 5], 0.2, 2.0, rng);
    let hwc = uniform(&[5, 6, 3], -1.0, 1.0, rng);
    let rows: Vec<usize> = (0..9).map(|_| rng.gen_range(0..4)).collect();
    let blend: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..1.0)).collect();

    r.op("add", &x, |g, v| {
        let k = g.constant(c.clone());
        g.add(v, k)
    })?;
    r.op("sub", &x, |g, v| {
        let k = g.constant(c.clone());
        g.sub(k, v)
    })?;
    r.op("mul", &x, |g, v| g.mul(v, v))?;
    r.op("scale", &x, |g, v| Ok(g.scale(v, -2.5)))?;
    r.op("matmul.lhs", &x, |g, v| {
        let k = g.constant(w.clone());
        g.matmul(v, k)
    })?;
    r.op("matmul.rhs", &x, |g, v| {
        let k = g.constant(lhs.clone());
        g.matmul(k, v)
    })?;
    r.op("add_row_bias", &bias, |g, v| {
        let k = g.constant(c.clone());
        g.add_row_bias(k, v)
    })?;
    r.op("conv2d.input", &img, |g, v| {
        let k = g.constant(kernel.clone());
        g.conv2d(v, k, None, 2, 2)
    })?;
    r.op("conv2d.weight", &kernel, |g, v| {
        let input = g.constant(img.clone());
        let b = g.constant(Tensor::full(&[3], 0.1));
        g.conv2d(input, v, Some(b), 1, 1)
    })?;
    r.op("unfold", &img, |g, v| g.unfold(v, 1))?;
    r.op("gather_rows", &x, |g, v| g.gather_rows(v, rows.clone()))?;
    r.op("group_weighted_sum", &x, |g, v| g.group_weighted_sum(v, blend[..4].to_vec(), 2))?;
    r.op("relu", &kink, |g, v| Ok(g.relu(v)))?;
    r.op("abs", &kink, |g, v| Ok(g.abs(v)))?;
    r.op("square", &x, |g, v| Ok(g.square(v)))?;
    r.op("log", &positive, |g, v| g.log(v))?;
    r.op("log_clamped", &positive, |g, v| g.log_clamped(v, 1e-8))?;
    r.op("pow", &positive, |g, v| g.pow(v, 1.5))?;
    r.op("mean", &x, |g, v| {
        let sq = g.square(v);
        Ok(g.mean(sq))
    })?;
    r.op("max", &x, |g, v| Ok(g.max(v)))?;
    r.op("mean_last_axis", &x, |g, v| g.mean_last_axis(v))?;
    r.op("reshape", &x, |g, v| g.reshape(v, vec![2, 10]))?;
    r.op("dct2", &hwc, |g, v| g.dct2(v))?;
    r.op("dft_magnitude", &hwc, |g, v| g.dft_magnitude(v, 1.0 / 30f64.sqrt()))?;
    Ok(())
}

fn freqloss_suite(r: &mut Runner) -> Result<()> {
    let reference = random_image(8, 8, &mut r.rng);
    let gen = random_image(8, 8, &mut r.rng);
    let x = gen.to_tensor();
    let fault = r.opts.fault;
    r.check("freqloss.spatial_l1", &x, LOSS_TOLERANCE, 100, |g, v| spatial_l1_graph(g, &reference, v))?;
    for mode in [LossMode::AdflLiteral, LossMode::AdflFflStyle, LossMode::DftFfl] {
        let cfg = FreqLossConfig { mode, ..Default::default() };
        // weights are detached in the loss, so the difference quotient
        // holds them at their value at the base point
        let weights = weights_at(&reference, &gen, &cfg)?;
        let name = format!("freqloss.adfl[{}]", mode.name());
        r.check(&name, &x, LOSS_TOLERANCE, 100, |g, v| {
            let v = if fault == Some(Fault::FlipAdflGradient) { g.flip_grad(v) } else { v };
            adfl_graph_frozen(g, &reference, v, &cfg, &weights)
        })?;
    }
    let cfg = FreqLossConfig { lambda: 0.5, ..Default::default() };
    let weights = weights_at(&reference, &gen, &cfg)?;
    r.check("freqloss.total_loss", &x, LOSS_TOLERANCE, 100, |g, v| {
        Ok(total_loss_graph_with(g, &reference, v, &cfg, Some(&weights))?.total)
    })
}

fn inr_suite(r: &mut Runner) -> Result<()> {
    let config = ModelConfig {
        encoder: EncoderConfig { channels: 4, depth: 2, rf_mode: RfMode::Extended, ..Default::default() },
        decoder: DecoderConfig { hidden: 8, layers: 3, zero_init_output: false, ..Default::default() },
    };
    let model = LocalInr::new(config, r.rng.gen())?;
    let lr = random_image(6, 6, &mut r.rng);
    let hr = random_image(12, 12, &mut r.rng);
    let grid = QueryGrid::full(6, 6, (2.0, 2.0))?;
    let cfg = FreqLossConfig { lambda: 0.5, ..Default::default() };
    let weights = weights_at(&hr, &model.render(&lr, &grid)?, &cfg)?;
    for name in ["encoder.block1.w", "decoder.l1.w"] {
        let idx = model.params().iter().position(|(n, _)| n == name).expect("parameter exists");
        let x = model.params()[idx].1.clone();
        r.check(&format!("inr.{name}"), &x, END_TO_END_TOLERANCE, 20, |g, v| {
            let mut vars = model.insert_params(g);
            vars[idx] = v;
            let out = model.forward_raster(g, &vars, &lr, &grid)?;
            Ok(total_loss_graph_with(g, &hr, out, &cfg, Some(&weights))?.total)
        })?;
    }
    Ok(())
}
