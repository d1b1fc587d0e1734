//! Central finite-difference checks against the tape's backward pass.

use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::numerics::autograd::{Graph, Var};
use crate::numerics::init::Prng;
use crate::numerics::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub step: f64,
    pub rel_tol: f64,
    /// Coordinates probed; all of them when the tensor is smaller.
    pub samples: usize,
    /// Denominator floor so near-zero gradients compare absolutely.
    pub abs_floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { step: 1e-4, rel_tol: 1e-3, samples: 100, abs_floor: 1e-6 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the backward-pass gradient of `f` at `x` against central
/// differences at randomly chosen coordinates.
pub fn check_gradient<F>(name: &str, x: &Tensor, f: F, opts: &GradCheckOptions, rng: &mut Prng) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let xv = g.param(x);
    let loss = f(&mut g, xv)?;
    let grads = g.backward(loss)?;
    let zeros = vec![0.0; x.len()];
    let analytic = grads.get(xv).unwrap_or(&zeros).to_vec();

    let eval = |t: Tensor| -> Result<f64> {
        let mut g = Graph::new();
        let v = g.constant(t);
        let l = f(&mut g, v)?;
        Ok(g.scalar(l))
    };

    let coords: Vec<usize> = if x.len() <= opts.samples {
        (0..x.len()).collect()
    } else {
        (0..opts.samples).map(|_| rng.gen_range(0..x.len())).collect()
    };
    let mut worst = (0.0f64, 0usize);
    for &i in &coords {
        let mut plus = x.clone();
        plus.data_mut()[i] += opts.step;
        let mut minus = x.clone();
        minus.data_mut()[i] -= opts.step;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * opts.step);
        let err = relative_error(analytic[i], numeric, opts.abs_floor);
        if err > worst.0 || err.is_nan() {
            worst = (err, i);
        }
    }
    Ok(GradCheckReport {
        name: name.to_string(),
        checked: coords.len(),
        max_rel_err: worst.0,
        worst_index: worst.1,
        tolerance: opts.rel_tol,
        passed: worst.0 < opts.rel_tol,
    })
}
