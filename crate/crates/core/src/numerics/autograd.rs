//! Dynamic reverse-mode tape.
//!
//! A [`Graph`] records every operation of one forward pass. Values live in the
//! graph and are addressed by [`Var`] handles; [`Graph::backward`] walks the
//! tape in reverse and returns per-node gradients. The graph is dropped after
//! the backward pass, so one graph per optimizer step.

use crate::error::{Error, Result};
use crate::numerics::kernels::{col2im, gemm_nn, gemm_nt, gemm_tn, im2col, transpose, ConvGeometry};
use crate::numerics::tensor::Tensor;
use crate::spectral::basis::{dct2_interleaved, dft2_plane, extract_plane, idct2_interleaved, store_plane};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Vec<f64>),
    Matmul(Var, Var),
    AddRowBias(Var, Var),
    Conv2d { input: Var, weight: Var, bias: Option<Var>, geo: ConvGeometry, cols: Vec<f64> },
    Unfold { input: Var, geo: ConvGeometry },
    GatherRows(Var, Vec<usize>),
    GroupWeightedSum { input: Var, weights: Vec<f64>, group: usize },
    Relu(Var),
    Abs(Var),
    Square(Var),
    Log { input: Var, floor: f64 },
    Pow(Var, f64),
    Sum(Var),
    Mean(Var),
    Max(Var, usize),
    MeanLastAxis(Var),
    Reshape(Var),
    Dct2(Var),
    DftMagnitude { input: Var, re: Vec<f64>, im: Vec<f64>, norm: f64 },
    /// Forward identity whose backward negates the incoming gradient.
    /// Only used to inject faults into gradient checks.
    FlipGrad(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients returned by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<f64>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn check_finite(op: &'static str, data: &[f64]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::domain(op, "result is not finite"))
    }
}

fn add_into(acc: &mut Option<Vec<f64>>, g: &[f64]) {
    match acc {
        Some(a) => a.iter_mut().zip(g).for_each(|(x, y)| *x += y),
        None => *acc = Some(g.to_vec()),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf; the graph keeps its own copy of the values.
    pub fn param(&mut self, t: &Tensor) -> Var {
        self.push(Tensor::from_parts(t.shape().to_vec(), t.data().to_vec()), Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        let t = Tensor::from_parts(t.shape().to_vec(), t.into_data());
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    fn elementwise(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, node: Op) -> Result<Var> {
        same_shape(op, self.value(a), self.value(b))?;
        let data: Vec<f64> = self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| f(x, y)).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::from_parts(shape, data), node, rg))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, node: Op) -> Var {
        let data: Vec<f64> = self.data(a).iter().map(|&x| f(x)).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a);
        self.push(Tensor::from_parts(shape, data), node, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.unary(a, |x| x * k, Op::Scale(a, k))
    }

    /// Elementwise product with a constant raster of the same length.
    pub fn mul_const(&mut self, a: Var, k: Vec<f64>) -> Result<Var> {
        if k.len() != self.value(a).len() {
            return Err(Error::shape(
                "mul_const",
                format!("{} constants for tensor {:?}", k.len(), self.shape(a)),
            ));
        }
        let data: Vec<f64> = self.data(a).iter().zip(&k).map(|(x, y)| x * y).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a);
        Ok(self.push(Tensor::from_parts(shape, data), Op::MulConst(a, k), rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", format!("{sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm_nn(self.data(a), self.data(b), &mut out, m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::Matmul(a, b), rg))
    }

    /// `[m,n] + [n]` broadcast over rows.
    pub fn add_row_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(bias));
        if sa.len() != 2 || sb != [sa[1]] {
            return Err(Error::shape("add_row_bias", format!("{sa:?} + {sb:?}")));
        }
        let n = sa[1];
        let b = self.data(bias).to_vec();
        let mut data = self.data(a).to_vec();
        for row in data.chunks_mut(n) {
            row.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
        }
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push(Tensor::from_parts(shape, data), Op::AddRowBias(a, bias), rg))
    }

    /// Stride-1 convolution of a `[C,H,W]` map with weights `[O,C,k,k]`.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, dilation: usize, padding: usize) -> Result<Var> {
        let si = self.shape(input).to_vec();
        let sw = self.shape(weight).to_vec();
        if si.len() != 3 || sw.len() != 4 || sw[1] != si[0] || sw[2] != sw[3] || dilation == 0 {
            return Err(Error::shape("conv2d", format!("input {si:?}, weight {sw:?}, dilation {dilation}")));
        }
        if let Some(b) = bias {
            if self.shape(b) != [sw[0]] {
                return Err(Error::shape("conv2d", format!("bias {:?} for {} outputs", self.shape(b), sw[0])));
            }
        }
        let geo = ConvGeometry { channels: si[0], height: si[1], width: si[2], kernel: sw[2], dilation, padding };
        let (ho, wo) = (geo.out_height(), geo.out_width());
        if ho == 0 || wo == 0 {
            return Err(Error::shape("conv2d", format!("kernel extent exceeds padded input {si:?}")));
        }
        let cols = im2col(self.data(input), &geo);
        let out_ch = sw[0];
        let mut out = vec![0.0; out_ch * ho * wo];
        gemm_nn(self.data(weight), &cols, &mut out, out_ch, geo.patch_len(), ho * wo);
        if let Some(b) = bias {
            for (plane, &bv) in out.chunks_mut(ho * wo).zip(self.data(b)) {
                plane.iter_mut().for_each(|x| *x += bv);
            }
        }
        let rg = self.rg(input) || self.rg(weight) || bias.is_some_and(|b| self.rg(b));
        let op = Op::Conv2d { input, weight, bias, geo, cols };
        Ok(self.push(Tensor::from_parts(vec![out_ch, ho, wo], out), op, rg))
    }

    /// Gathers the zero-padded `(2r+1)²` neighborhood of every position of a
    /// `[C,H,W]` map into rows: output `[H·W, C·(2r+1)²]`, channel-major.
    pub fn unfold(&mut self, input: Var, radius: usize) -> Result<Var> {
        let si = self.shape(input).to_vec();
        if si.len() != 3 {
            return Err(Error::shape("unfold", format!("expected [C,H,W], got {si:?}")));
        }
        let k = 2 * radius + 1;
        let geo = ConvGeometry { channels: si[0], height: si[1], width: si[2], kernel: k, dilation: 1, padding: radius };
        let cols = im2col(self.data(input), &geo);
        let rows = transpose(&cols, geo.patch_len(), si[1] * si[2]);
        let rg = self.rg(input);
        Ok(self.push(Tensor::from_parts(vec![si[1] * si[2], geo.patch_len()], rows), Op::Unfold { input, geo }, rg))
    }

    pub fn gather_rows(&mut self, input: Var, index: Vec<usize>) -> Result<Var> {
        let si = self.shape(input).to_vec();
        if si.len() != 2 {
            return Err(Error::shape("gather_rows", format!("expected a matrix, got {si:?}")));
        }
        if index.is_empty() {
            return Err(Error::contract("gather_rows", "empty index"));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= si[0]) {
            return Err(Error::contract("gather_rows", format!("row {bad} out of {}", si[0])));
        }
        let n = si[1];
        let src = self.data(input);
        let mut out = Vec::with_capacity(index.len() * n);
        for &i in &index {
            out.extend_from_slice(&src[i * n..(i + 1) * n]);
        }
        let rg = self.rg(input);
        Ok(self.push(Tensor::from_parts(vec![index.len(), n], out), Op::GatherRows(input, index), rg))
    }

    /// Collapses consecutive groups of `group` rows into one row using
    /// constant per-row weights: `[Q·group, n] -> [Q, n]`.
    pub fn group_weighted_sum(&mut self, input: Var, weights: Vec<f64>, group: usize) -> Result<Var> {
        let si = self.shape(input).to_vec();
        if si.len() != 2 || group == 0 || si[0] % group != 0 || weights.len() != si[0] {
            return Err(Error::shape(
                "group_weighted_sum",
                format!("{si:?} with {} weights in groups of {group}", weights.len()),
            ));
        }
        let n = si[1];
        let q = si[0] / group;
        let src = self.data(input);
        let mut out = vec![0.0; q * n];
        for (r, &w) in weights.iter().enumerate() {
            let dst = &mut out[(r / group) * n..(r / group + 1) * n];
            dst.iter_mut().zip(&src[r * n..(r + 1) * n]).for_each(|(o, x)| *o += w * x);
        }
        let rg = self.rg(input);
        Ok(self.push(Tensor::from_parts(vec![q, n], out), Op::GroupWeightedSum { input, weights, group }, rg))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, f64::abs, Op::Abs(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    /// Natural log; every input must be strictly positive.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(bad) = self.data(a).iter().find(|&&x| x <= 0.0) {
            return Err(Error::domain("log", format!("nonpositive input {bad}")));
        }
        Ok(self.unary(a, f64::ln, Op::Log { input: a, floor: 0.0 }))
    }

    /// `ln(max(x, floor))`; gradient is zero where the clamp is active.
    pub fn log_clamped(&mut self, a: Var, floor: f64) -> Result<Var> {
        if floor <= 0.0 {
            return Err(Error::domain("log_clamped", format!("floor {floor} must be positive")));
        }
        Ok(self.unary(a, move |x| x.max(floor).ln(), Op::Log { input: a, floor }))
    }

    /// Elementwise power with a constant exponent. Negative bases require an
    /// integer exponent.
    pub fn pow(&mut self, a: Var, p: f64) -> Result<Var> {
        if p.fract() != 0.0 && self.data(a).iter().any(|&x| x < 0.0) {
            return Err(Error::domain("pow", format!("negative base with exponent {p}")));
        }
        let v = self.unary(a, |x| x.powf(p), Op::Pow(a, p));
        check_finite("pow", self.data(v))?;
        Ok(v)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.data(a).iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::from_parts(vec![1], vec![s]), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let d = self.data(a);
        let s = d.iter().sum::<f64>() / d.len() as f64;
        let rg = self.rg(a);
        self.push(Tensor::from_parts(vec![1], vec![s]), Op::Mean(a), rg)
    }

    pub fn max(&mut self, a: Var) -> Var {
        let (idx, m) = self
            .data(a)
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bm), (i, &x)| if x > bm { (i, x) } else { (bi, bm) });
        let rg = self.rg(a);
        self.push(Tensor::from_parts(vec![1], vec![m]), Op::Max(a, idx), rg)
    }

    /// Averages over the trailing axis: `[.., C] -> [..]`.
    pub fn mean_last_axis(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() < 2 {
            return Err(Error::shape("mean_last_axis", format!("need rank ≥ 2, got {s:?}")));
        }
        let c = *s.last().unwrap();
        let data: Vec<f64> = self.data(a).chunks(c).map(|ch| ch.iter().sum::<f64>() / c as f64).collect();
        let rg = self.rg(a);
        Ok(self.push(Tensor::from_parts(s[..s.len() - 1].to_vec(), data), Op::MeanLastAxis(a), rg))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(a).clone().reshape(shape)?;
        let rg = self.rg(a);
        Ok(self.push(t, Op::Reshape(a), rg))
    }

    fn hwc(&self, op: &'static str, a: Var) -> Result<(usize, usize, usize)> {
        match *self.shape(a) {
            [h, w, c] => Ok((h, w, c)),
            ref s => Err(Error::shape(op, format!("expected [H,W,C], got {s:?}"))),
        }
    }

    /// Orthonormal 2D DCT-II of every channel of an `[H,W,C]` tensor.
    pub fn dct2(&mut self, a: Var) -> Result<Var> {
        let (h, w, c) = self.hwc("dct2", a)?;
        let out = dct2_interleaved(self.data(a), h, w, c);
        let rg = self.rg(a);
        Ok(self.push(Tensor::from_parts(vec![h, w, c], out), Op::Dct2(a), rg))
    }

    /// Per-channel magnitude of the 2D DFT, scaled by `norm`.
    pub fn dft_magnitude(&mut self, a: Var, norm: f64) -> Result<Var> {
        let (h, w, c) = self.hwc("dft_magnitude", a)?;
        let zeros = vec![0.0; h * w];
        let mut re = vec![0.0; h * w * c];
        let mut im = vec![0.0; h * w * c];
        let mut mag = vec![0.0; h * w * c];
        for ch in 0..c {
            let plane = extract_plane(self.data(a), h, w, c, ch);
            let (mut fr, mut fi) = dft2_plane(&plane, &zeros, h, w);
            fr.iter_mut().chain(fi.iter_mut()).for_each(|v| *v *= norm);
            let m: Vec<f64> = fr.iter().zip(&fi).map(|(r, i)| r.hypot(*i)).collect();
            store_plane(&fr, &mut re, c, ch);
            store_plane(&fi, &mut im, c, ch);
            store_plane(&m, &mut mag, c, ch);
        }
        let rg = self.rg(a);
        Ok(self.push(Tensor::from_parts(vec![h, w, c], mag), Op::DftMagnitude { input: a, re, im, norm }, rg))
    }

    pub fn flip_grad(&mut self, a: Var) -> Var {
        self.unary(a, |x| x, Op::FlipGrad(a))
    }

    /// Reverse sweep from a single-element `loss` node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::contract("backward", format!("loss has shape {:?}", self.shape(loss))));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let mut send = |v: Var, contrib: &[f64]| {
            if self.rg(v) {
                add_into(&mut grads[v.0], contrib);
            }
        };
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                send(*a, g);
                send(*b, g);
            }
            Op::Sub(a, b) => {
                send(*a, g);
                let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                send(*b, &neg);
            }
            Op::Mul(a, b) => {
                let (da, db) = (self.data(*a), self.data(*b));
                let ga: Vec<f64> = g.iter().zip(db).map(|(g, y)| g * y).collect();
                let gb: Vec<f64> = g.iter().zip(da).map(|(g, x)| g * x).collect();
                send(*a, &ga);
                send(*b, &gb);
            }
            Op::Scale(a, k) => {
                let ga: Vec<f64> = g.iter().map(|x| x * k).collect();
                send(*a, &ga);
            }
            Op::MulConst(a, k) => {
                let ga: Vec<f64> = g.iter().zip(k).map(|(x, y)| x * y).collect();
                send(*a, &ga);
            }
            Op::Matmul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if self.rg(*a) {
                    let mut ga = vec![0.0; m * k];
                    gemm_nt(g, self.data(*b), &mut ga, m, k, n);
                    send(*a, &ga);
                }
                if self.rg(*b) {
                    let mut gb = vec![0.0; k * n];
                    gemm_tn(self.data(*a), g, &mut gb, m, k, n);
                    send(*b, &gb);
                }
            }
            Op::AddRowBias(a, bias) => {
                send(*a, g);
                if self.rg(*bias) {
                    let n = self.shape(*bias)[0];
                    let mut gb = vec![0.0; n];
                    for row in g.chunks(n) {
                        gb.iter_mut().zip(row).for_each(|(s, x)| *s += x);
                    }
                    send(*bias, &gb);
                }
            }
            Op::Conv2d { input, weight, bias, geo, cols } => {
                let out_ch = self.shape(*weight)[0];
                let spatial = geo.out_height() * geo.out_width();
                if self.rg(*weight) {
                    let mut gw = vec![0.0; out_ch * geo.patch_len()];
                    gemm_nt(g, cols, &mut gw, out_ch, geo.patch_len(), spatial);
                    send(*weight, &gw);
                }
                if let Some(b) = bias {
                    if self.rg(*b) {
                        let gb: Vec<f64> = g.chunks(spatial).map(|p| p.iter().sum()).collect();
                        send(*b, &gb);
                    }
                }
                if self.rg(*input) {
                    let mut gcols = vec![0.0; geo.patch_len() * spatial];
                    gemm_tn(self.data(*weight), g, &mut gcols, out_ch, geo.patch_len(), spatial);
                    let mut gi = vec![0.0; geo.channels * geo.height * geo.width];
                    col2im(&gcols, geo, &mut gi);
                    send(*input, &gi);
                }
            }
            Op::Unfold { input, geo } => {
                let gcols = transpose(g, geo.height * geo.width, geo.patch_len());
                let mut gi = vec![0.0; geo.channels * geo.height * geo.width];
                col2im(&gcols, geo, &mut gi);
                send(*input, &gi);
            }
            Op::GatherRows(a, index) => {
                let n = self.shape(*a)[1];
                let mut ga = vec![0.0; self.value(*a).len()];
                for (r, &i) in index.iter().enumerate() {
                    ga[i * n..(i + 1) * n].iter_mut().zip(&g[r * n..(r + 1) * n]).for_each(|(s, x)| *s += x);
                }
                send(*a, &ga);
            }
            Op::GroupWeightedSum { input, weights, group } => {
                let n = self.shape(*input)[1];
                let mut ga = vec![0.0; self.value(*input).len()];
                for (r, &w) in weights.iter().enumerate() {
                    let src = &g[(r / group) * n..(r / group + 1) * n];
                    ga[r * n..(r + 1) * n].iter_mut().zip(src).for_each(|(s, x)| *s = w * x);
                }
                send(*input, &ga);
            }
            Op::Relu(a) => {
                let ga: Vec<f64> = g.iter().zip(self.data(*a)).map(|(g, &x)| if x > 0.0 { *g } else { 0.0 }).collect();
                send(*a, &ga);
            }
            Op::Abs(a) => {
                let ga: Vec<f64> = g
                    .iter()
                    .zip(self.data(*a))
                    .map(|(g, &x)| if x > 0.0 { *g } else if x < 0.0 { -*g } else { 0.0 })
                    .collect();
                send(*a, &ga);
            }
            Op::Square(a) => {
                let ga: Vec<f64> = g.iter().zip(self.data(*a)).map(|(g, &x)| 2.0 * x * g).collect();
                send(*a, &ga);
            }
            Op::Log { input, floor } => {
                let ga: Vec<f64> = g
                    .iter()
                    .zip(self.data(*input))
                    .map(|(g, &x)| if x > *floor { g / x } else { 0.0 })
                    .collect();
                send(*input, &ga);
            }
            Op::Pow(a, p) => {
                let ga: Vec<f64> = g
                    .iter()
                    .zip(self.data(*a))
                    .map(|(g, &x)| {
                        // x^(p-1) diverges at 0 for p < 1; the subgradient 0 keeps values finite
                        if x == 0.0 && *p < 1.0 {
                            0.0
                        } else {
                            g * p * x.powf(p - 1.0)
                        }
                    })
                    .collect();
                send(*a, &ga);
            }
            Op::Sum(a) => {
                let ga = vec![g[0]; self.value(*a).len()];
                send(*a, &ga);
            }
            Op::Mean(a) => {
                let n = self.value(*a).len();
                let ga = vec![g[0] / n as f64; n];
                send(*a, &ga);
            }
            Op::Max(a, idx) => {
                let mut ga = vec![0.0; self.value(*a).len()];
                ga[*idx] = g[0];
                send(*a, &ga);
            }
            Op::MeanLastAxis(a) => {
                let c = *self.shape(*a).last().unwrap();
                let ga: Vec<f64> = g.iter().flat_map(|&x| std::iter::repeat(x / c as f64).take(c)).collect();
                send(*a, &ga);
            }
            Op::Reshape(a) => send(*a, g),
            Op::FlipGrad(a) => {
                let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                send(*a, &neg);
            }
            Op::Dct2(a) => {
                let (h, w, c) = (node.value.shape()[0], node.value.shape()[1], node.value.shape()[2]);
                // orthonormal, so the adjoint is the inverse transform
                let ga = idct2_interleaved(g, h, w, c);
                send(*a, &ga);
            }
            Op::DftMagnitude { input, re, im, norm } => {
                let (h, w, c) = (node.value.shape()[0], node.value.shape()[1], node.value.shape()[2]);
                let mut ga = vec![0.0; h * w * c];
                for ch in 0..c {
                    let gp = extract_plane(g, h, w, c, ch);
                    let fr = extract_plane(re, h, w, c, ch);
                    let fi = extract_plane(im, h, w, c, ch);
                    let mag = extract_plane(y, h, w, c, ch);
                    // Z = g·conj(F)/|F|, then d|F|/dx = norm·Re(Σ Z·e^{-iθ})
                    let mut zr = vec![0.0; h * w];
                    let mut zi = vec![0.0; h * w];
                    for p in 0..h * w {
                        if mag[p] > 0.0 {
                            zr[p] = gp[p] * fr[p] / mag[p];
                            zi[p] = -gp[p] * fi[p] / mag[p];
                        }
                    }
                    let (mut tr, _) = dft2_plane(&zr, &zi, h, w);
                    tr.iter_mut().for_each(|v| *v *= norm);
                    store_plane(&tr, &mut ga, c, ch);
                }
                send(*input, &ga);
            }
        }
    }
}
