//! Feed-forward network engine: the handful of layer types needed for the
//! three-block convolutional classifier, with shape audits, reverse-mode
//! gradients, and Adam. All arithmetic is f64; at 73k parameters the
//! gradient-check fidelity is worth more than the speed of f32.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

pub const ADAM_LR: f64 = 0.001;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("malformed parameter blob: {0}")]
    BadBlob(String),
}

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Tensor {
        assert_eq!(
            data.len(),
            shape.iter().product::<usize>(),
            "tensor data length must match shape"
        );
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

/// One layer. Convolutions are fixed at 3x3 kernel, stride 1, same padding,
/// rectified-linear activation; pooling is 2x2, stride 2, floor sizing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    Rescale { factor: f64 },
    Conv { filters: usize },
    MaxPool,
    Flatten,
    Dense { units: usize, activation: Activation },
}

impl LayerSpec {
    fn name(&self) -> &'static str {
        match self {
            LayerSpec::Rescale { .. } => "rescale",
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::MaxPool => "max_pool",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    /// Input image shape (height, width, channels).
    pub input: (usize, usize, usize),
    pub layers: Vec<LayerSpec>,
}

/// The classifier architecture used throughout: rescale by 1/255, three
/// conv/pool blocks widening 16, 32, 64, then dense 128 into `arity` logits.
pub fn canonical_network(arity: usize) -> NetworkSpec {
    NetworkSpec {
        input: (20, 25, 3),
        layers: vec![
            LayerSpec::Rescale { factor: 1.0 / 255.0 },
            LayerSpec::Conv { filters: 16 },
            LayerSpec::MaxPool,
            LayerSpec::Conv { filters: 32 },
            LayerSpec::MaxPool,
            LayerSpec::Conv { filters: 64 },
            LayerSpec::MaxPool,
            LayerSpec::Flatten,
            LayerSpec::Dense {
                units: 128,
                activation: Activation::Relu,
            },
            LayerSpec::Dense {
                units: arity,
                activation: Activation::Identity,
            },
        ],
    }
}

/// Per-batch-element shape as it flows through the stack.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Shape {
    Map(usize, usize, usize),
    Flat(usize),
}

impl Shape {
    pub fn dims(&self) -> Vec<usize> {
        match *self {
            Shape::Map(h, w, c) => vec![h, w, c],
            Shape::Flat(d) => vec![d],
        }
    }
}

#[derive(Debug, Clone)]
pub struct LayerAudit {
    pub name: &'static str,
    pub output_shape: Shape,
    pub params: usize,
}

impl NetworkSpec {
    /// Walks the stack and reports per-layer output shape and parameter
    /// count. Errors describe the first structural impossibility.
    pub fn audit(&self) -> Result<Vec<LayerAudit>, NnError> {
        let mut shape = Shape::Map(self.input.0, self.input.1, self.input.2);
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let (next, params) = match (layer, &shape) {
                (LayerSpec::Rescale { .. }, s) => ((*s).clone(), 0),
                (LayerSpec::Conv { filters }, Shape::Map(h, w, c)) => {
                    (Shape::Map(*h, *w, *filters), (9 * c + 1) * filters)
                }
                (LayerSpec::MaxPool, Shape::Map(h, w, c)) => {
                    if *h < 2 || *w < 2 {
                        return Err(NnError::ShapeMismatch(format!(
                            "layer {i}: cannot pool a {h}x{w} map"
                        )));
                    }
                    (Shape::Map(h / 2, w / 2, *c), 0)
                }
                (LayerSpec::Flatten, Shape::Map(h, w, c)) => (Shape::Flat(h * w * c), 0),
                (LayerSpec::Dense { units, .. }, Shape::Flat(d)) => {
                    (Shape::Flat(*units), (d + 1) * units)
                }
                (l, s) => {
                    return Err(NnError::ShapeMismatch(format!(
                        "layer {i}: {} cannot consume shape {:?}",
                        l.name(),
                        s.dims()
                    )))
                }
            };
            out.push(LayerAudit {
                name: layer.name(),
                output_shape: next.clone(),
                params,
            });
            shape = next;
        }
        Ok(out)
    }

    pub fn total_params(&self) -> Result<usize, NnError> {
        Ok(self.audit()?.iter().map(|a| a.params).sum())
    }
}

/// One trainable tensor with its Adam moment accumulators.
#[derive(Debug, Clone)]
pub struct ParamTensor {
    pub value: Tensor,
    pub m: Tensor,
    pub v: Tensor,
}

impl ParamTensor {
    fn new(value: Tensor) -> ParamTensor {
        let m = Tensor::zeros(&value.shape);
        let v = Tensor::zeros(&value.shape);
        ParamTensor { value, m, v }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParamSlot {
    pub weight: Option<ParamTensor>,
    pub bias: Option<ParamTensor>,
}

#[derive(Debug, Clone)]
pub struct Parameters {
    /// One slot per layer, empty for parameterless layers.
    pub slots: Vec<ParamSlot>,
    pub step: u64,
}

impl Parameters {
    pub fn scalar_count(&self) -> usize {
        self.slots
            .iter()
            .flat_map(|s| [&s.weight, &s.bias])
            .flatten()
            .map(|p| p.value.len())
            .sum()
    }
}

#[derive(Debug, Clone, Default)]
pub struct GradSlot {
    pub weight: Option<Tensor>,
    pub bias: Option<Tensor>,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub slots: Vec<GradSlot>,
    /// Gradient w.r.t. the network input, present only when requested.
    pub input: Option<Tensor>,
}

/// Fan-balanced uniform initialization U(+-sqrt(6/(fan_in+fan_out))), zero
/// biases, drawn from one seeded stream in layer order.
pub fn init_parameters(net: &NetworkSpec, seed_value: u64) -> Result<Parameters, NnError> {
    let audits = net.audit()?;
    let mut rng = seed::stream(seed_value, 0);
    let mut shape = Shape::Map(net.input.0, net.input.1, net.input.2);
    let mut slots = Vec::with_capacity(net.layers.len());
    for (layer, audit) in net.layers.iter().zip(&audits) {
        let slot = match (layer, &shape) {
            (LayerSpec::Conv { filters }, Shape::Map(_, _, c)) => {
                let (fan_in, fan_out) = (9 * c, 9 * filters);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let mut w = Tensor::zeros(&[3, 3, *c, *filters]);
                for v in &mut w.data {
                    *v = seed::uniform_range(&mut rng, -limit, limit);
                }
                ParamSlot {
                    weight: Some(ParamTensor::new(w)),
                    bias: Some(ParamTensor::new(Tensor::zeros(&[*filters]))),
                }
            }
            (LayerSpec::Dense { units, .. }, Shape::Flat(d)) => {
                let limit = (6.0 / (d + units) as f64).sqrt();
                let mut w = Tensor::zeros(&[*d, *units]);
                for v in &mut w.data {
                    *v = seed::uniform_range(&mut rng, -limit, limit);
                }
                ParamSlot {
                    weight: Some(ParamTensor::new(w)),
                    bias: Some(ParamTensor::new(Tensor::zeros(&[*units]))),
                }
            }
            _ => ParamSlot::default(),
        };
        slots.push(slot);
        shape = audit.output_shape.clone();
    }
    Ok(Parameters { slots, step: 0 })
}

#[derive(Debug, Clone)]
pub struct Batch {
    /// Inputs shaped (B, height, width, channels).
    pub inputs: Tensor,
    pub labels: Vec<usize>,
}

enum LayerCache {
    Passthrough,
    Conv { cols: Vec<f64>, out: Tensor },
    MaxPool { argmax: Vec<u32>, in_shape: [usize; 4] },
    Flatten { in_shape: [usize; 4] },
    Dense { input: Tensor, out: Tensor },
}

pub struct ForwardCache {
    layers: Vec<LayerCache>,
}

fn dims4(t: &Tensor) -> (usize, usize, usize, usize) {
    (t.shape[0], t.shape[1], t.shape[2], t.shape[3])
}

/// c += a * b with a (m,k), b (k,n), c (m,n), all row-major. The zero skip
/// pays for itself on im2col matrices (padding) and rectified activations.
fn gemm_acc(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (p, &aip) in arow.iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += aip * bv;
            }
        }
    }
}

/// c += a^T * b with a stored (m,k), b (m,n), c (k,n).
fn gemm_tn_acc(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    for r in 0..m {
        let arow = &a[r * k..(r + 1) * k];
        let brow = &b[r * n..(r + 1) * n];
        for (p, &arp) in arow.iter().enumerate() {
            if arp == 0.0 {
                continue;
            }
            let crow = &mut c[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += arp * bv;
            }
        }
    }
}

/// Unfolds 3x3 same-padded patches: one row of 9*C entries per output pixel.
fn im2col(x: &Tensor) -> Vec<f64> {
    let (bs, h, w, c) = dims4(x);
    let k = 9 * c;
    let mut cols = vec![0.0f64; bs * h * w * k];
    for bi in 0..bs {
        for y in 0..h {
            for xw in 0..w {
                let row = (((bi * h) + y) * w + xw) * k;
                for ky in 0..3usize {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for kx in 0..3usize {
                        let sx = xw as isize + kx as isize - 1;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        let src = (((bi * h) + sy as usize) * w + sx as usize) * c;
                        let dst = row + (ky * 3 + kx) * c;
                        cols[dst..dst + c].copy_from_slice(&x.data[src..src + c]);
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of im2col: scatter-adds column gradients back onto the image.
fn col2im(dcols: &[f64], shape: [usize; 4]) -> Tensor {
    let [bs, h, w, c] = shape;
    let k = 9 * c;
    let mut dx = Tensor::zeros(&[bs, h, w, c]);
    for bi in 0..bs {
        for y in 0..h {
            for xw in 0..w {
                let row = (((bi * h) + y) * w + xw) * k;
                for ky in 0..3usize {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for kx in 0..3usize {
                        let sx = xw as isize + kx as isize - 1;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        let dst = (((bi * h) + sy as usize) * w + sx as usize) * c;
                        let src = row + (ky * 3 + kx) * c;
                        for ci in 0..c {
                            dx.data[dst + ci] += dcols[src + ci];
                        }
                    }
                }
            }
        }
    }
    dx
}

fn conv_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> (Tensor, Vec<f64>) {
    let (bs, h, wd, c) = dims4(x);
    let f = b.len();
    debug_assert_eq!(w.shape, vec![3, 3, c, f]);
    let rows = bs * h * wd;
    let k = 9 * c;
    let cols = im2col(x);
    let mut out = Tensor::zeros(&[bs, h, wd, f]);
    for r in 0..rows {
        out.data[r * f..(r + 1) * f].copy_from_slice(&b.data);
    }
    gemm_acc(rows, k, f, &cols, &w.data, &mut out.data);
    for v in &mut out.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    (out, cols)
}

fn maxpool_forward(x: &Tensor) -> (Tensor, Vec<u32>) {
    let (bs, h, w, c) = dims4(x);
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[bs, oh, ow, c]);
    let mut argmax = vec![0u32; bs * oh * ow * c];
    for bi in 0..bs {
        for oy in 0..oh {
            for ox in 0..ow {
                for ci in 0..c {
                    let mut best = f64::NEG_INFINITY;
                    let mut at = 0u32;
                    // strict > keeps the first element in row-major scan on ties
                    for wy in 0..2 {
                        for wx in 0..2 {
                            let idx = (((bi * h) + oy * 2 + wy) * w + ox * 2 + wx) * c + ci;
                            if x.data[idx] > best {
                                best = x.data[idx];
                                at = idx as u32;
                            }
                        }
                    }
                    let oidx = (((bi * oh) + oy) * ow + ox) * c + ci;
                    out.data[oidx] = best;
                    argmax[oidx] = at;
                }
            }
        }
    }
    (out, argmax)
}

fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor, act: Activation) -> Tensor {
    let (bs, d) = (x.shape[0], x.shape[1]);
    let units = b.len();
    debug_assert_eq!(w.shape, vec![d, units]);
    let mut out = Tensor::zeros(&[bs, units]);
    for r in 0..bs {
        out.data[r * units..(r + 1) * units].copy_from_slice(&b.data);
    }
    gemm_acc(bs, d, units, &x.data, &w.data, &mut out.data);
    if act == Activation::Relu {
        for v in &mut out.data {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
    out
}

fn check_params(net: &NetworkSpec, params: &Parameters) -> Result<(), NnError> {
    if params.slots.len() != net.layers.len() {
        return Err(NnError::ShapeMismatch(format!(
            "parameter slots {} != layers {}",
            params.slots.len(),
            net.layers.len()
        )));
    }
    Ok(())
}

/// Full forward pass keeping the per-layer caches backward needs.
pub fn forward(
    net: &NetworkSpec,
    params: &Parameters,
    batch: &Batch,
) -> Result<(Tensor, ForwardCache), NnError> {
    forward_impl(net, params, &batch.inputs, true).map(|(t, c)| (t, c.unwrap()))
}

/// Forward pass without caches, for evaluation.
pub fn predict(
    net: &NetworkSpec,
    params: &Parameters,
    inputs: &Tensor,
) -> Result<Tensor, NnError> {
    forward_impl(net, params, inputs, false).map(|(t, _)| t)
}

fn forward_impl(
    net: &NetworkSpec,
    params: &Parameters,
    inputs: &Tensor,
    keep: bool,
) -> Result<(Tensor, Option<ForwardCache>), NnError> {
    check_params(net, params)?;
    let (ih, iw, ic) = net.input;
    if inputs.shape.len() != 4 || inputs.shape[1..] != [ih, iw, ic] {
        return Err(NnError::ShapeMismatch(format!(
            "input shape {:?}, network wants (B, {ih}, {iw}, {ic})",
            inputs.shape
        )));
    }
    let mut caches = Vec::with_capacity(net.layers.len());
    let mut cur = inputs.clone();
    for (li, layer) in net.layers.iter().enumerate() {
        let slot = &params.slots[li];
        let (next, cache) = match layer {
            LayerSpec::Rescale { factor } => {
                let mut t = cur;
                for v in &mut t.data {
                    *v *= factor;
                }
                (t, LayerCache::Passthrough)
            }
            LayerSpec::Conv { filters } => {
                let (w, b) = slot_tensors(slot, li, "conv")?;
                if cur.shape.len() != 4 || w.shape != [3, 3, cur.shape[3], *filters] {
                    return Err(NnError::ShapeMismatch(format!(
                        "layer {li}: conv weight {:?} against input {:?}",
                        w.shape, cur.shape
                    )));
                }
                let (out, cols) = conv_forward(&cur, w, b);
                let cache = if keep {
                    LayerCache::Conv { cols, out: out.clone() }
                } else {
                    LayerCache::Passthrough
                };
                (out, cache)
            }
            LayerSpec::MaxPool => {
                if cur.shape.len() != 4 {
                    return Err(NnError::ShapeMismatch(format!(
                        "layer {li}: max_pool on shape {:?}",
                        cur.shape
                    )));
                }
                let in_shape = [cur.shape[0], cur.shape[1], cur.shape[2], cur.shape[3]];
                let (out, argmax) = maxpool_forward(&cur);
                (out, LayerCache::MaxPool { argmax, in_shape })
            }
            LayerSpec::Flatten => {
                if cur.shape.len() != 4 {
                    return Err(NnError::ShapeMismatch(format!(
                        "layer {li}: flatten on shape {:?}",
                        cur.shape
                    )));
                }
                let in_shape = [cur.shape[0], cur.shape[1], cur.shape[2], cur.shape[3]];
                let flat = in_shape[1] * in_shape[2] * in_shape[3];
                // row-major (B,H,W,C) is already contiguous per sample
                let out = Tensor::from_vec(&[in_shape[0], flat], cur.data);
                (out, LayerCache::Flatten { in_shape })
            }
            LayerSpec::Dense { units, activation } => {
                let (w, b) = slot_tensors(slot, li, "dense")?;
                if cur.shape.len() != 2 || w.shape != [cur.shape[1], *units] {
                    return Err(NnError::ShapeMismatch(format!(
                        "layer {li}: dense weight {:?} against input {:?}",
                        w.shape, cur.shape
                    )));
                }
                let out = dense_forward(&cur, w, b, *activation);
                let cache = if keep {
                    LayerCache::Dense { input: cur, out: out.clone() }
                } else {
                    LayerCache::Passthrough
                };
                (out, cache)
            }
        };
        caches.push(cache);
        cur = next;
    }
    let cache = keep.then_some(ForwardCache { layers: caches });
    Ok((cur, cache))
}

fn slot_tensors<'a>(
    slot: &'a ParamSlot,
    li: usize,
    what: &str,
) -> Result<(&'a Tensor, &'a Tensor), NnError> {
    match (&slot.weight, &slot.bias) {
        (Some(w), Some(b)) => Ok((&w.value, &b.value)),
        _ => Err(NnError::ShapeMismatch(format!(
            "layer {li}: {what} has no parameters"
        ))),
    }
}

/// Mean softmax cross-entropy over integer labels, with the gradient
/// (softmax - one_hot)/B. Stabilized by per-row max subtraction.
pub fn loss_softmax_xent(logits: &Tensor, labels: &[usize]) -> (f64, Tensor) {
    assert_eq!(logits.shape.len(), 2, "logits must be (B, classes)");
    let (bs, k) = (logits.shape[0], logits.shape[1]);
    assert_eq!(labels.len(), bs, "one label per row");
    let mut dl = Tensor::zeros(&[bs, k]);
    let mut total = 0.0;
    for i in 0..bs {
        let row = &logits.data[i * k..(i + 1) * k];
        let label = labels[i];
        assert!(label < k, "label {label} out of range for {k} classes");
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|&v| (v - mx).exp()).sum();
        total += mx + z.ln() - row[label];
        let drow = &mut dl.data[i * k..(i + 1) * k];
        for j in 0..k {
            let p = (row[j] - mx).exp() / z;
            drow[j] = (p - f64::from(u8::from(j == label))) / bs as f64;
        }
    }
    (total / bs as f64, dl)
}

/// Reverse pass. `want_input_grad` additionally produces the gradient w.r.t.
/// the network input; without it, propagation stops at the lowest
/// parameterized layer.
pub fn backward(
    net: &NetworkSpec,
    params: &Parameters,
    cache: &ForwardCache,
    dlast: &Tensor,
    want_input_grad: bool,
) -> Gradients {
    let n = net.layers.len();
    assert_eq!(cache.layers.len(), n, "cache from a different network");
    // whether anything below layer li still needs a gradient
    let mut need_below = vec![false; n];
    let mut seen_params = want_input_grad;
    for li in 0..n {
        need_below[li] = seen_params;
        if params.slots[li].weight.is_some() {
            seen_params = true;
        }
    }
    let mut slots: Vec<GradSlot> = (0..n).map(|_| GradSlot::default()).collect();
    let mut dcur = dlast.clone();
    for li in (0..n).rev() {
        match (&net.layers[li], &cache.layers[li]) {
            (LayerSpec::Rescale { factor }, _) => {
                if need_below[li] {
                    for v in &mut dcur.data {
                        *v *= factor;
                    }
                }
            }
            (LayerSpec::Conv { .. }, LayerCache::Conv { cols, out }) => {
                let w = &params.slots[li].weight.as_ref().unwrap().value;
                let f = w.shape[3];
                let k = w.shape[0] * w.shape[1] * w.shape[2];
                let rows = out.len() / f;
                // rectifier mask: zero pre-activations stay zero
                let mut dpre = dcur.data;
                for (dv, &ov) in dpre.iter_mut().zip(&out.data) {
                    if ov <= 0.0 {
                        *dv = 0.0;
                    }
                }
                let mut dw = Tensor::zeros(&w.shape);
                gemm_tn_acc(rows, k, f, cols, &dpre, &mut dw.data);
                let mut db = Tensor::zeros(&[f]);
                for r in 0..rows {
                    for (bv, &dv) in db.data.iter_mut().zip(&dpre[r * f..(r + 1) * f]) {
                        *bv += dv;
                    }
                }
                slots[li] = GradSlot {
                    weight: Some(dw),
                    bias: Some(db),
                };
                if need_below[li] {
                    let wt = transpose(&w.data, k, f);
                    let mut dcols = vec![0.0f64; rows * k];
                    gemm_acc(rows, f, k, &dpre, &wt, &mut dcols);
                    let in_c = w.shape[2];
                    let in_shape = [out.shape[0], out.shape[1], out.shape[2], in_c];
                    dcur = col2im(&dcols, in_shape);
                } else {
                    dcur = Tensor::zeros(&[0]);
                }
            }
            (LayerSpec::MaxPool, LayerCache::MaxPool { argmax, in_shape }) => {
                if need_below[li] {
                    let mut dx = Tensor::zeros(in_shape);
                    for (o, &src) in argmax.iter().enumerate() {
                        dx.data[src as usize] += dcur.data[o];
                    }
                    dcur = dx;
                }
            }
            (LayerSpec::Flatten, LayerCache::Flatten { in_shape }) => {
                if need_below[li] {
                    dcur = Tensor::from_vec(in_shape, dcur.data);
                }
            }
            (LayerSpec::Dense { activation, .. }, LayerCache::Dense { input, out }) => {
                let w = &params.slots[li].weight.as_ref().unwrap().value;
                let (bs, d) = (input.shape[0], input.shape[1]);
                let units = w.shape[1];
                let mut dpre = dcur.data;
                if *activation == Activation::Relu {
                    for (dv, &ov) in dpre.iter_mut().zip(&out.data) {
                        if ov <= 0.0 {
                            *dv = 0.0;
                        }
                    }
                }
                let mut dw = Tensor::zeros(&[d, units]);
                gemm_tn_acc(bs, d, units, &input.data, &dpre, &mut dw.data);
                let mut db = Tensor::zeros(&[units]);
                for r in 0..bs {
                    for (bv, &dv) in db.data.iter_mut().zip(&dpre[r * units..(r + 1) * units]) {
                        *bv += dv;
                    }
                }
                slots[li] = GradSlot {
                    weight: Some(dw),
                    bias: Some(db),
                };
                if need_below[li] {
                    let wt = transpose(&w.data, d, units);
                    let mut dx = Tensor::zeros(&[bs, d]);
                    gemm_acc(bs, units, d, &dpre, &wt, &mut dx.data);
                    dcur = dx;
                } else {
                    dcur = Tensor::zeros(&[0]);
                }
            }
            _ => unreachable!("cache kind mismatches layer kind"),
        }
    }
    let input = (want_input_grad && !dcur.is_empty()).then_some(dcur);
    Gradients { slots, input }
}

fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0f64; a.len()];
    for r in 0..rows {
        for c in 0..cols {
            t[c * rows + r] = a[r * cols + c];
        }
    }
    t
}

/// Standard Adam with bias correction.
pub fn adam_step(
    params: &mut Parameters,
    grads: &Gradients,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    params.step += 1;
    let bc1 = 1.0 - beta1.powi(params.step as i32);
    let bc2 = 1.0 - beta2.powi(params.step as i32);
    for (slot, gslot) in params.slots.iter_mut().zip(&grads.slots) {
        let pairs = [
            (slot.weight.as_mut(), gslot.weight.as_ref()),
            (slot.bias.as_mut(), gslot.bias.as_ref()),
        ];
        for (pt, g) in pairs {
            let (Some(pt), Some(g)) = (pt, g) else { continue };
            assert_eq!(pt.value.shape, g.shape, "gradient shape mismatch");
            for i in 0..g.data.len() {
                let gi = g.data[i];
                pt.m.data[i] = beta1 * pt.m.data[i] + (1.0 - beta1) * gi;
                pt.v.data[i] = beta2 * pt.v.data[i] + (1.0 - beta2) * gi * gi;
                let mhat = pt.m.data[i] / bc1;
                let vhat = pt.v.data[i] / bc2;
                pt.value.data[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    layer: usize,
    kind: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    step: u64,
    layers: usize,
    tensors: Vec<ManifestEntry>,
}

/// Serializes parameters (values plus Adam state) to a little-endian f64
/// blob and a JSON manifest describing the layout.
pub fn parameters_to_blob(params: &Parameters) -> (Vec<u8>, String) {
    let mut entries = Vec::new();
    let mut blob = Vec::new();
    for (li, slot) in params.slots.iter().enumerate() {
        for (kind, pt) in [("weight", &slot.weight), ("bias", &slot.bias)] {
            let Some(pt) = pt else { continue };
            entries.push(ManifestEntry {
                layer: li,
                kind: kind.to_string(),
                shape: pt.value.shape.clone(),
            });
            for t in [&pt.value, &pt.m, &pt.v] {
                for &v in &t.data {
                    blob.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
    let manifest = Manifest {
        step: params.step,
        layers: params.slots.len(),
        tensors: entries,
    };
    (blob, serde_json::to_string_pretty(&manifest).unwrap())
}

pub fn parameters_from_blob(blob: &[u8], manifest: &str) -> Result<Parameters, NnError> {
    let manifest: Manifest =
        serde_json::from_str(manifest).map_err(|e| NnError::BadBlob(e.to_string()))?;
    let total_scalars: usize = manifest
        .tensors
        .iter()
        .map(|e| e.shape.iter().product::<usize>())
        .sum();
    if blob.len() != total_scalars * 3 * 8 {
        return Err(NnError::BadBlob(format!(
            "blob holds {} bytes, manifest wants {}",
            blob.len(),
            total_scalars * 3 * 8
        )));
    }
    let mut slots: Vec<ParamSlot> = (0..manifest.layers).map(|_| ParamSlot::default()).collect();
    let mut off = 0usize;
    let read_tensor = |shape: &[usize], off: &mut usize| {
        let mut t = Tensor::zeros(shape);
        for v in t.data.iter_mut() {
            *v = f64::from_le_bytes(blob[*off..*off + 8].try_into().unwrap());
            *off += 8;
        }
        t
    };
    for entry in &manifest.tensors {
        if entry.layer >= manifest.layers {
            return Err(NnError::BadBlob(format!(
                "tensor references layer {} of {}",
                entry.layer, manifest.layers
            )));
        }
        let value = read_tensor(&entry.shape, &mut off);
        let m = read_tensor(&entry.shape, &mut off);
        let v = read_tensor(&entry.shape, &mut off);
        let pt = ParamTensor { value, m, v };
        let slot = &mut slots[entry.layer];
        match entry.kind.as_str() {
            "weight" => slot.weight = Some(pt),
            "bias" => slot.bias = Some(pt),
            other => {
                return Err(NnError::BadBlob(format!("unknown tensor kind {other:?}")));
            }
        }
    }
    Ok(Parameters {
        slots,
        step: manifest.step,
    })
}
