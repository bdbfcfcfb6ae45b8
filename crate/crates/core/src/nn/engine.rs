//! Forward and reverse passes.
//!
//! All arithmetic is f64 with a fixed summation order, so a given
//! `(weights, batch)` always yields bit-identical losses and gradients.

use alloc::vec::Vec;

use super::arch::{conv_geometry, Layer, ModelArch, Padding};
use super::weights::ModelWeights;
use super::NnError;
use crate::dataset::{Dataset, SampleShape};

/// Dot product with eight interleaved partial sums, combined pairwise.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// `y += a * x`.
#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Log-sum-exp softmax. Writes probabilities and returns the cross-entropy
/// of `label`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize, probs: &mut [f64]) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (p, &l) in probs.iter_mut().zip(logits) {
        *p = libm::exp(l - m);
        sum += *p;
    }
    for p in probs.iter_mut() {
        *p /= sum;
    }
    (libm::log(sum) + m) - logits[label]
}

/// Index of the largest logit; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Reusable activation buffers for one architecture.
#[derive(Debug, Clone)]
pub struct Engine {
    arch: ModelArch,
    inputs: Vec<SampleShape>,
    slots: Vec<Option<usize>>,
    acts: Vec<Vec<f64>>,
    argmax: Vec<Vec<usize>>,
    grad_out: Vec<f64>,
    grad_in: Vec<f64>,
    probs: Vec<f64>,
}

impl Engine {
    pub fn new(arch: &ModelArch) -> Self {
        let outputs = arch
            .output_shapes()
            .expect("architecture validated on construction");
        let mut inputs = Vec::with_capacity(outputs.len());
        inputs.push(arch.input());
        inputs.extend_from_slice(&outputs[..outputs.len() - 1]);
        let mut slots = Vec::with_capacity(outputs.len());
        let mut next = 0;
        for layer in arch.layers() {
            if layer.params().is_some() {
                slots.push(Some(next));
                next += 2;
            } else {
                slots.push(None);
            }
        }
        let mut acts = Vec::with_capacity(outputs.len() + 1);
        acts.push(alloc::vec![0.0; arch.input().dim()]);
        acts.extend(outputs.iter().map(|s| alloc::vec![0.0; s.dim()]));
        let argmax = arch
            .layers()
            .iter()
            .zip(&outputs)
            .map(|(l, s)| match l {
                Layer::MaxPool { .. } => alloc::vec![0; s.dim()],
                _ => Vec::new(),
            })
            .collect();
        let widest = acts.iter().map(Vec::len).max().unwrap_or(0);
        Self {
            arch: arch.clone(),
            inputs,
            slots,
            acts,
            argmax,
            grad_out: alloc::vec![0.0; widest],
            grad_in: alloc::vec![0.0; widest],
            probs: alloc::vec![0.0; arch.num_classes()],
        }
    }

    pub fn arch(&self) -> &ModelArch {
        &self.arch
    }

    fn check(&self, weights: &ModelWeights) -> Result<(), NnError> {
        if weights.fingerprint() != self.arch.fingerprint() {
            return Err(NnError::ShapeError(
                "weights belong to a different architecture".into(),
            ));
        }
        Ok(())
    }

    pub fn check_dataset(&self, data: &Dataset) -> Result<(), NnError> {
        if data.shape() != self.arch.input() {
            return Err(NnError::ShapeError(alloc::format!(
                "dataset samples are {:?}, model expects {:?}",
                data.shape(),
                self.arch.input()
            )));
        }
        if data.num_classes() > self.arch.num_classes() {
            return Err(NnError::ShapeError(alloc::format!(
                "dataset has {} classes, model head has {}",
                data.num_classes(),
                self.arch.num_classes()
            )));
        }
        Ok(())
    }

    /// Logits for one sample.
    pub fn forward(&mut self, weights: &ModelWeights, x: &[f64]) -> &[f64] {
        self.acts[0].copy_from_slice(x);
        let tensors = weights.tensors();
        for (l, layer) in self.arch.layers().iter().enumerate() {
            let (head, tail) = self.acts.split_at_mut(l + 1);
            let input = &head[l];
            let output = &mut tail[0];
            let shape = self.inputs[l];
            match *layer {
                Layer::Dense { .. } | Layer::SoftmaxHead { .. } => {
                    let s = self.slots[l].unwrap();
                    let (w, b) = (&tensors[s].data, &tensors[s + 1].data);
                    let n = input.len();
                    for (o, y) in output.iter_mut().enumerate() {
                        *y = b[o] + dot(&w[o * n..(o + 1) * n], input);
                    }
                }
                Layer::Relu => {
                    for (y, &v) in output.iter_mut().zip(input.iter()) {
                        *y = if v > 0.0 { v } else { 0.0 };
                    }
                }
                Layer::Flatten => output.copy_from_slice(input),
                Layer::Conv2d {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    ..
                } => {
                    let s = self.slots[l].unwrap();
                    conv_forward(
                        shape,
                        out_channels,
                        kernel,
                        stride,
                        padding,
                        &tensors[s].data,
                        &tensors[s + 1].data,
                        input,
                        output,
                    );
                }
                Layer::MaxPool { window, stride } => {
                    pool_forward(shape, window, stride, input, output, &mut self.argmax[l]);
                }
            }
        }
        self.acts.last().unwrap()
    }

    /// Forward + backward for one sample. Adds `scale * dloss/dW` into
    /// `grads` and returns the unscaled loss.
    pub fn accumulate(
        &mut self,
        weights: &ModelWeights,
        x: &[f64],
        label: usize,
        scale: f64,
        grads: &mut ModelWeights,
    ) -> f64 {
        self.forward(weights, x);
        let logits = self.acts.last().unwrap();
        let loss = softmax_cross_entropy(logits, label, &mut self.probs);
        let classes = self.probs.len();
        for (k, g) in self.grad_out[..classes].iter_mut().enumerate() {
            let target = if k == label { 1.0 } else { 0.0 };
            *g = (self.probs[k] - target) * scale;
        }
        let tensors = weights.tensors();
        let gt = grads.tensors_mut();
        for l in (0..self.arch.layers().len()).rev() {
            let layer = self.arch.layers()[l];
            let input = &self.acts[l];
            let out_len = self.acts[l + 1].len();
            let dy = &self.grad_out[..out_len];
            let want_dx = l > 0;
            let dx = &mut self.grad_in[..input.len()];
            let shape = self.inputs[l];
            match layer {
                Layer::Dense { .. } | Layer::SoftmaxHead { .. } => {
                    let s = self.slots[l].unwrap();
                    let w = &tensors[s].data;
                    let (dw, db) = split_pair(gt, s);
                    let n = input.len();
                    if want_dx {
                        dx.fill(0.0);
                    }
                    for (o, &g) in dy.iter().enumerate() {
                        if g == 0.0 {
                            continue;
                        }
                        db[o] += g;
                        axpy(&mut dw[o * n..(o + 1) * n], g, input);
                        if want_dx {
                            axpy(dx, g, &w[o * n..(o + 1) * n]);
                        }
                    }
                }
                Layer::Relu => {
                    for ((d, &g), &v) in dx.iter_mut().zip(dy).zip(input.iter()) {
                        *d = if v > 0.0 { g } else { 0.0 };
                    }
                }
                Layer::Flatten => dx.copy_from_slice(dy),
                Layer::Conv2d {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    ..
                } => {
                    let s = self.slots[l].unwrap();
                    let (dw, db) = split_pair(gt, s);
                    conv_backward(
                        shape,
                        out_channels,
                        kernel,
                        stride,
                        padding,
                        &tensors[s].data,
                        input,
                        dy,
                        dw,
                        db,
                        want_dx.then_some(dx),
                    );
                }
                Layer::MaxPool { .. } => {
                    dx.fill(0.0);
                    for (&src, &g) in self.argmax[l].iter().zip(dy) {
                        dx[src] += g;
                    }
                }
            }
            if want_dx {
                core::mem::swap(&mut self.grad_out, &mut self.grad_in);
            }
        }
        loss
    }

    /// Mean cross-entropy over the rows `indices` of `data` and its exact
    /// gradient. Samples are accumulated in the given order.
    pub fn loss_and_grads(
        &mut self,
        weights: &ModelWeights,
        data: &Dataset,
        indices: &[usize],
    ) -> Result<(f64, ModelWeights), NnError> {
        let mut grads = ModelWeights::zeros(&self.arch);
        let loss = self.batch_into(weights, data, indices, &mut grads)?;
        Ok((loss, grads))
    }

    /// As [`Engine::loss_and_grads`], reusing a zeroed gradient buffer.
    pub fn batch_into(
        &mut self,
        weights: &ModelWeights,
        data: &Dataset,
        indices: &[usize],
        grads: &mut ModelWeights,
    ) -> Result<f64, NnError> {
        self.check(weights)?;
        self.check_dataset(data)?;
        if indices.is_empty() {
            return Err(NnError::ShapeError("empty batch".into()));
        }
        let scale = 1.0 / indices.len() as f64;
        let mut total = 0.0;
        for &i in indices {
            total += self.accumulate(
                weights,
                data.row(i),
                usize::from(data.label(i)),
                scale,
                grads,
            );
        }
        Ok(total / indices.len() as f64)
    }

    /// Softmax probabilities for one sample.
    pub fn predict_proba(&mut self, weights: &ModelWeights, x: &[f64]) -> Vec<f64> {
        self.forward(weights, x);
        let logits = self.acts.last().unwrap().clone();
        let mut probs = alloc::vec![0.0; logits.len()];
        softmax_cross_entropy(&logits, 0, &mut probs);
        probs
    }

    /// Fraction of rows whose arg-max logit equals the label.
    pub fn accuracy(&mut self, weights: &ModelWeights, data: &Dataset) -> Result<f64, NnError> {
        self.check(weights)?;
        self.check_dataset(data)?;
        if data.is_empty() {
            return Err(NnError::ShapeError("empty evaluation set".into()));
        }
        let mut correct = 0usize;
        for i in 0..data.len() {
            let logits = self.forward(weights, data.row(i));
            if argmax(logits) == usize::from(data.label(i)) {
                correct += 1;
            }
        }
        Ok(correct as f64 / data.len() as f64)
    }
}

fn split_pair(tensors: &mut [super::weights::Tensor], s: usize) -> (&mut [f64], &mut [f64]) {
    let (a, b) = tensors[s..].split_at_mut(1);
    (&mut a[0].data, &mut b[0].data)
}

#[allow(clippy::too_many_arguments)]
fn conv_forward(
    input: SampleShape,
    out_channels: usize,
    kernel: [usize; 2],
    stride: usize,
    padding: Padding,
    w: &[f64],
    b: &[f64],
    x: &[f64],
    y: &mut [f64],
) {
    let (h, wd, cin) = (input.height, input.width, input.channels);
    let (oh, ph) = conv_geometry(h, kernel[0], stride, padding).unwrap();
    let (ow, pw) = conv_geometry(wd, kernel[1], stride, padding).unwrap();
    let [kh, kw] = kernel;
    for o in 0..out_channels {
        let plane = &mut y[o * oh * ow..(o + 1) * oh * ow];
        plane.fill(b[o]);
        for c in 0..cin {
            let xc = &x[c * h * wd..(c + 1) * h * wd];
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = w[((o * cin + c) * kh + ky) * kw + kx];
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - ph as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let row = &xc[iy as usize * wd..(iy as usize + 1) * wd];
                        let out = &mut plane[oy * ow..(oy + 1) * ow];
                        for (ox, yv) in out.iter_mut().enumerate() {
                            let ix = (ox * stride + kx) as isize - pw as isize;
                            if ix >= 0 && ix < wd as isize {
                                *yv += wv * row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: SampleShape,
    out_channels: usize,
    kernel: [usize; 2],
    stride: usize,
    padding: Padding,
    w: &[f64],
    x: &[f64],
    dy: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    mut dx: Option<&mut [f64]>,
) {
    let (h, wd, cin) = (input.height, input.width, input.channels);
    let (oh, ph) = conv_geometry(h, kernel[0], stride, padding).unwrap();
    let (ow, pw) = conv_geometry(wd, kernel[1], stride, padding).unwrap();
    let [kh, kw] = kernel;
    if let Some(dx) = dx.as_deref_mut() {
        dx.fill(0.0);
    }
    for o in 0..out_channels {
        let g = &dy[o * oh * ow..(o + 1) * oh * ow];
        let mut bias = 0.0;
        for &v in g {
            bias += v;
        }
        db[o] += bias;
        for c in 0..cin {
            let base = c * h * wd;
            for ky in 0..kh {
                for kx in 0..kw {
                    let widx = ((o * cin + c) * kh + ky) * kw + kx;
                    let wv = w[widx];
                    let mut acc = 0.0;
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - ph as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let row = base + iy as usize * wd;
                        for ox in 0..ow {
                            let ix = (ox * stride + kx) as isize - pw as isize;
                            if ix < 0 || ix >= wd as isize {
                                continue;
                            }
                            let gv = g[oy * ow + ox];
                            acc += gv * x[row + ix as usize];
                            if let Some(dx) = dx.as_deref_mut() {
                                dx[row + ix as usize] += wv * gv;
                            }
                        }
                    }
                    dw[widx] += acc;
                }
            }
        }
    }
}

fn pool_forward(
    input: SampleShape,
    window: usize,
    stride: usize,
    x: &[f64],
    y: &mut [f64],
    argmax: &mut [usize],
) {
    let (h, w) = (input.height, input.width);
    let oh = (h - window) / stride + 1;
    let ow = (w - window) / stride + 1;
    for c in 0..input.channels {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = c * h * w + (oy * stride) * w + ox * stride;
                for dy in 0..window {
                    for dx in 0..window {
                        let idx = c * h * w + (oy * stride + dy) * w + ox * stride + dx;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                let o = (c * oh + oy) * ow + ox;
                y[o] = x[best];
                argmax[o] = best;
            }
        }
    }
}
