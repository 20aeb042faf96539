use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gemm::{gemm_nn, gemm_nt, gemm_tn};
use super::tensor::{check_finite, Tensor};
use crate::error::{IsnnError, Result};
use crate::exec;
use crate::rng::chacha;

/// Layer descriptor. Parameters live in the model's flat vector, in layer
/// order: conv weights `[out_ch, in_ch*k*k]` then bias, dense weights
/// `[inputs, outputs]` then bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    Relu,
    MaxPool2d {
        k: usize,
    },
    Flatten,
    Dense {
        inputs: usize,
        outputs: usize,
    },
}

impl LayerSpec {
    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                ..
            } => out_ch * in_ch * kernel * kernel + out_ch,
            LayerSpec::Dense { inputs, outputs } => inputs * outputs + outputs,
            _ => 0,
        }
    }
}

/// Shape of one sample as it flows through the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Chw(usize, usize, usize),
    Flat(usize),
}

impl Shape {
    fn len(&self) -> usize {
        match *self {
            Shape::Chw(c, h, w) => c * h * w,
            Shape::Flat(n) => n,
        }
    }
}

fn layer_output_shape(layer: &LayerSpec, input: Shape) -> Result<Shape> {
    match *layer {
        LayerSpec::Conv2d {
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
        } => match input {
            Shape::Chw(c, h, w) if c == in_ch => {
                if h + 2 * pad < kernel || w + 2 * pad < kernel || stride == 0 {
                    return Err(IsnnError::InvalidArgument(format!(
                        "conv kernel {kernel}/stride {stride} too large for {h}x{w} input"
                    )));
                }
                let oh = (h + 2 * pad - kernel) / stride + 1;
                let ow = (w + 2 * pad - kernel) / stride + 1;
                Ok(Shape::Chw(out_ch, oh, ow))
            }
            _ => Err(IsnnError::ShapeMismatch {
                expected: vec![in_ch],
                actual: vec![input.len()],
            }),
        },
        LayerSpec::Relu => Ok(input),
        LayerSpec::MaxPool2d { k } => match input {
            Shape::Chw(c, h, w) if k > 0 && h >= k && w >= k => {
                Ok(Shape::Chw(c, h / k, w / k))
            }
            _ => Err(IsnnError::InvalidArgument(format!(
                "maxpool {k} on incompatible shape"
            ))),
        },
        LayerSpec::Flatten => Ok(Shape::Flat(input.len())),
        LayerSpec::Dense { inputs, outputs } => {
            if input.len() != inputs {
                return Err(IsnnError::ShapeMismatch {
                    expected: vec![inputs],
                    actual: vec![input.len()],
                });
            }
            Ok(Shape::Flat(outputs))
        }
    }
}

/// A classifier: architecture plus the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    layers: Vec<LayerSpec>,
    input_shape: [usize; 3],
    num_classes: usize,
    params: Vec<f64>,
}

/// Per-layer activation record from one cached forward pass over a chunk.
enum LayerCache {
    Conv {
        cols: Vec<f64>,
        in_shape: (usize, usize, usize),
        out_shape: (usize, usize, usize),
    },
    Relu {
        mask: Vec<u8>,
    },
    Pool {
        argmax: Vec<usize>,
        in_len: usize,
    },
    Flatten,
    Dense {
        input: Vec<f64>,
    },
}

/// Activation cache tying a forward pass to its backward pass.
pub struct Cache {
    batch: usize,
    layers: Vec<LayerCache>,
}

impl Cache {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

impl Model {
    pub fn new(
        layers: Vec<LayerSpec>,
        input_shape: [usize; 3],
        num_classes: usize,
    ) -> Result<Self> {
        // Validate the whole shape pipeline once at construction.
        let mut shape = Shape::Chw(input_shape[0], input_shape[1], input_shape[2]);
        for layer in &layers {
            shape = layer_output_shape(layer, shape)?;
        }
        if shape.len() != num_classes {
            return Err(IsnnError::ShapeMismatch {
                expected: vec![num_classes],
                actual: vec![shape.len()],
            });
        }
        let n_params = layers.iter().map(LayerSpec::param_count).sum();
        Ok(Model {
            layers,
            input_shape,
            num_classes,
            params: vec![0.0; n_params],
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(IsnnError::ShapeMismatch {
                expected: vec![self.params.len()],
                actual: vec![params.len()],
            });
        }
        self.params = params;
        Ok(())
    }

    /// Kaiming-uniform fan-in init from a seeded stream; biases zero.
    pub fn init_kaiming(&mut self, seed: u64) {
        let mut rng = chacha(seed);
        let mut offset = 0usize;
        for layer in &self.layers {
            match *layer {
                LayerSpec::Conv2d {
                    in_ch,
                    out_ch,
                    kernel,
                    ..
                } => {
                    let fan_in = in_ch * kernel * kernel;
                    let bound = (6.0 / fan_in as f64).sqrt();
                    let wlen = out_ch * fan_in;
                    for w in &mut self.params[offset..offset + wlen] {
                        *w = rng.random_range(-bound..bound);
                    }
                    for b in &mut self.params[offset + wlen..offset + wlen + out_ch] {
                        *b = 0.0;
                    }
                    offset += wlen + out_ch;
                }
                LayerSpec::Dense { inputs, outputs } => {
                    let bound = (6.0 / inputs as f64).sqrt();
                    let wlen = inputs * outputs;
                    for w in &mut self.params[offset..offset + wlen] {
                        *w = rng.random_range(-bound..bound);
                    }
                    for b in &mut self.params[offset + wlen..offset + wlen + outputs] {
                        *b = 0.0;
                    }
                    offset += wlen + outputs;
                }
                _ => {}
            }
        }
    }

    /// Inference over a whole batch tensor; chunked, thread-safe, pure.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        let n = self.validate_batch_shape(batch.shape())?;
        let logits = self.forward_slice(batch.data(), n);
        check_finite(&logits, "forward logits")?;
        Tensor::new(vec![n, self.num_classes], logits)
    }

    /// Inference over a raw normalized buffer of `n` samples.
    pub fn forward_slice(&self, data: &[f64], n: usize) -> Vec<f64> {
        assert_eq!(data.len(), n * self.input_len());
        let in_len = self.input_len();
        let c = self.num_classes;
        let chunks = exec::map_chunks(n, exec::DEFAULT_CHUNK, |r| {
            let (logits, _) = self.forward_chunk(&data[r.start * in_len..r.end * in_len], r.len(), false);
            logits
        });
        let mut out = Vec::with_capacity(n * c);
        for ch in chunks {
            out.extend_from_slice(&ch);
        }
        out
    }

    /// Sequential twin of [`Model::forward_slice`] for benchmarking.
    pub fn forward_slice_seq(&self, data: &[f64], n: usize) -> Vec<f64> {
        assert_eq!(data.len(), n * self.input_len());
        let in_len = self.input_len();
        let chunks = exec::map_chunks_seq(n, exec::DEFAULT_CHUNK, |r| {
            let (logits, _) = self.forward_chunk(&data[r.start * in_len..r.end * in_len], r.len(), false);
            logits
        });
        chunks.into_iter().flatten().collect()
    }

    fn validate_batch_shape(&self, shape: &[usize]) -> Result<usize> {
        let [c, h, w] = self.input_shape;
        match shape {
            [n, sc, sh, sw] if *sc == c && *sh == h && *sw == w => Ok(*n),
            [n, f] if *f == c * h * w => Ok(*n),
            other => Err(IsnnError::ShapeMismatch {
                expected: vec![0, c, h, w],
                actual: other.to_vec(),
            }),
        }
    }

    /// Forward over one chunk, optionally recording the activation cache.
    pub fn forward_chunk(&self, x: &[f64], batch: usize, keep_cache: bool) -> (Vec<f64>, Cache) {
        let mut shape = Shape::Chw(self.input_shape[0], self.input_shape[1], self.input_shape[2]);
        let mut cur = x.to_vec();
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut offset = 0usize;
        for layer in &self.layers {
            let out_shape = layer_output_shape(layer, shape).expect("validated at construction");
            let n_params = layer.param_count();
            let params = &self.params[offset..offset + n_params];
            let (next, cache) = match *layer {
                LayerSpec::Conv2d {
                    in_ch,
                    out_ch,
                    kernel,
                    stride,
                    pad,
                } => {
                    let (c, h, w) = match shape {
                        Shape::Chw(c, h, w) => (c, h, w),
                        _ => unreachable!(),
                    };
                    let (oc, oh, ow) = match out_shape {
                        Shape::Chw(a, b, d) => (a, b, d),
                        _ => unreachable!(),
                    };
                    debug_assert_eq!((c, oc), (in_ch, out_ch));
                    conv_forward(
                        &cur, batch, c, h, w, oc, oh, ow, kernel, stride, pad, params, keep_cache,
                    )
                }
                LayerSpec::Relu => {
                    let mut out = cur.clone();
                    let mut mask = if keep_cache {
                        vec![0u8; out.len()]
                    } else {
                        Vec::new()
                    };
                    for (i, v) in out.iter_mut().enumerate() {
                        if *v > 0.0 {
                            if keep_cache {
                                mask[i] = 1;
                            }
                        } else {
                            *v = 0.0;
                        }
                    }
                    (out, LayerCache::Relu { mask })
                }
                LayerSpec::MaxPool2d { k } => {
                    let (c, h, w) = match shape {
                        Shape::Chw(c, h, w) => (c, h, w),
                        _ => unreachable!(),
                    };
                    pool_forward(&cur, batch, c, h, w, k, keep_cache)
                }
                LayerSpec::Flatten => (std::mem::take(&mut cur), LayerCache::Flatten),
                LayerSpec::Dense { inputs, outputs } => {
                    let w = &params[..inputs * outputs];
                    let b = &params[inputs * outputs..];
                    let mut out = vec![0.0; batch * outputs];
                    gemm_nn(batch, inputs, outputs, &cur, w, &mut out, 0.0);
                    for row in out.chunks_exact_mut(outputs) {
                        for (o, bias) in row.iter_mut().zip(b.iter()) {
                            *o += bias;
                        }
                    }
                    let cache = LayerCache::Dense {
                        input: if keep_cache { cur.clone() } else { Vec::new() },
                    };
                    (out, cache)
                }
            };
            if keep_cache {
                caches.push(cache);
            }
            cur = next;
            shape = out_shape;
            offset += n_params;
        }
        (cur, Cache { batch, layers: caches })
    }

    /// Backward through a cached forward pass. Returns the flat parameter
    /// gradient and, on request, the gradient w.r.t. the input batch.
    pub fn backward(
        &self,
        cache: &Cache,
        dlogits: &[f64],
        want_input_grad: bool,
    ) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        if cache.layers.len() != self.layers.len() {
            return Err(IsnnError::InvalidArgument(
                "backward called without a cached forward pass".into(),
            ));
        }
        if dlogits.len() != cache.batch * self.num_classes {
            return Err(IsnnError::ShapeMismatch {
                expected: vec![cache.batch, self.num_classes],
                actual: vec![dlogits.len()],
            });
        }
        let batch = cache.batch;
        let mut grads = vec![0.0; self.params.len()];
        let mut dcur = dlogits.to_vec();

        // Walk layers in reverse with matching param offsets.
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0usize;
        for layer in &self.layers {
            offsets.push(off);
            off += layer.param_count();
        }

        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let offset = offsets[idx];
            let n_params = layer.param_count();
            let params = &self.params[offset..offset + n_params];
            let grad_slice = &mut grads[offset..offset + n_params];
            let lc = &cache.layers[idx];
            let need_dx = want_input_grad || idx > 0;
            dcur = match (*layer, lc) {
                (
                    LayerSpec::Conv2d {
                        in_ch,
                        out_ch,
                        kernel,
                        stride,
                        pad,
                    },
                    LayerCache::Conv {
                        cols,
                        in_shape,
                        out_shape,
                    },
                ) => conv_backward(
                    &dcur, batch, *in_shape, *out_shape, in_ch, out_ch, kernel, stride, pad, params,
                    cols, grad_slice, need_dx,
                ),
                (LayerSpec::Relu, LayerCache::Relu { mask }) => {
                    let mut dx = dcur;
                    for (d, m) in dx.iter_mut().zip(mask.iter()) {
                        if *m == 0 {
                            *d = 0.0;
                        }
                    }
                    dx
                }
                (LayerSpec::MaxPool2d { .. }, LayerCache::Pool { argmax, in_len }) => {
                    let mut dx = vec![0.0; *in_len];
                    for (o, &src) in argmax.iter().enumerate() {
                        dx[src] += dcur[o];
                    }
                    dx
                }
                (LayerSpec::Flatten, LayerCache::Flatten) => dcur,
                (LayerSpec::Dense { inputs, outputs }, LayerCache::Dense { input }) => {
                    let w = &params[..inputs * outputs];
                    let (gw, gb) = grad_slice.split_at_mut(inputs * outputs);
                    // dW[in,out] += x^T . dY
                    gemm_tn(inputs, batch, outputs, input, &dcur, gw, 1.0);
                    for row in dcur.chunks_exact(outputs) {
                        for (g, d) in gb.iter_mut().zip(row.iter()) {
                            *g += d;
                        }
                    }
                    if need_dx {
                        let mut dx = vec![0.0; batch * inputs];
                        gemm_nt(batch, outputs, inputs, &dcur, w, &mut dx, 0.0);
                        dx
                    } else {
                        Vec::new()
                    }
                }
                _ => {
                    return Err(IsnnError::InvalidArgument(
                        "cache does not match model layers".into(),
                    ))
                }
            };
        }
        let input_grad = want_input_grad.then_some(dcur);
        Ok((grads, input_grad))
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_forward(
    x: &[f64],
    batch: usize,
    c: usize,
    h: usize,
    w: usize,
    oc: usize,
    oh: usize,
    ow: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    params: &[f64],
    keep_cache: bool,
) -> (Vec<f64>, LayerCache) {
    let ck2 = c * kernel * kernel;
    let ohw = oh * ow;
    let weights = &params[..oc * ck2];
    let bias = &params[oc * ck2..];
    let mut out = vec![0.0; batch * oc * ohw];
    let mut all_cols = vec![0.0; if keep_cache { batch * ck2 * ohw } else { ck2 * ohw }];
    let mut scratch = vec![0.0; ck2 * ohw];
    for b in 0..batch {
        let cols: &mut [f64] = if keep_cache {
            &mut all_cols[b * ck2 * ohw..(b + 1) * ck2 * ohw]
        } else {
            &mut scratch
        };
        im2col(
            &x[b * c * h * w..(b + 1) * c * h * w],
            c,
            h,
            w,
            kernel,
            stride,
            pad,
            oh,
            ow,
            cols,
        );
        let y = &mut out[b * oc * ohw..(b + 1) * oc * ohw];
        gemm_nn(oc, ck2, ohw, weights, cols, y, 0.0);
        for o in 0..oc {
            let bi = bias[o];
            for v in &mut y[o * ohw..(o + 1) * ohw] {
                *v += bi;
            }
        }
    }
    let cache = LayerCache::Conv {
        cols: if keep_cache { all_cols } else { Vec::new() },
        in_shape: (c, h, w),
        out_shape: (oc, oh, ow),
    };
    (out, cache)
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    dy: &[f64],
    batch: usize,
    in_shape: (usize, usize, usize),
    out_shape: (usize, usize, usize),
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    params: &[f64],
    cols: &[f64],
    grad_slice: &mut [f64],
    need_dx: bool,
) -> Vec<f64> {
    let (c, h, w) = in_shape;
    let (oc, oh, ow) = out_shape;
    debug_assert_eq!((c, oc), (in_ch, out_ch));
    let ck2 = c * kernel * kernel;
    let ohw = oh * ow;
    let weights = &params[..oc * ck2];
    let (gw, gb) = grad_slice.split_at_mut(oc * ck2);
    let mut dx = if need_dx { vec![0.0; batch * c * h * w] } else { Vec::new() };
    let mut dcols = vec![0.0; ck2 * ohw];
    for b in 0..batch {
        let dy_b = &dy[b * oc * ohw..(b + 1) * oc * ohw];
        let cols_b = &cols[b * ck2 * ohw..(b + 1) * ck2 * ohw];
        // dW[oc,ck2] += dY . cols^T
        gemm_nt(oc, ohw, ck2, dy_b, cols_b, gw, 1.0);
        for o in 0..oc {
            gb[o] += dy_b[o * ohw..(o + 1) * ohw].iter().sum::<f64>();
        }
        if need_dx {
            // dcols[ck2,ohw] = W^T . dY
            gemm_tn(ck2, oc, ohw, weights, dy_b, &mut dcols, 0.0);
            col2im(
                &dcols,
                c,
                h,
                w,
                kernel,
                stride,
                pad,
                oh,
                ow,
                &mut dx[b * c * h * w..(b + 1) * c * h * w],
            );
        }
    }
    dx
}

fn pool_forward(
    x: &[f64],
    batch: usize,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    keep_cache: bool,
) -> (Vec<f64>, LayerCache) {
    let oh = h / k;
    let ow = w / k;
    let mut out = vec![0.0; batch * c * oh * ow];
    let mut argmax = if keep_cache {
        vec![0usize; batch * c * oh * ow]
    } else {
        Vec::new()
    };
    for b in 0..batch {
        for ch in 0..c {
            let base = (b * c + ch) * h * w;
            for i in 0..oh {
                for j in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0usize;
                    for di in 0..k {
                        for dj in 0..k {
                            let idx = base + (i * k + di) * w + (j * k + dj);
                            if x[idx] > best {
                                best = x[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let o = (b * c + ch) * oh * ow + i * ow + j;
                    out[o] = best;
                    if keep_cache {
                        argmax[o] = best_idx;
                    }
                }
            }
        }
    }
    (
        out,
        LayerCache::Pool {
            argmax,
            in_len: batch * c * h * w,
        },
    )
}

#[allow(clippy::too_many_arguments)]
fn im2col(
    x: &[f64],
    c: usize,
    h: usize,
    w: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    cols: &mut [f64],
) {
    let ohw = oh * ow;
    for ch in 0..c {
        for ki in 0..kernel {
            for kj in 0..kernel {
                let row = (ch * kernel + ki) * kernel + kj;
                let dst = &mut cols[row * ohw..(row + 1) * ohw];
                for i in 0..oh {
                    let ih = (i * stride + ki) as isize - pad as isize;
                    for j in 0..ow {
                        let iw = (j * stride + kj) as isize - pad as isize;
                        dst[i * ow + j] = if ih >= 0 && ih < h as isize && iw >= 0 && iw < w as isize
                        {
                            x[ch * h * w + ih as usize * w + iw as usize]
                        } else {
                            0.0
                        };
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn col2im(
    dcols: &[f64],
    c: usize,
    h: usize,
    w: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    dx: &mut [f64],
) {
    let ohw = oh * ow;
    for ch in 0..c {
        for ki in 0..kernel {
            for kj in 0..kernel {
                let row = (ch * kernel + ki) * kernel + kj;
                let src = &dcols[row * ohw..(row + 1) * ohw];
                for i in 0..oh {
                    let ih = (i * stride + ki) as isize - pad as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    for j in 0..ow {
                        let iw = (j * stride + kj) as isize - pad as isize;
                        if iw < 0 || iw >= w as isize {
                            continue;
                        }
                        dx[ch * h * w + ih as usize * w + iw as usize] += src[i * ow + j];
                    }
                }
            }
        }
    }
}

/// The fixed desk-scale reference architecture.
///
/// Conv3x3(C->16)/ReLU/MaxPool2 -> Conv3x3(16->32)/ReLU/MaxPool2 ->
/// Flatten -> Dense(->128)/ReLU -> Dense(->num_classes).
pub fn cnn_s(input_shape: [usize; 3], num_classes: usize) -> Result<Model> {
    let [c, h, w] = input_shape;
    if h % 4 != 0 || w % 4 != 0 {
        return Err(IsnnError::InvalidArgument(format!(
            "cnn-s needs H and W divisible by 4, got {h}x{w}"
        )));
    }
    let flat = 32 * (h / 4) * (w / 4);
    Model::new(
        vec![
            LayerSpec::Conv2d {
                in_ch: c,
                out_ch: 16,
                kernel: 3,
                stride: 1,
                pad: 1,
            },
            LayerSpec::Relu,
            LayerSpec::MaxPool2d { k: 2 },
            LayerSpec::Conv2d {
                in_ch: 16,
                out_ch: 32,
                kernel: 3,
                stride: 1,
                pad: 1,
            },
            LayerSpec::Relu,
            LayerSpec::MaxPool2d { k: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense {
                inputs: flat,
                outputs: 128,
            },
            LayerSpec::Relu,
            LayerSpec::Dense {
                inputs: 128,
                outputs: num_classes,
            },
        ],
        input_shape,
        num_classes,
    )
}
