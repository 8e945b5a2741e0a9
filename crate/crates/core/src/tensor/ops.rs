//! Forward operations and their backward rules.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{accumulate, note_kink_margin, Tensor, TensorError};

/// Elementwise / row-wise nonlinearity selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    SoftmaxLastDim,
}

/// Backward recipe attached to a non-leaf node. Each variant holds handles
/// to its inputs plus whatever forward context the gradient needs.
pub(crate) enum Op {
    Add(Tensor, Tensor),
    Sub(Tensor, Tensor),
    Mul(Tensor, Tensor),
    Scale(Tensor, f64),
    AddBias {
        input: Tensor,
        bias: Tensor,
    },
    Matmul {
        a: Tensor,
        b: Tensor,
    },
    Transpose(Tensor),
    Reshape(Tensor),
    Relu(Tensor),
    Sigmoid(Tensor),
    Tanh(Tensor),
    SoftmaxLastDim(Tensor),
    Conv1d {
        input: Tensor,
        kernels: Tensor,
        bias: Tensor,
        stride: usize,
    },
    MaxPool1d {
        input: Tensor,
        argmax: Vec<usize>,
    },
    GlobalAvgPool(Tensor),
    Concat {
        inputs: Vec<Tensor>,
        axis: usize,
    },
    Embedding {
        table: Tensor,
        ids: Vec<u32>,
    },
    Dropout {
        input: Tensor,
        mask: Vec<f64>,
    },
    CrossEntropy {
        logits: Tensor,
        labels: Vec<usize>,
    },
    Sum(Tensor),
    Mean(Tensor),
    SliceRows {
        input: Tensor,
        start: usize,
    },
    SliceCols {
        input: Tensor,
        start: usize,
    },
    LayerNorm {
        input: Tensor,
        gamma: Tensor,
        beta: Tensor,
        eps: f64,
    },
}

impl Op {
    pub(crate) fn parents(&self) -> Vec<Tensor> {
        match self {
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Matmul { a, b } => {
                vec![a.clone(), b.clone()]
            }
            Op::AddBias { input, bias } => vec![input.clone(), bias.clone()],
            Op::Scale(a, _)
            | Op::Transpose(a)
            | Op::Reshape(a)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::SoftmaxLastDim(a)
            | Op::GlobalAvgPool(a)
            | Op::Sum(a)
            | Op::Mean(a) => vec![a.clone()],
            Op::Conv1d {
                input,
                kernels,
                bias,
                ..
            } => vec![input.clone(), kernels.clone(), bias.clone()],
            Op::MaxPool1d { input, .. }
            | Op::Dropout { input, .. }
            | Op::SliceRows { input, .. }
            | Op::SliceCols { input, .. } => vec![input.clone()],
            Op::Concat { inputs, .. } => inputs.clone(),
            Op::Embedding { table, .. } => vec![table.clone()],
            Op::CrossEntropy { logits, .. } => vec![logits.clone()],
            Op::LayerNorm {
                input, gamma, beta, ..
            } => vec![input.clone(), gamma.clone(), beta.clone()],
        }
    }

    /// Distributes `out_grad` to the parents' gradient buffers.
    pub(crate) fn distribute(
        &self,
        out_data: &[f64],
        out_grad: &[f64],
        buffers: &mut HashMap<u64, Vec<f64>>,
    ) {
        match self {
            Op::Add(a, b) => {
                accumulate(buffers, a, out_grad);
                accumulate(buffers, b, out_grad);
            }
            Op::Sub(a, b) => {
                accumulate(buffers, a, out_grad);
                let neg: Vec<f64> = out_grad.iter().map(|g| -g).collect();
                accumulate(buffers, b, &neg);
            }
            Op::Mul(a, b) => {
                let da = b.with_data(|bd| {
                    out_grad
                        .iter()
                        .zip(bd.iter())
                        .map(|(g, x)| g * x)
                        .collect::<Vec<f64>>()
                });
                let db = a.with_data(|ad| {
                    out_grad
                        .iter()
                        .zip(ad.iter())
                        .map(|(g, x)| g * x)
                        .collect::<Vec<f64>>()
                });
                accumulate(buffers, a, &da);
                accumulate(buffers, b, &db);
            }
            Op::Scale(a, k) => {
                let da: Vec<f64> = out_grad.iter().map(|g| g * k).collect();
                accumulate(buffers, a, &da);
            }
            Op::AddBias { input, bias } => {
                accumulate(buffers, input, out_grad);
                let cols = bias.numel();
                let mut db = vec![0.0; cols];
                for row in out_grad.chunks_exact(cols) {
                    for (d, g) in db.iter_mut().zip(row.iter()) {
                        *d += g;
                    }
                }
                accumulate(buffers, bias, &db);
            }
            Op::Matmul { a, b } => {
                let (m, k) = {
                    let s = a.shape();
                    (s[0], s[1])
                };
                let n = b.shape()[1];
                // dA = G · Bᵀ
                let da = b.with_data(|bd| {
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        let grow = &out_grad[i * n..(i + 1) * n];
                        let darow = &mut da[i * k..(i + 1) * k];
                        for (p, d) in darow.iter_mut().enumerate() {
                            let brow = &bd[p * n..(p + 1) * n];
                            let mut s = 0.0;
                            for (g, bv) in grow.iter().zip(brow.iter()) {
                                s += g * bv;
                            }
                            *d = s;
                        }
                    }
                    da
                });
                // dB = Aᵀ · G
                let db = a.with_data(|ad| {
                    let mut db = vec![0.0; k * n];
                    for i in 0..m {
                        let grow = &out_grad[i * n..(i + 1) * n];
                        let arow = &ad[i * k..(i + 1) * k];
                        for (p, av) in arow.iter().enumerate() {
                            let dbrow = &mut db[p * n..(p + 1) * n];
                            for (d, g) in dbrow.iter_mut().zip(grow.iter()) {
                                *d += av * g;
                            }
                        }
                    }
                    db
                });
                accumulate(buffers, a, &da);
                accumulate(buffers, b, &db);
            }
            Op::Transpose(a) => {
                let s = a.shape();
                let (rows, cols) = (s[0], s[1]);
                let mut da = vec![0.0; rows * cols];
                // out is [cols×rows]
                for j in 0..cols {
                    for i in 0..rows {
                        da[i * cols + j] = out_grad[j * rows + i];
                    }
                }
                accumulate(buffers, a, &da);
            }
            Op::Reshape(a) => {
                accumulate(buffers, a, out_grad);
            }
            Op::Relu(a) => {
                let da: Vec<f64> = out_grad
                    .iter()
                    .zip(out_data.iter())
                    .map(|(g, &y)| if y > 0.0 { *g } else { 0.0 })
                    .collect();
                accumulate(buffers, a, &da);
            }
            Op::Sigmoid(a) => {
                let da: Vec<f64> = out_grad
                    .iter()
                    .zip(out_data.iter())
                    .map(|(g, &y)| g * y * (1.0 - y))
                    .collect();
                accumulate(buffers, a, &da);
            }
            Op::Tanh(a) => {
                let da: Vec<f64> = out_grad
                    .iter()
                    .zip(out_data.iter())
                    .map(|(g, &y)| g * (1.0 - y * y))
                    .collect();
                accumulate(buffers, a, &da);
            }
            Op::SoftmaxLastDim(a) => {
                let shape = a.shape();
                let cols = *shape.last().unwrap();
                let mut da = vec![0.0; out_grad.len()];
                for r in 0..out_grad.len() / cols {
                    let o = r * cols;
                    let s = &out_data[o..o + cols];
                    let g = &out_grad[o..o + cols];
                    let dot: f64 = s.iter().zip(g.iter()).map(|(s, g)| s * g).sum();
                    for c in 0..cols {
                        da[o + c] = s[c] * (g[c] - dot);
                    }
                }
                accumulate(buffers, a, &da);
            }
            Op::Conv1d {
                input,
                kernels,
                bias,
                stride,
            } => {
                let in_shape = input.shape();
                let (_, channels) = (in_shape[0], in_shape[1]);
                let k_shape = kernels.shape();
                let (width, filters) = (k_shape[0], k_shape[2]);
                let out_t = out_grad.len() / filters;

                let d_in = kernels.with_data(|kd| {
                    let mut d_in = vec![0.0; input.numel()];
                    for t in 0..out_t {
                        let grow = &out_grad[t * filters..(t + 1) * filters];
                        let base = t * stride;
                        for w in 0..width {
                            for c in 0..channels {
                                let krow = &kd[(w * channels + c) * filters..][..filters];
                                let mut s = 0.0;
                                for (g, kv) in grow.iter().zip(krow.iter()) {
                                    s += g * kv;
                                }
                                d_in[(base + w) * channels + c] += s;
                            }
                        }
                    }
                    d_in
                });
                let d_k = input.with_data(|ind| {
                    let mut d_k = vec![0.0; kernels.numel()];
                    for t in 0..out_t {
                        let grow = &out_grad[t * filters..(t + 1) * filters];
                        let base = t * stride;
                        for w in 0..width {
                            for c in 0..channels {
                                let x = ind[(base + w) * channels + c];
                                let krow = &mut d_k[(w * channels + c) * filters..][..filters];
                                for (d, g) in krow.iter_mut().zip(grow.iter()) {
                                    *d += x * g;
                                }
                            }
                        }
                    }
                    d_k
                });
                let mut d_b = vec![0.0; filters];
                for grow in out_grad.chunks_exact(filters) {
                    for (d, g) in d_b.iter_mut().zip(grow.iter()) {
                        *d += g;
                    }
                }
                accumulate(buffers, input, &d_in);
                accumulate(buffers, kernels, &d_k);
                accumulate(buffers, bias, &d_b);
            }
            Op::MaxPool1d { input, argmax, .. } => {
                let mut d_in = vec![0.0; input.numel()];
                for (g, &src) in out_grad.iter().zip(argmax.iter()) {
                    d_in[src] += g;
                }
                accumulate(buffers, input, &d_in);
            }
            Op::GlobalAvgPool(a) => {
                let shape = a.shape();
                let (time, channels) = (shape[0], shape[1]);
                let inv = 1.0 / time as f64;
                let mut da = vec![0.0; time * channels];
                for t in 0..time {
                    for c in 0..channels {
                        da[t * channels + c] = out_grad[c] * inv;
                    }
                }
                accumulate(buffers, a, &da);
            }
            Op::Concat { inputs, axis } => {
                if *axis == 0 || inputs[0].shape().len() == 1 {
                    let mut offset = 0;
                    for t in inputs {
                        let n = t.numel();
                        accumulate(buffers, t, &out_grad[offset..offset + n]);
                        offset += n;
                    }
                } else {
                    // axis 1, rank 2: interleaved column blocks
                    let rows = inputs[0].shape()[0];
                    let total_cols = out_grad.len() / rows;
                    let mut col_offset = 0;
                    for t in inputs {
                        let cols = t.shape()[1];
                        let mut slice = vec![0.0; rows * cols];
                        for r in 0..rows {
                            let src = &out_grad[r * total_cols + col_offset..][..cols];
                            slice[r * cols..(r + 1) * cols].copy_from_slice(src);
                        }
                        accumulate(buffers, t, &slice);
                        col_offset += cols;
                    }
                }
            }
            Op::Embedding { table, ids } => {
                let dim = table.shape()[1];
                let mut d_t = vec![0.0; table.numel()];
                for (pos, &id) in ids.iter().enumerate() {
                    let grow = &out_grad[pos * dim..(pos + 1) * dim];
                    let trow = &mut d_t[id as usize * dim..][..dim];
                    for (d, g) in trow.iter_mut().zip(grow.iter()) {
                        *d += g;
                    }
                }
                accumulate(buffers, table, &d_t);
            }
            Op::Dropout { input, mask } => {
                let da: Vec<f64> = out_grad
                    .iter()
                    .zip(mask.iter())
                    .map(|(g, m)| g * m)
                    .collect();
                accumulate(buffers, input, &da);
            }
            Op::CrossEntropy { logits, labels } => {
                let shape = logits.shape();
                let (rows, classes) = (shape[0], shape[1]);
                let g = out_grad[0] / rows as f64;
                let d_l = logits.with_data(|ld| {
                    let mut d_l = vec![0.0; rows * classes];
                    for r in 0..rows {
                        let row = &ld[r * classes..(r + 1) * classes];
                        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let mut denom = 0.0;
                        for (c, &x) in row.iter().enumerate() {
                            let e = (x - max).exp();
                            d_l[r * classes + c] = e;
                            denom += e;
                        }
                        for c in 0..classes {
                            let p = d_l[r * classes + c] / denom;
                            let y = if c == labels[r] { 1.0 } else { 0.0 };
                            d_l[r * classes + c] = g * (p - y);
                        }
                    }
                    d_l
                });
                accumulate(buffers, logits, &d_l);
            }
            Op::Sum(a) => {
                let da = vec![out_grad[0]; a.numel()];
                accumulate(buffers, a, &da);
            }
            Op::Mean(a) => {
                let da = vec![out_grad[0] / a.numel() as f64; a.numel()];
                accumulate(buffers, a, &da);
            }
            Op::SliceRows { input, start } => {
                let cols = input.shape()[1];
                let mut da = vec![0.0; input.numel()];
                da[start * cols..start * cols + out_grad.len()].copy_from_slice(out_grad);
                accumulate(buffers, input, &da);
            }
            Op::SliceCols { input, start } => {
                let shape = input.shape();
                let (rows, cols) = (shape[0], shape[1]);
                let taken = out_grad.len() / rows;
                let mut da = vec![0.0; rows * cols];
                for r in 0..rows {
                    da[r * cols + start..r * cols + start + taken]
                        .copy_from_slice(&out_grad[r * taken..(r + 1) * taken]);
                }
                accumulate(buffers, input, &da);
            }
            Op::LayerNorm {
                input,
                gamma,
                beta,
                eps,
            } => {
                let d = gamma.numel();
                let rows = input.numel() / d;
                let mut d_in = vec![0.0; input.numel()];
                let mut d_gamma = vec![0.0; d];
                let mut d_beta = vec![0.0; d];
                input.with_data(|xd| {
                    gamma.with_data(|gd| {
                        for r in 0..rows {
                            let x = &xd[r * d..(r + 1) * d];
                            let g = &out_grad[r * d..(r + 1) * d];
                            let mean = x.iter().sum::<f64>() / d as f64;
                            let var =
                                x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                            let inv_std = 1.0 / (var + eps).sqrt();
                            let xhat: Vec<f64> = x.iter().map(|v| (v - mean) * inv_std).collect();
                            let mut dxhat = vec![0.0; d];
                            for j in 0..d {
                                d_gamma[j] += g[j] * xhat[j];
                                d_beta[j] += g[j];
                                dxhat[j] = g[j] * gd[j];
                            }
                            let sum_dxhat: f64 = dxhat.iter().sum();
                            let sum_dxhat_xhat: f64 =
                                dxhat.iter().zip(xhat.iter()).map(|(a, b)| a * b).sum();
                            let df = d as f64;
                            for j in 0..d {
                                d_in[r * d + j] = inv_std / df
                                    * (df * dxhat[j] - sum_dxhat - xhat[j] * sum_dxhat_xhat);
                            }
                        }
                    })
                });
                accumulate(buffers, input, &d_in);
                accumulate(buffers, gamma, &d_gamma);
                accumulate(buffers, beta, &d_beta);
            }
        }
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(), TensorError> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch {
            op,
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    Ok(())
}

fn require_rank(op: &'static str, t: &Tensor, rank: usize) -> Result<Vec<usize>, TensorError> {
    let shape = t.shape();
    if shape.len() != rank {
        return Err(TensorError::RankMismatch {
            op,
            expected: rank,
            shape,
        });
    }
    Ok(shape)
}

impl Tensor {
    /// Elementwise sum; shapes must match.
    pub fn add(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        same_shape("add", self, other)?;
        let data = self.with_data(|a| {
            other.with_data(|b| a.iter().zip(b.iter()).map(|(x, y)| x + y).collect())
        });
        Ok(Tensor::from_op(
            data,
            self.shape(),
            Op::Add(self.clone(), other.clone()),
        ))
    }

    /// Elementwise difference; shapes must match.
    pub fn sub(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        same_shape("sub", self, other)?;
        let data = self.with_data(|a| {
            other.with_data(|b| a.iter().zip(b.iter()).map(|(x, y)| x - y).collect())
        });
        Ok(Tensor::from_op(
            data,
            self.shape(),
            Op::Sub(self.clone(), other.clone()),
        ))
    }

    /// Elementwise (Hadamard) product; shapes must match.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        same_shape("mul", self, other)?;
        let data = self.with_data(|a| {
            other.with_data(|b| a.iter().zip(b.iter()).map(|(x, y)| x * y).collect())
        });
        Ok(Tensor::from_op(
            data,
            self.shape(),
            Op::Mul(self.clone(), other.clone()),
        ))
    }

    /// Multiplies every element by a constant.
    pub fn scale(&self, k: f64) -> Tensor {
        let data = self.with_data(|a| a.iter().map(|x| x * k).collect());
        Tensor::from_op(data, self.shape(), Op::Scale(self.clone(), k))
    }

    /// Adds a rank-1 bias across the rows of a rank-2 tensor.
    pub fn add_bias(&self, bias: &Tensor) -> Result<Tensor, TensorError> {
        let shape = require_rank("add_bias", self, 2)?;
        let b_shape = require_rank("add_bias", bias, 1)?;
        if shape[1] != b_shape[0] {
            return Err(TensorError::ShapeMismatch {
                op: "add_bias",
                lhs: shape,
                rhs: b_shape,
            });
        }
        let cols = shape[1];
        let data = self.with_data(|a| {
            bias.with_data(|b| {
                let mut out = a.to_vec();
                for row in out.chunks_exact_mut(cols) {
                    for (o, bv) in row.iter_mut().zip(b.iter()) {
                        *o += bv;
                    }
                }
                out
            })
        });
        Ok(Tensor::from_op(
            data,
            shape,
            Op::AddBias {
                input: self.clone(),
                bias: bias.clone(),
            },
        ))
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        let a_shape = require_rank("matmul", self, 2)?;
        let b_shape = require_rank("matmul", other, 2)?;
        if a_shape[1] != b_shape[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: a_shape,
                rhs: b_shape,
            });
        }
        let (m, k, n) = (a_shape[0], a_shape[1], b_shape[1]);
        let data = self.with_data(|ad| {
            other.with_data(|bd| {
                let mut c = vec![0.0; m * n];
                for i in 0..m {
                    let crow = &mut c[i * n..(i + 1) * n];
                    for p in 0..k {
                        let av = ad[i * k + p];
                        if av == 0.0 {
                            continue;
                        }
                        let brow = &bd[p * n..(p + 1) * n];
                        for (cv, bv) in crow.iter_mut().zip(brow.iter()) {
                            *cv += av * bv;
                        }
                    }
                }
                c
            })
        });
        Ok(Tensor::from_op(
            data,
            vec![m, n],
            Op::Matmul {
                a: self.clone(),
                b: other.clone(),
            },
        ))
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose(&self) -> Result<Tensor, TensorError> {
        let shape = require_rank("transpose", self, 2)?;
        let (rows, cols) = (shape[0], shape[1]);
        let data = self.with_data(|a| {
            let mut out = vec![0.0; rows * cols];
            for i in 0..rows {
                for j in 0..cols {
                    out[j * rows + i] = a[i * cols + j];
                }
            }
            out
        });
        Ok(Tensor::from_op(
            data,
            vec![cols, rows],
            Op::Transpose(self.clone()),
        ))
    }

    /// Reinterprets the buffer under a new shape with the same element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor, TensorError> {
        let expected: usize = shape.iter().product();
        if expected != self.numel() {
            return Err(TensorError::DataLength {
                shape: shape.to_vec(),
                expected,
                got: self.numel(),
            });
        }
        Ok(Tensor::from_op(
            self.value(),
            shape.to_vec(),
            Op::Reshape(self.clone()),
        ))
    }

    pub fn relu(&self) -> Tensor {
        let data = self.with_data(|a| {
            let mut margin = f64::INFINITY;
            let out: Vec<f64> = a
                .iter()
                .map(|&x| {
                    margin = margin.min(x.abs());
                    x.max(0.0)
                })
                .collect();
            note_kink_margin(margin);
            out
        });
        Tensor::from_op(data, self.shape(), Op::Relu(self.clone()))
    }

    pub fn sigmoid(&self) -> Tensor {
        let data = self.with_data(|a| a.iter().map(|&x| 1.0 / (1.0 + (-x).exp())).collect());
        Tensor::from_op(data, self.shape(), Op::Sigmoid(self.clone()))
    }

    pub fn tanh(&self) -> Tensor {
        let data = self.with_data(|a| a.iter().map(|&x| x.tanh()).collect());
        Tensor::from_op(data, self.shape(), Op::Tanh(self.clone()))
    }

    /// Row-wise softmax over the last dimension, computed with
    /// max-subtraction so large logits cannot overflow.
    pub fn softmax_lastdim(&self) -> Result<Tensor, TensorError> {
        let shape = self.shape();
        let cols = *shape.last().unwrap_or(&0);
        if cols == 0 {
            return Err(TensorError::EmptySoftmaxDim { shape });
        }
        let data = self.with_data(|a| {
            let mut out = vec![0.0; a.len()];
            for (orow, arow) in out.chunks_exact_mut(cols).zip(a.chunks_exact(cols)) {
                let max = arow.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut denom = 0.0;
                for (o, &x) in orow.iter_mut().zip(arow.iter()) {
                    *o = (x - max).exp();
                    denom += *o;
                }
                for o in orow.iter_mut() {
                    *o /= denom;
                }
            }
            out
        });
        Ok(Tensor::from_op(
            data,
            shape,
            Op::SoftmaxLastDim(self.clone()),
        ))
    }

    /// Applies the selected nonlinearity.
    pub fn activation(&self, kind: Activation) -> Result<Tensor, TensorError> {
        match kind {
            Activation::Relu => Ok(self.relu()),
            Activation::Sigmoid => Ok(self.sigmoid()),
            Activation::Tanh => Ok(self.tanh()),
            Activation::SoftmaxLastDim => self.softmax_lastdim(),
        }
    }

    /// Valid (unpadded) 1-D cross-correlation.
    ///
    /// `self` is `[time × channels]`, `kernels` is `[width × channels ×
    /// filters]`, `bias` is `[filters]`. Output time is
    /// `floor((time − width) / stride) + 1`.
    pub fn conv1d(
        &self,
        kernels: &Tensor,
        bias: &Tensor,
        stride: usize,
    ) -> Result<Tensor, TensorError> {
        let in_shape = require_rank("conv1d", self, 2)?;
        let k_shape = require_rank("conv1d", kernels, 3)?;
        let b_shape = require_rank("conv1d", bias, 1)?;
        let (time, channels) = (in_shape[0], in_shape[1]);
        let (width, k_channels, filters) = (k_shape[0], k_shape[1], k_shape[2]);
        if stride == 0 {
            return Err(TensorError::ZeroStride);
        }
        if k_channels != channels {
            return Err(TensorError::ShapeMismatch {
                op: "conv1d",
                lhs: in_shape,
                rhs: k_shape,
            });
        }
        if b_shape[0] != filters {
            return Err(TensorError::ShapeMismatch {
                op: "conv1d",
                lhs: k_shape,
                rhs: b_shape,
            });
        }
        if time < width {
            return Err(TensorError::InputShorterThanKernel { time, width });
        }
        let out_t = (time - width) / stride + 1;
        let data = self.with_data(|ind| {
            kernels.with_data(|kd| {
                bias.with_data(|bd| {
                    let mut out = vec![0.0; out_t * filters];
                    for t in 0..out_t {
                        let orow = &mut out[t * filters..(t + 1) * filters];
                        orow.copy_from_slice(bd);
                        let base = t * stride;
                        for w in 0..width {
                            for c in 0..channels {
                                let x = ind[(base + w) * channels + c];
                                if x == 0.0 {
                                    continue;
                                }
                                let krow = &kd[(w * channels + c) * filters..][..filters];
                                for (o, kv) in orow.iter_mut().zip(krow.iter()) {
                                    *o += x * kv;
                                }
                            }
                        }
                    }
                    out
                })
            })
        });
        Ok(Tensor::from_op(
            data,
            vec![out_t, filters],
            Op::Conv1d {
                input: self.clone(),
                kernels: kernels.clone(),
                bias: bias.clone(),
                stride,
            },
        ))
    }

    /// Non-overlapping max pooling along the time axis; a trailing partial
    /// window is dropped. Ties route to the earliest index.
    pub fn max_pool1d(&self, window: usize) -> Result<Tensor, TensorError> {
        let shape = require_rank("max_pool1d", self, 2)?;
        let (time, channels) = (shape[0], shape[1]);
        if window == 0 {
            return Err(TensorError::ZeroWindow);
        }
        if window > time {
            return Err(TensorError::WindowTooLarge { window, time });
        }
        let out_t = time / window;
        let mut argmax = vec![0usize; out_t * channels];
        let data = self.with_data(|a| {
            let mut out = vec![0.0; out_t * channels];
            let mut margin = f64::INFINITY;
            for t in 0..out_t {
                for c in 0..channels {
                    let mut best = f64::NEG_INFINITY;
                    let mut runner_up = f64::NEG_INFINITY;
                    let mut best_idx = 0;
                    for w in 0..window {
                        let idx = (t * window + w) * channels + c;
                        let v = a[idx];
                        if v > best {
                            runner_up = best;
                            best = v;
                            best_idx = idx;
                        } else if v > runner_up {
                            runner_up = v;
                        }
                    }
                    // Exact ties (identical branches, e.g. repeated pad
                    // windows) are benign for finite differences; only a
                    // small nonzero gap marks a crossable kink.
                    let gap = best - runner_up;
                    if window > 1 && gap > 0.0 {
                        margin = margin.min(gap);
                    }
                    out[t * channels + c] = best;
                    argmax[t * channels + c] = best_idx;
                }
            }
            note_kink_margin(margin);
            out
        });
        Ok(Tensor::from_op(
            data,
            vec![out_t, channels],
            Op::MaxPool1d {
                input: self.clone(),
                argmax,
            },
        ))
    }

    /// Per-channel mean over the time axis: `[time × channels] → [channels]`.
    pub fn global_avg_pool(&self) -> Result<Tensor, TensorError> {
        let shape = require_rank("global_avg_pool", self, 2)?;
        let (time, channels) = (shape[0], shape[1]);
        if time == 0 {
            return Err(TensorError::EmptyTimeAxis);
        }
        let data = self.with_data(|a| {
            let mut out = vec![0.0; channels];
            for row in a.chunks_exact(channels) {
                for (o, v) in out.iter_mut().zip(row.iter()) {
                    *o += v;
                }
            }
            for o in out.iter_mut() {
                *o /= time as f64;
            }
            out
        });
        Ok(Tensor::from_op(
            data,
            vec![channels],
            Op::GlobalAvgPool(self.clone()),
        ))
    }

    /// Inverted dropout: in training mode each element is zeroed with
    /// probability `rate` and survivors are scaled by `1/(1-rate)`, so
    /// inference is an identity.
    pub fn dropout(
        &self,
        rate: f64,
        training: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Tensor, TensorError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::InvalidDropoutRate { rate });
        }
        if !training || rate == 0.0 {
            return Ok(self.clone());
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.numel())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let data = self.with_data(|a| {
            a.iter()
                .zip(mask.iter())
                .map(|(x, m)| x * m)
                .collect::<Vec<f64>>()
        });
        Ok(Tensor::from_op(
            data,
            self.shape(),
            Op::Dropout {
                input: self.clone(),
                mask,
            },
        ))
    }

    /// Sum of all elements as a scalar tensor.
    pub fn sum(&self) -> Tensor {
        let s = self.with_data(|a| a.iter().sum());
        Tensor::from_op(vec![s], vec![1], Op::Sum(self.clone()))
    }

    /// Mean of all elements as a scalar tensor.
    pub fn mean(&self) -> Result<Tensor, TensorError> {
        if self.numel() == 0 {
            return Err(TensorError::EmptyMean);
        }
        let m = self.with_data(|a| a.iter().sum::<f64>() / a.len() as f64);
        Ok(Tensor::from_op(vec![m], vec![1], Op::Mean(self.clone())))
    }

    /// Contiguous row slice of a rank-2 tensor.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Tensor, TensorError> {
        let shape = require_rank("slice_rows", self, 2)?;
        let (rows, cols) = (shape[0], shape[1]);
        if start > end || end > rows {
            return Err(TensorError::SliceOutOfBounds {
                op: "slice_rows",
                start,
                end,
                size: rows,
            });
        }
        let data = self.with_data(|a| a[start * cols..end * cols].to_vec());
        Ok(Tensor::from_op(
            data,
            vec![end - start, cols],
            Op::SliceRows {
                input: self.clone(),
                start,
            },
        ))
    }

    /// Contiguous column slice of a rank-2 tensor.
    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Tensor, TensorError> {
        let shape = require_rank("slice_cols", self, 2)?;
        let (rows, cols) = (shape[0], shape[1]);
        if start > end || end > cols {
            return Err(TensorError::SliceOutOfBounds {
                op: "slice_cols",
                start,
                end,
                size: cols,
            });
        }
        let taken = end - start;
        let data = self.with_data(|a| {
            let mut out = vec![0.0; rows * taken];
            for r in 0..rows {
                out[r * taken..(r + 1) * taken]
                    .copy_from_slice(&a[r * cols + start..r * cols + end]);
            }
            out
        });
        Ok(Tensor::from_op(
            data,
            vec![rows, taken],
            Op::SliceCols {
                input: self.clone(),
                start,
            },
        ))
    }

    /// Layer normalization over the last dimension with learned gain/offset.
    pub fn layer_norm(
        &self,
        gamma: &Tensor,
        beta: &Tensor,
        eps: f64,
    ) -> Result<Tensor, TensorError> {
        let shape = self.shape();
        let d = *shape.last().unwrap_or(&0);
        let g_shape = require_rank("layer_norm", gamma, 1)?;
        let b_shape = require_rank("layer_norm", beta, 1)?;
        if g_shape[0] != d || b_shape[0] != d || d == 0 {
            return Err(TensorError::ShapeMismatch {
                op: "layer_norm",
                lhs: shape,
                rhs: g_shape,
            });
        }
        let data = self.with_data(|x| {
            gamma.with_data(|g| {
                beta.with_data(|b| {
                    let mut out = vec![0.0; x.len()];
                    for (orow, xrow) in out.chunks_exact_mut(d).zip(x.chunks_exact(d)) {
                        let mean = xrow.iter().sum::<f64>() / d as f64;
                        let var =
                            xrow.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                        let inv_std = 1.0 / (var + eps).sqrt();
                        for j in 0..d {
                            orow[j] = (xrow[j] - mean) * inv_std * g[j] + b[j];
                        }
                    }
                    out
                })
            })
        });
        Ok(Tensor::from_op(
            data,
            shape,
            Op::LayerNorm {
                input: self.clone(),
                gamma: gamma.clone(),
                beta: beta.clone(),
                eps,
            },
        ))
    }
}

/// Concatenates tensors along `axis` (0 or 1). All other dimensions must
/// agree; mismatches name the offending input.
pub fn concat(inputs: &[Tensor], axis: usize) -> Result<Tensor, TensorError> {
    if inputs.is_empty() {
        return Err(TensorError::EmptyConcat);
    }
    let first = inputs[0].shape();
    let rank = first.len();
    if axis >= rank {
        return Err(TensorError::InvalidAxis {
            op: "concat",
            axis,
            shape: first,
        });
    }
    for (i, t) in inputs.iter().enumerate().skip(1) {
        let s = t.shape();
        let compatible = s.len() == rank
            && s.iter()
                .zip(first.iter())
                .enumerate()
                .all(|(d, (a, b))| d == axis || a == b);
        if !compatible {
            return Err(TensorError::ConcatMismatch {
                index: i,
                shape: s,
                expected: first.clone(),
                axis,
            });
        }
    }
    let mut out_shape = first.clone();
    out_shape[axis] = inputs.iter().map(|t| t.shape()[axis]).sum();

    let data = if axis == 0 || rank == 1 {
        let mut data = Vec::with_capacity(out_shape.iter().product());
        for t in inputs {
            t.with_data(|d| data.extend_from_slice(d));
        }
        data
    } else {
        let rows = first[0];
        let total_cols = out_shape[1];
        let mut data = vec![0.0; rows * total_cols];
        let mut col_offset = 0;
        for t in inputs {
            let cols = t.shape()[1];
            t.with_data(|d| {
                for r in 0..rows {
                    data[r * total_cols + col_offset..r * total_cols + col_offset + cols]
                        .copy_from_slice(&d[r * cols..(r + 1) * cols]);
                }
            });
            col_offset += cols;
        }
        data
    };
    Ok(Tensor::from_op(
        data,
        out_shape,
        Op::Concat {
            inputs: inputs.to_vec(),
            axis,
        },
    ))
}

/// Gathers rows of `table` (`[vocab × dim]`) by token id; the gradient
/// scatter-adds back into the table rows.
pub fn embedding_lookup(table: &Tensor, ids: &[u32]) -> Result<Tensor, TensorError> {
    let shape = require_rank("embedding_lookup", table, 2)?;
    let (vocab, dim) = (shape[0], shape[1]);
    for (position, &id) in ids.iter().enumerate() {
        if id as usize >= vocab {
            return Err(TensorError::IdOutOfRange {
                id,
                position,
                vocab,
            });
        }
    }
    let data = table.with_data(|t| {
        let mut out = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            out.extend_from_slice(&t[id as usize * dim..(id as usize + 1) * dim]);
        }
        out
    });
    Ok(Tensor::from_op(
        data,
        vec![ids.len(), dim],
        Op::Embedding {
            table: table.clone(),
            ids: ids.to_vec(),
        },
    ))
}

/// Mean softmax cross-entropy over a batch of logit rows, computed with a
/// fused log-sum-exp.
pub fn cross_entropy_loss(logits: &Tensor, labels: &[usize]) -> Result<Tensor, TensorError> {
    let shape = require_rank("cross_entropy_loss", logits, 2)?;
    let (rows, classes) = (shape[0], shape[1]);
    if labels.len() != rows {
        return Err(TensorError::LabelCountMismatch {
            labels: labels.len(),
            rows,
        });
    }
    if rows == 0 {
        return Err(TensorError::EmptyMean);
    }
    for (row, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(TensorError::LabelOutOfRange {
                label,
                row,
                classes,
            });
        }
    }
    let loss = logits.with_data(|ld| {
        let mut total = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            let row = &ld[r * classes..(r + 1) * classes];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
            total -= row[label] - lse;
        }
        total / rows as f64
    });
    Ok(Tensor::from_op(
        vec![loss],
        vec![1],
        Op::CrossEntropy {
            logits: logits.clone(),
            labels: labels.to_vec(),
        },
    ))
}
