//! Layer zoo: dense and convolution layers, LSTM/GRU cells, scaled
//! dot-product attention (self and cross), and a small transformer text
//! encoder that fills the pretrained-encoder role at desk scale.

mod attention;
mod encoder;
pub(crate) mod init;
mod recurrent;

pub use attention::{
    scaled_dot_attention, scaled_dot_attention_masked, AttentionHead, CrossAttention,
    CrossAttentionForm,
};
pub use encoder::{positional_encoding, EncoderBlock, TextEncoder};
pub use recurrent::{GruLayer, LstmLayer};

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::tensor::{Activation, Tensor, TensorError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LayerError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{layer}: empty input sequence")]
    EmptySequence { layer: &'static str },
    #[error("model dimension {dim} not divisible by {heads} heads")]
    DimNotDivisible { dim: usize, heads: usize },
    #[error("positional encoding requires an even dimension, got {dim}")]
    OddPositionalDim { dim: usize },
    #[error("paper-literal cross-attention needs equal lengths, got {t_a} and {t_b}")]
    UnequalLengths { t_a: usize, t_b: usize },
}

/// Fully connected layer with optional activation.
pub struct DenseLayer {
    pub weights: Tensor,
    pub bias: Tensor,
    pub activation: Option<Activation>,
}

impl DenseLayer {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        activation: Option<Activation>,
        rng: &mut ChaCha8Rng,
    ) -> DenseLayer {
        let weights = Tensor::param(
            init::glorot_uniform(rng, in_dim, out_dim, in_dim * out_dim),
            &[in_dim, out_dim],
        )
        .expect("dense weight shape");
        let bias = Tensor::param(vec![0.0; out_dim], &[out_dim]).expect("dense bias shape");
        DenseLayer {
            weights,
            bias,
            activation,
        }
    }

    /// `[batch × in] → [batch × out]`
    pub fn forward(&self, input: &Tensor) -> Result<Tensor, LayerError> {
        let out = input.matmul(&self.weights)?.add_bias(&self.bias)?;
        Ok(match self.activation {
            Some(kind) => out.activation(kind)?,
            None => out,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weights.shape()[1]
    }

    pub(crate) fn append_params(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        out.push((format!("{prefix}.weights"), self.weights.clone()));
        out.push((format!("{prefix}.bias"), self.bias.clone()));
    }
}

/// Valid 1-D convolution layer (cross-correlation) with optional activation.
pub struct Conv1dLayer {
    pub kernels: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub activation: Option<Activation>,
}

impl Conv1dLayer {
    pub fn new(
        width: usize,
        in_channels: usize,
        filters: usize,
        stride: usize,
        activation: Option<Activation>,
        rng: &mut ChaCha8Rng,
    ) -> Conv1dLayer {
        let fan_in = width * in_channels;
        let fan_out = width * filters;
        let kernels = Tensor::param(
            init::glorot_uniform(rng, fan_in, fan_out, width * in_channels * filters),
            &[width, in_channels, filters],
        )
        .expect("conv kernel shape");
        let bias = Tensor::param(vec![0.0; filters], &[filters]).expect("conv bias shape");
        Conv1dLayer {
            kernels,
            bias,
            stride,
            activation,
        }
    }

    /// `[time × channels] → [out_time × filters]`
    pub fn forward(&self, input: &Tensor) -> Result<Tensor, LayerError> {
        let out = input.conv1d(&self.kernels, &self.bias, self.stride)?;
        Ok(match self.activation {
            Some(kind) => out.activation(kind)?,
            None => out,
        })
    }

    pub fn width(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn filters(&self) -> usize {
        self.kernels.shape()[2]
    }

    /// Output length for an input of length `time`, or None when too short.
    pub fn out_len(&self, time: usize) -> Option<usize> {
        if time < self.width() {
            None
        } else {
            Some((time - self.width()) / self.stride + 1)
        }
    }

    pub(crate) fn append_params(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        out.push((format!("{prefix}.kernels"), self.kernels.clone()));
        out.push((format!("{prefix}.bias"), self.bias.clone()));
    }
}
