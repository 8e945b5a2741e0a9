//! Small transformer encoder standing in for a pretrained text model:
//! learned token embeddings plus sinusoidal positions, a stack of
//! multi-head self-attention blocks, and masked mean pooling.

use rand_chacha::ChaCha8Rng;

use super::{init, AttentionHead, DenseLayer, LayerError};
use crate::tensor::{concat, embedding_lookup, Activation, Tensor};

const LAYER_NORM_EPS: f64 = 1e-5;

/// Sinusoidal positional encoding: sine on even indices, cosine on odd,
/// wavelength `10000^(2i/dim)`. Constant (non-trainable).
pub fn positional_encoding(time: usize, dim: usize) -> Result<Tensor, LayerError> {
    if dim % 2 != 0 {
        return Err(LayerError::OddPositionalDim { dim });
    }
    let mut data = vec![0.0; time * dim];
    for pos in 0..time {
        for i in 0..dim / 2 {
            let rate = 1.0 / 10000f64.powf(2.0 * i as f64 / dim as f64);
            let angle = pos as f64 * rate;
            data[pos * dim + 2 * i] = angle.sin();
            data[pos * dim + 2 * i + 1] = angle.cos();
        }
    }
    Ok(Tensor::from_vec(data, &[time, dim]).expect("positional encoding shape"))
}

/// One pre-classifier transformer block: multi-head self-attention with a
/// linear mix, residual + layer norm, then a position-wise feed-forward
/// (dense→ReLU→dense) with a second residual + layer norm.
pub struct EncoderBlock {
    pub heads: Vec<AttentionHead>,
    pub w_o: Tensor,
    pub norm1_gamma: Tensor,
    pub norm1_beta: Tensor,
    pub norm2_gamma: Tensor,
    pub norm2_beta: Tensor,
    pub ff1: DenseLayer,
    pub ff2: DenseLayer,
    pub dim: usize,
}

impl EncoderBlock {
    pub fn new(
        dim: usize,
        num_heads: usize,
        ff_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<EncoderBlock, LayerError> {
        if num_heads == 0 || dim % num_heads != 0 {
            return Err(LayerError::DimNotDivisible {
                dim,
                heads: num_heads,
            });
        }
        let head_dim = dim / num_heads;
        let heads = (0..num_heads)
            .map(|_| AttentionHead::new(dim, head_dim, rng))
            .collect();
        let w_o = Tensor::param(init::glorot_uniform(rng, dim, dim, dim * dim), &[dim, dim])
            .expect("encoder output projection");
        let ones = |d: usize| Tensor::param(vec![1.0; d], &[d]).expect("norm gain");
        let zeros_p = |d: usize| Tensor::param(vec![0.0; d], &[d]).expect("norm offset");
        Ok(EncoderBlock {
            heads,
            w_o,
            norm1_gamma: ones(dim),
            norm1_beta: zeros_p(dim),
            norm2_gamma: ones(dim),
            norm2_beta: zeros_p(dim),
            ff1: DenseLayer::new(dim, ff_dim, Some(Activation::Relu), rng),
            ff2: DenseLayer::new(ff_dim, dim, None, rng),
            dim,
        })
    }

    /// `[time × dim] → [time × dim]`, with an optional additive key mask.
    pub fn forward(&self, sequence: &Tensor, mask: Option<&Tensor>) -> Result<Tensor, LayerError> {
        let mut head_outs = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            head_outs.push(head.attend(sequence, sequence, sequence, mask)?.0);
        }
        let mixed = concat(&head_outs, 1)?.matmul(&self.w_o)?;
        let x1 = sequence
            .add(&mixed)?
            .layer_norm(&self.norm1_gamma, &self.norm1_beta, LAYER_NORM_EPS)?;
        let ff = self.ff2.forward(&self.ff1.forward(&x1)?)?;
        Ok(x1
            .add(&ff)?
            .layer_norm(&self.norm2_gamma, &self.norm2_beta, LAYER_NORM_EPS)?)
    }

    pub(crate) fn append_params(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        for (i, head) in self.heads.iter().enumerate() {
            head.append_params(&format!("{prefix}.head{i}"), out);
        }
        out.push((format!("{prefix}.w_o"), self.w_o.clone()));
        out.push((format!("{prefix}.norm1_gamma"), self.norm1_gamma.clone()));
        out.push((format!("{prefix}.norm1_beta"), self.norm1_beta.clone()));
        out.push((format!("{prefix}.norm2_gamma"), self.norm2_gamma.clone()));
        out.push((format!("{prefix}.norm2_beta"), self.norm2_beta.clone()));
        self.ff1.append_params(&format!("{prefix}.ff1"), out);
        self.ff2.append_params(&format!("{prefix}.ff2"), out);
    }
}

/// Attention-based text encoder trained from scratch.
pub struct TextEncoder {
    pub embedding: Tensor,
    pub blocks: Vec<EncoderBlock>,
    pub dim: usize,
    pub pad_id: u32,
}

impl TextEncoder {
    pub fn new(
        vocab_size: usize,
        dim: usize,
        num_heads: usize,
        num_blocks: usize,
        ff_dim: usize,
        pad_id: u32,
        rng: &mut ChaCha8Rng,
    ) -> Result<TextEncoder, LayerError> {
        if dim % 2 != 0 {
            return Err(LayerError::OddPositionalDim { dim });
        }
        let embedding = Tensor::param(
            init::uniform(rng, -0.05, 0.05, vocab_size * dim),
            &[vocab_size, dim],
        )
        .expect("embedding shape");
        let blocks = (0..num_blocks)
            .map(|_| EncoderBlock::new(dim, num_heads, ff_dim, rng))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TextEncoder {
            embedding,
            blocks,
            dim,
            pad_id,
        })
    }

    /// Encodes right-padded token ids into a contextual sequence and a
    /// mean-pooled vector over the non-pad prefix.
    ///
    /// Pad positions are masked out of the attention scores; an all-pad
    /// sequence skips masking and pools over everything so the output
    /// stays finite.
    pub fn forward(&self, tokens: &[u32]) -> Result<(Tensor, Tensor), LayerError> {
        let time = tokens.len();
        if time == 0 {
            return Err(LayerError::EmptySequence {
                layer: "text_encoder",
            });
        }
        let real_len = tokens.iter().take_while(|&&t| t != self.pad_id).count();
        let mask = if real_len > 0 && real_len < time {
            let mut m = vec![0.0; time * time];
            for row in 0..time {
                for col in real_len..time {
                    m[row * time + col] = -1e30;
                }
            }
            Some(Tensor::from_vec(m, &[time, time]).expect("mask shape"))
        } else {
            None
        };

        let mut seq = embedding_lookup(&self.embedding, tokens)?
            .add(&positional_encoding(time, self.dim)?)?;
        for block in &self.blocks {
            seq = block.forward(&seq, mask.as_ref())?;
        }
        let pool_rows = if real_len > 0 { real_len } else { time };
        let pooled = seq.slice_rows(0, pool_rows)?.global_avg_pool()?;
        Ok((seq, pooled))
    }

    pub(crate) fn append_params(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        out.push((format!("{prefix}.embedding"), self.embedding.clone()));
        for (i, block) in self.blocks.iter().enumerate() {
            block.append_params(&format!("{prefix}.block{i}"), out);
        }
    }
}
