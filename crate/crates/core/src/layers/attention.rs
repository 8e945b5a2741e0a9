//! Scaled dot-product attention: `softmax(QKᵀ/√d_k)·V`, in self- and
//! cross-modal flavours.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{init, LayerError};
use crate::tensor::{Tensor, TensorError};

/// Core attention: returns the output and the row-stochastic weight matrix.
pub fn scaled_dot_attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
) -> Result<(Tensor, Tensor), TensorError> {
    scaled_dot_attention_masked(q, k, v, None)
}

/// As [`scaled_dot_attention`], with an optional additive score mask
/// (`[t_q × t_k]`, typically 0 or a large negative number).
pub fn scaled_dot_attention_masked(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    mask: Option<&Tensor>,
) -> Result<(Tensor, Tensor), TensorError> {
    let d_k = k.shape()[1];
    let mut scores = q.matmul(&k.transpose()?)?.scale(1.0 / (d_k as f64).sqrt());
    if let Some(m) = mask {
        scores = scores.add(m)?;
    }
    let weights = scores.softmax_lastdim()?;
    let out = weights.matmul(v)?;
    Ok((out, weights))
}

/// Single attention head: learned Q/K/V projections from `model_dim` down
/// to `head_dim` (`d_k`).
pub struct AttentionHead {
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
    pub head_dim: usize,
}

impl AttentionHead {
    pub fn new(model_dim: usize, head_dim: usize, rng: &mut ChaCha8Rng) -> AttentionHead {
        let proj = |rng: &mut ChaCha8Rng| {
            Tensor::param(
                init::glorot_uniform(rng, model_dim, head_dim, model_dim * head_dim),
                &[model_dim, head_dim],
            )
            .expect("attention projection")
        };
        AttentionHead {
            w_q: proj(rng),
            w_k: proj(rng),
            w_v: proj(rng),
            head_dim,
        }
    }

    /// Projects `q_src`/`k_src`/`v_src` and applies attention.
    pub fn attend(
        &self,
        q_src: &Tensor,
        k_src: &Tensor,
        v_src: &Tensor,
        mask: Option<&Tensor>,
    ) -> Result<(Tensor, Tensor), LayerError> {
        let q = q_src.matmul(&self.w_q)?;
        let k = k_src.matmul(&self.w_k)?;
        let v = v_src.matmul(&self.w_v)?;
        Ok(scaled_dot_attention_masked(&q, &k, &v, mask)?)
    }

    /// Self-attention over one sequence: `[time × model_dim] → [time × head_dim]`.
    pub fn self_attention(&self, sequence: &Tensor) -> Result<Tensor, LayerError> {
        if sequence.shape()[0] == 0 {
            return Err(LayerError::EmptySequence {
                layer: "self_attention",
            });
        }
        Ok(self.attend(sequence, sequence, sequence, None)?.0)
    }

    pub(crate) fn append_params(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        out.push((format!("{prefix}.w_q"), self.w_q.clone()));
        out.push((format!("{prefix}.w_k"), self.w_k.clone()));
        out.push((format!("{prefix}.w_v"), self.w_v.clone()));
    }
}

/// Which modality supplies the value projection of cross-attention.
///
/// `Standard` is the conventional split: queries from modality A, keys and
/// values from modality B; it is well-shaped for any pair of lengths.
/// `PaperLiteral` draws queries *and* values from modality A and only keys
/// from modality B, which is only well-shaped when both sequences have the
/// same length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossAttentionForm {
    #[default]
    Standard,
    PaperLiteral,
}

/// Cross-modal attention head with per-modality input projections.
pub struct CrossAttention {
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
    pub form: CrossAttentionForm,
    pub head_dim: usize,
}

impl CrossAttention {
    pub fn new(
        dim_a: usize,
        dim_b: usize,
        head_dim: usize,
        form: CrossAttentionForm,
        rng: &mut ChaCha8Rng,
    ) -> CrossAttention {
        let proj = |rng: &mut ChaCha8Rng, d_in: usize| {
            Tensor::param(
                init::glorot_uniform(rng, d_in, head_dim, d_in * head_dim),
                &[d_in, head_dim],
            )
            .expect("cross-attention projection")
        };
        let value_dim = match form {
            CrossAttentionForm::Standard => dim_b,
            CrossAttentionForm::PaperLiteral => dim_a,
        };
        CrossAttention {
            w_q: proj(rng, dim_a),
            w_k: proj(rng, dim_b),
            w_v: proj(rng, value_dim),
            form,
            head_dim,
        }
    }

    /// Fuses `modality_a` (`[t_a × dim_a]`) with `modality_b`
    /// (`[t_b × dim_b]`), returning `[t_a × head_dim]` and the
    /// `[t_a × t_b]` attention weights.
    pub fn forward(
        &self,
        modality_a: &Tensor,
        modality_b: &Tensor,
    ) -> Result<(Tensor, Tensor), LayerError> {
        let t_a = modality_a.shape()[0];
        let t_b = modality_b.shape()[0];
        if t_a == 0 || t_b == 0 {
            return Err(LayerError::EmptySequence {
                layer: "cross_attention",
            });
        }
        let q = modality_a.matmul(&self.w_q)?;
        let k = modality_b.matmul(&self.w_k)?;
        let v = match self.form {
            CrossAttentionForm::Standard => modality_b.matmul(&self.w_v)?,
            CrossAttentionForm::PaperLiteral => {
                if t_a != t_b {
                    return Err(LayerError::UnequalLengths { t_a, t_b });
                }
                modality_a.matmul(&self.w_v)?
            }
        };
        Ok(scaled_dot_attention(&q, &k, &v)?)
    }

    pub(crate) fn append_params(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        out.push((format!("{prefix}.w_q"), self.w_q.clone()));
        out.push((format!("{prefix}.w_k"), self.w_k.clone()));
        out.push((format!("{prefix}.w_v"), self.w_v.clone()));
    }
}
