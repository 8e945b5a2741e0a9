//! LSTM and GRU layers. Both consume a `[time × features]` sequence one
//! step at a time and return the full `[time × units]` hidden sequence.

use rand_chacha::ChaCha8Rng;

use super::{init, LayerError};
use crate::tensor::{concat, Tensor};

/// LSTM with gate order (input, forget, candidate, output) in the fused
/// kernels. Forget-gate bias starts at 1.0; everything else at zero.
pub struct LstmLayer {
    /// `[features × 4·units]`
    pub w_x: Tensor,
    /// `[units × 4·units]`, per-gate orthogonal blocks
    pub w_h: Tensor,
    /// `[4·units]`
    pub bias: Tensor,
    pub units: usize,
}

impl LstmLayer {
    pub fn new(features: usize, units: usize, rng: &mut ChaCha8Rng) -> LstmLayer {
        let w_x = Tensor::param(
            init::glorot_uniform(rng, features, 4 * units, features * 4 * units),
            &[features, 4 * units],
        )
        .expect("lstm input kernel");
        let w_h = Tensor::param(init::orthogonal_blocks(rng, units, 4), &[units, 4 * units])
            .expect("lstm recurrent kernel");
        let mut b = vec![0.0; 4 * units];
        for v in b.iter_mut().take(2 * units).skip(units) {
            *v = 1.0;
        }
        let bias = Tensor::param(b, &[4 * units]).expect("lstm bias");
        LstmLayer {
            w_x,
            w_h,
            bias,
            units,
        }
    }

    pub fn forward(&self, sequence: &Tensor) -> Result<Tensor, LayerError> {
        let shape = sequence.shape();
        let time = shape[0];
        if time == 0 {
            return Err(LayerError::EmptySequence { layer: "lstm" });
        }
        let u = self.units;
        let mut h = Tensor::zeros(&[1, u]);
        let mut c = Tensor::zeros(&[1, u]);
        let mut outputs = Vec::with_capacity(time);
        for t in 0..time {
            let x_t = sequence.slice_rows(t, t + 1)?;
            let pre = x_t
                .matmul(&self.w_x)?
                .add(&h.matmul(&self.w_h)?)?
                .add_bias(&self.bias)?;
            let i = pre.slice_cols(0, u)?.sigmoid();
            let f = pre.slice_cols(u, 2 * u)?.sigmoid();
            let g = pre.slice_cols(2 * u, 3 * u)?.tanh();
            let o = pre.slice_cols(3 * u, 4 * u)?.sigmoid();
            c = f.mul(&c)?.add(&i.mul(&g)?)?;
            h = o.mul(&c.tanh())?;
            outputs.push(h.clone());
        }
        Ok(concat(&outputs, 0)?)
    }

    pub(crate) fn append_params(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        out.push((format!("{prefix}.w_x"), self.w_x.clone()));
        out.push((format!("{prefix}.w_h"), self.w_h.clone()));
        out.push((format!("{prefix}.bias"), self.bias.clone()));
    }
}

/// GRU with update/reset gates and the candidate path
/// `h_t = (1 − z) ⊙ h_{t−1} + z ⊙ tanh(W·x + U·(r ⊙ h_{t−1}))`.
pub struct GruLayer {
    /// `[features × 3·units]`, blocks (update, reset, candidate)
    pub w_x: Tensor,
    /// `[units × 2·units]`, recurrent kernel for update/reset
    pub w_h_zr: Tensor,
    /// `[units × units]`, recurrent kernel for the candidate
    pub w_h_c: Tensor,
    /// `[3·units]`
    pub bias: Tensor,
    pub units: usize,
}

impl GruLayer {
    pub fn new(features: usize, units: usize, rng: &mut ChaCha8Rng) -> GruLayer {
        let w_x = Tensor::param(
            init::glorot_uniform(rng, features, 3 * units, features * 3 * units),
            &[features, 3 * units],
        )
        .expect("gru input kernel");
        let w_h_zr = Tensor::param(init::orthogonal_blocks(rng, units, 2), &[units, 2 * units])
            .expect("gru recurrent kernel");
        let w_h_c = Tensor::param(init::orthogonal(rng, units), &[units, units])
            .expect("gru candidate kernel");
        let bias = Tensor::param(vec![0.0; 3 * units], &[3 * units]).expect("gru bias");
        GruLayer {
            w_x,
            w_h_zr,
            w_h_c,
            bias,
            units,
        }
    }

    pub fn forward(&self, sequence: &Tensor) -> Result<Tensor, LayerError> {
        let shape = sequence.shape();
        let time = shape[0];
        if time == 0 {
            return Err(LayerError::EmptySequence { layer: "gru" });
        }
        let u = self.units;
        let mut h = Tensor::zeros(&[1, u]);
        let mut outputs = Vec::with_capacity(time);
        for t in 0..time {
            let x_t = sequence.slice_rows(t, t + 1)?;
            let x_proj = x_t.matmul(&self.w_x)?.add_bias(&self.bias)?;
            let zr = x_proj
                .slice_cols(0, 2 * u)?
                .add(&h.matmul(&self.w_h_zr)?)?;
            let z = zr.slice_cols(0, u)?.sigmoid();
            let r = zr.slice_cols(u, 2 * u)?.sigmoid();
            let cand = x_proj
                .slice_cols(2 * u, 3 * u)?
                .add(&r.mul(&h)?.matmul(&self.w_h_c)?)?
                .tanh();
            h = h.sub(&z.mul(&h)?)?.add(&z.mul(&cand)?)?;
            outputs.push(h.clone());
        }
        Ok(concat(&outputs, 0)?)
    }

    pub(crate) fn append_params(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        out.push((format!("{prefix}.w_x"), self.w_x.clone()));
        out.push((format!("{prefix}.w_h_zr"), self.w_h_zr.clone()));
        out.push((format!("{prefix}.w_h_c"), self.w_h_c.clone()));
        out.push((format!("{prefix}.bias"), self.bias.clone()));
    }
}
