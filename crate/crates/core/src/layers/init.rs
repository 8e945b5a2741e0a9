//! Weight initializers. All are deterministic given the caller's RNG.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

pub fn glorot_uniform(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(rng, -limit, limit, n)
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller from two open-interval uniforms.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Random orthogonal `n × n` matrix via modified Gram-Schmidt on a
/// Gaussian draw.
pub fn orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut cols: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| standard_normal(rng)).collect())
        .collect();
    for j in 0..n {
        for _ in 0..2 {
            for i in 0..j {
                let dot: f64 = (0..n).map(|r| cols[i][r] * cols[j][r]).sum();
                for r in 0..n {
                    cols[j][r] -= dot * cols[i][r];
                }
            }
        }
        let norm: f64 = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm > 1e-10, "degenerate draw in orthogonal init");
        for v in cols[j].iter_mut() {
            *v /= norm;
        }
    }
    let mut out = vec![0.0; n * n];
    for (j, col) in cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            out[i * n + j] = *v;
        }
    }
    out
}

/// Horizontal concatenation of `blocks` independent orthogonal `n × n`
/// blocks: the recurrent-kernel layout `[n × (blocks·n)]`.
pub fn orthogonal_blocks(rng: &mut ChaCha8Rng, n: usize, blocks: usize) -> Vec<f64> {
    let mats: Vec<Vec<f64>> = (0..blocks).map(|_| orthogonal(rng, n)).collect();
    let cols = blocks * n;
    let mut out = vec![0.0; n * cols];
    for (b, m) in mats.iter().enumerate() {
        for i in 0..n {
            out[i * cols + b * n..i * cols + (b + 1) * n].copy_from_slice(&m[i * n..(i + 1) * n]);
        }
    }
    out
}
