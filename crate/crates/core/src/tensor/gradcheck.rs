//! Central-difference gradient verification.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Tensor, TensorError};

/// Outcome of a gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckResult {
    pub max_relative_error: f64,
    pub per_parameter_errors: Vec<f64>,
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares analytic gradients of `loss_fn` against central finite
/// differences on every element of every parameter.
///
/// `loss_fn` must rebuild the scalar loss graph from the current parameter
/// values on each call and be deterministic given those values.
pub fn grad_check<F>(
    params: &[Tensor],
    mut loss_fn: F,
    epsilon: f64,
) -> Result<GradCheckResult, TensorError>
where
    F: FnMut() -> Tensor,
{
    let coords: Vec<(usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(p, t)| (0..t.numel()).map(move |i| (p, i)))
        .collect();
    check_coords(params, &mut loss_fn, epsilon, &coords)
}

/// Like [`grad_check`], but verifies only `samples` randomly chosen
/// parameter coordinates. Intended for whole-model checks where the full
/// sweep would be too slow.
pub fn grad_check_sampled<F>(
    params: &[Tensor],
    mut loss_fn: F,
    epsilon: f64,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<GradCheckResult, TensorError>
where
    F: FnMut() -> Tensor,
{
    let sizes: Vec<usize> = params.iter().map(Tensor::numel).collect();
    let total: usize = sizes.iter().sum();
    let mut coords = Vec::with_capacity(samples.min(total));
    if total > 0 {
        for _ in 0..samples {
            let mut flat = rng.gen_range(0..total);
            for (p, &size) in sizes.iter().enumerate() {
                if flat < size {
                    coords.push((p, flat));
                    break;
                }
                flat -= size;
            }
        }
    }
    coords.sort_unstable();
    coords.dedup();
    check_coords(params, &mut loss_fn, epsilon, &coords)
}

/// Checks exactly the given `(parameter, element)` coordinates. Callers
/// use this to restrict verification to coordinates whose gradients are
/// large enough for central differences to resolve in f64.
pub fn grad_check_at<F>(
    params: &[Tensor],
    mut loss_fn: F,
    epsilon: f64,
    coords: &[(usize, usize)],
) -> Result<GradCheckResult, TensorError>
where
    F: FnMut() -> Tensor,
{
    check_coords(params, &mut loss_fn, epsilon, coords)
}

fn check_coords<F>(
    params: &[Tensor],
    loss_fn: &mut F,
    epsilon: f64,
    coords: &[(usize, usize)],
) -> Result<GradCheckResult, TensorError>
where
    F: FnMut() -> Tensor,
{
    assert!(epsilon > 0.0, "epsilon must be positive");
    for p in params {
        p.zero_grad();
    }
    let loss = loss_fn();
    loss.backward()?;
    let grads: Vec<Option<Vec<f64>>> = params.iter().map(Tensor::grad).collect();

    let mut errors = Vec::with_capacity(coords.len());
    let mut max_err = 0.0f64;
    for &(p, i) in coords {
        let analytic = grads[p].as_ref().map_or(0.0, |g| g[i]);
        params[p].nudge(i, epsilon);
        let plus = loss_fn().item();
        params[p].nudge(i, -2.0 * epsilon);
        let minus = loss_fn().item();
        params[p].nudge(i, epsilon);
        let numeric = (plus - minus) / (2.0 * epsilon);
        let err = relative_error(analytic, numeric);
        max_err = max_err.max(err);
        errors.push(err);
    }
    for p in params {
        p.zero_grad();
    }
    Ok(GradCheckResult {
        max_relative_error: max_err,
        per_parameter_errors: errors,
    })
}
