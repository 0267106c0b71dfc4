//! Finite-difference verification of reverse-mode gradients.

use super::tape::{backward, Tape};
use super::tensor::Tensor;
use crate::error::Result;

/// Compares tape gradients of `f` against central finite differences.
///
/// `f` maps a parameter list to a scalar loss tensor. It is called once with
/// tape-watched parameters (for the reverse-mode gradient) and then twice per
/// parameter entry with plain tensors perturbed by `±eps`. Returns the max
/// over entries of `|g_ad - g_fd| / max(1e-12, |g_ad| + |g_fd|)`.
pub fn grad_check<F>(f: F, params: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    assert!(eps > 0.0, "eps must be positive");

    let tape = Tape::new();
    let watched: Vec<Tensor> = params.iter().map(|p| tape.watch(p)).collect();
    let loss = f(&watched)?;
    let grads = backward(&loss)?;

    let mut max_err: f64 = 0.0;
    for (pi, p) in params.iter().enumerate() {
        let g_ad = grads.get(&watched[pi])?;
        for k in 0..p.numel() {
            let g_fd = central_difference(&f, params, pi, k, eps)?;
            let ad = g_ad.data()[k];
            let err = (ad - g_fd).abs() / (ad.abs() + g_fd.abs()).max(1e-12);
            if err > max_err || err.is_nan() {
                max_err = err;
            }
        }
    }
    Ok(max_err)
}

fn central_difference<F>(f: &F, params: &[Tensor], pi: usize, k: usize, eps: f64) -> Result<f64>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    let eval = |delta: f64| -> Result<f64> {
        let mut perturbed: Vec<Tensor> = params.to_vec();
        let mut data = params[pi].to_vec();
        data[k] += delta;
        perturbed[pi] = Tensor::new(params[pi].shape().to_vec(), data)?;
        Ok(f(&perturbed)?.item())
    };
    Ok((eval(eps)? - eval(-eps)?) / (2.0 * eps))
}
