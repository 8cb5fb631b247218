//! Central finite-difference check of [`backward`](super::backward).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{Batch, Model};
use super::pass::{backward, forward, weighted_cross_entropy, Mode};
use super::NnError;

pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Tensor and flat index where the maximum occurred.
    pub worst: (&'static str, usize),
    pub checked: usize,
}

fn loss(model: &Model, batch: &Batch, class_weight: f64) -> Result<f64, NnError> {
    // BatchStats draws nothing from the generator
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = forward(model, batch, Mode::BatchStats, &mut rng)?;
    Ok(weighted_cross_entropy(
        &out.probs,
        &batch.labels,
        class_weight,
    ))
}

/// Compares analytic gradients against `(L(x+h) - L(x-h)) / 2h` for every
/// parameter element, with relative error `|g - g'| / max(|g|, |g'|, 1e-8)`.
/// Noise and dropout are off; batch norm uses batch statistics.
pub fn gradient_check(
    model: &Model,
    batch: &Batch,
    class_weight: f64,
) -> Result<GradCheck, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = forward(model, batch, Mode::BatchStats, &mut rng)?;
    let analytic = backward(model, batch, &out.cache, class_weight)?;

    let mut probe = model.clone();
    let mut result = GradCheck {
        max_rel_error: 0.0,
        worst: ("", 0),
        checked: 0,
    };
    for (t, (name, grads)) in analytic.tensors().into_iter().enumerate() {
        for (i, &g) in grads.iter().enumerate() {
            let orig = probe.params.tensors()[t].1[i];
            probe.params.tensors_mut()[t].1[i] = orig + FD_STEP;
            let plus = loss(&probe, batch, class_weight)?;
            probe.params.tensors_mut()[t].1[i] = orig - FD_STEP;
            let minus = loss(&probe, batch, class_weight)?;
            probe.params.tensors_mut()[t].1[i] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let rel = (g - numeric).abs() / g.abs().max(numeric.abs()).max(1e-8);
            result.checked += 1;
            if rel > result.max_rel_error {
                result.max_rel_error = rel;
                result.worst = (name, i);
            }
        }
    }
    Ok(result)
}
