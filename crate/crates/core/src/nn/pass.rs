//! Forward and backward passes of the fixed architecture:
//!
//! embed -> (+noise) -> same-padded conv -> batch norm -> ReLU ->
//! masked max-pool -> (dropout) -> dense+ReLU -> dense+ReLU -> softmax(2)
//!
//! Batch-norm statistics and the max-pool only see each sequence's real
//! positions, so the amount of trailing PAD never influences anything.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::model::{Batch, Model, Params, BN_EPS, BN_MOMENTUM};
use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, embedding noise and dropout.
    Train,
    /// Running statistics, no stochastic layers. Pure.
    Eval,
    /// Batch statistics without noise or dropout; used for gradient checks.
    BatchStats,
}

impl Mode {
    fn uses_batch_stats(self) -> bool {
        self != Mode::Eval
    }

    fn stochastic(self) -> bool {
        self == Mode::Train
    }
}

/// Intermediates kept for [`backward`].
#[derive(Debug, Clone)]
pub struct Cache {
    mode: Mode,
    /// Row offset of each sequence in the flattened `positions x n` buffers.
    offsets: Vec<usize>,
    /// Embedded input per sequence, zero-padded by `m / 2` rows on each side.
    inputs: Vec<Vec<f64>>,
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    pub batch_mean: Vec<f64>,
    /// Biased (population) variance over the real positions.
    pub batch_var: Vec<f64>,
    /// Row of the max pre-activation per (sequence, channel).
    argmax: Vec<usize>,
    /// Pre-activation maximum per (sequence, channel).
    peak: Vec<f64>,
    drop_scale: Vec<f64>,
    h0: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    probs: Vec<[f64; 2]>,
}

impl Cache {
    pub fn positions(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Normalized conv activations (before the batch-norm affine step).
    pub fn normalized(&self) -> &[f64] {
        &self.xhat
    }
}

#[derive(Debug, Clone)]
pub struct Forward {
    pub probs: Vec<[f64; 2]>,
    /// `B x n` masked-max-pooled conv features (post-ReLU, pre-dropout).
    pub features: Vec<f64>,
    pub cache: Cache,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out[j] = relu?(bias[j] + W[j] . x)` for a row-major `W`.
fn dense(w: &[f64], bias: &[f64], x: &[f64], relu: bool) -> Vec<f64> {
    let cols = x.len();
    bias.iter()
        .enumerate()
        .map(|(j, b)| {
            let v = b + dot(&w[j * cols..(j + 1) * cols], x);
            if relu {
                v.max(0.0)
            } else {
                v
            }
        })
        .collect()
}

pub fn softmax2(logits: [f64; 2]) -> [f64; 2] {
    let top = logits[0].max(logits[1]);
    let e0 = (logits[0] - top).exp();
    let e1 = (logits[1] - top).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}

pub fn forward<R: Rng + ?Sized>(
    model: &Model,
    batch: &Batch,
    mode: Mode,
    rng: &mut R,
) -> Result<Forward, NnError> {
    batch.validate()?;
    let h = &model.hyper;
    let p = &model.params;
    let (k, n, m) = (h.k, h.n, h.m);
    let [h1_dim, h2_dim] = h.hidden;
    let half = m / 2;
    let width = m * k;
    let b = batch.len();

    let mut offsets = Vec::with_capacity(b + 1);
    offsets.push(0);
    for &len in &batch.lengths {
        offsets.push(offsets.last().unwrap() + len);
    }
    let positions = offsets[b];

    let noise = if mode.stochastic() && h.noise_variance > 0.0 {
        Some(Normal::new(0.0, h.noise_variance.sqrt()).expect("finite variance"))
    } else {
        None
    };

    // embedding + convolution
    let mut inputs = Vec::with_capacity(b);
    let mut act = vec![0.0; positions * n];
    for i in 0..b {
        let row = batch.row(i);
        let len = row.len();
        let mut input = vec![0.0; (len + m - 1) * k];
        for (t, &tok) in row.iter().enumerate() {
            let src = &p.embedding[tok as usize * k..(tok as usize + 1) * k];
            let dst = &mut input[(t + half) * k..(t + half + 1) * k];
            dst.copy_from_slice(src);
            if let Some(dist) = &noise {
                for v in dst.iter_mut() {
                    *v += dist.sample(rng);
                }
            }
        }
        for t in 0..len {
            let window = &input[t * k..t * k + width];
            let out = &mut act[(offsets[i] + t) * n..(offsets[i] + t + 1) * n];
            for (c, o) in out.iter_mut().enumerate() {
                *o = dot(&p.conv_weight[c * width..(c + 1) * width], window);
            }
        }
        inputs.push(input);
    }

    // batch norm
    let (mean, var) = if mode.uses_batch_stats() {
        let mut mean = vec![0.0; n];
        for r in 0..positions {
            for (mu, z) in mean.iter_mut().zip(&act[r * n..(r + 1) * n]) {
                *mu += z;
            }
        }
        mean.iter_mut().for_each(|mu| *mu /= positions as f64);
        let mut var = vec![0.0; n];
        for r in 0..positions {
            for c in 0..n {
                let d = act[r * n + c] - mean[c];
                var[c] += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v /= positions as f64);
        (mean, var)
    } else {
        (model.running_mean.clone(), model.running_var.clone())
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    for r in 0..positions {
        for c in 0..n {
            let z = &mut act[r * n + c];
            *z = (*z - mean[c]) * inv_std[c];
        }
    }
    let xhat = act;

    // affine + ReLU + masked max-pool; relu(max(y)) == max(relu(y))
    let mut argmax = vec![0usize; b * n];
    let mut peak = vec![f64::NEG_INFINITY; b * n];
    for i in 0..b {
        for r in offsets[i]..offsets[i + 1] {
            for c in 0..n {
                let y = p.bn_gamma[c] * xhat[r * n + c] + p.bn_beta[c];
                if y > peak[i * n + c] {
                    peak[i * n + c] = y;
                    argmax[i * n + c] = r;
                }
            }
        }
    }
    let features: Vec<f64> = peak.iter().map(|&y| y.max(0.0)).collect();

    let mut drop_scale = vec![1.0; b * n];
    if mode.stochastic() && h.dropout > 0.0 {
        let keep = 1.0 - h.dropout;
        for s in &mut drop_scale {
            *s = if rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            };
        }
    }
    let h0: Vec<f64> = features
        .iter()
        .zip(&drop_scale)
        .map(|(f, s)| f * s)
        .collect();

    let mut h1 = Vec::with_capacity(b * h1_dim);
    let mut h2 = Vec::with_capacity(b * h2_dim);
    let mut probs = Vec::with_capacity(b);
    for i in 0..b {
        let a1 = dense(
            &p.dense1_weight,
            &p.dense1_bias,
            &h0[i * n..(i + 1) * n],
            true,
        );
        let a2 = dense(&p.dense2_weight, &p.dense2_bias, &a1, true);
        let logits = dense(&p.out_weight, &p.out_bias, &a2, false);
        probs.push(softmax2([logits[0], logits[1]]));
        h1.extend(a1);
        h2.extend(a2);
    }

    Ok(Forward {
        probs: probs.clone(),
        features,
        cache: Cache {
            mode,
            offsets,
            inputs,
            xhat,
            inv_std,
            batch_mean: mean,
            batch_var: var,
            argmax,
            peak,
            drop_scale,
            h0,
            h1,
            h2,
            probs,
        },
    })
}

/// Loss multiplier for one example.
fn example_weight(label: u8, class_weight: f64) -> f64 {
    if label == 1 {
        class_weight
    } else {
        1.0
    }
}

/// Mean over the batch of `-c_i * ln p(y_i)` with `c_i = class_weight` for
/// vulnerable examples and 1 otherwise. The log argument is clamped at 1e-12.
pub fn weighted_cross_entropy(probs: &[[f64; 2]], labels: &[u8], class_weight: f64) -> f64 {
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(p, &y)| -example_weight(y, class_weight) * p[y as usize].max(1e-12).ln())
        .sum();
    total / probs.len() as f64
}

/// Gradient of [`weighted_cross_entropy`] with respect to the output logits.
pub fn logit_gradient(probs: &[[f64; 2]], labels: &[u8], class_weight: f64) -> Vec<[f64; 2]> {
    let scale = 1.0 / probs.len() as f64;
    probs
        .iter()
        .zip(labels)
        .map(|(p, &y)| {
            let c = example_weight(y, class_weight) * scale;
            let mut g = [p[0] * c, p[1] * c];
            g[y as usize] -= c;
            g
        })
        .collect()
}

/// Exact gradients of the weighted loss for every learnable tensor. The
/// cache must come from a batch-statistics forward pass on `batch`.
pub fn backward(
    model: &Model,
    batch: &Batch,
    cache: &Cache,
    class_weight: f64,
) -> Result<Params, NnError> {
    if !cache.mode.uses_batch_stats() {
        return Err(NnError::EvalCache);
    }
    let h = &model.hyper;
    let p = &model.params;
    let (k, n, m) = (h.k, h.n, h.m);
    let [h1_dim, h2_dim] = h.hidden;
    let half = m / 2;
    let width = m * k;
    let b = batch.len();
    let positions = cache.positions();
    let mut g = p.zeros_like();

    // dense stack, one example at a time
    let dlogits = logit_gradient(&cache.probs, &batch.labels, class_weight);
    let mut d_features = vec![0.0; b * n];
    for i in 0..b {
        let a2 = &cache.h2[i * h2_dim..(i + 1) * h2_dim];
        let a1 = &cache.h1[i * h1_dim..(i + 1) * h1_dim];
        let x0 = &cache.h0[i * n..(i + 1) * n];

        let mut d2 = vec![0.0; h2_dim];
        for (o, &go) in dlogits[i].iter().enumerate() {
            g.out_bias[o] += go;
            for j in 0..h2_dim {
                g.out_weight[o * h2_dim + j] += go * a2[j];
                d2[j] += p.out_weight[o * h2_dim + j] * go;
            }
        }
        let mut d1 = vec![0.0; h1_dim];
        for j in 0..h2_dim {
            if a2[j] <= 0.0 {
                continue;
            }
            let gj = d2[j];
            g.dense2_bias[j] += gj;
            for q in 0..h1_dim {
                g.dense2_weight[j * h1_dim + q] += gj * a1[q];
                d1[q] += p.dense2_weight[j * h1_dim + q] * gj;
            }
        }
        let d0 = &mut d_features[i * n..(i + 1) * n];
        for q in 0..h1_dim {
            if a1[q] <= 0.0 {
                continue;
            }
            let gq = d1[q];
            g.dense1_bias[q] += gq;
            for c in 0..n {
                g.dense1_weight[q * n + c] += gq * x0[c];
                d0[c] += p.dense1_weight[q * n + c] * gq;
            }
        }
        // dropout
        for (d, s) in d0.iter_mut().zip(&cache.drop_scale[i * n..(i + 1) * n]) {
            *d *= s;
        }
    }

    // pool + ReLU route the gradient to a single position per channel
    let mut d_y = vec![0.0; positions * n];
    for i in 0..b {
        for c in 0..n {
            if cache.peak[i * n + c] > 0.0 {
                d_y[cache.argmax[i * n + c] * n + c] += d_features[i * n + c];
            }
        }
    }

    // batch norm
    let mut sum_dy = vec![0.0; n];
    let mut sum_dy_xhat = vec![0.0; n];
    for r in 0..positions {
        for c in 0..n {
            let dy = d_y[r * n + c];
            sum_dy[c] += dy;
            sum_dy_xhat[c] += dy * cache.xhat[r * n + c];
        }
    }
    g.bn_beta.copy_from_slice(&sum_dy);
    g.bn_gamma.copy_from_slice(&sum_dy_xhat);
    let count = positions as f64;
    let mut d_z = d_y;
    for r in 0..positions {
        for c in 0..n {
            let gamma = p.bn_gamma[c];
            let dxhat = d_z[r * n + c] * gamma;
            d_z[r * n + c] = cache.inv_std[c] / count
                * (count * dxhat
                    - gamma * sum_dy[c]
                    - cache.xhat[r * n + c] * gamma * sum_dy_xhat[c]);
        }
    }

    // convolution + embedding
    for i in 0..b {
        let row = batch.row(i);
        let len = row.len();
        let input = &cache.inputs[i];
        let mut d_input = vec![0.0; input.len()];
        for t in 0..len {
            let r = cache.offsets[i] + t;
            let window = &input[t * k..t * k + width];
            let d_window = &mut d_input[t * k..t * k + width];
            for c in 0..n {
                let dz = d_z[r * n + c];
                if dz == 0.0 {
                    continue;
                }
                let w = &p.conv_weight[c * width..(c + 1) * width];
                let gw = &mut g.conv_weight[c * width..(c + 1) * width];
                for j in 0..width {
                    gw[j] += dz * window[j];
                    d_window[j] += dz * w[j];
                }
            }
        }
        for (t, &tok) in row.iter().enumerate() {
            let src = &d_input[(t + half) * k..(t + half + 1) * k];
            let dst = &mut g.embedding[tok as usize * k..(tok as usize + 1) * k];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }
    // PAD never appears inside a sequence; keep its row exactly zero anyway
    g.embedding[..k].iter_mut().for_each(|v| *v = 0.0);
    Ok(g)
}

/// Folds a batch-statistics pass into the running estimates
/// (momentum 0.1, unbiased variance).
pub fn update_running_stats(model: &mut Model, cache: &Cache) {
    let count = cache.positions() as f64;
    let unbias = if count > 1.0 {
        count / (count - 1.0)
    } else {
        1.0
    };
    for c in 0..model.hyper.n {
        model.running_mean[c] =
            (1.0 - BN_MOMENTUM) * model.running_mean[c] + BN_MOMENTUM * cache.batch_mean[c];
        model.running_var[c] =
            (1.0 - BN_MOMENTUM) * model.running_var[c] + BN_MOMENTUM * cache.batch_var[c] * unbias;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Hyperparams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> Model {
        Model::new(Hyperparams {
            k: 3,
            n: 4,
            m: 3,
            hidden: [5, 3],
            seed: 1,
            ..Default::default()
        })
        .unwrap()
    }

    fn batch(max_len: usize) -> Batch {
        let t = |v: &[u8]| {
            v.iter()
                .map(|&x| crate::lexer::TokenId::new(x).unwrap())
                .collect::<Vec<_>>()
        };
        let a = t(&[5, 9, 12, 1, 1, 40, 66, 2, 3, 150, 7, 8]);
        let b = t(&[100, 101, 102, 103, 104, 105, 106, 107, 108, 109]);
        Batch::new(&[&a, &b], &[true, false], max_len).unwrap()
    }

    #[test]
    fn cross_entropy_values() {
        assert_eq!(
            weighted_cross_entropy(&[[0.0, 1.0], [1.0, 0.0]], &[1, 0], 3.0),
            0.0
        );
        assert!((weighted_cross_entropy(&[[0.5, 0.5]], &[0], 7.0) - 2f64.ln()).abs() < 1e-15);
        assert!(
            (weighted_cross_entropy(&[[0.5, 0.5]], &[1], 10.0) - 10.0 * 2f64.ln()).abs() < 1e-14
        );
        // clamped instead of infinite
        assert!(
            (weighted_cross_entropy(&[[1.0, 0.0]], &[1], 1.0) - 1e-12f64.ln().abs()).abs() < 1e-9
        );
    }

    #[test]
    fn logit_gradient_closed_form() {
        let g = logit_gradient(&[[0.3, 0.7], [0.9, 0.1]], &[0, 1], 4.0);
        let expected = [
            [(0.3 - 1.0) / 2.0, 0.7 / 2.0],
            [0.9 * 4.0 / 2.0, (0.1 - 1.0) * 4.0 / 2.0],
        ];
        for (row, want) in g.iter().zip(expected) {
            for (a, b) in row.iter().zip(want) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn eval_is_pure_and_normalized() {
        let model = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = forward(&model, &batch(12), Mode::Eval, &mut rng).unwrap();
        let b = forward(&model, &batch(12), Mode::Eval, &mut rng).unwrap();
        assert_eq!(a.probs, b.probs);
        assert_eq!(a.features, b.features);
        for p in &a.probs {
            assert!((p[0] + p[1] - 1.0).abs() <= 1e-9);
        }
        assert!(a.features.iter().all(|&f| f >= 0.0));
    }

    #[test]
    fn padding_does_not_matter() {
        let model = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let short = forward(&model, &batch(12 + 3), Mode::Eval, &mut rng).unwrap();
        let long = forward(&model, &batch(500), Mode::Eval, &mut rng).unwrap();
        assert_eq!(short.features, long.features);
        assert_eq!(short.probs, long.probs);
        let short = forward(&model, &batch(12), Mode::BatchStats, &mut rng).unwrap();
        let long = forward(&model, &batch(500), Mode::BatchStats, &mut rng).unwrap();
        assert_eq!(short.features, long.features);
    }

    #[test]
    fn backward_rejects_eval_cache() {
        let model = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = forward(&model, &batch(12), Mode::Eval, &mut rng).unwrap();
        assert!(matches!(
            backward(&model, &batch(12), &out.cache, 1.0),
            Err(NnError::EvalCache)
        ));
    }

    #[test]
    fn shift_gradient_is_sum_of_upstream() {
        // beta is the only per-channel shift; its gradient is the upstream
        // gradient summed over positions, which is nonzero only at the pooled maxima
        let model = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let bt = batch(12);
        let out = forward(&model, &bt, Mode::BatchStats, &mut rng).unwrap();
        let g = backward(&model, &bt, &out.cache, 2.0).unwrap();
        // rebuild d(loss)/d(feature) from the dense layers by finite differences
        // on beta: shifting beta[c] shifts every pre-activation of channel c
        for c in 0..4 {
            let mut shifted = model.clone();
            let h = 1e-6;
            shifted.params.bn_beta[c] += h;
            let up = forward(&shifted, &bt, Mode::BatchStats, &mut rng).unwrap();
            shifted.params.bn_beta[c] -= 2.0 * h;
            let down = forward(&shifted, &bt, Mode::BatchStats, &mut rng).unwrap();
            let fd = (weighted_cross_entropy(&up.probs, &bt.labels, 2.0)
                - weighted_cross_entropy(&down.probs, &bt.labels, 2.0))
                / (2.0 * h);
            assert!((fd - g.bn_beta[c]).abs() < 1e-7, "{fd} vs {}", g.bn_beta[c]);
        }
    }

    #[test]
    fn pad_row_gradient_is_zero() {
        let model = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bt = batch(20);
        let out = forward(&model, &bt, Mode::Train, &mut rng).unwrap();
        let g = backward(&model, &bt, &out.cache, 2.0).unwrap();
        assert!(g.embedding[..3].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn train_mode_gradient_with_replayed_masks() {
        // the same seed replays identical noise and dropout draws, so the
        // stochastic forward pass is a fixed function of the parameters
        let model = tiny();
        let bt = batch(12);
        let loss = |m: &Model| {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            let out = forward(m, &bt, Mode::Train, &mut rng).unwrap();
            weighted_cross_entropy(&out.probs, &bt.labels, 2.0)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let out = forward(&model, &bt, Mode::Train, &mut rng).unwrap();
        assert!(out.cache.drop_scale.contains(&0.0));
        let g = backward(&model, &bt, &out.cache, 2.0).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for name in ["embedding", "conv_weight", "dense1_weight", "bn_gamma"] {
            let len = model
                .params
                .tensors()
                .iter()
                .find(|(n, _)| *n == name)
                .unwrap()
                .1
                .len();
            let analytic = g
                .tensors()
                .into_iter()
                .find(|(n, _)| *n == name)
                .unwrap()
                .1
                .clone();
            for j in (0..len).step_by(7) {
                let bump = |delta: f64| {
                    let mut m = model.clone();
                    for (n, t) in m.params.tensors_mut() {
                        if n == name {
                            t[j] += delta;
                        }
                    }
                    loss(&m)
                };
                let fd = (bump(h) - bump(-h)) / (2.0 * h);
                let a = analytic[j];
                worst = worst.max((fd - a).abs() / fd.abs().max(a.abs()).max(1e-8));
            }
        }
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn batch_norm_normalizes_train_activations() {
        let model = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = forward(&model, &batch(12), Mode::Train, &mut rng).unwrap();
        let n = 4;
        let rows = out.cache.positions();
        for c in 0..n {
            let col: Vec<f64> = (0..rows)
                .map(|r| out.cache.normalized()[r * n + c])
                .collect();
            let mean = col.iter().sum::<f64>() / rows as f64;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / rows as f64;
            let expected = out.cache.batch_var[c] / (out.cache.batch_var[c] + BN_EPS);
            assert!(mean.abs() < 1e-9);
            assert!((var - expected).abs() < 1e-9, "{var} vs {expected}");
        }
    }

    #[test]
    fn malformed_batches() {
        let model = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut bt = batch(12);
        bt.tokens[3] = 0;
        assert!(matches!(
            forward(&model, &bt, Mode::Eval, &mut rng),
            Err(NnError::Shape(_))
        ));
        let mut bt = batch(14);
        bt.tokens[13] = 4;
        assert!(matches!(
            forward(&model, &bt, Mode::Eval, &mut rng),
            Err(NnError::Shape(_))
        ));
        let t = vec![crate::lexer::TokenId::new(1).unwrap(); 9];
        assert!(Batch::unlabeled(&[&t], 20).is_err());
        assert!(Batch::unlabeled(&[&t], 5).is_err());
    }
}
