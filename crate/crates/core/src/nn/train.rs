use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::model::{Batch, Model};
use super::pass::{backward, forward, update_running_stats, weighted_cross_entropy, Mode};
use super::NnError;
use crate::lexer::TokenId;
use crate::metrics::{confusion, mcc};

/// Decision threshold on p(vulnerable) used for model selection.
pub const SELECTION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub tokens: &'a [TokenId],
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mcc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the highest validation MCC.
    pub best: Model,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// `negatives / positives`, or 1 when either class is missing.
pub fn balanced_class_weight(examples: &[Example]) -> f64 {
    let pos = examples.iter().filter(|e| e.label).count();
    let neg = examples.len() - pos;
    if pos == 0 || neg == 0 {
        1.0
    } else {
        neg as f64 / pos as f64
    }
}

/// Trains with Adam, keeping the parameters with the best validation MCC.
/// Training stops after `patience` consecutive epochs without improvement
/// or after `epochs` epochs.
pub fn train(
    mut model: Model,
    train: &[Example],
    val: &[Example],
) -> Result<TrainOutcome, NnError> {
    if train.is_empty() {
        return Err(NnError::EmptySplit("train"));
    }
    if val.is_empty() {
        return Err(NnError::EmptySplit("validation"));
    }
    let class_weight = model
        .hyper
        .class_weight
        .unwrap_or_else(|| balanced_class_weight(train));
    model.hyper.class_weight = Some(class_weight);
    let hyper = model.hyper.clone();

    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    rng.set_stream(1);
    let mut adam = AdamState::new(&model.params);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Model)> = None;
    let mut since_improvement = 0;

    for epoch in 1..=hyper.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(hyper.batch) {
            let seqs: Vec<&[TokenId]> = chunk.iter().map(|&i| train[i].tokens).collect();
            let labels: Vec<bool> = chunk.iter().map(|&i| train[i].label).collect();
            let batch = Batch::new(&seqs, &labels, hyper.max_len)?;
            let out = forward(&model, &batch, Mode::Train, &mut rng)?;
            loss_sum += weighted_cross_entropy(&out.probs, &batch.labels, class_weight)
                * chunk.len() as f64;
            let grads = backward(&model, &batch, &out.cache, class_weight)?;
            update_running_stats(&mut model, &out.cache);
            adam_step(&mut model.params, &grads, &mut adam, hyper.lr, hyper.k);
        }
        let val_mcc = validation_mcc(&model, val)?;
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_mcc,
        });

        if best.as_ref().is_none_or(|(score, _, _)| val_mcc > *score) {
            best = Some((val_mcc, epoch, model.clone()));
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }
        if since_improvement >= hyper.patience {
            break;
        }
    }
    let (_, best_epoch, best) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        best,
        best_epoch,
        history,
    })
}

fn validation_mcc(model: &Model, val: &[Example]) -> Result<f64, NnError> {
    let seqs: Vec<&[TokenId]> = val.iter().map(|e| e.tokens).collect();
    let labels: Vec<bool> = val.iter().map(|e| e.label).collect();
    let (probs, _) = infer(model, &seqs)?;
    let scores: Vec<f64> = probs.iter().map(|p| p[1]).collect();
    let c = confusion(&scores, &labels, SELECTION_THRESHOLD).expect("lengths match");
    Ok(mcc(&c))
}

/// Per-sequence class probabilities and pooled feature rows.
pub type Inference = (Vec<[f64; 2]>, Vec<Vec<f64>>);

/// Eval-mode class probabilities and pooled features, batched by
/// `hyper.batch`. Results do not depend on how sequences are batched.
pub fn infer(model: &Model, seqs: &[&[TokenId]]) -> Result<Inference, NnError> {
    let n = model.hyper.n;
    let mut probs = Vec::with_capacity(seqs.len());
    let mut features = Vec::with_capacity(seqs.len());
    // eval mode never draws from the generator
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for chunk in seqs.chunks(model.hyper.batch) {
        let batch = Batch::unlabeled(chunk, model.hyper.max_len)?;
        let out = forward(model, &batch, Mode::Eval, &mut rng)?;
        probs.extend(out.probs);
        features.extend(out.features.chunks(n).map(<[f64]>::to_vec));
    }
    Ok((probs, features))
}

/// Masked-max-pooled conv features (post-ReLU), one row per sequence.
pub fn extract_features(model: &Model, seqs: &[&[TokenId]]) -> Result<Vec<Vec<f64>>, NnError> {
    infer(model, seqs).map(|(_, f)| f)
}

/// History as JSON lines of `{epoch, train_loss, val_mcc}`.
pub fn history_jsonl(history: &[EpochRecord]) -> String {
    history
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect()
}
