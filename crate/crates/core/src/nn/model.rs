use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Hyperparams, NnError};
use crate::lexer::{TokenId, VOCAB_SIZE};

/// Embedding rows: PAD plus the vocabulary.
pub const EMBED_ROWS: usize = VOCAB_SIZE + 1;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Learnable tensors, all row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// `EMBED_ROWS x k`; row 0 (PAD) stays zero.
    pub embedding: Vec<f64>,
    /// `n x m x k`. There is no conv bias: batch norm's shift subsumes it.
    pub conv_weight: Vec<f64>,
    pub bn_gamma: Vec<f64>,
    pub bn_beta: Vec<f64>,
    /// `hidden[0] x n`.
    pub dense1_weight: Vec<f64>,
    pub dense1_bias: Vec<f64>,
    /// `hidden[1] x hidden[0]`.
    pub dense2_weight: Vec<f64>,
    pub dense2_bias: Vec<f64>,
    /// `2 x hidden[1]`.
    pub out_weight: Vec<f64>,
    pub out_bias: Vec<f64>,
}

pub const PARAM_NAMES: [&str; 10] = [
    "embedding",
    "conv_weight",
    "bn_gamma",
    "bn_beta",
    "dense1_weight",
    "dense1_bias",
    "dense2_weight",
    "dense2_bias",
    "out_weight",
    "out_bias",
];

impl Params {
    pub fn zeros(h: &Hyperparams) -> Self {
        let [h1, h2] = h.hidden;
        Self {
            embedding: vec![0.0; EMBED_ROWS * h.k],
            conv_weight: vec![0.0; h.n * h.m * h.k],
            bn_gamma: vec![0.0; h.n],
            bn_beta: vec![0.0; h.n],
            dense1_weight: vec![0.0; h1 * h.n],
            dense1_bias: vec![0.0; h1],
            dense2_weight: vec![0.0; h2 * h1],
            dense2_bias: vec![0.0; h2],
            out_weight: vec![0.0; 2 * h2],
            out_bias: vec![0.0; 2],
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
        z
    }

    /// Tensors in [`PARAM_NAMES`] order.
    pub fn tensors(&self) -> [(&'static str, &Vec<f64>); 10] {
        [
            (PARAM_NAMES[0], &self.embedding),
            (PARAM_NAMES[1], &self.conv_weight),
            (PARAM_NAMES[2], &self.bn_gamma),
            (PARAM_NAMES[3], &self.bn_beta),
            (PARAM_NAMES[4], &self.dense1_weight),
            (PARAM_NAMES[5], &self.dense1_bias),
            (PARAM_NAMES[6], &self.dense2_weight),
            (PARAM_NAMES[7], &self.dense2_bias),
            (PARAM_NAMES[8], &self.out_weight),
            (PARAM_NAMES[9], &self.out_bias),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Vec<f64>); 10] {
        [
            (PARAM_NAMES[0], &mut self.embedding),
            (PARAM_NAMES[1], &mut self.conv_weight),
            (PARAM_NAMES[2], &mut self.bn_gamma),
            (PARAM_NAMES[3], &mut self.bn_beta),
            (PARAM_NAMES[4], &mut self.dense1_weight),
            (PARAM_NAMES[5], &mut self.dense1_bias),
            (PARAM_NAMES[6], &mut self.dense2_weight),
            (PARAM_NAMES[7], &mut self.dense2_bias),
            (PARAM_NAMES[8], &mut self.out_weight),
            (PARAM_NAMES[9], &mut self.out_bias),
        ]
    }

    /// Projects embeddings back into `[-1, 1]` and re-zeroes the PAD row.
    pub fn constrain_embedding(&mut self, k: usize) {
        for v in &mut self.embedding {
            *v = v.clamp(-1.0, 1.0);
        }
        self.embedding[..k].iter_mut().for_each(|v| *v = 0.0);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub hyper: Hyperparams,
    pub params: Params,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

fn fill_normal(rng: &mut ChaCha8Rng, out: &mut [f64], fan_in: usize) {
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite std");
    for v in out {
        *v = normal.sample(rng);
    }
}

impl Model {
    /// Fresh model: He-normal conv/dense weights, embeddings uniform in
    /// `[-0.05, 0.05]`, zero biases, unit batch-norm scale.
    pub fn new(hyper: Hyperparams) -> Result<Self, NnError> {
        hyper.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        let mut p = Params::zeros(&hyper);
        let k = hyper.k;
        for v in &mut p.embedding[k..] {
            *v = rng.random_range(-0.05..=0.05);
        }
        fill_normal(&mut rng, &mut p.conv_weight, hyper.m * k);
        fill_normal(&mut rng, &mut p.dense1_weight, hyper.n);
        fill_normal(&mut rng, &mut p.dense2_weight, hyper.hidden[0]);
        fill_normal(&mut rng, &mut p.out_weight, hyper.hidden[1]);
        p.bn_gamma.iter_mut().for_each(|g| *g = 1.0);
        let n = hyper.n;
        Ok(Self {
            hyper,
            params: p,
            running_mean: vec![0.0; n],
            running_var: vec![1.0; n],
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.hyper.n
    }
}

/// A padded batch of token sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// `len x max_len` token ids; 0 (PAD) after each sequence's length.
    pub tokens: Vec<u8>,
    pub lengths: Vec<usize>,
    /// 1 = vulnerable.
    pub labels: Vec<u8>,
    pub max_len: usize,
}

/// Shortest sequence a batch accepts.
pub const MIN_SEQ_LEN: usize = 10;

impl Batch {
    pub fn new(seqs: &[&[TokenId]], labels: &[bool], max_len: usize) -> Result<Self, NnError> {
        if seqs.len() != labels.len() {
            return Err(NnError::Shape(format!(
                "{} sequences but {} labels",
                seqs.len(),
                labels.len()
            )));
        }
        let mut tokens = vec![0u8; seqs.len() * max_len];
        let mut lengths = Vec::with_capacity(seqs.len());
        for (i, s) in seqs.iter().enumerate() {
            if s.len() > max_len {
                return Err(NnError::Shape(format!(
                    "sequence {i} has length {} > {max_len}",
                    s.len()
                )));
            }
            for (slot, t) in tokens[i * max_len..].iter_mut().zip(s.iter()) {
                *slot = t.get();
            }
            lengths.push(s.len());
        }
        let batch = Self {
            tokens,
            lengths,
            labels: labels.iter().map(|&y| u8::from(y)).collect(),
            max_len,
        };
        batch.validate()?;
        Ok(batch)
    }

    pub fn unlabeled(seqs: &[&[TokenId]], max_len: usize) -> Result<Self, NnError> {
        Self::new(seqs, &vec![false; seqs.len()], max_len)
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.tokens[i * self.max_len..i * self.max_len + self.lengths[i]]
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let b = self.lengths.len();
        let err = |m: String| Err(NnError::Shape(m));
        if b == 0 {
            return err("empty batch".into());
        }
        if self.tokens.len() != b * self.max_len || self.labels.len() != b {
            return err(format!(
                "token matrix {} / labels {} do not match {b} x {}",
                self.tokens.len(),
                self.labels.len(),
                self.max_len
            ));
        }
        for (i, &len) in self.lengths.iter().enumerate() {
            if !(MIN_SEQ_LEN..=self.max_len).contains(&len) {
                return err(format!(
                    "sequence {i} has length {len} outside [{MIN_SEQ_LEN}, {}]",
                    self.max_len
                ));
            }
            let row = &self.tokens[i * self.max_len..(i + 1) * self.max_len];
            if row[..len]
                .iter()
                .any(|&t| t == 0 || t as usize > VOCAB_SIZE)
            {
                return err(format!("sequence {i} has PAD or out-of-vocabulary ids"));
            }
            if row[len..].iter().any(|&t| t != 0) {
                return err(format!("sequence {i} has tokens after its length"));
            }
        }
        if self.labels.iter().any(|&y| y > 1) {
            return err("labels must be 0 or 1".into());
        }
        Ok(())
    }
}
