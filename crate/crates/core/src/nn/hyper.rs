use serde::{Deserialize, Serialize};

use super::NnError;

/// Architecture and training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Embedding width.
    pub k: usize,
    /// Number of convolution filters (= feature dimension).
    pub n: usize,
    /// Filter width in tokens; odd.
    pub m: usize,
    pub hidden: [usize; 2],
    pub dropout: f64,
    /// Variance of the Gaussian noise added to embeddings while training.
    pub noise_variance: f64,
    pub batch: usize,
    pub lr: f64,
    pub max_len: usize,
    /// Loss multiplier for vulnerable examples; `None` means
    /// negatives/positives in the training split.
    pub class_weight: Option<f64>,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            k: 13,
            n: 512,
            m: 9,
            hidden: [64, 16],
            dropout: 0.5,
            noise_variance: 0.01,
            batch: 128,
            lr: 5e-4,
            max_len: 500,
            class_weight: None,
            epochs: 30,
            patience: 5,
            seed: 0,
        }
    }
}

/// Keys accepted by [`Hyperparams::set`].
pub const HYPER_KEYS: &[&str] = &[
    "k",
    "n",
    "m",
    "hidden1",
    "hidden2",
    "dropout",
    "noise_variance",
    "batch",
    "lr",
    "max_len",
    "class_weight",
    "epochs",
    "patience",
    "seed",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, NnError> {
    value
        .trim()
        .parse()
        .map_err(|_| NnError::InvalidHyperparam(format!("{key}: cannot parse {value:?}")))
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |msg: &str| Err(NnError::InvalidHyperparam(msg.to_string()));
        if self.k == 0 || self.n == 0 || self.m == 0 || self.hidden.contains(&0) {
            return bad("layer sizes must be positive");
        }
        if self.m.is_multiple_of(2) {
            return bad("filter width m must be odd");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.noise_variance.is_nan() || self.noise_variance < 0.0 {
            return bad("noise_variance must be non-negative");
        }
        if self.batch == 0 || self.max_len == 0 || self.epochs == 0 {
            return bad("batch, max_len and epochs must be positive");
        }
        if self.lr.is_nan() || self.lr <= 0.0 {
            return bad("lr must be positive");
        }
        if let Some(w) = self.class_weight {
            if w.is_nan() || w <= 0.0 {
                return bad("class_weight must be positive");
            }
        }
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), NnError> {
        match key {
            "k" => self.k = parse(key, value)?,
            "n" => self.n = parse(key, value)?,
            "m" => self.m = parse(key, value)?,
            "hidden1" => self.hidden[0] = parse(key, value)?,
            "hidden2" => self.hidden[1] = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "noise_variance" => self.noise_variance = parse(key, value)?,
            "batch" => self.batch = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "max_len" => self.max_len = parse(key, value)?,
            "class_weight" => {
                self.class_weight = match value.trim() {
                    "auto" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "epochs" => self.epochs = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            _ => {
                return Err(NnError::UnknownKey {
                    key: key.to_string(),
                    valid: HYPER_KEYS.join(", "),
                })
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let h = Hyperparams::default();
        h.validate().unwrap();
        assert_eq!(
            (h.k, h.n, h.m, h.hidden, h.batch, h.max_len),
            (13, 512, 9, [64, 16], 128, 500)
        );
        assert_eq!(h.lr, 5e-4);
        assert_eq!(h.dropout, 0.5);
        assert_eq!(h.noise_variance, 0.01);
    }

    #[test]
    fn overrides() {
        let mut h = Hyperparams::default();
        h.set("n", "64").unwrap();
        h.set("class_weight", "3.5").unwrap();
        h.set("hidden2", "8").unwrap();
        assert_eq!((h.n, h.class_weight, h.hidden), (64, Some(3.5), [64, 8]));
        h.set("class_weight", "auto").unwrap();
        assert_eq!(h.class_weight, None);
        match h.set("filters", "3") {
            Err(NnError::UnknownKey { valid, .. }) => assert!(valid.contains("noise_variance")),
            other => panic!("{other:?}"),
        }
        assert!(h.set("k", "abc").is_err());
    }

    #[test]
    fn rejects_bad_values() {
        let mut h = Hyperparams {
            m: 4,
            ..Default::default()
        };
        assert!(h.validate().is_err());
        h.m = 3;
        h.dropout = 1.0;
        assert!(h.validate().is_err());
    }
}
