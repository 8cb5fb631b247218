//! Random forests and extremely randomized trees over dense feature vectors.

mod split;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use split::{best_split, gini_impurity, impurity_decrease, Split, SplitParams, MIN_DECREASE};

pub const FOREST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ForestError {
    #[error("class counts are all zero")]
    AllZeroCounts,
    #[error("training data contains a single class")]
    SingleClassTraining,
    #[error("need at least 2 training samples, got {0}")]
    TooFewSamples(usize),
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid forest config: {0}")]
    InvalidConfig(String),
    #[error("unknown key {key:?}; valid keys: {valid}")]
    UnknownKey { key: String, valid: String },
    #[error("forest file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForestMode {
    RandomForest,
    ExtraTrees,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub trees: usize,
    /// Features drawn per node; `None` means `floor(sqrt(n))`.
    pub mtry: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub bootstrap: bool,
    pub mode: ForestMode,
    /// Per-class weights; `None` means `[1, negatives / positives]`.
    pub class_weights: Option<[f64; 2]>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            trees: 128,
            mtry: None,
            max_depth: None,
            min_leaf: 1,
            bootstrap: true,
            mode: ForestMode::RandomForest,
            class_weights: None,
            seed: 0,
        }
    }
}

pub const FOREST_KEYS: &[&str] = &[
    "trees",
    "mtry",
    "max_depth",
    "min_leaf",
    "bootstrap",
    "mode",
    "class_weight",
    "seed",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ForestError> {
    value
        .trim()
        .parse()
        .map_err(|_| ForestError::InvalidConfig(format!("{key}: cannot parse {value:?}")))
}

impl ForestConfig {
    /// Applies one `key=value` override. `class_weight` sets the positive
    /// class weight; `auto`/`none` restore the defaults.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ForestError> {
        let v = value.trim();
        match key {
            "trees" => self.trees = parse(key, v)?,
            "mtry" => {
                self.mtry = if v == "auto" {
                    None
                } else {
                    Some(parse(key, v)?)
                }
            }
            "max_depth" => {
                self.max_depth = if v == "none" {
                    None
                } else {
                    Some(parse(key, v)?)
                }
            }
            "min_leaf" => self.min_leaf = parse(key, v)?,
            "bootstrap" => self.bootstrap = parse(key, v)?,
            "mode" => {
                self.mode = match v {
                    "random-forest" => ForestMode::RandomForest,
                    "extra-trees" => ForestMode::ExtraTrees,
                    _ => return Err(ForestError::InvalidConfig(format!("mode: {v:?}"))),
                }
            }
            "class_weight" => {
                self.class_weights = if v == "auto" {
                    None
                } else {
                    Some([1.0, parse(key, v)?])
                }
            }
            "seed" => self.seed = parse(key, v)?,
            _ => {
                return Err(ForestError::UnknownKey {
                    key: key.to_string(),
                    valid: FOREST_KEYS.join(", "),
                })
            }
        }
        Ok(())
    }

    /// Fills in data-dependent defaults and validates.
    fn resolve(&self, n_features: usize, labels: &[bool]) -> Result<ForestConfig, ForestError> {
        let mut cfg = self.clone();
        let mtry = cfg
            .mtry
            .unwrap_or(((n_features as f64).sqrt().floor() as usize).max(1));
        if cfg.trees == 0 {
            return Err(ForestError::InvalidConfig("trees must be >= 1".into()));
        }
        if mtry == 0 || mtry > n_features {
            return Err(ForestError::InvalidConfig(format!(
                "mtry {mtry} outside [1, {n_features}]"
            )));
        }
        if cfg.min_leaf == 0 {
            return Err(ForestError::InvalidConfig("min_leaf must be >= 1".into()));
        }
        cfg.mtry = Some(mtry);
        let cw = cfg.class_weights.unwrap_or_else(|| {
            let pos = labels.iter().filter(|&&y| y).count();
            [1.0, (labels.len() - pos) as f64 / pos as f64]
        });
        if !cw.iter().all(|w| *w > 0.0 && w.is_finite()) {
            return Err(ForestError::InvalidConfig(
                "class weights must be positive".into(),
            ));
        }
        cfg.class_weights = Some(cw);
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        probs: [f64; 2],
    },
}

/// Nodes in pre-order; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn predict_proba(&self, x: &[f64]) -> [f64; 2] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { probs } => return *probs,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub format_version: u32,
    pub n_features: usize,
    /// Resolved configuration (defaults filled in).
    pub config: ForestConfig,
    pub trees: Vec<DecisionTree>,
}

struct Grower<'a> {
    features: &'a [Vec<f64>],
    labels: &'a [bool],
    cfg: &'a ForestConfig,
    params: SplitParams,
    mtry: usize,
    n_features: usize,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn leaf(&self, samples: &[usize]) -> Node {
        let cw = self.params.class_weights;
        let mut mass = [0.0; 2];
        for &s in samples {
            let c = usize::from(self.labels[s]);
            mass[c] += cw[c];
        }
        let total = mass[0] + mass[1];
        Node::Leaf {
            probs: [mass[0] / total, 1.0 - mass[0] / total],
        }
    }

    fn grow(&mut self, samples: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let at = self.nodes.len();
        let pure = samples
            .iter()
            .all(|&s| self.labels[s] == self.labels[samples[0]]);
        let depth_reached = self.cfg.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_reached || samples.len() < 2 * self.cfg.min_leaf {
            self.nodes.push(self.leaf(samples));
            return at;
        }
        let mut candidates = index::sample(rng, self.n_features, self.mtry).into_vec();
        candidates.sort_unstable();
        let split = best_split(
            self.features,
            self.labels,
            samples,
            &candidates,
            self.cfg.mode,
            &self.params,
            rng,
        );
        let Some(split) = split else {
            self.nodes.push(self.leaf(samples));
            return at;
        };
        // placeholder, patched once both children exist
        self.nodes.push(Node::Leaf { probs: [0.0, 0.0] });
        let mut cut = 0;
        for i in 0..samples.len() {
            if self.features[samples[i]][split.feature] <= split.threshold {
                samples.swap(i, cut);
                cut += 1;
            }
        }
        let (lo, hi) = samples.split_at_mut(cut);
        let left = self.grow(lo, depth + 1, rng);
        let right = self.grow(hi, depth + 1, rng);
        self.nodes[at] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        at
    }
}

fn fit_tree(
    features: &[Vec<f64>],
    labels: &[bool],
    cfg: &ForestConfig,
    tree_index: usize,
) -> DecisionTree {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(tree_index as u64);
    let b = labels.len();
    let mut samples: Vec<usize> = if cfg.bootstrap {
        (0..b).map(|_| rng.random_range(0..b)).collect()
    } else {
        (0..b).collect()
    };
    let n_features = features[0].len();
    let mut grower = Grower {
        features,
        labels,
        cfg,
        params: SplitParams {
            class_weights: cfg.class_weights.expect("resolved"),
            min_leaf: cfg.min_leaf,
        },
        mtry: cfg.mtry.expect("resolved"),
        n_features,
        nodes: Vec::new(),
    };
    grower.grow(&mut samples, 0, &mut rng);
    DecisionTree {
        nodes: grower.nodes,
    }
}

/// Fits a forest. Each tree draws from its own ChaCha8 stream (seed, tree
/// index), so the result is the same for any rayon thread count.
pub fn fit_forest(
    features: &[Vec<f64>],
    labels: &[bool],
    config: &ForestConfig,
) -> Result<Forest, ForestError> {
    if features.len() != labels.len() {
        return Err(ForestError::DimensionMismatch {
            expected: labels.len(),
            got: features.len(),
        });
    }
    if labels.len() < 2 {
        return Err(ForestError::TooFewSamples(labels.len()));
    }
    if labels.iter().all(|&y| y == labels[0]) {
        return Err(ForestError::SingleClassTraining);
    }
    let n_features = features[0].len();
    if n_features == 0 {
        return Err(ForestError::InvalidConfig(
            "feature vectors are empty".into(),
        ));
    }
    if let Some(row) = features.iter().find(|r| r.len() != n_features) {
        return Err(ForestError::DimensionMismatch {
            expected: n_features,
            got: row.len(),
        });
    }
    let cfg = config.resolve(n_features, labels)?;
    let trees = (0..cfg.trees)
        .into_par_iter()
        .map(|t| fit_tree(features, labels, &cfg, t))
        .collect();
    Ok(Forest {
        format_version: FOREST_FORMAT_VERSION,
        n_features,
        config: cfg,
        trees,
    })
}

impl Forest {
    /// Unweighted mean of the trees' leaf distributions.
    pub fn predict_proba(&self, x: &[f64]) -> Result<[f64; 2], ForestError> {
        if x.len() != self.n_features {
            return Err(ForestError::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        let mut acc = [0.0; 2];
        for tree in &self.trees {
            let p = tree.predict_proba(x);
            acc[0] += p[0];
            acc[1] += p[1];
        }
        let t = self.trees.len() as f64;
        Ok([acc[0] / t, acc[1] / t])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("forest serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, ForestError> {
        let forest: Forest =
            serde_json::from_str(text).map_err(|e| ForestError::Format(e.to_string()))?;
        if forest.format_version != FOREST_FORMAT_VERSION {
            return Err(ForestError::Format(format!(
                "unsupported format_version {}",
                forest.format_version
            )));
        }
        for tree in &forest.trees {
            let n = tree.nodes.len();
            let ok = n > 0
                && tree.nodes.iter().all(|node| match node {
                    Node::Split {
                        feature,
                        left,
                        right,
                        ..
                    } => *feature < forest.n_features && *left < n && *right < n,
                    Node::Leaf { .. } => true,
                });
            if !ok {
                return Err(ForestError::Format(
                    "tree references missing nodes or features".into(),
                ));
            }
        }
        Ok(forest)
    }
}
