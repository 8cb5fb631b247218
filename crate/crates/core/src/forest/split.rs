use rand::Rng;

use super::{ForestError, ForestMode};

/// Gini impurity `1 - sum p_c^2` of class-weighted proportions.
pub fn gini_impurity(counts: [f64; 2], class_weights: [f64; 2]) -> Result<f64, ForestError> {
    let w = [counts[0] * class_weights[0], counts[1] * class_weights[1]];
    let total = w[0] + w[1];
    if total.is_nan() || total <= 0.0 {
        return Err(ForestError::AllZeroCounts);
    }
    Ok(gini_weighted(w))
}

/// Gini over already-weighted class masses; 0 for an empty node.
pub(crate) fn gini_weighted(w: [f64; 2]) -> f64 {
    let total = w[0] + w[1];
    if total <= 0.0 {
        return 0.0;
    }
    let p0 = w[0] / total;
    let p1 = w[1] / total;
    1.0 - (p0 * p0 + p1 * p1)
}

/// Impurity decrease of splitting `parent` into `left` and `right`
/// (weighted class masses), unscaled by the node's share of the data.
pub fn impurity_decrease(parent: [f64; 2], left: [f64; 2], right: [f64; 2]) -> f64 {
    let total = parent[0] + parent[1];
    let wl = (left[0] + left[1]) / total;
    let wr = (right[0] + right[1]) / total;
    gini_weighted(parent) - wl * gini_weighted(left) - wr * gini_weighted(right)
}

/// Decreases at or below this do not count as a reduction; nodes with
/// impurity at or below it are treated as pure.
pub const MIN_DECREASE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    /// Samples with `x[feature] <= threshold` go left.
    pub threshold: f64,
    pub decrease: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitParams {
    pub class_weights: [f64; 2],
    /// Minimum number of samples on each side.
    pub min_leaf: usize,
}

impl Default for SplitParams {
    fn default() -> Self {
        Self {
            class_weights: [1.0, 1.0],
            min_leaf: 1,
        }
    }
}

fn mass(labels: &[bool], samples: impl Iterator<Item = usize>, cw: [f64; 2]) -> [f64; 2] {
    let mut m = [0.0; 2];
    for s in samples {
        let c = usize::from(labels[s]);
        m[c] += cw[c];
    }
    m
}

/// Best split of `samples` over the `candidates` features.
///
/// Random-forest mode scans every midpoint between consecutive distinct
/// sorted values; extra-trees mode draws one threshold uniformly from
/// `[min, max)` per feature. Candidates are visited in the given order and
/// only a strictly larger decrease replaces the incumbent, so passing them
/// sorted breaks ties towards the lower feature index and lower threshold.
pub fn best_split<R: Rng + ?Sized>(
    features: &[Vec<f64>],
    labels: &[bool],
    samples: &[usize],
    candidates: &[usize],
    mode: ForestMode,
    params: &SplitParams,
    rng: &mut R,
) -> Option<Split> {
    if samples.len() < 2 {
        return None;
    }
    let cw = params.class_weights;
    let parent = mass(labels, samples.iter().copied(), cw);
    if gini_weighted(parent) <= MIN_DECREASE {
        return None;
    }
    let mut best: Option<Split> = None;
    let mut consider = |split: Split| {
        let floor = best.map_or(MIN_DECREASE, |b| b.decrease);
        if split.decrease > floor {
            best = Some(split);
        }
    };
    let mut column: Vec<(f64, bool)> = Vec::with_capacity(samples.len());
    for &f in candidates {
        column.clear();
        column.extend(samples.iter().map(|&s| (features[s][f], labels[s])));
        match mode {
            ForestMode::RandomForest => {
                column.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut left = [0.0; 2];
                for i in 0..column.len() - 1 {
                    let (v, y) = column[i];
                    left[usize::from(y)] += cw[usize::from(y)];
                    let next = column[i + 1].0;
                    if v == next {
                        continue;
                    }
                    let n_left = i + 1;
                    if n_left < params.min_leaf || column.len() - n_left < params.min_leaf {
                        continue;
                    }
                    let mut threshold = 0.5 * (v + next);
                    if threshold >= next {
                        threshold = v;
                    }
                    let right = [parent[0] - left[0], parent[1] - left[1]];
                    consider(Split {
                        feature: f,
                        threshold,
                        decrease: impurity_decrease(parent, left, right),
                    });
                }
            }
            ForestMode::ExtraTrees => {
                let (lo, hi) = column
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(v, _)| {
                        (lo.min(v), hi.max(v))
                    });
                if hi.is_nan() || lo.is_nan() || hi <= lo {
                    continue;
                }
                let threshold = rng.random_range(lo..hi);
                let mut left = [0.0; 2];
                let mut n_left = 0;
                for &(v, y) in column.iter() {
                    if v <= threshold {
                        left[usize::from(y)] += cw[usize::from(y)];
                        n_left += 1;
                    }
                }
                if n_left < params.min_leaf || column.len() - n_left < params.min_leaf {
                    continue;
                }
                let right = [parent[0] - left[0], parent[1] - left[1]];
                consider(Split {
                    feature: f,
                    threshold,
                    decrease: impurity_decrease(parent, left, right),
                });
            }
        }
    }
    best
}
