//! Random forest classifier over feature vectors: bootstrap samples,
//! Gini splits on a random feature subset per node, trees grown to purity
//! and majority vote.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{argmax3, Action, FeatureVector, LearnError, N_FEATURES};
use crate::rng::stream_rng;

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Candidate features per node; `None` means `ceil(sqrt(p))`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 500,
            max_features: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn mtry(&self) -> usize {
        self.max_features
            .unwrap_or_else(|| (N_FEATURES as f64).sqrt().ceil() as usize)
            .clamp(1, N_FEATURES)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        /// Training samples per action reaching this leaf.
        counts: [u32; 3],
    },
    Split {
        feature: usize,
        /// Samples with `x[feature] <= threshold` go left.
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    fn predict(&self, x: &[f64]) -> Action {
        let mut node = self;
        loop {
            match node {
                Node::Leaf { counts } => return Action::from_index(argmax3(counts)),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub version: u32,
    pub params: ForestParams,
    pub trees: Vec<Node>,
}

fn gini(c: &[u32; 3], n: u32) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = f64::from(n);
    1.0 - c.iter().map(|&k| (f64::from(k) / n).powi(2)).sum::<f64>()
}

fn class_counts(labels: &[usize], idx: &[usize]) -> [u32; 3] {
    let mut c = [0u32; 3];
    for &i in idx {
        c[labels[i]] += 1;
    }
    c
}

/// Best split of `idx` on feature `f`: (weighted child Gini, threshold).
/// `None` when every sample has the same value.
pub(crate) fn best_split_on(
    x: &[[f64; N_FEATURES]],
    labels: &[usize],
    idx: &mut [usize],
    f: usize,
) -> Option<(f64, f64)> {
    idx.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
    let n = idx.len() as u32;
    let total = class_counts(labels, idx);
    let mut left = [0u32; 3];
    let mut best: Option<(f64, f64)> = None;
    for w in 0..idx.len() - 1 {
        left[labels[idx[w]]] += 1;
        let (lo, hi) = (x[idx[w]][f], x[idx[w + 1]][f]);
        if lo >= hi {
            continue;
        }
        let nl = w as u32 + 1;
        let right = [total[0] - left[0], total[1] - left[1], total[2] - left[2]];
        let score = (f64::from(nl) * gini(&left, nl) + f64::from(n - nl) * gini(&right, n - nl)) / f64::from(n);
        if best.is_none_or(|(s, _)| score < s) {
            let mid = lo + (hi - lo) / 2.0;
            let threshold = if mid < hi { mid } else { lo };
            best = Some((score, threshold));
        }
    }
    best
}

fn grow(x: &[[f64; N_FEATURES]], labels: &[usize], idx: &mut [usize], mtry: usize, rng: &mut ChaCha8Rng) -> Node {
    let counts = class_counts(labels, idx);
    if counts.iter().filter(|&&c| c > 0).count() <= 1 {
        return Node::Leaf { counts };
    }
    let mut order: Vec<usize> = (0..N_FEATURES).collect();
    order.shuffle(rng);
    // Take the best of the first `mtry` candidates; if none can split, keep
    // drawing until one can.
    let mut best: Option<(f64, usize, f64)> = None;
    for (tried, &f) in order.iter().enumerate() {
        if tried >= mtry && best.is_some() {
            break;
        }
        if let Some((score, thr)) = best_split_on(x, labels, idx, f) {
            if best.is_none_or(|(s, _, _)| score < s) {
                best = Some((score, f, thr));
            }
        }
    }
    let Some((_, feature, threshold)) = best else {
        // Identical feature vectors with mixed labels.
        return Node::Leaf { counts };
    };
    let mut left: Vec<usize> = idx.iter().copied().filter(|&i| x[i][feature] <= threshold).collect();
    let mut right: Vec<usize> = idx.iter().copied().filter(|&i| x[i][feature] > threshold).collect();
    Node::Split {
        feature,
        threshold,
        left: Box::new(grow(x, labels, &mut left, mtry, rng)),
        right: Box::new(grow(x, labels, &mut right, mtry, rng)),
    }
}

pub fn forest_train(samples: &[(FeatureVector, Action)], params: &ForestParams) -> Result<ForestModel, LearnError> {
    if samples.is_empty() {
        return Err(LearnError::EmptySamples);
    }
    if params.n_trees == 0 {
        return Err(LearnError::Model("n_trees must be at least 1".into()));
    }
    let x: Vec<[f64; N_FEATURES]> = samples.iter().map(|(f, _)| f.0).collect();
    let labels: Vec<usize> = samples.iter().map(|(_, a)| a.index()).collect();
    let n = samples.len();
    let mtry = params.mtry();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(params.seed, t as u64);
            let mut idx: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow(&x, &labels, &mut idx, mtry, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        version: MODEL_VERSION,
        params: *params,
        trees,
    })
}

/// Majority vote; ties go to the lowest action index.
pub fn forest_predict(model: &ForestModel, x: &FeatureVector) -> Action {
    let mut votes = [0usize; 3];
    for tree in &model.trees {
        votes[tree.predict(&x.0).index()] += 1;
    }
    Action::from_index(argmax3(&votes))
}

/// Share of samples whose label the model reproduces.
pub fn accuracy(model: &ForestModel, samples: &[(FeatureVector, Action)]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let hits = samples.iter().filter(|(x, a)| forest_predict(model, x) == *a).count();
    hits as f64 / samples.len() as f64
}

impl ForestModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("forest serializes")
    }

    /// Parses a saved model; deep trees are allowed.
    pub fn from_json(s: &str) -> Result<Self, LearnError> {
        let mut de = serde_json::Deserializer::from_str(s);
        de.disable_recursion_limit();
        let m: ForestModel = serde::Deserialize::deserialize(&mut de).map_err(|e| LearnError::Model(e.to_string()))?;
        if m.version != MODEL_VERSION {
            return Err(LearnError::Model(format!(
                "unsupported forest version {} (expected {MODEL_VERSION})",
                m.version
            )));
        }
        if m.trees.is_empty() {
            return Err(LearnError::Model("forest has no trees".into()));
        }
        Ok(m)
    }
}
