//! Random forest of information-gain decision trees.
//!
//! Each tree is grown top-down on a bootstrap resample. At every node a random
//! subset of features is examined, candidate thresholds sit at midpoints
//! between consecutive distinct values, and the split with the highest
//! information gain (in bits) wins. A node becomes a leaf when it is pure,
//! has no valid split, or its best gain is below `min_ig`. Prediction is a
//! majority vote; all ties go to the lowest index.

use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, FeatureVector, LabelScheme, NUM_FEATURES};
use crate::exec::Exec;
use crate::rng::stream;

#[derive(Debug, Error, PartialEq)]
pub enum ForestError {
    #[error("entropy of an empty count vector")]
    EmptyCounts,
    #[error("split leaves a child empty")]
    EmptyChild,
    #[error("child counts do not add up to the parent")]
    CountMismatch,
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("invalid forest configuration: {0}")]
    Config(String),
}

#[derive(Debug, Error)]
pub enum ForestIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Shannon entropy in bits of a class histogram.
pub fn entropy(counts: &[usize]) -> Result<f64, ForestError> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(ForestError::EmptyCounts);
    }
    let t = total as f64;
    Ok(counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / t;
            -p * p.log2()
        })
        .sum())
}

pub fn information_gain(
    parent: &[usize],
    left: &[usize],
    right: &[usize],
) -> Result<f64, ForestError> {
    if parent.len() != left.len()
        || parent.len() != right.len()
        || parent
            .iter()
            .zip(left.iter().zip(right))
            .any(|(p, (l, r))| *p != l + r)
    {
        return Err(ForestError::CountMismatch);
    }
    let (nl, nr): (usize, usize) = (left.iter().sum(), right.iter().sum());
    if nl == 0 || nr == 0 {
        return Err(ForestError::EmptyChild);
    }
    let n = (nl + nr) as f64;
    Ok(entropy(parent)? - (nl as f64 / n) * entropy(left)? - (nr as f64 / n) * entropy(right)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

fn histogram(classes: impl Iterator<Item = usize>, num_classes: usize) -> Vec<usize> {
    let mut h = vec![0; num_classes];
    for c in classes {
        h[c] += 1;
    }
    h
}

/// Gains closer than this count as tied; the first candidate wins.
pub const GAIN_TIE_EPS: f64 = 1e-12;

/// Best split of `idx` over `features`. Features are visited in ascending
/// order and thresholds in increasing order; only a gain larger by more
/// than [`GAIN_TIE_EPS`] replaces the incumbent.
pub fn best_split(
    x: &[FeatureVector],
    y: &[usize],
    idx: &[usize],
    features: &[usize],
    num_classes: usize,
) -> Option<Split> {
    if idx.len() < 2 {
        return None;
    }
    let parent = histogram(idx.iter().map(|&i| y[i]), num_classes);
    let mut features = features.to_vec();
    features.sort_unstable();
    features.dedup();

    let mut best: Option<Split> = None;
    let mut sorted = idx.to_vec();
    let mut left = vec![0usize; num_classes];
    let mut right = vec![0usize; num_classes];
    for &f in &features {
        sorted.sort_by(|&a, &b| x[a].0[f].total_cmp(&x[b].0[f]));
        left.fill(0);
        right.copy_from_slice(&parent);
        for w in 0..sorted.len() - 1 {
            let c = y[sorted[w]];
            left[c] += 1;
            right[c] -= 1;
            let (lo, hi) = (x[sorted[w]].0[f], x[sorted[w + 1]].0[f]);
            if lo == hi {
                continue;
            }
            let gain = information_gain(&parent, &left, &right).expect("both sides non-empty");
            if best.is_none_or(|b| gain > b.gain + GAIN_TIE_EPS) {
                best = Some(Split {
                    feature: f,
                    threshold: midpoint(lo, hi),
                    gain,
                });
            }
        }
    }
    best
}

/// A threshold `t` with `lo <= t < hi`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m < hi {
        m
    } else {
        lo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TreeNode {
    Leaf {
        label: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    /// Values `<= threshold` go left.
    pub fn predict(&self, x: &FeatureVector) -> usize {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { label } => return *label,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x.0[*feature] <= *threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaves() + right.leaves(),
        }
    }

    /// Features tested on the path `x` takes, root first.
    pub fn path_features(&self, x: &FeatureVector) -> Vec<usize> {
        let mut out = Vec::new();
        let mut node = self;
        while let TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } = node
        {
            out.push(*feature);
            node = if x.0[*feature] <= *threshold {
                left
            } else {
                right
            };
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub num_trees: usize,
    pub features_per_split: usize,
    /// Gain (bits) below which a node stops splitting.
    pub min_ig: f64,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            num_trees: 100,
            features_per_split: 4,
            min_ig: 0.01,
            bootstrap: true,
            seed: 0x7266,
        }
    }
}

/// Settings used while growing one tree.
#[derive(Debug, Clone, Copy)]
pub struct GrowParams {
    pub features_per_split: usize,
    pub min_ig: f64,
    pub num_classes: usize,
}

/// Most frequent class; ties to the lowest index.
pub fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate().skip(1) {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Grows a tree on the samples listed in `idx` (repeats allowed).
pub fn grow_tree<R: Rng + ?Sized>(
    x: &[FeatureVector],
    y: &[usize],
    idx: Vec<usize>,
    params: &GrowParams,
    rng: &mut R,
) -> TreeNode {
    assert!(!idx.is_empty(), "cannot grow a tree on no samples");
    let counts = histogram(idx.iter().map(|&i| y[i]), params.num_classes);
    let leaf = TreeNode::Leaf {
        label: majority(&counts),
    };
    if counts.iter().filter(|&&c| c > 0).count() <= 1 {
        return leaf;
    }
    let k = params.features_per_split.clamp(1, NUM_FEATURES);
    let features = sample(rng, NUM_FEATURES, k).into_vec();
    let split = match best_split(x, y, &idx, &features, params.num_classes) {
        Some(s) if s.gain >= params.min_ig => s,
        _ => return leaf,
    };
    let (left, right): (Vec<usize>, Vec<usize>) = idx
        .into_iter()
        .partition(|&i| x[i].0[split.feature] <= split.threshold);
    let left = grow_tree(x, y, left, params, rng);
    let right = grow_tree(x, y, right, params, rng);
    TreeNode::Split {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(left),
        right: Box::new(right),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeStats {
    pub tree: usize,
    pub depth: usize,
    pub leaves: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<TreeNode>,
    pub scheme: LabelScheme,
    pub num_classes: usize,
    pub config: ForestConfig,
}

pub fn train_forest(train_set: &Dataset, cfg: &ForestConfig) -> Result<ForestModel, ForestError> {
    train_forest_with(Exec::default(), train_set, cfg)
}

/// Trees use independent streams derived from `(cfg.seed, tree index)`.
pub fn train_forest_with(
    exec: Exec,
    train_set: &Dataset,
    cfg: &ForestConfig,
) -> Result<ForestModel, ForestError> {
    if train_set.is_empty() {
        return Err(ForestError::EmptyTrainingSet);
    }
    if cfg.num_trees == 0 || cfg.features_per_split == 0 || cfg.features_per_split > NUM_FEATURES {
        return Err(ForestError::Config(format!(
            "need at least one tree and 1..={NUM_FEATURES} features per split"
        )));
    }
    let x = train_set.features();
    let y = train_set.classes();
    let params = GrowParams {
        features_per_split: cfg.features_per_split,
        min_ig: cfg.min_ig,
        num_classes: train_set.num_classes(),
    };
    let n = x.len();
    let trees = exec.map_range(cfg.num_trees, |t| {
        let mut rng = stream(cfg.seed, t as u64);
        let idx: Vec<usize> = if cfg.bootstrap {
            (0..n).map(|_| rng.random_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        grow_tree(&x, &y, idx, &params, &mut rng)
    });
    Ok(ForestModel {
        trees,
        scheme: train_set.scheme,
        num_classes: params.num_classes,
        config: cfg.clone(),
    })
}

impl ForestModel {
    pub fn votes(&self, x: &FeatureVector) -> Vec<usize> {
        let mut votes = vec![0; self.num_classes];
        for t in &self.trees {
            votes[t.predict(x)] += 1;
        }
        votes
    }

    pub fn predict(&self, x: &FeatureVector) -> usize {
        majority(&self.votes(x))
    }

    pub fn predict_all(&self, exec: Exec, xs: &[FeatureVector]) -> Vec<usize> {
        exec.map_slice(xs, |x| self.predict(x))
    }

    /// Share of trees voting for `class`, per input.
    pub fn vote_fractions(&self, exec: Exec, xs: &[FeatureVector], class: usize) -> Vec<f64> {
        let n = self.trees.len() as f64;
        exec.map_slice(xs, |x| self.votes(x)[class] as f64 / n)
    }

    pub fn stats(&self) -> Vec<TreeStats> {
        self.trees
            .iter()
            .enumerate()
            .map(|(tree, t)| TreeStats {
                tree,
                depth: t.depth(),
                leaves: t.leaves(),
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), ForestIoError> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ForestIoError> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ScenarioConfig;
    use crate::dataset::build_dataset;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn fv(first: f64) -> FeatureVector {
        let mut v = [0.0; NUM_FEATURES];
        v[0] = first;
        FeatureVector(v)
    }

    fn oracle_entropy(counts: &[usize]) -> f64 {
        let t: f64 = counts.iter().map(|&c| c as f64).sum();
        let mut h = 0.0;
        for &c in counts {
            if c != 0 {
                let p = c as f64 / t;
                h -= p * p.ln() / std::f64::consts::LN_2;
            }
        }
        h
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&[8, 8]).unwrap(), 1.0);
        assert_eq!(entropy(&[16, 0]).unwrap(), 0.0);
        // -(3/24 log2 3/24 + 5/24 log2 5/24 + 7/24 log2 7/24 + 9/24 log2 9/24)
        assert!((entropy(&[3, 5, 7, 9]).unwrap() - 1.895_573_440_555_142_8).abs() < 1e-12);
        assert!((entropy(&[3, 5, 7, 9]).unwrap() - oracle_entropy(&[3, 5, 7, 9])).abs() < 1e-12);
        assert_eq!(entropy(&[0, 0]), Err(ForestError::EmptyCounts));
    }

    #[test]
    fn gain_examples() {
        assert_eq!(information_gain(&[8, 8], &[8, 0], &[0, 8]).unwrap(), 1.0);
        assert!(information_gain(&[6, 12], &[2, 4], &[4, 8]).unwrap().abs() < 1e-12);
        assert_eq!(
            information_gain(&[8, 8], &[0, 0], &[8, 8]),
            Err(ForestError::EmptyChild)
        );
        assert_eq!(
            information_gain(&[8, 8], &[1, 0], &[8, 8]),
            Err(ForestError::CountMismatch)
        );
    }

    #[test]
    fn split_examples() {
        let x = vec![fv(0.0), fv(1.0)];
        let y = vec![0, 1];
        let s = best_split(&x, &y, &[0, 1], &[0], 2).unwrap();
        assert_eq!((s.feature, s.threshold, s.gain), (0, 0.5, 1.0));
        let same = vec![fv(2.0), fv(2.0), fv(2.0)];
        assert!(best_split(
            &same,
            &[0, 1, 0],
            &[0, 1, 2],
            &(0..17).collect::<Vec<_>>(),
            2
        )
        .is_none());
    }

    #[test]
    fn pure_and_separable_trees() {
        let params = GrowParams {
            features_per_split: 17,
            min_ig: 0.01,
            num_classes: 2,
        };
        let x: Vec<FeatureVector> = (0..10).map(|i| fv(i as f64)).collect();
        let pure = grow_tree(
            &x,
            &[1; 10],
            (0..10).collect(),
            &params,
            &mut rng_from_seed(0),
        );
        assert_eq!(pure, TreeNode::Leaf { label: 1 });
        let y: Vec<usize> = (0..10).map(|i| usize::from(i >= 4)).collect();
        let tree = grow_tree(&x, &y, (0..10).collect(), &params, &mut rng_from_seed(0));
        assert_eq!(tree.depth(), 1);
        assert!(x.iter().zip(&y).all(|(xi, &yi)| tree.predict(xi) == yi));
    }

    #[test]
    fn gain_below_threshold_makes_a_leaf() {
        // 100 samples, one feature; the only cut has 11/50 positives on the
        // left and 16/50 on the right, a gain of about 0.0092 bits.
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..50 {
            x.push(fv(0.0));
            y.push(usize::from(i < 11));
        }
        for i in 0..50 {
            x.push(fv(1.0));
            y.push(usize::from(i < 16));
        }
        let idx: Vec<usize> = (0..100).collect();
        let gain = best_split(&x, &y, &idx, &[0], 2).unwrap().gain;
        assert!((gain - 0.009_190_155_864_946).abs() < 1e-12, "gain {gain}");
        let params = GrowParams {
            features_per_split: 17,
            min_ig: 0.01,
            num_classes: 2,
        };
        assert_eq!(
            grow_tree(&x, &y, idx, &params, &mut rng_from_seed(0)),
            TreeNode::Leaf { label: 0 }
        );
    }

    #[test]
    fn voting_rules() {
        let forest = |labels: &[usize]| ForestModel {
            trees: labels
                .iter()
                .map(|&label| TreeNode::Leaf { label })
                .collect(),
            scheme: LabelScheme::Binary,
            num_classes: 2,
            config: ForestConfig::default(),
        };
        let x = fv(0.0);
        assert_eq!(forest(&[1; 100]).predict(&x), 1);
        let mut split = vec![0; 60];
        split.extend([1; 40]);
        assert_eq!(forest(&split).predict(&x), 0);
        let mut tie = vec![1; 50];
        tie.extend([0; 50]);
        assert_eq!(forest(&tie).predict(&x), 0);
    }

    #[test]
    fn forest_is_deterministic_and_thread_independent() {
        let ds = build_dataset(&ScenarioConfig::awgn(3.0, 2), LabelScheme::Binary, 400).unwrap();
        let cfg = ForestConfig {
            num_trees: 8,
            ..ForestConfig::default()
        };
        let a = train_forest_with(Exec::Sequential, &ds, &cfg).unwrap();
        let b = train_forest_with(Exec::Parallel, &ds, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trees.len(), 8);
        let c = train_forest(
            &ds,
            &ForestConfig {
                seed: 1,
                ..cfg.clone()
            },
        )
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn json_round_trip() {
        let ds = build_dataset(&ScenarioConfig::awgn(3.0, 2), LabelScheme::Awgn6, 200).unwrap();
        let cfg = ForestConfig {
            num_trees: 3,
            ..ForestConfig::default()
        };
        let f = train_forest(&ds, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rf.json");
        f.save(&path).unwrap();
        assert_eq!(ForestModel::load(&path).unwrap(), f);
    }

    #[test]
    fn monotone_routing() {
        let ds = build_dataset(&ScenarioConfig::awgn(0.0, 2), LabelScheme::Binary, 500).unwrap();
        let f = train_forest(
            &ds,
            &ForestConfig {
                num_trees: 5,
                ..ForestConfig::default()
            },
        )
        .unwrap();
        let mut rng = rng_from_seed(8);
        for s in ds.samples.iter().take(100) {
            let feature = rng.random_range(0..NUM_FEATURES);
            let mut bumped = s.features;
            bumped.0[feature] += rng.random_range(0.0..3.0);
            for tree in &f.trees {
                let before = tree.path_features(&s.features);
                let after = tree.path_features(&bumped);
                // The first divergence, if any, happens at a node testing `feature`.
                if let Some(i) = before.iter().zip(&after).position(|(a, b)| a != b) {
                    assert!(i > 0 && before[i - 1] == feature);
                } else if before.len() != after.len() {
                    let i = before.len().min(after.len());
                    assert_eq!(before[i - 1], feature);
                }
                if tree.predict(&s.features) != tree.predict(&bumped) {
                    assert!(before.contains(&feature));
                }
            }
        }
    }

    proptest! {
        #[test]
        fn entropy_and_gain_match_oracle(seed in any::<u64>()) {
            let mut rng = rng_from_seed(seed);
            let k = rng.random_range(2..7);
            let left: Vec<usize> = (0..k).map(|_| rng.random_range(0..20)).collect();
            let right: Vec<usize> = (0..k).map(|_| rng.random_range(0..20)).collect();
            let parent: Vec<usize> = left.iter().zip(&right).map(|(a, b)| a + b).collect();
            if parent.iter().sum::<usize>() > 0 {
                prop_assert!((entropy(&parent).unwrap() - oracle_entropy(&parent)).abs() < 1e-12);
            }
            let (nl, nr) = (left.iter().sum::<usize>(), right.iter().sum::<usize>());
            if nl > 0 && nr > 0 {
                let n = (nl + nr) as f64;
                let oracle = oracle_entropy(&parent) - nl as f64 / n * oracle_entropy(&left) - nr as f64 / n * oracle_entropy(&right);
                let ig = information_gain(&parent, &left, &right).unwrap();
                prop_assert!((ig - oracle).abs() < 1e-12);
                prop_assert!(ig >= -1e-12 && ig <= entropy(&parent).unwrap() + 1e-12);
            }
        }
    }
}
