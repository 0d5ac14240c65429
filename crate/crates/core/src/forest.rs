//! From-scratch decision trees and a seven-tree random forest for the
//! binary non-atomic-MEV verdict.
//!
//! The training protocol is fixed: 30% of the labeled examples are reserved
//! as a stratified test set; the remaining 70% are dealt into seven
//! stratified folds; tree k trains on the other six folds and records its
//! accuracy on fold k (its validation fold). The returned report carries
//! both those validation accuracies and every tree's — plus the majority
//! ensemble's — accuracy on the untouched test set.
//!
//! Trees are grown greedily on Gini impurity with midpoint thresholds over
//! sorted distinct feature values. Each node examines features in a seeded
//! random order, stopping once it has looked at three features *and* found
//! a valid split; a node that admits no impurity-decreasing split becomes a
//! leaf. Splits send `value ≤ threshold` left. Leaves store the two class
//! counts `[non_atomic, other]` and vote for the majority, breaking ties
//! toward `other` (the conservative verdict).
//!
//! All randomness flows from one `u64` seed through per-purpose ChaCha8
//! streams — stream 0 shuffles the data splits, stream k+1 drives tree k —
//! so retraining with the same data and seed is bit-identical, regardless
//! of how many threads grow trees concurrently.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ModuleError;
use crate::features::{FeatureVector, FEATURE_COUNT};

/// Number of trees in the ensemble; odd, so majority votes never tie.
pub const TREE_COUNT: usize = 7;

/// Maximum tree depth (root at depth 0).
pub const MAX_DEPTH: u32 = 6;

/// Minimum samples in each child of a split.
pub const MIN_LEAF: usize = 2;

/// Features examined per split before an early stop is allowed (⌈√9⌉).
pub const FEATURES_PER_SPLIT: usize = 3;

/// Minimum labeled examples to train on.
pub const MIN_EXAMPLES: usize = 14;

/// On-disk model format version.
pub const FOREST_FORMAT_VERSION: u32 = 1;

/// The binary classification target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForestClass {
    NonAtomic,
    Other,
}

impl ForestClass {
    /// Position in leaf count arrays: `[non_atomic, other]`.
    fn slot(self) -> usize {
        match self {
            ForestClass::NonAtomic => 0,
            ForestClass::Other => 1,
        }
    }
}

/// One labeled training point.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub features: [f64; FEATURE_COUNT],
    pub label: ForestClass,
}

impl TrainingExample {
    /// Pairs an extracted vector with its label.
    pub fn new(vector: &FeatureVector, label: ForestClass) -> Self {
        TrainingExample { features: vector.values, label }
    }
}

/// A node of a decision tree: either a threshold split or a leaf holding
/// the class counts `[non_atomic, other]` of the training samples that
/// reached it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        counts: [u32; 2],
    },
}

impl TreeNode {
    /// Training-sample class counts under this node.
    fn class_counts(&self) -> [u32; 2] {
        match self {
            TreeNode::Leaf { counts } => *counts,
            TreeNode::Split { left, right, .. } => {
                let l = left.class_counts();
                let r = right.class_counts();
                [l[0] + r[0], l[1] + r[1]]
            }
        }
    }

    fn depth(&self) -> u32 {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

/// A single trained decision tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub root: TreeNode,
}

impl DecisionTree {
    /// The tree's vote for one feature vector.
    pub fn predict(&self, features: &[f64; FEATURE_COUNT]) -> ForestClass {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { counts } => {
                    // Tie breaks toward Other: claiming non-atomic MEV
                    // needs a strict majority of leaf evidence.
                    return if counts[0] > counts[1] {
                        ForestClass::NonAtomic
                    } else {
                        ForestClass::Other
                    };
                }
                TreeNode::Split { feature, threshold, left, right } => {
                    node = if features[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    /// Height of the tree (a bare leaf has depth 0).
    pub fn depth(&self) -> u32 {
        self.root.depth()
    }
}

/// The trained ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    /// Exactly [`TREE_COUNT`] trees.
    pub trees: Vec<DecisionTree>,
    pub seed: u64,
    /// Accuracy of tree k on its validation fold; `None` when the fold
    /// received no samples (possible only near the minimum data size).
    pub validation_accuracy: Vec<Option<f64>>,
}

/// A forest plus its held-out evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub forest: Forest,
    /// Per-tree accuracy on the 30% test reservation.
    pub tree_test_accuracy: Vec<f64>,
    /// Majority-vote accuracy on the test reservation.
    pub ensemble_test_accuracy: f64,
    /// Fraction of test examples on which all seven trees agreed.
    pub unanimous_fraction: f64,
    pub train_size: usize,
    pub test_size: usize,
}

/// Majority-vote outcome for one vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prediction {
    pub class: ForestClass,
    /// Trees that voted for `class`; always in 4..=7.
    pub votes: u32,
}

impl Prediction {
    pub fn unanimous(&self) -> bool {
        self.votes as usize == TREE_COUNT
    }
}

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("training needs at least {MIN_EXAMPLES} labeled examples, found {found}")]
    InsufficientData { found: usize },
    #[error("training data contains a single class; both classes are required")]
    SingleClassData,
    #[error("malformed forest model: {detail}")]
    Serialization { detail: String },
    #[error("forest model format version {found} is not supported (expected {FOREST_FORMAT_VERSION})")]
    UnsupportedVersion { found: u32 },
}

impl ModuleError for ForestError {
    fn module(&self) -> &'static str {
        "forest"
    }

    fn code(&self) -> &'static str {
        match self {
            ForestError::InsufficientData { .. } => "insufficient_data",
            ForestError::SingleClassData => "single_class_data",
            ForestError::Serialization { .. } => "serialization",
            ForestError::UnsupportedVersion { .. } => "unsupported_version",
        }
    }
}

/// Gini impurity of a two-class count pair.
fn gini(counts: [u32; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as u64;
    if n == 0 {
        return 0.0;
    }
    let ss = counts[0] as u64 * counts[0] as u64 + counts[1] as u64 * counts[1] as u64;
    1.0 - ss as f64 / (n * n) as f64
}

fn count_labels(samples: &[usize], data: &[TrainingExample]) -> [u32; 2] {
    let mut counts = [0u32; 2];
    for &i in samples {
        counts[data[i].label.slot()] += 1;
    }
    counts
}

struct BestSplit {
    weighted_impurity: f64,
    feature: usize,
    threshold: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

/// Grows one subtree over `samples` (indices into `data`).
fn grow(samples: Vec<usize>, data: &[TrainingExample], depth: u32, rng: &mut ChaCha8Rng) -> TreeNode {
    let counts = count_labels(&samples, data);
    let node_gini = gini(counts);
    if depth >= MAX_DEPTH || samples.len() < 2 * MIN_LEAF || node_gini == 0.0 {
        return TreeNode::Leaf { counts };
    }

    // Examine features in a seeded random order. At least
    // FEATURES_PER_SPLIT features are always inspected; the search extends
    // past that only while no valid split has been found, so a node whose
    // random draw starts with uninformative features still splits if any
    // feature can improve impurity.
    let mut order: Vec<usize> = (0..FEATURE_COUNT).collect();
    order.shuffle(rng);
    let mut best: Option<BestSplit> = None;
    for (examined, &feature) in order.iter().enumerate() {
        if examined >= FEATURES_PER_SPLIT && best.is_some() {
            break;
        }
        let mut values: Vec<f64> = samples.iter().map(|&i| data[i].features[feature]).collect();
        values.sort_by(|a, b| a.partial_cmp(b).expect("features are finite"));
        values.dedup();
        for pair in values.windows(2) {
            let threshold = pair[0] + (pair[1] - pair[0]) / 2.0;
            let (mut left, mut right) = (Vec::new(), Vec::new());
            for &i in &samples {
                if data[i].features[feature] <= threshold {
                    left.push(i);
                } else {
                    right.push(i);
                }
            }
            if left.len() < MIN_LEAF || right.len() < MIN_LEAF {
                continue;
            }
            let wl = left.len() as f64 / samples.len() as f64;
            let wr = right.len() as f64 / samples.len() as f64;
            let weighted = wl * gini(count_labels(&left, data)) + wr * gini(count_labels(&right, data));
            // Strict improvement over both the node impurity and the best
            // candidate so far; ties keep the earliest (lowest-threshold,
            // earliest-feature) candidate, which makes the scan order the
            // deterministic tie-break.
            let improves = weighted < node_gini
                && best.as_ref().map_or(true, |b| weighted < b.weighted_impurity);
            if improves {
                best = Some(BestSplit { weighted_impurity: weighted, feature, threshold, left, right });
            }
        }
    }

    match best {
        None => TreeNode::Leaf { counts },
        Some(split) => TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(grow(split.left, data, depth + 1, rng)),
            right: Box::new(grow(split.right, data, depth + 1, rng)),
        },
    }
}

/// Stratified index split: per class, `round(0.3·n)` examples go to the
/// test set and the rest are dealt round-robin into [`TREE_COUNT`] folds.
fn split_indices(
    data: &[TrainingExample],
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<Vec<usize>>) {
    let mut test = Vec::new();
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); TREE_COUNT];
    for class in [ForestClass::NonAtomic, ForestClass::Other] {
        let mut members: Vec<usize> =
            (0..data.len()).filter(|&i| data[i].label == class).collect();
        members.shuffle(rng);
        // round(0.3·n) with half-up rounding, in integer arithmetic.
        let reserve = (3 * members.len() + 5) / 10;
        test.extend_from_slice(&members[..reserve]);
        for (j, &idx) in members[reserve..].iter().enumerate() {
            folds[j % TREE_COUNT].push(idx);
        }
    }
    test.sort_unstable();
    for fold in &mut folds {
        fold.sort_unstable();
    }
    (test, folds)
}

fn accuracy(tree_or_forest: impl Fn(&[f64; FEATURE_COUNT]) -> ForestClass, samples: &[usize], data: &[TrainingExample]) -> f64 {
    let correct = samples
        .iter()
        .filter(|&&i| tree_or_forest(&data[i].features) == data[i].label)
        .count();
    correct as f64 / samples.len() as f64
}

/// Trains the seven-tree forest on labeled examples.
///
/// Requires at least [`MIN_EXAMPLES`] examples covering both classes. The
/// result is a pure function of `(data, seed)`: identical inputs produce a
/// bit-identical forest and report.
pub fn train_forest(data: &[TrainingExample], seed: u64) -> Result<TrainReport, ForestError> {
    if data.len() < MIN_EXAMPLES {
        return Err(ForestError::InsufficientData { found: data.len() });
    }
    let classes = count_labels(&(0..data.len()).collect::<Vec<_>>(), data);
    if classes[0] == 0 || classes[1] == 0 {
        return Err(ForestError::SingleClassData);
    }

    let mut split_rng = ChaCha8Rng::seed_from_u64(seed);
    split_rng.set_stream(0);
    let (test, folds) = split_indices(data, &mut split_rng);
    let train_size: usize = folds.iter().map(Vec::len).sum();

    // Tree k trains on every fold but fold k. Each tree owns RNG stream
    // k+1, so parallel growth cannot perturb determinism.
    let grown: Vec<(DecisionTree, Option<f64>)> = (0..TREE_COUNT)
        .into_par_iter()
        .map(|k| {
            let mut train: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .flat_map(|(_, fold)| fold.iter().copied())
                .collect();
            train.sort_unstable();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64 + 1);
            let tree = DecisionTree { root: grow(train, data, 0, &mut rng) };
            let validation = if folds[k].is_empty() {
                None
            } else {
                Some(accuracy(|f| tree.predict(f), &folds[k], data))
            };
            (tree, validation)
        })
        .collect();

    let (trees, validation_accuracy): (Vec<_>, Vec<_>) = grown.into_iter().unzip();
    let forest = Forest { trees, seed, validation_accuracy };

    let tree_test_accuracy: Vec<f64> = forest
        .trees
        .iter()
        .map(|t| accuracy(|f| t.predict(f), &test, data))
        .collect();
    let ensemble_test_accuracy = accuracy(|f| predict(&forest, f).class, &test, data);
    let unanimous = test
        .iter()
        .filter(|&&i| predict(&forest, &data[i].features).unanimous())
        .count();
    Ok(TrainReport {
        forest,
        tree_test_accuracy,
        ensemble_test_accuracy,
        unanimous_fraction: unanimous as f64 / test.len() as f64,
        train_size,
        test_size: test.len(),
    })
}

/// Majority vote of the seven trees, with the winning vote count.
pub fn predict(forest: &Forest, features: &[f64; FEATURE_COUNT]) -> Prediction {
    let non_atomic = forest
        .trees
        .iter()
        .filter(|t| t.predict(features) == ForestClass::NonAtomic)
        .count() as u32;
    let total = forest.trees.len() as u32;
    if non_atomic * 2 > total {
        Prediction { class: ForestClass::NonAtomic, votes: non_atomic }
    } else {
        Prediction { class: ForestClass::Other, votes: total - non_atomic }
    }
}

/// Mean weighted-impurity-decrease importance per feature, normalized to
/// sum 1 (all zeros if no tree ever split).
///
/// Within a tree, a split on feature f at a node holding n of the tree's
/// n_root samples contributes (n/n_root)·(g − w_L·g_L − w_R·g_R); the
/// per-tree vectors are averaged across the forest and scaled to unit sum.
pub fn feature_importance(forest: &Forest) -> [f64; FEATURE_COUNT] {
    let mut mean = [0.0; FEATURE_COUNT];
    for tree in &forest.trees {
        let n_root = {
            let c = tree.root.class_counts();
            (c[0] + c[1]) as f64
        };
        let mut contribution = [0.0; FEATURE_COUNT];
        accumulate_importance(&tree.root, n_root, &mut contribution);
        for (m, c) in mean.iter_mut().zip(contribution) {
            *m += c / forest.trees.len() as f64;
        }
    }
    let total: f64 = mean.iter().sum();
    if total > 0.0 {
        for m in &mut mean {
            *m /= total;
        }
    }
    mean
}

fn accumulate_importance(node: &TreeNode, n_root: f64, out: &mut [f64; FEATURE_COUNT]) {
    if let TreeNode::Split { feature, left, right, .. } = node {
        let lc = left.class_counts();
        let rc = right.class_counts();
        let counts = [lc[0] + rc[0], lc[1] + rc[1]];
        let n = (counts[0] + counts[1]) as f64;
        let (nl, nr) = ((lc[0] + lc[1]) as f64, (rc[0] + rc[1]) as f64);
        let decrease = gini(counts) - (nl / n) * gini(lc) - (nr / n) * gini(rc);
        out[*feature] += (n / n_root) * decrease;
        accumulate_importance(left, n_root, out);
        accumulate_importance(right, n_root, out);
    }
}

/// Serialized model file.
#[derive(Debug, Serialize, Deserialize)]
struct ForestFile {
    format_version: u32,
    seed: u64,
    validation_accuracy: Vec<Option<f64>>,
    trees: Vec<DecisionTree>,
}

impl Forest {
    /// Serializes the model as versioned JSON.
    pub fn to_json(&self) -> String {
        let file = ForestFile {
            format_version: FOREST_FORMAT_VERSION,
            seed: self.seed,
            validation_accuracy: self.validation_accuracy.clone(),
            trees: self.trees.clone(),
        };
        serde_json::to_string_pretty(&file).expect("forest serializes")
    }

    /// Parses a model serialized by [`Forest::to_json`].
    pub fn from_json(text: &str) -> Result<Forest, ForestError> {
        let file: ForestFile = serde_json::from_str(text)
            .map_err(|e| ForestError::Serialization { detail: e.to_string() })?;
        if file.format_version != FOREST_FORMAT_VERSION {
            return Err(ForestError::UnsupportedVersion { found: file.format_version });
        }
        if file.trees.len() != TREE_COUNT {
            return Err(ForestError::Serialization {
                detail: format!("expected {TREE_COUNT} trees, found {}", file.trees.len()),
            });
        }
        Ok(Forest {
            trees: file.trees,
            seed: file.seed,
            validation_accuracy: file.validation_accuracy,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn example(features: [f64; FEATURE_COUNT], label: ForestClass) -> TrainingExample {
        TrainingExample { features, label }
    }

    /// Separable on the first feature only; every other feature constant.
    fn f1_separable(n_per_class: usize) -> Vec<TrainingExample> {
        let mut data = Vec::new();
        for i in 0..n_per_class {
            let mut na = [0.0; FEATURE_COUNT];
            na[0] = 0.9 + 0.01 * i as f64; // ≤ 1.06 region
            data.push(example(na, ForestClass::NonAtomic));
            let mut other = [0.0; FEATURE_COUNT];
            other[0] = 2.0 + 0.05 * i as f64; // ≥ 2 region
            data.push(example(other, ForestClass::Other));
        }
        data
    }

    /// Two fuzzy clusters with some overlap on three informative features.
    fn overlapping(seed: u64, na: usize, other: usize) -> Vec<TrainingExample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::new();
        for _ in 0..na {
            let mut f = [0.0; FEATURE_COUNT];
            for v in f.iter_mut() {
                *v = rng.random_range(0.0..1.0);
            }
            f[0] = rng.random_range(0.8..1.3);
            f[4] = rng.random_range(0.4..1.0);
            f[5] = rng.random_range(0.6..1.0);
            data.push(example(f, ForestClass::NonAtomic));
        }
        for _ in 0..other {
            let mut f = [0.0; FEATURE_COUNT];
            for v in f.iter_mut() {
                *v = rng.random_range(0.0..1.0);
            }
            f[0] = rng.random_range(1.1..4.0);
            f[4] = rng.random_range(0.0..0.5);
            f[5] = rng.random_range(0.0..0.7);
            data.push(example(f, ForestClass::Other));
        }
        data
    }

    #[test]
    fn gini_closed_forms() {
        assert_eq!(gini([10, 0]), 0.0);
        assert_eq!(gini([5, 5]), 0.5);
        assert_eq!(gini([1, 3]), 0.375); // 1 − (1+9)/16
        assert_eq!(gini([0, 0]), 0.0);
    }

    #[test]
    fn separable_fixture_trains_perfectly() {
        let data = f1_separable(10);
        let report = train_forest(&data, 7).unwrap();
        assert_eq!(report.forest.trees.len(), TREE_COUNT);
        assert_eq!(report.ensemble_test_accuracy, 1.0);
        assert!(report.tree_test_accuracy.iter().all(|&a| a == 1.0));
        assert_eq!(report.unanimous_fraction, 1.0);
        // 30% of 10 per class = 3 per class.
        assert_eq!(report.test_size, 6);
        assert_eq!(report.train_size, 14);
    }

    #[test]
    fn planted_bot_vector_votes_unanimously() {
        let data = f1_separable(10);
        let forest = train_forest(&data, 7).unwrap().forest;
        let mut bot = [0.0; FEATURE_COUNT];
        bot[0] = 1.0;
        let p = predict(&forest, &bot);
        assert_eq!(p.class, ForestClass::NonAtomic);
        assert_eq!(p.votes, 7);
        assert!(p.unanimous());
    }

    #[test]
    fn flipping_the_separating_feature_flips_the_verdict() {
        let data = f1_separable(10);
        let forest = train_forest(&data, 11).unwrap().forest;
        let mut v = [0.0; FEATURE_COUNT];
        v[0] = 1.0;
        assert_eq!(predict(&forest, &v).class, ForestClass::NonAtomic);
        v[0] = 3.0;
        assert_eq!(predict(&forest, &v).class, ForestClass::Other);
    }

    #[test]
    fn importance_concentrates_on_the_only_informative_feature() {
        let data = f1_separable(10);
        let forest = train_forest(&data, 7).unwrap().forest;
        let importance = feature_importance(&forest);
        assert_eq!(importance[0], 1.0);
        assert!(importance[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn importance_normalizes_and_skips_constant_features() {
        let data = overlapping(3, 64, 146);
        let forest = train_forest(&data, 42).unwrap().forest;
        let importance = feature_importance(&forest);
        let sum: f64 = importance.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12, "importance sums to {sum}");
        assert!(importance.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn training_is_deterministic() {
        let data = overlapping(5, 40, 60);
        let a = train_forest(&data, 42).unwrap();
        let b = train_forest(&data, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.forest.to_json(), b.forest.to_json());
    }

    #[test]
    fn stratified_split_sizes_are_exact() {
        // 64/146: test gets round(0.3·64)=19 and round(0.3·146)=44.
        let data = overlapping(8, 64, 146);
        let report = train_forest(&data, 1).unwrap();
        assert_eq!(report.test_size, 63);
        assert_eq!(report.train_size, 147);
    }

    #[test]
    fn depth_budget_and_strict_improvement_hold() {
        let data = overlapping(9, 64, 146);
        let forest = train_forest(&data, 2).unwrap().forest;
        fn check(node: &TreeNode) {
            if let TreeNode::Split { left, right, .. } = node {
                let lc = left.class_counts();
                let rc = right.class_counts();
                let counts = [lc[0] + rc[0], lc[1] + rc[1]];
                let n = (counts[0] + counts[1]) as f64;
                let weighted = ((lc[0] + lc[1]) as f64 / n) * gini(lc)
                    + ((rc[0] + rc[1]) as f64 / n) * gini(rc);
                assert!(weighted < gini(counts), "split does not improve impurity");
                assert!((lc[0] + lc[1]) as usize >= MIN_LEAF);
                assert!((rc[0] + rc[1]) as usize >= MIN_LEAF);
                check(left);
                check(right);
            }
        }
        for tree in &forest.trees {
            assert!(tree.depth() <= MAX_DEPTH);
            check(&tree.root);
        }
    }

    #[test]
    fn insufficient_data_rejected() {
        let data = f1_separable(6); // 12 examples < 14
        let err = train_forest(&data, 0).unwrap_err();
        assert_eq!(err.code(), "insufficient_data");
    }

    #[test]
    fn single_class_rejected() {
        let data: Vec<TrainingExample> = (0..20)
            .map(|i| example([i as f64; FEATURE_COUNT], ForestClass::Other))
            .collect();
        let err = train_forest(&data, 0).unwrap_err();
        assert_eq!(err.code(), "single_class_data");
        assert_eq!(err.module(), "forest");
    }

    #[test]
    fn majority_vote_reports_winning_count() {
        // Hand-built forest: 4 trees vote non-atomic, 3 vote other.
        let na_leaf = DecisionTree { root: TreeNode::Leaf { counts: [5, 0] } };
        let other_leaf = DecisionTree { root: TreeNode::Leaf { counts: [0, 5] } };
        let forest = Forest {
            trees: vec![
                na_leaf.clone(),
                na_leaf.clone(),
                na_leaf.clone(),
                na_leaf,
                other_leaf.clone(),
                other_leaf.clone(),
                other_leaf,
            ],
            seed: 0,
            validation_accuracy: vec![None; TREE_COUNT],
        };
        let p = predict(&forest, &[0.0; FEATURE_COUNT]);
        assert_eq!(p.class, ForestClass::NonAtomic);
        assert_eq!(p.votes, 4);
        assert!(!p.unanimous());
    }

    #[test]
    fn leaf_tie_votes_other() {
        let tied = DecisionTree { root: TreeNode::Leaf { counts: [3, 3] } };
        assert_eq!(tied.predict(&[0.0; FEATURE_COUNT]), ForestClass::Other);
    }

    #[test]
    fn json_round_trip_is_identity() {
        let data = overlapping(4, 30, 40);
        let forest = train_forest(&data, 13).unwrap().forest;
        let restored = Forest::from_json(&forest.to_json()).unwrap();
        assert_eq!(forest, restored);
        // Re-serializing the restored model is byte-identical.
        assert_eq!(forest.to_json(), restored.to_json());
    }

    #[test]
    fn unsupported_version_rejected() {
        let data = f1_separable(10);
        let forest = train_forest(&data, 7).unwrap().forest;
        let tampered = forest.to_json().replace(
            &format!("\"format_version\": {FOREST_FORMAT_VERSION}"),
            "\"format_version\": 99",
        );
        let err = Forest::from_json(&tampered).unwrap_err();
        assert_eq!(err.code(), "unsupported_version");
    }

    #[test]
    fn malformed_json_rejected() {
        let err = Forest::from_json("{\"nope\": true}").unwrap_err();
        assert_eq!(err.code(), "serialization");
    }
}
