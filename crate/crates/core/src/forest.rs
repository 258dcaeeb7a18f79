//! Decision trees as the discriminative counterpart of the evolutionary
//! model: cumulative-template node filters scored against the original
//! input, information-gain training, and bootstrap-aggregated forests.

use crate::error::{ModelError, Violation};
use crate::evo::EvoDrm;
use crate::rng::SeedStream;
use crate::scalar::{dot, Scalar};

/// Arena-allocated tree node. A node with no children is a leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode<T> {
    /// Cumulative template filter; scored as ⟨filter | I⁰⟩ when this node is
    /// a candidate child. The root's filter is unused.
    pub filter: Vec<T>,
    pub children: Vec<usize>,
    pub histogram: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree<T> {
    pub nodes: Vec<TreeNode<T>>,
    pub dim: usize,
    pub label_count: usize,
}

#[derive(Debug, Clone)]
pub struct TreeDecision<'t, T> {
    pub leaf: usize,
    /// Child indices chosen at each depth, root downwards.
    pub path: Vec<usize>,
    pub posterior: &'t [T],
}

impl<T: Scalar> DecisionTree<T> {
    pub const ROOT: usize = 0;

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.nodes.is_empty() {
            out.push(Violation::new("nodes", "tree needs a root"));
            return out;
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.filter.len() != self.dim {
                out.push(Violation::new(
                    format!("nodes[{i}].filter"),
                    "dimension mismatch",
                ));
            }
            if node.filter.iter().any(|v| !v.is_finite()) {
                out.push(Violation::new(
                    format!("nodes[{i}].filter"),
                    "entries must be finite",
                ));
            }
            if node.histogram.len() != self.label_count {
                out.push(Violation::new(
                    format!("nodes[{i}].histogram"),
                    "length must equal label count",
                ));
            }
            let mut sum = T::zero();
            for p in &node.histogram {
                sum = sum + *p;
            }
            if (sum - T::one()).abs().as_f64() > 1e-12 {
                out.push(Violation::new(
                    format!("nodes[{i}].histogram"),
                    "not normalized",
                ));
            }
            if node.children.iter().any(|c| *c >= self.nodes.len()) {
                out.push(Violation::new(
                    format!("nodes[{i}].children"),
                    "child index out of range",
                ));
            }
        }
        out
    }

    /// Maximum number of decisions from root to a leaf.
    pub fn depth(&self) -> usize {
        fn walk<T>(nodes: &[TreeNode<T>], i: usize) -> usize {
            nodes[i]
                .children
                .iter()
                .map(|&c| 1 + walk(nodes, c))
                .max()
                .unwrap_or(0)
        }
        walk(&self.nodes, Self::ROOT)
    }

    /// Descend from the root, at each node picking the child whose filter has
    /// the largest inner product with the ORIGINAL image (ties lowest index).
    pub fn infer(&self, pixels: &[T]) -> Result<TreeDecision<'_, T>, ModelError> {
        if pixels.len() != self.dim {
            return Err(ModelError::ShapeMismatch {
                context: "tree inference image",
                expected: self.dim,
                got: pixels.len(),
            });
        }
        let mut node = Self::ROOT;
        let mut path = Vec::new();
        while !self.nodes[node].children.is_empty() {
            let mut best = T::neg_infinity();
            let mut best_child = 0;
            for (k, &child) in self.nodes[node].children.iter().enumerate() {
                let s = dot(&self.nodes[child].filter, pixels);
                if s > best {
                    best = s;
                    best_child = k;
                }
            }
            path.push(best_child);
            node = self.nodes[node].children[best_child];
        }
        Ok(TreeDecision {
            leaf: node,
            path,
            posterior: &self.nodes[node].histogram,
        })
    }

    /// The generative tree of an evolutionary model: root children are the
    /// root classes, each further level adds that level's mutations; leaves
    /// carry the model's label histograms.
    pub fn from_evo(model: &EvoDrm<T>) -> Self {
        let dim = model.dim();
        let label_count = model.label_count();
        let mut nodes = vec![TreeNode {
            filter: vec![T::zero(); dim],
            children: Vec::new(),
            histogram: vec![T::one() / T::from_f64(label_count as f64); label_count],
        }];
        // breadth-first expansion, tracking each frontier node's path prefix
        let mut frontier: Vec<(usize, Vec<T>, usize, usize)> = Vec::new();
        let indexer = model.paths();
        for c in 0..model.class_count() {
            let filter = model.root_template(c).to_vec();
            let idx = nodes.len();
            nodes.push(TreeNode {
                filter: filter.clone(),
                children: Vec::new(),
                histogram: vec![T::one() / T::from_f64(label_count as f64); label_count],
            });
            nodes[0].children.push(idx);
            frontier.push((idx, filter, c, 0));
        }
        for (level_i, level) in model.levels().iter().enumerate() {
            let mut next = Vec::new();
            for (node_idx, prefix, class, flat_g) in frontier {
                for (g, mutation) in level.mutations.iter().enumerate() {
                    let mut filter = prefix.clone();
                    for (f, m) in filter.iter_mut().zip(mutation.iter()) {
                        *f = *f + *m;
                    }
                    let child_flat = flat_g * level.mutations.len() + g;
                    let idx = nodes.len();
                    let histogram = if level_i + 1 == model.levels().len() {
                        let leaf =
                            class * indexer.nuisance_total() as usize + child_flat;
                        model.leaf_histogram(leaf).to_vec()
                    } else {
                        vec![T::one() / T::from_f64(label_count as f64); label_count]
                    };
                    nodes.push(TreeNode {
                        filter: filter.clone(),
                        children: Vec::new(),
                        histogram,
                    });
                    nodes[node_idx].children.push(idx);
                    next.push((idx, filter, class, child_flat));
                }
            }
            frontier = next;
        }
        DecisionTree {
            nodes,
            dim,
            label_count,
        }
    }
}

/// Shannon entropy (bits) of a label histogram given as counts.
fn entropy_from_counts(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    let mut h = 0.0;
    for &c in counts {
        if c > 0 {
            let p = c as f64 / n;
            h -= p * p.log2();
        }
    }
    h
}

/// Empirical information gain of a partition of labels:
/// H[labels] − Σ_k (n_k/n) H[labels_k].
pub fn information_gain(
    labels: &[usize],
    partitions: &[Vec<usize>],
    label_count: usize,
) -> f64 {
    let mut parent = vec![0_usize; label_count];
    for &l in labels {
        parent[l] += 1;
    }
    let n = labels.len();
    let mut gain = entropy_from_counts(&parent, n);
    for part in partitions {
        let mut counts = vec![0_usize; label_count];
        for &l in part {
            counts[l] += 1;
        }
        gain -= (part.len() as f64 / n as f64) * entropy_from_counts(&counts, part.len());
    }
    gain
}

#[derive(Debug, Clone)]
pub struct InfomaxConfig {
    pub depth: usize,
    /// Candidate filter pairs evaluated per node.
    pub candidates: usize,
    pub min_node_size: usize,
    /// Nonzero coordinates in each random mutation.
    pub mutation_sparsity: usize,
    pub mutation_scale: f64,
}

impl Default for InfomaxConfig {
    fn default() -> Self {
        Self {
            depth: 4,
            candidates: 8,
            min_node_size: 2,
            mutation_sparsity: 2,
            mutation_scale: 1.0,
        }
    }
}

fn empirical_histogram<T: Scalar>(labels: &[usize], members: &[usize], label_count: usize) -> Vec<T> {
    let mut counts = vec![0_usize; label_count];
    for &m in members {
        counts[labels[m]] += 1;
    }
    let n = members.len().max(1) as f64;
    counts
        .into_iter()
        .map(|c| T::from_f64(c as f64 / n))
        .collect()
}

fn is_pure(labels: &[usize], members: &[usize]) -> bool {
    members.windows(2).all(|w| labels[w[0]] == labels[w[1]])
        || members.iter().all(|&m| labels[m] == labels[members[0]])
}

/// Random signed coordinate-sparse mutation vector.
fn random_mutation<T: Scalar>(dim: usize, cfg: &InfomaxConfig, rng: &mut SeedStream) -> Vec<T> {
    let mut out = vec![T::zero(); dim];
    let k = cfg.mutation_sparsity.clamp(1, dim);
    for idx in rng.distinct_indices(k, dim) {
        let sign = if rng.bernoulli(0.5) { 1.0 } else { -1.0 };
        out[idx] = T::from_f64(sign * cfg.mutation_scale * (0.5 + rng.uniform()));
    }
    out
}

/// Greedy level-by-level training by empirical information gain over random
/// additive-mutation candidate splits. Degenerate nodes become leaves.
pub fn infomax_train<T: Scalar>(
    samples: &[Vec<T>],
    labels: &[usize],
    label_count: usize,
    cfg: &InfomaxConfig,
    rng: &mut SeedStream,
) -> Result<DecisionTree<T>, ModelError> {
    if samples.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if cfg.candidates < 2 {
        return Err(ModelError::BadArgument("need K >= 2 candidate splits".into()));
    }
    if samples.len() != labels.len() {
        return Err(ModelError::BadArgument(
            "label count must match sample count".into(),
        ));
    }
    let dim = samples[0].len();
    let all: Vec<usize> = (0..samples.len()).collect();
    let mut tree = DecisionTree {
        nodes: vec![TreeNode {
            filter: vec![T::zero(); dim],
            children: Vec::new(),
            histogram: empirical_histogram(labels, &all, label_count),
        }],
        dim,
        label_count,
    };
    // work queue: (node index, member samples, depth, cumulative filter)
    let mut queue = vec![(0_usize, all, 0_usize, vec![T::zero(); dim])];
    while let Some((node, members, depth, prefix)) = queue.pop() {
        if depth >= cfg.depth
            || members.len() < cfg.min_node_size
            || is_pure(labels, &members)
        {
            continue;
        }
        // evaluate K random candidate filter pairs
        let mut best: Option<(f64, Vec<T>, Vec<T>, Vec<usize>, Vec<usize>)> = None;
        for _ in 0..cfg.candidates {
            let mut f1 = prefix.clone();
            let mut f2 = prefix.clone();
            for (v, m) in f1.iter_mut().zip(random_mutation::<T>(dim, cfg, rng)) {
                *v = *v + m;
            }
            for (v, m) in f2.iter_mut().zip(random_mutation::<T>(dim, cfg, rng)) {
                *v = *v + m;
            }
            let mut left = Vec::new();
            let mut right = Vec::new();
            for &m in &members {
                let s1 = dot(&f1, &samples[m]);
                let s2 = dot(&f2, &samples[m]);
                if s1 >= s2 {
                    left.push(m);
                } else {
                    right.push(m);
                }
            }
            let member_labels: Vec<usize> = members.iter().map(|&m| labels[m]).collect();
            let parts = vec![
                left.iter().map(|&m| labels[m]).collect::<Vec<_>>(),
                right.iter().map(|&m| labels[m]).collect::<Vec<_>>(),
            ];
            let gain = information_gain(&member_labels, &parts, label_count);
            if best.as_ref().map_or(true, |(g, ..)| gain > *g) {
                best = Some((gain, f1, f2, left, right));
            }
        }
        let (gain, f1, f2, left, right) = best.expect("K >= 2 candidates evaluated");
        if gain <= 0.0 || left.is_empty() || right.is_empty() {
            continue; // no informative split: the node stays a leaf
        }
        for (filter, part) in [(f1, left), (f2, right)] {
            let idx = tree.nodes.len();
            tree.nodes.push(TreeNode {
                filter: filter.clone(),
                children: Vec::new(),
                histogram: empirical_histogram(labels, &part, label_count),
            });
            tree.nodes[node].children.push(idx);
            queue.push((idx, part, depth + 1, filter));
        }
    }
    Ok(tree)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest<T> {
    pub trees: Vec<DecisionTree<T>>,
}

impl<T: Scalar> Forest<T> {
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.trees.is_empty() {
            out.push(Violation::new("trees", "forest needs >= 1 tree"));
            return out;
        }
        let dim = self.trees[0].dim;
        for (i, tree) in self.trees.iter().enumerate() {
            if tree.dim != dim {
                out.push(Violation::new(
                    format!("trees[{i}]"),
                    "all trees must share the input dimension",
                ));
            }
            out.extend(tree.validate());
        }
        out
    }

    /// Arithmetic mean of per-tree leaf posteriors, in fixed tree order.
    pub fn infer(&self, pixels: &[T]) -> Result<Vec<T>, ModelError> {
        let mut acc = vec![T::zero(); self.trees[0].label_count];
        for tree in &self.trees {
            let decision = tree.infer(pixels)?;
            for (a, p) in acc.iter_mut().zip(decision.posterior.iter()) {
                *a = *a + *p;
            }
        }
        let inv = T::one() / T::from_f64(self.trees.len() as f64);
        for a in acc.iter_mut() {
            *a = *a * inv;
        }
        Ok(acc)
    }

    pub fn classify(&self, pixels: &[T]) -> Result<usize, ModelError> {
        let posterior = self.infer(pixels)?;
        let mut best = T::neg_infinity();
        let mut label = 0;
        for (i, p) in posterior.iter().enumerate() {
            if *p > best {
                best = *p;
                label = i;
            }
        }
        Ok(label)
    }
}

#[derive(Debug, Clone)]
pub struct ForestRun<T> {
    pub forest: Forest<T>,
    /// Bootstrap draw indices per tree (with replacement), as drawn.
    pub bootstrap_indices: Vec<Vec<usize>>,
}

/// Train T trees, each on a with-replacement bootstrap sample of
/// `fraction`·N draws (or on the full data in fixed order when `bootstrap`
/// is off). Each tree gets a forked child stream, in tree order.
#[allow(clippy::too_many_arguments)]
pub fn forest_train<T: Scalar>(
    samples: &[Vec<T>],
    labels: &[usize],
    label_count: usize,
    tree_count: usize,
    fraction: f64,
    bootstrap: bool,
    cfg: &InfomaxConfig,
    rng: &mut SeedStream,
) -> Result<ForestRun<T>, ModelError> {
    if tree_count == 0 {
        return Err(ModelError::BadArgument("need T >= 1 trees".into()));
    }
    if samples.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let n = samples.len();
    let draws = ((fraction * n as f64).ceil() as usize).max(1);
    let mut trees = Vec::with_capacity(tree_count);
    let mut bootstrap_indices = Vec::with_capacity(tree_count);
    for _ in 0..tree_count {
        let mut tree_rng = rng.fork();
        let indices: Vec<usize> = if bootstrap {
            (0..draws).map(|_| tree_rng.index(n)).collect()
        } else {
            (0..n).collect()
        };
        let tree_samples: Vec<Vec<T>> = indices.iter().map(|&i| samples[i].clone()).collect();
        let tree_labels: Vec<usize> = indices.iter().map(|&i| labels[i]).collect();
        trees.push(infomax_train(
            &tree_samples,
            &tree_labels,
            label_count,
            cfg,
            &mut tree_rng,
        )?);
        bootstrap_indices.push(indices);
    }
    Ok(ForestRun {
        forest: Forest { trees },
        bootstrap_indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_branch_inference_example() {
        // root children filters (1,0) and (0,1); I = (0.2, 0.8) → right child
        let tree = DecisionTree {
            nodes: vec![
                TreeNode {
                    filter: vec![0.0, 0.0],
                    children: vec![1, 2],
                    histogram: vec![0.5, 0.5],
                },
                TreeNode {
                    filter: vec![1.0, 0.0],
                    children: vec![],
                    histogram: vec![1.0, 0.0],
                },
                TreeNode {
                    filter: vec![0.0, 1.0],
                    children: vec![],
                    histogram: vec![0.0, 1.0],
                },
            ],
            dim: 2,
            label_count: 2,
        };
        let decision = tree.infer(&[0.2, 0.8]).unwrap();
        assert_eq!(decision.leaf, 2);
        assert_eq!(decision.posterior, &[0.0, 1.0]);
    }

    #[test]
    fn single_leaf_tree_returns_its_histogram() {
        let tree = DecisionTree {
            nodes: vec![TreeNode {
                filter: vec![0.0],
                children: vec![],
                histogram: vec![0.25, 0.75],
            }],
            dim: 1,
            label_count: 2,
        };
        let decision = tree.infer(&[3.0]).unwrap();
        assert_eq!(decision.leaf, 0);
        assert!(decision.path.is_empty());
    }

    #[test]
    fn information_gain_prefers_clean_split() {
        let labels = vec![0, 0, 1, 1];
        let clean = vec![vec![0, 0], vec![1, 1]];
        let useless = vec![vec![0, 1], vec![0, 1]];
        assert!((information_gain(&labels, &clean, 2) - 1.0).abs() < 1e-12);
        assert_eq!(information_gain(&labels, &useless, 2), 0.0);
    }

    #[test]
    fn pure_node_becomes_leaf() {
        let samples = vec![vec![0.0, 1.0], vec![0.5, 0.5], vec![1.0, 0.0]];
        let labels = vec![1, 1, 1];
        let mut rng = SeedStream::new(2);
        let tree =
            infomax_train(&samples, &labels, 2, &InfomaxConfig::default(), &mut rng).unwrap();
        assert_eq!(tree.nodes.len(), 1);
        assert_eq!(tree.nodes[0].histogram, vec![0.0, 1.0]);
    }

    #[test]
    fn infomax_separates_separable_labels() {
        let mut rng = SeedStream::new(7);
        let mut samples = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let c = i % 2;
            let sign = if c == 0 { 1.0 } else { -1.0 };
            samples.push(vec![sign * (1.0 + 0.05 * rng.normal()), 0.05 * rng.normal()]);
            labels.push(c);
        }
        let cfg = InfomaxConfig {
            depth: 3,
            candidates: 16,
            ..InfomaxConfig::default()
        };
        let tree = infomax_train(&samples, &labels, 2, &cfg, &mut rng).unwrap();
        let mut correct = 0;
        for (s, l) in samples.iter().zip(labels.iter()) {
            let decision = tree.infer(s).unwrap();
            let pred = decision
                .posterior
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            if pred == *l {
                correct += 1;
            }
        }
        assert!(correct >= 36, "only {correct}/40 correct");
    }

    #[test]
    fn forest_mean_posterior_example() {
        let make_tree = |p: f64| DecisionTree {
            nodes: vec![TreeNode {
                filter: vec![0.0],
                children: vec![],
                histogram: vec![p, 1.0 - p],
            }],
            dim: 1,
            label_count: 2,
        };
        let forest = Forest {
            trees: vec![make_tree(0.8), make_tree(0.6)],
        };
        let posterior = forest.infer(&[0.0]).unwrap();
        assert!((posterior[0] - 0.7).abs() < 1e-15);
        assert!((posterior[1] - 0.3).abs() < 1e-15);

        let single = Forest {
            trees: vec![make_tree(0.8)],
        };
        assert_eq!(
            single.infer(&[0.0]).unwrap(),
            single.trees[0].nodes[0].histogram
        );
    }

    #[test]
    fn forest_without_bootstrap_equals_single_tree() {
        let mut data_rng = SeedStream::new(99);
        let samples: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![i as f64 / 10.0 - 1.0, data_rng.normal() * 0.1])
            .collect();
        let labels: Vec<usize> = (0..20).map(|i| usize::from(i >= 10)).collect();
        let cfg = InfomaxConfig::default();
        let mut rng = SeedStream::new(5);
        let run = forest_train(&samples, &labels, 2, 1, 1.0, false, &cfg, &mut rng).unwrap();
        let mut rng2 = SeedStream::new(5);
        let mut tree_rng = rng2.fork();
        let tree = infomax_train(&samples, &labels, 2, &cfg, &mut tree_rng).unwrap();
        assert_eq!(run.forest.trees[0], tree);
    }

    #[test]
    fn bootstrap_coverage_near_632() {
        let mut rng = SeedStream::new(11);
        let n = 400;
        let samples: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let cfg = InfomaxConfig {
            depth: 1,
            candidates: 2,
            ..InfomaxConfig::default()
        };
        let run = forest_train(&samples, &labels, 2, 30, 1.0, true, &cfg, &mut rng).unwrap();
        let mut coverage = 0.0;
        for indices in &run.bootstrap_indices {
            let unique: std::collections::BTreeSet<usize> = indices.iter().cloned().collect();
            coverage += unique.len() as f64 / n as f64;
        }
        coverage /= run.bootstrap_indices.len() as f64;
        assert!((coverage - 0.632).abs() < 0.03, "coverage {coverage}");
    }
}
