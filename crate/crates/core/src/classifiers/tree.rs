//! CART classification tree with Gini impurity.
//!
//! Splits are axis-aligned at midpoints between consecutive distinct values;
//! `x[feature] <= threshold` goes left. Growth stops at `max_depth`, at pure
//! nodes, when no split leaves `min_leaf` rows on both sides, or when the best
//! split fails to lower impurity.

use rand::seq::index;

use crate::data::Dataset;
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// `distribution` holds training class frequencies, index `ℓ - 1`.
    Leaf {
        distribution: Vec<f64>,
        label: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeModel {
    nodes: Vec<TreeNode>,
    n_features: usize,
    n_classes: usize,
}

struct Grower<'a> {
    data: &'a Dataset,
    labels: &'a [usize],
    max_depth: usize,
    min_leaf: usize,
    max_features: Option<usize>,
    rng: &'a RngStream,
    nodes: Vec<TreeNode>,
}

/// `n * gini` for class counts summing to `n`.
fn scaled_gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    n as f64 - counts.iter().map(|&c| (c * c) as f64).sum::<f64>() / n as f64
}

impl Grower<'_> {
    fn leaf(&self, counts: &[usize], n: usize) -> TreeNode {
        let distribution: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
        let label = super::argmax_label(&distribution);
        TreeNode::Leaf { distribution, label }
    }

    /// Best `(feature, threshold, impurity)` over the candidate features.
    fn best_split(&self, rows: &[usize], features: &[usize]) -> Option<(usize, f64, f64)> {
        let n = rows.len();
        let l = self.data.n_classes();
        let mut total = vec![0usize; l];
        for &r in rows {
            total[self.labels[r] - 1] += 1;
        }
        let mut best: Option<(usize, f64, f64)> = None;
        let mut sorted = rows.to_vec();
        for &f in features {
            let value = |r: usize| self.data.row(r)[f];
            sorted.sort_by(|&a, &b| value(a).total_cmp(&value(b)).then(a.cmp(&b)));
            let mut left = vec![0usize; l];
            for i in 0..n - 1 {
                left[self.labels[sorted[i]] - 1] += 1;
                let (nl, nr) = (i + 1, n - i - 1);
                if nl < self.min_leaf || nr < self.min_leaf {
                    continue;
                }
                let (lo, hi) = (value(sorted[i]), value(sorted[i + 1]));
                if lo >= hi {
                    continue;
                }
                let right: Vec<usize> = total.iter().zip(&left).map(|(t, a)| t - a).collect();
                let imp = scaled_gini(&left, nl) + scaled_gini(&right, nr);
                if best.is_none_or(|b| imp < b.2) {
                    let mid = lo + (hi - lo) / 2.0;
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some((f, threshold, imp));
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let n = rows.len();
        let mut counts = vec![0usize; self.data.n_classes()];
        for &r in &rows {
            counts[self.labels[r] - 1] += 1;
        }
        let leaf = self.leaf(&counts, n);
        self.nodes.push(leaf);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if depth >= self.max_depth || pure || n < 2 * self.min_leaf {
            return id;
        }
        let p = self.data.n_features();
        let features: Vec<usize> = match self.max_features {
            Some(m) if m < p => {
                let mut r = self.rng.child(id as u64).rng();
                let mut f = index::sample(&mut r, p, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..p).collect(),
        };
        let Some((feature, threshold, imp)) = self.best_split(&rows, &features) else {
            return id;
        };
        if scaled_gini(&counts, n) - imp <= 1e-12 * n as f64 {
            return id;
        }
        let (l, r): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| self.data.row(i)[feature] <= threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = TreeNode::Split { feature, threshold, left, right };
        id
    }
}

impl TreeModel {
    pub(crate) fn fit(
        train: &Dataset,
        max_depth: usize,
        min_leaf: usize,
        max_features: Option<usize>,
        rng: &RngStream,
    ) -> Self {
        let labels = train.labels().expect("fit checks labels");
        let mut g = Grower { data: train, labels, max_depth, min_leaf, max_features, rng, nodes: Vec::new() };
        g.grow((0..train.n_rows()).collect(), 0);
        Self { nodes: g.nodes, n_features: train.n_features(), n_classes: train.n_classes() }
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Nodes in creation order; index 0 is the root.
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub(crate) fn predict(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { label, .. } => return *label,
                TreeNode::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}
