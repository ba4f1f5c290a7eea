use rand::Rng;

use crate::data::Dataset;
use crate::metric::Metric;
use crate::neighbors::select_nearest;
use crate::rng::{Purpose, RngStream};

/// k-nearest-neighbor majority vote. Ties in the vote are split uniformly at
/// random, as are distance ties at the k-th neighbor.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    train: Dataset,
    k: usize,
    metric: Metric,
}

impl KnnModel {
    pub(crate) fn fit(train: &Dataset, k: usize, metric: Metric) -> Self {
        if k > train.n_rows() {
            log::warn!("knn k = {k} exceeds the {} training rows; clamping", train.n_rows());
        }
        Self { train: train.clone(), k: k.min(train.n_rows()), metric }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_features(&self) -> usize {
        self.train.n_features()
    }

    pub fn n_classes(&self) -> usize {
        self.train.n_classes()
    }

    pub(crate) fn predict(&self, x: &[f64], rng: &RngStream) -> usize {
        let labels = self.train.labels().expect("fitted on labeled data");
        let dists: Vec<f64> = self.train.rows().map(|r| self.metric.dist(x, r)).collect();
        let nearest = select_nearest(&dists, self.k, &rng.tagged(Purpose::TieBreak));
        let mut votes = vec![0usize; self.n_classes()];
        for i in nearest {
            votes[labels[i] - 1] += 1;
        }
        let top = *votes.iter().max().expect("at least two classes");
        let winners: Vec<usize> = (0..votes.len()).filter(|&c| votes[c] == top).collect();
        let pick = if winners.len() == 1 {
            winners[0]
        } else {
            winners[rng.tagged(Purpose::Predict).rng().random_range(0..winners.len())]
        };
        pick + 1
    }
}
