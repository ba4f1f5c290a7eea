//! Exact k-nearest-neighbor queries and neighbor class frequencies.
//!
//! Search is a brute-force scan. Ties at the k-th distance are resolved by a
//! uniform random choice among all tied rows, drawn from the caller's stream,
//! so results are replayable.

use rand::seq::index;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metric::Metric;
use crate::rng::RngStream;

/// The k nearest rows of a reference dataset, closest first.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    /// Distinct row indices into the reference dataset.
    pub indices: Vec<usize>,
    /// Non-decreasing distances matching `indices`.
    pub distances: Vec<f64>,
    /// Set when `k` exceeded the reference size and was clamped.
    pub clamped: bool,
}

impl NeighborSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Neighbor class frequencies `π_ℓ = #{neighbors with label ℓ} / k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights {
    counts: Vec<usize>,
    k: usize,
}

impl ClassWeights {
    pub(crate) fn from_counts(counts: Vec<usize>) -> Self {
        let k = counts.iter().sum();
        Self { counts, k }
    }

    /// Effective neighbor count (after clamping).
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Weight of class `ℓ` (1-based).
    pub fn weight(&self, class: usize) -> f64 {
        self.counts[class - 1] as f64 / self.k as f64
    }

    /// The simplex vector, index `ℓ - 1` for class `ℓ`.
    pub fn weights(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.k as f64).collect()
    }
}

/// Positions of the `k` smallest entries of `distances`, ordered by distance.
///
/// Rows strictly closer than the k-th distance are always kept; the remaining
/// slots are filled by a uniformly random subset of the rows tied at the k-th
/// distance. The stream is consumed only when such a tie exists.
pub(crate) fn select_nearest(distances: &[f64], k: usize, rng: &RngStream) -> Vec<usize> {
    let n = distances.len();
    let k = k.min(n);
    if k == 0 {
        return Vec::new();
    }
    let by_distance = |a: &usize, b: &usize| distances[*a].total_cmp(&distances[*b]).then(a.cmp(b));
    let mut order: Vec<usize> = (0..n).collect();
    if k < n {
        order.select_nth_unstable_by(k - 1, by_distance);
        order.truncate(k);
    }
    order.sort_unstable_by(by_distance);

    let kth = distances[order[k - 1]];
    let strictly_closer = order.partition_point(|&i| distances[i] < kth);
    let slots = k - strictly_closer;
    let tied: Vec<usize> = (0..n).filter(|&i| distances[i] == kth).collect();
    if tied.len() > slots {
        let mut r = rng.rng();
        let chosen = index::sample(&mut r, tied.len(), slots);
        order.truncate(strictly_closer);
        order.extend(chosen.iter().map(|c| tied[c]));
    }
    order
}

fn validate_query(query: &[f64], reference: &Dataset, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if reference.is_empty() {
        return Err(Error::Usage("nearest-neighbor search over an empty dataset".into()));
    }
    reference.check_point(query)
}

/// Exact k nearest rows of `reference` to `query`.
///
/// `k > n` is clamped to `n` and reported through [`NeighborSet::clamped`].
pub fn k_nearest(
    query: &[f64],
    reference: &Dataset,
    k: usize,
    metric: &Metric,
    rng: &RngStream,
) -> Result<NeighborSet> {
    validate_query(query, reference, k)?;
    let clamped = k > reference.n_rows();
    if clamped {
        log::warn!("k = {k} exceeds the {} reference rows; clamping", reference.n_rows());
    }
    let distances: Vec<f64> = reference.rows().map(|r| metric.dist(query, r)).collect();
    let indices = select_nearest(&distances, k, rng);
    let distances = indices.iter().map(|&i| distances[i]).collect();
    Ok(NeighborSet { indices, distances, clamped })
}

/// Class frequencies among the k nearest labeled rows of `reference`.
pub fn class_weights(
    query: &[f64],
    reference: &Dataset,
    k: usize,
    metric: &Metric,
    rng: &RngStream,
) -> Result<ClassWeights> {
    let labels = reference.require_labels()?;
    let nn = k_nearest(query, reference, k, metric, rng)?;
    let mut counts = vec![0usize; reference.n_classes()];
    for &i in &nn.indices {
        counts[labels[i] - 1] += 1;
    }
    Ok(ClassWeights::from_counts(counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(values: &[f64], labels: Option<Vec<usize>>) -> Dataset {
        match labels {
            Some(l) => Dataset::labeled(values.to_vec(), 1, l, 2).unwrap(),
            None => Dataset::new(values.to_vec(), 1).unwrap(),
        }
    }

    #[test]
    fn nearest_on_a_line() {
        let r = line(&[-1.0, 2.0, 0.5], None);
        let nn = k_nearest(&[0.0], &r, 1, &Metric::euclidean(), &RngStream::new(0)).unwrap();
        assert_eq!(nn.indices, vec![2]);
        assert_eq!(nn.distances, vec![0.5]);
    }

    #[test]
    fn query_on_a_row() {
        let r = line(&[3.0, 1.0, 4.0, 1.5], None);
        let nn = k_nearest(&[4.0], &r, 1, &Metric::euclidean(), &RngStream::new(0)).unwrap();
        assert_eq!(nn.indices, vec![2]);
        assert_eq!(nn.distances, vec![0.0]);
    }

    #[test]
    fn clamps_k() {
        let r = line(&[3.0, 1.0], None);
        let nn = k_nearest(&[0.0], &r, 5, &Metric::euclidean(), &RngStream::new(0)).unwrap();
        assert!(nn.clamped);
        assert_eq!(nn.indices, vec![1, 0]);
    }

    #[test]
    fn errors() {
        let r = line(&[3.0, 1.0], None);
        let m = Metric::euclidean();
        let s = RngStream::new(0);
        assert!(k_nearest(&[0.0], &r, 0, &m, &s).is_err());
        assert!(k_nearest(&[0.0, 1.0], &r, 1, &m, &s).is_err());
        assert!(k_nearest(&[0.0], &Dataset::empty(1).unwrap(), 1, &m, &s).is_err());
        assert!(class_weights(&[0.0], &r, 1, &m, &s).is_err());
    }

    #[test]
    fn weights_count_neighbor_labels() {
        // neighbor labels by distance from 0: 1,1,2,1,2
        let r = line(&[0.1, 0.2, 0.3, 0.4, 0.5, 9.0], Some(vec![1, 1, 2, 1, 2, 2]));
        let w = class_weights(&[0.0], &r, 5, &Metric::euclidean(), &RngStream::new(0)).unwrap();
        assert_eq!(w.weights(), vec![0.6, 0.4]);
        let r = line(&[0.1, 0.2, 5.0], Some(vec![2, 2, 1]));
        let w = class_weights(&[0.0], &r, 2, &Metric::euclidean(), &RngStream::new(0)).unwrap();
        assert_eq!(w.weights(), vec![0.0, 1.0]);
    }

    #[test]
    fn ties_split_at_random_but_replayably() {
        // five rows at distance 1, pick 2 of them
        let r = line(&[1.0, -1.0, 1.0, -1.0, 1.0, 3.0], None);
        let m = Metric::euclidean();
        let mut seen = std::collections::BTreeSet::new();
        for s in 0..40 {
            let stream = RngStream::new(s);
            let a = k_nearest(&[0.0], &r, 2, &m, &stream).unwrap();
            let b = k_nearest(&[0.0], &r, 2, &m, &stream).unwrap();
            assert_eq!(a, b);
            assert!(a.indices.iter().all(|&i| i < 5));
            seen.insert(a.indices.clone());
        }
        assert!(seen.len() > 3, "tie choices should vary with the stream");
    }

    #[test]
    fn k_equals_n_returns_everything_sorted() {
        let vals = [5.0, -2.0, 0.3, 7.0, 1.1];
        let r = line(&vals, None);
        let nn = k_nearest(&[0.0], &r, 5, &Metric::euclidean(), &RngStream::new(1)).unwrap();
        let mut idx = nn.indices.clone();
        idx.sort();
        assert_eq!(idx, vec![0, 1, 2, 3, 4]);
        assert!(nn.distances.windows(2).all(|w| w[0] <= w[1]));
    }

    proptest! {
        #[test]
        fn row_order_does_not_matter_without_ties(
            vals in prop::collection::vec(-50f64..50.0, 2..40),
            q in -50f64..50.0,
            k in 1usize..10,
            seed in any::<u64>(),
        ) {
            let r = line(&vals, None);
            let m = Metric::euclidean();
            let s = RngStream::new(seed);
            let d: Vec<f64> = vals.iter().map(|v| (v - q).abs()).collect();
            let mut sorted = d.clone();
            sorted.sort_by(f64::total_cmp);
            prop_assume!(sorted.windows(2).all(|w| w[0] < w[1]));

            let nn = k_nearest(&[q], &r, k, &m, &s).unwrap();
            let perm: Vec<usize> = (0..vals.len()).rev().collect();
            let reversed = r.select(&perm);
            let nn2 = k_nearest(&[q], &reversed, k, &m, &s).unwrap();
            let back: Vec<usize> = nn2.indices.iter().map(|&i| perm[i]).collect();
            prop_assert_eq!(nn.indices, back);
        }
    }
}
