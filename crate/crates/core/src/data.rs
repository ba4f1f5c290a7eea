//! Dense labeled/unlabeled datasets.
//!
//! Class labels are 1-based contiguous integers `1..=L`. Front ends that read
//! arbitrary label strings keep the mapping in [`Dataset::class_names`], where
//! entry `ℓ - 1` is the original name of class `ℓ`.

use crate::error::{Error, Result};

/// Row-major feature matrix with optional class labels.
///
/// Immutable after construction; every operation that "modifies" a dataset
/// returns a new one. Zero-row datasets are allowed so that empty test files
/// can flow through the pipeline; operations that need rows check for them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    n_rows: usize,
    n_features: usize,
    labels: Option<Vec<usize>>,
    n_classes: usize,
    class_names: Option<Vec<String>>,
}

impl Dataset {
    /// Unlabeled dataset from a row-major buffer.
    pub fn new(features: Vec<f64>, n_features: usize) -> Result<Self> {
        Self::build(features, n_features, None, 0)
    }

    /// Labeled dataset. Labels must lie in `1..=n_classes` and `n_classes >= 2`.
    pub fn labeled(features: Vec<f64>, n_features: usize, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        Self::build(features, n_features, Some(labels), n_classes)
    }

    /// Build from a slice of rows. All rows must have the same length.
    pub fn from_rows(rows: &[Vec<f64>], labels: Option<Vec<usize>>, n_classes: usize) -> Result<Self> {
        let n_features = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Data("cannot infer the feature dimension from zero rows".into()))?;
        let mut features = Vec::with_capacity(rows.len() * n_features);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_features {
                return Err(Error::Data(format!("row {i} has {} features, expected {n_features}", row.len())));
            }
            features.extend_from_slice(row);
        }
        Self::build(features, n_features, labels, n_classes)
    }

    /// An empty (zero-row) unlabeled dataset with `n_features` columns.
    pub fn empty(n_features: usize) -> Result<Self> {
        Self::build(Vec::new(), n_features, None, 0)
    }

    fn build(features: Vec<f64>, n_features: usize, labels: Option<Vec<usize>>, n_classes: usize) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::Data("datasets need at least one feature".into()));
        }
        if !features.len().is_multiple_of(n_features) {
            return Err(Error::Data(format!(
                "buffer of {} values is not a multiple of {n_features} features",
                features.len()
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite feature value at row {}, column {}",
                pos / n_features,
                pos % n_features
            )));
        }
        let n_rows = features.len() / n_features;
        if let Some(labels) = &labels {
            if n_classes < 2 {
                return Err(Error::Data(format!("labeled datasets need at least 2 classes, got {n_classes}")));
            }
            if labels.len() != n_rows {
                return Err(Error::Data(format!("{} labels for {n_rows} rows", labels.len())));
            }
            if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l == 0 || l > n_classes) {
                return Err(Error::Data(format!("label {l} at row {i} is outside 1..={n_classes}")));
            }
        }
        Ok(Self {
            features,
            n_rows,
            n_features,
            n_classes: if labels.is_some() { n_classes } else { 0 },
            labels,
            class_names: None,
        })
    }

    /// Attach original class names (entry `ℓ-1` names class `ℓ`).
    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if self.labels.is_some() && names.len() != self.n_classes {
            return Err(Error::Data(format!("{} class names for {} classes", names.len(), self.n_classes)));
        }
        self.class_names = Some(names);
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows == 0
    }

    /// Number of classes `L` (0 for unlabeled data).
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn is_labeled(&self) -> bool {
        self.labels.is_some()
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    /// Row-major feature buffer.
    pub fn features(&self) -> &[f64] {
        &self.features
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.n_features)
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Labels, or a usage error when the dataset is unlabeled.
    pub fn require_labels(&self) -> Result<&[usize]> {
        self.labels.as_deref().ok_or_else(|| Error::Usage("operation requires a labeled dataset".into()))
    }

    /// Per-class row counts, index `ℓ - 1` for class `ℓ`.
    pub fn class_counts(&self) -> Result<Vec<usize>> {
        let labels = self.require_labels()?;
        let mut counts = vec![0usize; self.n_classes];
        for &l in labels {
            counts[l - 1] += 1;
        }
        Ok(counts)
    }

    /// Row indices carrying label `class` (1-based), ascending.
    pub fn rows_of_class(&self, class: usize) -> Result<Vec<usize>> {
        let labels = self.require_labels()?;
        Ok(labels.iter().enumerate().filter(|(_, &l)| l == class).map(|(i, _)| i).collect())
    }

    /// Copy the given rows (with their labels) into a new dataset.
    /// Indices may repeat.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            features,
            n_rows: indices.len(),
            n_features: self.n_features,
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
            n_classes: self.n_classes,
            class_names: self.class_names.clone(),
        }
    }

    /// Same features without labels.
    pub fn without_labels(&self) -> Dataset {
        Dataset {
            features: self.features.clone(),
            n_rows: self.n_rows,
            n_features: self.n_features,
            labels: None,
            n_classes: 0,
            class_names: None,
        }
    }

    /// Same rows with the labels replaced.
    pub fn with_labels(&self, labels: Vec<usize>, n_classes: usize) -> Result<Dataset> {
        let ds = Self::build(self.features.clone(), self.n_features, Some(labels), n_classes)?;
        Ok(ds)
    }

    pub(crate) fn check_dimension(&self, other: &Dataset) -> Result<()> {
        if self.n_features != other.n_features {
            return Err(Error::DimensionMismatch { expected: self.n_features, got: other.n_features });
        }
        Ok(())
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch { expected: self.n_features, got: x.len() });
        }
        Ok(())
    }

    /// Fraction of rows in each class; see [`class_proportions`].
    pub fn class_proportions(&self) -> Result<Vec<f64>> {
        class_proportions(self)
    }
}

/// Fraction of rows carrying each label, index `ℓ - 1` for class `ℓ`.
///
/// Errors with [`Error::Usage`] on unlabeled data. An empty labeled dataset
/// has no defined proportions and is rejected as well.
pub fn class_proportions(d: &Dataset) -> Result<Vec<f64>> {
    let counts = d.class_counts()?;
    if d.n_rows() == 0 {
        return Err(Error::Usage("class proportions of an empty dataset".into()));
    }
    Ok(proportions_from_counts(&counts))
}

pub(crate) fn proportions_from_counts(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    let total = total as f64;
    counts.iter().map(|&c| c as f64 / total).collect()
}
