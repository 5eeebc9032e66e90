//! Datasets of precomputed embeddings: representation, file formats,
//! stratified splits, mini-batching, and a synthetic generator with a
//! controllable sensitive-attribute signal.

mod io;
mod split;
mod synthetic;

pub use io::{load_dataset, read_dataset, save_dataset, write_dataset, DatasetFormat, DATA_MAGIC};
pub use split::{batches, split, split_indices, BatchPlan, BatchStream};
pub use synthetic::{generate_synthetic, orthonormal_directions, SyntheticSpec};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Feature vectors with a target label `y` and a sensitive attribute `s`
/// per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset<T> {
    features: Matrix<T>,
    labels: Vec<usize>,
    groups: Vec<usize>,
    n_classes: usize,
    n_groups: usize,
    class_names: Option<Vec<String>>,
    group_names: Option<Vec<String>>,
}

impl<T: Scalar> EmbeddingDataset<T> {
    pub fn new(
        features: Matrix<T>,
        labels: Vec<usize>,
        groups: Vec<usize>,
        n_classes: usize,
        n_groups: usize,
    ) -> Result<Self> {
        let (n, d) = features.shape();
        if n == 0 || d == 0 {
            return Err(Error::data(format!("dataset must be non-empty, got {n}x{d}")));
        }
        if labels.len() != n || groups.len() != n {
            return Err(Error::data(format!(
                "{n} rows with {} labels and {} sensitive attributes",
                labels.len(),
                groups.len()
            )));
        }
        if n_classes == 0 || n_groups == 0 {
            return Err(Error::data("class and group counts must be positive"));
        }
        if let Some(i) = labels.iter().position(|&y| y >= n_classes) {
            return Err(Error::data(format!(
                "record {i}: label {} outside [0, {n_classes})",
                labels[i]
            )));
        }
        if let Some(i) = groups.iter().position(|&s| s >= n_groups) {
            return Err(Error::data(format!(
                "record {i}: sensitive attribute {} outside [0, {n_groups})",
                groups[i]
            )));
        }
        if let Some(i) = (0..n).find(|&i| features.row(i).iter().any(|v| !v.is_finite())) {
            return Err(Error::data(format!("record {i}: non-finite feature")));
        }
        Ok(Self {
            features,
            labels,
            groups,
            n_classes,
            n_groups,
            class_names: None,
            group_names: None,
        })
    }

    pub fn with_names(mut self, classes: Option<Vec<String>>, groups: Option<Vec<String>>) -> Result<Self> {
        if let Some(c) = &classes {
            if c.len() != self.n_classes {
                return Err(Error::data(format!(
                    "{} class names for {} classes",
                    c.len(),
                    self.n_classes
                )));
            }
        }
        if let Some(g) = &groups {
            if g.len() != self.n_groups {
                return Err(Error::data(format!(
                    "{} group names for {} groups",
                    g.len(),
                    self.n_groups
                )));
            }
        }
        self.class_names = classes;
        self.group_names = groups;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix<T> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    pub fn group_names(&self) -> Option<&[String]> {
        self.group_names.as_deref()
    }

    /// Number of rows in every `(y, s)` cell, indexed `[y][s]`.
    pub fn cell_counts(&self) -> Vec<Vec<usize>> {
        let mut counts = vec![vec![0; self.n_groups]; self.n_classes];
        for (&y, &s) in self.labels.iter().zip(&self.groups) {
            counts[y][s] += 1;
        }
        counts
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::data("subset of zero rows"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::data(format!("row {bad} outside dataset of {}", self.len())));
        }
        Ok(Self {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            groups: indices.iter().map(|&i| self.groups[i]).collect(),
            n_classes: self.n_classes,
            n_groups: self.n_groups,
            class_names: self.class_names.clone(),
            group_names: self.group_names.clone(),
        })
    }

    pub fn cast<U: Scalar>(&self) -> EmbeddingDataset<U> {
        EmbeddingDataset {
            features: self.features.cast(),
            labels: self.labels.clone(),
            groups: self.groups.clone(),
            n_classes: self.n_classes,
            n_groups: self.n_groups,
            class_names: self.class_names.clone(),
            group_names: self.group_names.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_labels() {
        let x = Matrix::<f64>::zeros(2, 3);
        assert!(matches!(
            EmbeddingDataset::new(x.clone(), vec![0, 2], vec![0, 1], 2, 2),
            Err(Error::Data(_))
        ));
        assert!(EmbeddingDataset::new(x.clone(), vec![0, 1], vec![0, 2], 2, 2).is_err());
        assert!(EmbeddingDataset::new(x, vec![0], vec![0, 1], 2, 2).is_err());
        assert!(EmbeddingDataset::new(Matrix::<f64>::zeros(0, 3), vec![], vec![], 2, 2).is_err());
    }

    #[test]
    fn rejects_non_finite_features() {
        let mut x = Matrix::<f64>::zeros(2, 2);
        x[(1, 0)] = f64::NAN;
        assert!(EmbeddingDataset::new(x, vec![0, 1], vec![0, 1], 2, 2).is_err());
    }

    #[test]
    fn cell_counts_and_subset() {
        let x = Matrix::<f64>::from_f64_rows(&[&[0.0], &[1.0], &[2.0], &[3.0]]).unwrap();
        let ds = EmbeddingDataset::new(x, vec![0, 1, 1, 0], vec![0, 0, 1, 0], 2, 2).unwrap();
        assert_eq!(ds.cell_counts(), vec![vec![2, 0], vec![1, 1]]);
        let sub = ds.subset(&[2, 0]).unwrap();
        assert_eq!(sub.features().as_slice(), &[2.0, 0.0]);
        assert_eq!(sub.labels(), &[1, 0]);
        assert_eq!(sub.groups(), &[1, 0]);
        assert!(ds.subset(&[4]).is_err());
    }
}
