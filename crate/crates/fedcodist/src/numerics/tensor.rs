//! Row-major tensor and example-batch carriers.

use crate::error::{Error, Result};

/// Row-major tensor of 64-bit floats.
///
/// All entries are finite by construction; shape and data length always
/// agree. In practice everything in this crate is rank-2 (`[rows, cols]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, rejecting non-finite entries.
    ///
    /// Shape/data length disagreement is programmer error and panics.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        assert_eq!(
            expected,
            data.len(),
            "tensor shape {:?} does not match data length {}",
            shape,
            data.len()
        );
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::NumericalError(format!(
                "tensor entry {bad} is not finite"
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; len],
        }
    }

    /// Rank-2 constructor from rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * cols);
        for row in rows {
            assert_eq!(row.len(), cols, "ragged rows");
            data.extend_from_slice(row);
        }
        Self::new(vec![n, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Number of rows of a rank-2 tensor.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Number of columns of a rank-2 tensor.
    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.shape[1];
        &mut self.data[i * c..(i + 1) * c]
    }
}

/// A batch of examples: features and, for training/evaluation data, labels.
///
/// Distillation data is unlabeled; `labels` is `None` there by design.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub features: Tensor,
    pub labels: Option<Vec<u32>>,
}

impl Batch {
    pub fn labeled(features: Tensor, labels: Vec<u32>) -> Self {
        assert_eq!(features.rows(), labels.len(), "one label per example");
        Self {
            features,
            labels: Some(labels),
        }
    }

    pub fn unlabeled(features: Tensor) -> Self {
        Self {
            features,
            labels: None,
        }
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Strips labels, e.g. when excising distillation data from a train pool.
    pub fn into_unlabeled(self) -> Batch {
        Batch {
            features: self.features,
            labels: None,
        }
    }

    /// Copies out the selected rows (labels included when present).
    pub fn select(&self, indices: &[usize]) -> Batch {
        let rows: Vec<Vec<f64>> = indices
            .iter()
            .map(|&i| self.features.row(i).to_vec())
            .collect();
        let features = Tensor::from_rows(&rows).expect("rows of a valid tensor are finite");
        let labels = self
            .labels
            .as_ref()
            .map(|ls| indices.iter().map(|&i| ls[i]).collect());
        Batch { features, labels }
    }
}
