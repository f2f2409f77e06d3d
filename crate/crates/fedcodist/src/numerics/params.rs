//! Flat parameter vectors with named per-layer segments.
//!
//! A `ParamVector` carries model parameters as well as gradient-valued
//! quantities (client deltas, distillation gradients, merged gradients).
//! Two vectors may be combined only when their layouts are identical;
//! layouts are shared behind an `Arc` so the common case is a pointer check.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// One named contiguous slice of a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

/// Ordered segment list covering a parameter vector exactly.
#[derive(Debug, PartialEq, Eq)]
pub struct ParamLayout {
    segments: Vec<Segment>,
    total_len: usize,
}

impl ParamLayout {
    /// Builds a layout from `(name, len)` pairs; offsets are assigned
    /// contiguously, so the covering invariant holds by construction.
    pub fn from_lengths<I, S>(parts: I) -> Arc<Self>
    where
        I: IntoIterator<Item = (S, usize)>,
        S: Into<String>,
    {
        let mut segments = Vec::new();
        let mut offset = 0;
        for (name, len) in parts {
            segments.push(Segment {
                name: name.into(),
                offset,
                len,
            });
            offset += len;
        }
        Arc::new(Self {
            segments,
            total_len: offset,
        })
    }

    pub fn total_len(&self) -> usize {
        self.total_len
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }
}

/// Flat `f64` parameter vector plus its segment layout.
#[derive(Clone, PartialEq)]
pub struct ParamVector {
    layout: Arc<ParamLayout>,
    values: Vec<f64>,
}

impl fmt::Debug for ParamVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParamVector")
            .field("len", &self.values.len())
            .field("segments", &self.layout.segments.len())
            .finish()
    }
}

impl ParamVector {
    pub fn zeros(layout: Arc<ParamLayout>) -> Self {
        let values = vec![0.0; layout.total_len()];
        Self { layout, values }
    }

    pub fn from_values(layout: Arc<ParamLayout>, values: Vec<f64>) -> Self {
        assert_eq!(
            layout.total_len(),
            values.len(),
            "values do not fill the layout"
        );
        Self { layout, values }
    }

    pub fn layout(&self) -> &Arc<ParamLayout> {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Layout compatibility: identical segment lists.
    pub fn is_compatible(&self, other: &ParamVector) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout) || self.layout == other.layout
    }

    pub fn ensure_compatible(&self, other: &ParamVector, context: &str) -> Result<()> {
        if self.is_compatible(other) {
            Ok(())
        } else {
            Err(Error::IncompatibleParams(context.to_string()))
        }
    }

    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.layout
            .segment(name)
            .map(|s| &self.values[s.offset..s.offset + s.len])
    }

    /// `self - other`, elementwise.
    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        self.ensure_compatible(other, "subtraction operands")?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(ParamVector {
            layout: Arc::clone(&self.layout),
            values,
        })
    }

    /// `self + scale * other`, elementwise.
    pub fn add_scaled(&self, other: &ParamVector, scale: f64) -> Result<ParamVector> {
        self.ensure_compatible(other, "addition operands")?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + scale * b)
            .collect();
        Ok(ParamVector {
            layout: Arc::clone(&self.layout),
            values,
        })
    }

    pub fn scale(&self, factor: f64) -> ParamVector {
        ParamVector {
            layout: Arc::clone(&self.layout),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// L2 norm over the full flat vector.
    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn zeros_like(&self) -> ParamVector {
        ParamVector::zeros(Arc::clone(&self.layout))
    }
}
