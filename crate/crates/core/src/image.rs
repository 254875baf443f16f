//! In-memory representation of one image's candidate regions.

use crate::error::{Error, Result};
use crate::geometry::BBox;

/// Non-negative bag-of-words count vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram(Vec<f64>);

impl Histogram {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::InvalidParameter(format!(
                "histogram entry {i} is {v}; entries must be finite and non-negative"
            )));
        }
        Ok(Histogram(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn l1_norm(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for Histogram {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// One proposed region of an image.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub bbox: BBox,
    pub objectness: Option<f64>,
    pub histogram: Histogram,
}

/// An image with its candidate pool and, for auxiliary data, its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedImage {
    pub image_id: String,
    pub class_label: String,
    pub width: u32,
    pub height: u32,
    pub candidates: Vec<Candidate>,
    pub ground_truth: Vec<BBox>,
    /// Parallel to `ground_truth`.
    pub difficult: Vec<bool>,
    pub gt_histogram: Option<Histogram>,
}

impl AnnotatedImage {
    /// Ground-truth boxes not flagged difficult.
    pub fn usable_ground_truth(&self) -> Vec<BBox> {
        self.ground_truth
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.difficult.get(*i).copied().unwrap_or(false))
            .map(|(_, b)| *b)
            .collect()
    }

    pub fn has_ground_truth(&self) -> bool {
        !self.usable_ground_truth().is_empty()
    }

    /// Histogram dimension of the first candidate, if any.
    pub fn dim(&self) -> Option<usize> {
        self.candidates.first().map(|c| c.histogram.dim())
    }

    pub fn boxes(&self) -> Vec<BBox> {
        self.candidates.iter().map(|c| c.bbox).collect()
    }

    /// Objectness scores of every candidate, or `MissingScores` if any is absent.
    pub fn objectness_scores(&self) -> Result<Vec<f64>> {
        self.candidates
            .iter()
            .map(|c| {
                c.objectness
                    .ok_or_else(|| Error::MissingScores(self.image_id.clone()))
            })
            .collect()
    }
}
