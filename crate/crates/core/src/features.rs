//! Category-independent difference-vector features.
//!
//! Every candidate histogram is L1-normalised and compared element-wise with a
//! normalised reference histogram. The reference is either the annotated ground
//! truth region's histogram ([`GtMode::Exact`]) or the mean of the image's
//! candidate histograms ([`GtMode::Approximate`]); the latter is the only option
//! for target images, whose object location is unknown.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{assign_ranks_multi, max_iou, RankLabel};
use crate::image::{AnnotatedImage, Histogram};

/// How the reference histogram is obtained during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GtMode {
    /// Ground-truth region histogram.
    Exact,
    /// Mean of the candidate histograms.
    #[default]
    Approximate,
}

impl std::str::FromStr for GtMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(GtMode::Exact),
            "approximate" => Ok(GtMode::Approximate),
            other => Err(Error::InvalidParameter(format!(
                "unknown gt mode {other:?}"
            ))),
        }
    }
}

/// Element-wise absolute difference of two normalised histograms.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffVector(Vec<f64>);

impl DiffVector {
    pub fn from_values(values: Vec<f64>) -> Self {
        DiffVector(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl AsRef<[f64]> for DiffVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Training features of one image: a ranking query.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledQuery {
    pub image_id: String,
    pub vectors: Vec<DiffVector>,
    pub ranks: Vec<RankLabel>,
    /// Best IoU of each candidate with the ground truth.
    pub overlaps: Vec<f64>,
}

impl LabeledQuery {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&DiffVector, RankLabel)> {
        self.vectors.iter().zip(self.ranks.iter().copied())
    }
}

pub fn l1_normalize(h: &Histogram) -> Result<Vec<f64>> {
    let norm = h.l1_norm();
    if norm <= 0.0 {
        return Err(Error::zero_histogram("cannot normalise"));
    }
    Ok(h.values().iter().map(|v| v / norm).collect())
}

/// Element-wise arithmetic mean of unnormalised histograms.
pub fn mean_histogram<'a, I>(histograms: I) -> Result<Histogram>
where
    I: IntoIterator<Item = &'a Histogram>,
{
    let mut iter = histograms.into_iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::InvalidParameter("mean of zero histograms".into()))?;
    let mut sum = first.values().to_vec();
    let mut n = 1usize;
    for h in iter {
        Error::check_dim(sum.len(), h.dim())?;
        for (s, v) in sum.iter_mut().zip(h.values()) {
            *s += v;
        }
        n += 1;
    }
    let inv = 1.0 / n as f64;
    sum.iter_mut().for_each(|s| *s *= inv);
    Histogram::new(sum)
}

/// `|x / |x|_1 - reference / |reference|_1|`, element-wise.
pub fn diff_vector(x: &Histogram, reference: &Histogram) -> Result<DiffVector> {
    Error::check_dim(x.dim(), reference.dim())?;
    let r = l1_normalize(reference)?;
    let xn = l1_normalize(x)?;
    Ok(abs_diff(&xn, &r))
}

fn abs_diff(a: &[f64], b: &[f64]) -> DiffVector {
    DiffVector(a.iter().zip(b).map(|(a, b)| (a - b).abs()).collect())
}

fn diff_against(image: &AnnotatedImage, reference: &Histogram) -> Result<Vec<DiffVector>> {
    let r = l1_normalize(reference).map_err(|_| {
        Error::zero_histogram(format!("reference histogram of image {}", image.image_id))
    })?;
    image
        .candidates
        .iter()
        .enumerate()
        .map(|(j, c)| {
            Error::check_dim(r.len(), c.histogram.dim())?;
            let xn = l1_normalize(&c.histogram).map_err(|_| {
                Error::zero_histogram(format!("candidate {j} of image {}", image.image_id))
            })?;
            Ok(abs_diff(&xn, &r))
        })
        .collect()
}

fn candidate_mean(image: &AnnotatedImage) -> Result<Histogram> {
    if image.candidates.is_empty() {
        return Err(Error::Validation {
            image_id: image.image_id.clone(),
            reason: "no candidates".into(),
        });
    }
    mean_histogram(image.candidates.iter().map(|c| &c.histogram))
}

/// Difference vectors and rank labels for an auxiliary image.
pub fn build_training_features(image: &AnnotatedImage, mode: GtMode) -> Result<LabeledQuery> {
    let gts = image.usable_ground_truth();
    if gts.is_empty() {
        return Err(Error::MissingGroundTruth(image.image_id.clone()));
    }
    let vectors = match mode {
        GtMode::Approximate => diff_against(image, &candidate_mean(image)?)?,
        GtMode::Exact => {
            let g = image
                .gt_histogram
                .as_ref()
                .ok_or_else(|| Error::MissingGroundTruth(image.image_id.clone()))?;
            if image.candidates.is_empty() {
                return Err(Error::Validation {
                    image_id: image.image_id.clone(),
                    reason: "no candidates".into(),
                });
            }
            diff_against(image, g)?
        }
    };
    let boxes = image.boxes();
    let ranks = assign_ranks_multi(&boxes, &gts);
    let overlaps = boxes.iter().map(|b| max_iou(b, &gts)).collect();
    Ok(LabeledQuery {
        image_id: image.image_id.clone(),
        vectors,
        ranks,
        overlaps,
    })
}

/// Difference vectors for a target image, using the candidate mean as reference.
pub fn build_target_features(image: &AnnotatedImage) -> Result<Vec<DiffVector>> {
    diff_against(image, &candidate_mean(image)?)
}

/// L1-normalised raw candidate histograms.
pub fn normalized_histograms(image: &AnnotatedImage) -> Result<Vec<Vec<f64>>> {
    image
        .candidates
        .iter()
        .enumerate()
        .map(|(j, c)| {
            l1_normalize(&c.histogram).map_err(|_| {
                Error::zero_histogram(format!("candidate {j} of image {}", image.image_id))
            })
        })
        .collect()
}
