//! Alternative transfer models used for ablations: a generic object detector
//! on raw histograms, the two-level ranking model, a binary SVM on difference
//! vectors, and plain objectness.

use serde::{Deserialize, Serialize};

use crate::annotator::AnnotationResult;
use crate::error::{Error, Result};
use crate::features::{build_target_features, normalized_histograms, LabeledQuery};
use crate::geometry::{max_iou, RankLabel};
use crate::image::AnnotatedImage;
use crate::optim::{self, minimize, SmoothObjective, TrainingStats};
use crate::ranksvm::{
    check_c, generate_graded_pairs, train_on_pairs, RankModel, TrainConfig, TrainOutcome,
    TrainingSet,
};

/// Overlap above which a candidate counts as a positive / rank-1 region.
pub const POSITIVE_OVERLAP: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSpace {
    /// Difference vectors against the candidate mean.
    DiffVector,
    /// L1-normalised candidate histograms.
    RawHistogram,
}

/// Linear binary classifier `w.x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    pub dim: usize,
    pub feature_space: FeatureSpace,
    pub training_stats: TrainingStats,
}

/// Squared-hinge linear SVM with an unregularised bias. Parameters are `[w, b]`.
pub struct BinarySvmObjective<'a> {
    samples: &'a [Vec<f64>],
    labels: &'a [f64],
    c: f64,
    dim: usize,
}

impl<'a> BinarySvmObjective<'a> {
    pub fn new(samples: &'a [Vec<f64>], labels: &'a [f64], c: f64) -> Result<Self> {
        if samples.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: samples.len(),
                right: labels.len(),
            });
        }
        let dim = samples.first().map(Vec::len).unwrap_or(0);
        for s in samples {
            Error::check_dim(dim, s.len())?;
        }
        if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::InvalidParameter("labels must be +1 or -1".into()));
        }
        Ok(BinarySvmObjective {
            samples,
            labels,
            c,
            dim,
        })
    }

    fn decision(&self, theta: &[f64], x: &[f64]) -> f64 {
        optim::dot(&theta[..self.dim], x) + theta[self.dim]
    }
}

impl SmoothObjective for BinarySvmObjective<'_> {
    fn dim(&self) -> usize {
        self.dim + 1
    }

    fn value_gradient(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let w = &theta[..self.dim];
        let mut g = w.to_vec();
        g.push(0.0);
        let mut loss = 0.0;
        for (x, &y) in self.samples.iter().zip(self.labels) {
            let slack = 1.0 - y * self.decision(theta, x);
            if slack > 0.0 {
                loss += slack * slack;
                let a = -2.0 * self.c * slack * y;
                for (gi, xi) in g.iter_mut().zip(x) {
                    *gi += a * xi;
                }
                g[self.dim] += a;
            }
        }
        (0.5 * optim::dot(w, w) + self.c * loss, g)
    }

    fn hessian_product(&self, theta: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = v[..self.dim].to_vec();
        out.push(0.0);
        for (x, &y) in self.samples.iter().zip(self.labels) {
            if y * self.decision(theta, x) < 1.0 {
                let a = 2.0 * self.c * self.decision(v, x);
                for (oi, xi) in out.iter_mut().zip(x) {
                    *oi += a * xi;
                }
                out[self.dim] += a;
            }
        }
        out
    }
}

/// Trains a binary squared-hinge SVM; both classes must be present.
pub fn train_binary_svm(
    samples: &[Vec<f64>],
    labels: &[f64],
    c: f64,
    feature_space: FeatureSpace,
    config: &TrainConfig,
) -> Result<BinaryModel> {
    check_c(c)?;
    let has_pos = labels.iter().any(|&y| y > 0.0);
    let has_neg = labels.iter().any(|&y| y < 0.0);
    if !(has_pos && has_neg) {
        return Err(Error::DegenerateLabels);
    }
    let obj = BinarySvmObjective::new(samples, labels, c)?;
    let sol = minimize(&obj, vec![0.0; obj.dim + 1], &config.solver_options())?;
    let dim = obj.dim;
    let mut weights = sol.weights;
    let bias = weights.pop().expect("bias parameter");
    Ok(BinaryModel {
        weights,
        bias,
        c,
        dim,
        feature_space,
        training_stats: sol.stats,
    })
}

fn overlap_labels(image: &AnnotatedImage) -> Result<Vec<f64>> {
    let gts = image.usable_ground_truth();
    if gts.is_empty() {
        return Err(Error::MissingGroundTruth(image.image_id.clone()));
    }
    Ok(image
        .candidates
        .iter()
        .map(|c| {
            if max_iou(&c.bbox, &gts) > POSITIVE_OVERLAP {
                1.0
            } else {
                -1.0
            }
        })
        .collect())
}

/// Generic object detector: binary SVM on normalised raw histograms,
/// positives are candidates overlapping the ground truth by more than 0.5.
pub fn train_generic_detector(
    images: &[AnnotatedImage],
    c: f64,
    config: &TrainConfig,
) -> Result<BinaryModel> {
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for img in images {
        labels.extend(overlap_labels(img)?);
        samples.extend(normalized_histograms(img)?);
    }
    train_binary_svm(&samples, &labels, c, FeatureSpace::RawHistogram, config)
}

/// Binary SVM on the same difference vectors the ranking model uses.
pub fn train_nonranking_svm(
    data: &TrainingSet,
    c: f64,
    config: &TrainConfig,
) -> Result<BinaryModel> {
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for q in &data.queries {
        for (d, &o) in q.vectors.iter().zip(&q.overlaps) {
            samples.push(d.values().to_vec());
            labels.push(if o > POSITIVE_OVERLAP { 1.0 } else { -1.0 });
        }
    }
    train_binary_svm(&samples, &labels, c, FeatureSpace::DiffVector, config)
}

/// Replaces each query's ranks with 1 (overlap > 0.5) or 2.
pub fn collapse_to_two_ranks(data: &TrainingSet) -> TrainingSet {
    let queries = data
        .queries
        .iter()
        .map(|q| LabeledQuery {
            ranks: q
                .overlaps
                .iter()
                .map(|&o| RankLabel(if o > POSITIVE_OVERLAP { 1 } else { 2 }))
                .collect(),
            ..q.clone()
        })
        .collect();
    TrainingSet {
        queries,
        gt_mode: data.gt_mode,
        dim: data.dim,
    }
}

pub fn train_two_rank_with_history(
    data: &TrainingSet,
    c: f64,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let collapsed = collapse_to_two_ranks(data);
    let pairs = generate_graded_pairs(&collapsed.queries, config.pair_cap_per_image, config.seed)?;
    train_on_pairs(&collapsed, &pairs, c, config)
}

/// Ranking model trained with only two rank levels.
pub fn train_two_rank(data: &TrainingSet, c: f64, config: &TrainConfig) -> Result<RankModel> {
    train_two_rank_with_history(data, c, config).map(|o| o.model)
}

/// Decision values `w.phi(x) + b` of every candidate.
pub fn binary_scores(model: &BinaryModel, image: &AnnotatedImage) -> Result<Vec<f64>> {
    let feats: Vec<Vec<f64>> = match model.feature_space {
        FeatureSpace::RawHistogram => normalized_histograms(image)?,
        FeatureSpace::DiffVector => build_target_features(image)?
            .into_iter()
            .map(|d| d.values().to_vec())
            .collect(),
    };
    feats
        .iter()
        .map(|x| {
            Error::check_dim(model.dim, x.len())?;
            Ok(optim::dot(&model.weights, x) + model.bias)
        })
        .collect()
}

pub fn annotate_with_binary(
    model: &BinaryModel,
    image: &AnnotatedImage,
) -> Result<AnnotationResult> {
    AnnotationResult::from_scores(image, binary_scores(model, image)?)
}

/// Picks the candidate with the highest stored objectness.
pub fn objectness_baseline(image: &AnnotatedImage) -> Result<AnnotationResult> {
    AnnotationResult::from_scores(image, image.objectness_scores()?)
}
