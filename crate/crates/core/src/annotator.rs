//! Selecting one annotation box per target image.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::build_target_features;
use crate::geometry::{max_iou, BBox};
use crate::image::AnnotatedImage;
use crate::ranksvm::{argmax, score, RankModel};

/// The box picked for one image, with the scores that led to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationResult {
    pub image_id: String,
    pub chosen_index: usize,
    pub chosen_box: BBox,
    pub candidate_scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
}

impl AnnotationResult {
    /// Picks the arg-max of `scores` and fills `correct` if the image has ground truth.
    pub fn from_scores(image: &AnnotatedImage, scores: Vec<f64>) -> Result<Self> {
        Error::check_dim(image.candidates.len(), scores.len())?;
        let chosen_index = argmax(&scores).ok_or_else(|| Error::Validation {
            image_id: image.image_id.clone(),
            reason: "no candidates".into(),
        })?;
        let chosen_box = image.candidates[chosen_index].bbox;
        let gts = image.usable_ground_truth();
        let correct = (!gts.is_empty()).then(|| max_iou(&chosen_box, &gts) > 0.5);
        Ok(AnnotationResult {
            image_id: image.image_id.clone(),
            chosen_index,
            chosen_box,
            candidate_scores: scores,
            correct,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    /// Weight of the ranking-model score; `1 - alpha` goes to the external score.
    pub alpha: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig { alpha: 0.5 }
    }
}

impl FusionConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&alpha) {
            Ok(FusionConfig { alpha })
        } else {
            Err(Error::InvalidParameter(format!(
                "alpha {alpha} outside [0, 1]"
            )))
        }
    }
}

/// Per-model scores of every candidate.
pub fn model_scores(model: &RankModel, image: &AnnotatedImage) -> Result<Vec<f64>> {
    build_target_features(image)?
        .iter()
        .map(|d| score(model, d))
        .collect()
}

/// Ranks the candidates of `image` and picks the best. Ground truth is read
/// only to fill `correct`.
pub fn annotate(model: &RankModel, image: &AnnotatedImage) -> Result<AnnotationResult> {
    if let Some(dim) = image.dim() {
        Error::check_dim(model.dim, dim)?;
    }
    AnnotationResult::from_scores(image, model_scores(model, image)?)
}

/// Min-max scaling to `[0, 1]`; a constant list maps to all 0.5.
pub fn min_max_normalize(scores: &[f64]) -> Vec<f64> {
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if !(range > 0.0) || !range.is_finite() {
        return vec![0.5; scores.len()];
    }
    scores
        .iter()
        .map(|s| ((s - lo) / range).clamp(0.0, 1.0))
        .collect()
}

/// Score-level fusion: `alpha * norm(model) + (1 - alpha) * norm(external)`.
pub fn fuse_scores(model: &[f64], external: &[f64], cfg: &FusionConfig) -> Result<Vec<f64>> {
    if model.len() != external.len() {
        return Err(Error::LengthMismatch {
            left: model.len(),
            right: external.len(),
        });
    }
    if model.is_empty() {
        return Err(Error::InvalidParameter(
            "cannot fuse empty score lists".into(),
        ));
    }
    if let Some(s) = external.iter().chain(model).find(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score {s}")));
    }
    let m = min_max_normalize(model);
    let e = min_max_normalize(external);
    let a = cfg.alpha;
    Ok(m.iter()
        .zip(&e)
        .map(|(m, e)| (a * m + (1.0 - a) * e).clamp(0.0, 1.0))
        .collect())
}

/// [`annotate`] with the model scores fused with per-candidate external scores.
pub fn annotate_fused(
    model: &RankModel,
    image: &AnnotatedImage,
    external: &[f64],
    cfg: &FusionConfig,
) -> Result<AnnotationResult> {
    if let Some(dim) = image.dim() {
        Error::check_dim(model.dim, dim)?;
    }
    let fused = fuse_scores(&model_scores(model, image)?, external, cfg)?;
    AnnotationResult::from_scores(image, fused)
}

/// Fusion with the candidates' own objectness scores.
pub fn annotate_fused_objectness(
    model: &RankModel,
    image: &AnnotatedImage,
    cfg: &FusionConfig,
) -> Result<AnnotationResult> {
    annotate_fused(model, image, &image.objectness_scores()?, cfg)
}
