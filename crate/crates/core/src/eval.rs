//! Annotation accuracy and the repeated auxiliary/target class-split protocol.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotator::{annotate, annotate_fused_objectness, AnnotationResult, FusionConfig};
use crate::baselines::{
    annotate_with_binary, objectness_baseline, train_generic_detector, train_nonranking_svm,
    train_two_rank, BinaryModel, POSITIVE_OVERLAP,
};
use crate::error::{Error, Result};
use crate::features::GtMode;
use crate::geometry::{assign_ranks_multi, iou, max_iou, BBox};
use crate::image::AnnotatedImage;
use crate::ranksvm::{select_c, train, HeldOut, RankModel, TrainConfig, TrainingSet};

/// Correct when the overlap is strictly greater than one half.
pub fn is_correct(pred: &BBox, gt: &BBox) -> bool {
    iou(pred, gt) > POSITIVE_OVERLAP
}

/// Correct against any of several ground-truth instances.
pub fn is_correct_any(pred: &BBox, gts: &[BBox]) -> bool {
    max_iou(pred, gts) > POSITIVE_OVERLAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    /// Percentage in `[0, 100]`.
    pub accuracy: f64,
    pub n_images: usize,
    pub n_correct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class: BTreeMap<String, ClassAccuracy>,
    /// Image-weighted percentage over all evaluated images.
    pub overall_accuracy: f64,
    pub n_images: usize,
}

fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Scores annotation results against the dataset's ground truth.
pub fn evaluate(
    annotations: &[AnnotationResult],
    dataset: &[AnnotatedImage],
) -> Result<EvalReport> {
    let by_id: HashMap<&str, &AnnotatedImage> = dataset
        .iter()
        .map(|img| (img.image_id.as_str(), img))
        .collect();
    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for ann in annotations {
        let img = by_id
            .get(ann.image_id.as_str())
            .ok_or_else(|| Error::Validation {
                image_id: ann.image_id.clone(),
                reason: "annotated image is not in the dataset".into(),
            })?;
        let gts = img.usable_ground_truth();
        if gts.is_empty() {
            return Err(Error::MissingGroundTruth(img.image_id.clone()));
        }
        let entry = counts.entry(img.class_label.clone()).or_default();
        entry.0 += 1;
        if is_correct_any(&ann.chosen_box, &gts) {
            entry.1 += 1;
        }
    }
    let n_images = counts.values().map(|c| c.0).sum();
    let n_correct = counts.values().map(|c| c.1).sum();
    Ok(EvalReport {
        per_class: counts
            .into_iter()
            .map(|(k, (n, c))| {
                (
                    k,
                    ClassAccuracy {
                        accuracy: percent(c, n),
                        n_images: n,
                        n_correct: c,
                    },
                )
            })
            .collect(),
        overall_accuracy: percent(n_correct, n_images),
        n_images,
    })
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let width = self
            .per_class
            .keys()
            .map(String::len)
            .chain(["overall".len()])
            .max()
            .unwrap_or(7);
        let mut s = String::new();
        let _ = writeln!(s, "{:<width$}  {:>8}  {:>7}", "class", "accuracy", "images");
        for (class, acc) in &self.per_class {
            let _ = writeln!(
                s,
                "{:<width$}  {:>7.2}%  {:>7}",
                class, acc.accuracy, acc.n_images
            );
        }
        let _ = writeln!(
            s,
            "{:<width$}  {:>7.2}%  {:>7}",
            "overall", self.overall_accuracy, self.n_images
        );
        s
    }
}

/// Annotation strategy evaluated by the protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Method {
    Ranking { gt_mode: GtMode },
    TwoRank,
    NonRanking,
    GenericDetector,
    Objectness,
    RankingWithObjectness { alpha: f64 },
}

impl Method {
    pub fn needs_training(&self) -> bool {
        !matches!(self, Method::Objectness)
    }

    pub fn label(&self) -> String {
        match self {
            Method::Ranking {
                gt_mode: GtMode::Approximate,
            } => "ranking".into(),
            Method::Ranking {
                gt_mode: GtMode::Exact,
            } => "ranking-exact".into(),
            Method::TwoRank => "tworank".into(),
            Method::NonRanking => "nonranking".into(),
            Method::GenericDetector => "generic".into(),
            Method::Objectness => "objectness".into(),
            Method::RankingWithObjectness { alpha } => format!("fused(alpha={alpha})"),
        }
    }
}

/// A trained annotator.
#[derive(Debug, Clone, PartialEq)]
pub enum Fitted {
    Rank(RankModel),
    Binary(BinaryModel),
    Untrained,
}

pub fn fit_method(
    method: &Method,
    images: &[AnnotatedImage],
    c: f64,
    config: &TrainConfig,
) -> Result<Fitted> {
    Ok(match method {
        Method::Ranking { gt_mode } => Fitted::Rank(train(
            &TrainingSet::from_images(images, *gt_mode)?,
            c,
            config,
        )?),
        Method::RankingWithObjectness { .. } => Fitted::Rank(train(
            &TrainingSet::from_images(images, GtMode::Approximate)?,
            c,
            config,
        )?),
        Method::TwoRank => Fitted::Rank(train_two_rank(
            &TrainingSet::from_images(images, GtMode::Approximate)?,
            c,
            config,
        )?),
        Method::NonRanking => Fitted::Binary(train_nonranking_svm(
            &TrainingSet::from_images(images, GtMode::Approximate)?,
            c,
            config,
        )?),
        Method::GenericDetector => Fitted::Binary(train_generic_detector(images, c, config)?),
        Method::Objectness => Fitted::Untrained,
    })
}

pub fn annotate_with(
    method: &Method,
    fitted: &Fitted,
    image: &AnnotatedImage,
) -> Result<AnnotationResult> {
    match (method, fitted) {
        (Method::Objectness, _) => objectness_baseline(image),
        (Method::RankingWithObjectness { alpha }, Fitted::Rank(m)) => {
            annotate_fused_objectness(m, image, &FusionConfig::new(*alpha)?)
        }
        (_, Fitted::Rank(m)) => annotate(m, image),
        (_, Fitted::Binary(m)) => annotate_with_binary(m, image),
        (_, Fitted::Untrained) => Err(Error::InvalidParameter(format!(
            "method {} needs a trained model",
            method.label()
        ))),
    }
}

pub fn annotate_all(
    method: &Method,
    fitted: &Fitted,
    images: &[AnnotatedImage],
) -> Result<Vec<AnnotationResult>> {
    images
        .par_iter()
        .map(|img| annotate_with(method, fitted, img))
        .collect()
}

/// Held-out scores for model selection. The score is the share of images
/// annotated correctly or, when no held-out candidate overlaps by more than 0.5,
/// the pairwise agreement of candidate scores with overlap-derived ranks.
pub fn held_out_score(results: &[AnnotationResult], images: &[AnnotatedImage]) -> HeldOut {
    let pairwise = pairwise_agreement(results, images);
    let any_positive = images.iter().any(|img| {
        let gts = img.usable_ground_truth();
        img.candidates
            .iter()
            .any(|c| max_iou(&c.bbox, &gts) > POSITIVE_OVERLAP)
    });
    let score = if any_positive {
        let hits = results.iter().filter(|r| r.correct == Some(true)).count();
        hits as f64 / results.len().max(1) as f64
    } else {
        pairwise
    };
    HeldOut { score, pairwise }
}

fn pairwise_agreement(results: &[AnnotationResult], images: &[AnnotatedImage]) -> f64 {
    let mut total = 0usize;
    let mut agree = 0.0;
    for (r, img) in results.iter().zip(images) {
        let ranks = assign_ranks_multi(&img.boxes(), &img.usable_ground_truth());
        let s = &r.candidate_scores;
        for k in 0..s.len() {
            for l in 0..s.len() {
                if ranks[k] < ranks[l] {
                    total += 1;
                    if s[k] > s[l] {
                        agree += 1.0;
                    } else if s[k] == s[l] {
                        agree += 0.5;
                    }
                }
            }
        }
    }
    if total == 0 {
        0.5
    } else {
        agree / total as f64
    }
}

/// How the regulariser weight is chosen for each trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CSelection {
    Fixed(f64),
    CrossValidate,
}

/// Chooses C by k-fold cross-validation over images with [`held_out_score`].
pub fn select_c_for_method(
    method: &Method,
    images: &[AnnotatedImage],
    config: &TrainConfig,
) -> Result<crate::ranksvm::CrossValidation> {
    select_c(images.len(), config, |c, train_idx, test_idx| {
        let train_imgs: Vec<AnnotatedImage> =
            train_idx.iter().map(|&i| images[i].clone()).collect();
        let test_imgs: Vec<AnnotatedImage> = test_idx.iter().map(|&i| images[i].clone()).collect();
        let fitted = fit_method(method, &train_imgs, c, config)?;
        let results = test_imgs
            .iter()
            .map(|img| annotate_with(method, &fitted, img))
            .collect::<Result<Vec<_>>>()?;
        Ok(held_out_score(&results, &test_imgs))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub auxiliary_classes: BTreeSet<String>,
    pub target_classes: BTreeSet<String>,
    pub trial_seed: u64,
}

/// Samples `n_aux` auxiliary classes for trial `trial`; the rest are targets.
pub fn sample_split(
    classes: &BTreeSet<String>,
    n_aux: usize,
    seed: u64,
    trial: usize,
) -> SplitSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    let all: Vec<&String> = classes.iter().collect();
    let picked: BTreeSet<usize> = sample(&mut rng, all.len(), n_aux).into_iter().collect();
    let (aux, target): (Vec<_>, Vec<_>) = all
        .into_iter()
        .enumerate()
        .partition(|(i, _)| picked.contains(i));
    SplitSpec {
        auxiliary_classes: aux.into_iter().map(|(_, c)| c.clone()).collect(),
        target_classes: target.into_iter().map(|(_, c)| c.clone()).collect(),
        trial_seed: seed,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub n_aux: usize,
    pub trials: usize,
    pub seed: u64,
    pub method: Method,
    pub c: CSelection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    pub split: SplitSpec,
    /// Regulariser used in this trial (absent for untrained methods).
    pub c: Option<f64>,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMean {
    /// Mean percentage over the trials in which the class was a target.
    pub accuracy: f64,
    pub n_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub method: Method,
    pub n_aux: usize,
    pub seed: u64,
    pub trials: Vec<TrialReport>,
    pub per_class: BTreeMap<String, ClassMean>,
    /// Mean over classes of the per-class means.
    pub class_average: f64,
    /// Mean over trials of each trial's overall accuracy.
    pub mean_overall: f64,
    /// Sample standard deviation over trials (0 for a single trial).
    pub std_overall: f64,
}

/// Aggregates per-trial reports.
pub fn aggregate_trials(
    method: Method,
    n_aux: usize,
    seed: u64,
    trials: Vec<TrialReport>,
) -> ProtocolReport {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for t in &trials {
        for (class, acc) in &t.report.per_class {
            let e = sums.entry(class.clone()).or_default();
            e.0 += acc.accuracy;
            e.1 += 1;
        }
    }
    let per_class: BTreeMap<String, ClassMean> = sums
        .into_iter()
        .map(|(k, (s, n))| {
            (
                k,
                ClassMean {
                    accuracy: s / n as f64,
                    n_trials: n,
                },
            )
        })
        .collect();
    let class_average = if per_class.is_empty() {
        0.0
    } else {
        per_class.values().map(|c| c.accuracy).sum::<f64>() / per_class.len() as f64
    };
    let overall: Vec<f64> = trials.iter().map(|t| t.report.overall_accuracy).collect();
    let n = overall.len() as f64;
    let mean_overall = if overall.is_empty() {
        0.0
    } else {
        overall.iter().sum::<f64>() / n
    };
    let std_overall = if overall.len() < 2 {
        0.0
    } else {
        (overall
            .iter()
            .map(|x| (x - mean_overall).powi(2))
            .sum::<f64>()
            / (n - 1.0))
            .sqrt()
    };
    ProtocolReport {
        method,
        n_aux,
        seed,
        trials,
        per_class,
        class_average,
        mean_overall,
        std_overall,
    }
}

/// Runs one train/annotate/evaluate cycle on a given split.
pub fn run_trial(
    dataset: &[AnnotatedImage],
    split: SplitSpec,
    trial: usize,
    method: &Method,
    c: CSelection,
    config: &TrainConfig,
) -> Result<TrialReport> {
    let aux: Vec<AnnotatedImage> = dataset
        .iter()
        .filter(|img| split.auxiliary_classes.contains(&img.class_label) && img.has_ground_truth())
        .cloned()
        .collect();
    let target: Vec<AnnotatedImage> = dataset
        .iter()
        .filter(|img| split.target_classes.contains(&img.class_label) && img.has_ground_truth())
        .cloned()
        .collect();
    let (fitted, c_used) = if method.needs_training() {
        let c_value = match c {
            CSelection::Fixed(c) => c,
            CSelection::CrossValidate => select_c_for_method(method, &aux, config)?.best_c,
        };
        (fit_method(method, &aux, c_value, config)?, Some(c_value))
    } else {
        (Fitted::Untrained, None)
    };
    let results = annotate_all(method, &fitted, &target)?;
    Ok(TrialReport {
        trial,
        split,
        c: c_used,
        report: evaluate(&results, &target)?,
    })
}

/// Repeats random auxiliary/target class splits and aggregates the accuracies.
///
/// Each trial draws its split from its own seeded stream, so trials may run
/// concurrently without changing the result.
pub fn run_split_protocol(
    dataset: &[AnnotatedImage],
    protocol: &ProtocolConfig,
    config: &TrainConfig,
) -> Result<ProtocolReport> {
    if protocol.trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let classes: BTreeSet<String> = dataset.iter().map(|i| i.class_label.clone()).collect();
    if classes.len() <= protocol.n_aux || protocol.n_aux == 0 {
        return Err(Error::InsufficientClasses {
            n_aux: protocol.n_aux,
            found: classes.len(),
        });
    }
    let trials = (0..protocol.trials)
        .into_par_iter()
        .map(|t| {
            let split = sample_split(&classes, protocol.n_aux, protocol.seed, t);
            run_trial(dataset, split, t, &protocol.method, protocol.c, config)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate_trials(
        protocol.method,
        protocol.n_aux,
        protocol.seed,
        trials,
    ))
}

impl ProtocolReport {
    pub fn to_table(&self) -> String {
        let width = self
            .per_class
            .keys()
            .map(String::len)
            .chain(["class average".len()])
            .max()
            .unwrap_or(13);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "method {}  n_aux {}  trials {}  seed {}",
            self.method.label(),
            self.n_aux,
            self.trials.len(),
            self.seed
        );
        let _ = writeln!(s, "{:<width$}  {:>8}  {:>6}", "class", "accuracy", "trials");
        for (class, m) in &self.per_class {
            let _ = writeln!(
                s,
                "{:<width$}  {:>7.2}%  {:>6}",
                class, m.accuracy, m.n_trials
            );
        }
        let _ = writeln!(
            s,
            "{:<width$}  {:>7.2}%",
            "class average", self.class_average
        );
        let _ = writeln!(
            s,
            "{:<width$}  {:>7.2}% +- {:.2}",
            "overall", self.mean_overall, self.std_overall
        );
        s
    }
}
