//! Primal pairwise RankSVM with squared hinge loss.
//!
//! Each auxiliary image is a query. Within a query every candidate with a
//! better (smaller) rank must score above every candidate with a worse rank;
//! pairs never cross images. The model minimises
//!
//! ```text
//! 1/2 |w|^2 + C * sum_{(k,l)} max(0, 1 - (w.d_k - w.d_l))^2
//! ```
//!
//! Margins are evaluated from per-candidate scores, so pair difference vectors
//! are never materialised.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{build_training_features, DiffVector, GtMode, LabeledQuery};
use crate::image::AnnotatedImage;
use crate::optim::{self, minimize, SmoothObjective, SolverOptions, TrainingStats};

/// `better` must outrank `worse` within query `query`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PreferencePair {
    /// Index into the query list.
    pub query: usize,
    pub better: usize,
    pub worse: usize,
}

/// Labelled training data with a uniform feature dimension.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub queries: Vec<LabeledQuery>,
    pub gt_mode: GtMode,
    pub dim: usize,
}

impl TrainingSet {
    pub fn new(queries: Vec<LabeledQuery>, gt_mode: GtMode) -> Result<Self> {
        let dim = queries
            .iter()
            .flat_map(|q| q.vectors.first())
            .map(DiffVector::dim)
            .next()
            .ok_or(Error::NoPairs)?;
        for q in &queries {
            if q.ranks.len() != q.vectors.len() || q.overlaps.len() != q.vectors.len() {
                return Err(Error::LengthMismatch {
                    left: q.vectors.len(),
                    right: q.ranks.len().min(q.overlaps.len()),
                });
            }
            for v in &q.vectors {
                Error::check_dim(dim, v.dim())?;
            }
        }
        Ok(TrainingSet {
            queries,
            gt_mode,
            dim,
        })
    }

    /// Builds features for every image; images without usable ground truth are an error.
    pub fn from_images(images: &[AnnotatedImage], mode: GtMode) -> Result<Self> {
        let queries = images
            .par_iter()
            .map(|img| build_training_features(img, mode))
            .collect::<Result<Vec<_>>>()?;
        TrainingSet::new(queries, mode)
    }

    pub fn subset(&self, indices: &[usize]) -> TrainingSet {
        TrainingSet {
            queries: indices.iter().map(|&i| self.queries[i].clone()).collect(),
            gt_mode: self.gt_mode,
            dim: self.dim,
        }
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub c_grid: Vec<f64>,
    pub folds: usize,
    pub max_iterations: usize,
    pub rel_objective_tolerance: f64,
    pub gradient_tolerance: f64,
    pub pair_cap_per_image: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            c_grid: vec![1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3],
            folds: 5,
            max_iterations: 200,
            rel_objective_tolerance: 1e-12,
            gradient_tolerance: 1e-6,
            pair_cap_per_image: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c_grid.is_empty() {
            return Err(Error::InvalidParameter("c_grid is empty".into()));
        }
        if let Some(c) = self.c_grid.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "grid value C = {c} is not positive"
            )));
        }
        if self.folds < 2 {
            return Err(Error::InvalidParameter("folds must be at least 2".into()));
        }
        if !(self.rel_objective_tolerance > 0.0 && self.gradient_tolerance > 0.0) {
            return Err(Error::InvalidParameter(
                "tolerances must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            max_iterations: self.max_iterations,
            rel_objective_tolerance: self.rel_objective_tolerance,
            gradient_tolerance: self.gradient_tolerance,
            ..SolverOptions::default()
        }
    }
}

/// Trained linear ranking function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankModel {
    pub weights: Vec<f64>,
    pub c: f64,
    pub gt_mode: GtMode,
    pub dim: usize,
    pub training_stats: TrainingStats,
}

impl RankModel {
    pub fn score(&self, d: &DiffVector) -> Result<f64> {
        score(self, d)
    }
}

pub(crate) fn check_c(c: f64) -> Result<()> {
    if c.is_finite() && c > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "C must be positive and finite, got {c}"
        )))
    }
}

fn validate_permutation(q: &LabeledQuery) -> Result<()> {
    let m = q.ranks.len();
    let mut seen = vec![false; m];
    for r in &q.ranks {
        let v = r.value() as usize;
        if v == 0 || v > m || seen[v - 1] {
            return Err(Error::InvalidLabels {
                image_id: q.image_id.clone(),
                reason: format!("ranks are not a permutation of 1..{m}"),
            });
        }
        seen[v - 1] = true;
    }
    Ok(())
}

/// Within-query pairs with a strictly better first member, sorted by candidate rank.
fn query_pairs(q: &LabeledQuery, qi: usize) -> Vec<PreferencePair> {
    let mut order: Vec<usize> = (0..q.len()).collect();
    order.sort_by_key(|&j| (q.ranks[j], j));
    let mut pairs = Vec::new();
    for (a, &k) in order.iter().enumerate() {
        for &l in &order[a + 1..] {
            if q.ranks[k] < q.ranks[l] {
                pairs.push(PreferencePair {
                    query: qi,
                    better: k,
                    worse: l,
                });
            }
        }
    }
    pairs
}

fn query_rng(seed: u64, qi: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(qi as u64);
    rng
}

fn collect_pairs(queries: &[LabeledQuery], cap: Option<usize>, seed: u64) -> Vec<PreferencePair> {
    let mut out = Vec::new();
    for (qi, q) in queries.iter().enumerate() {
        let pairs = query_pairs(q, qi);
        match cap {
            Some(cap) if pairs.len() > cap => {
                let mut picked = sample(&mut query_rng(seed, qi), pairs.len(), cap).into_vec();
                picked.sort_unstable();
                out.extend(picked.into_iter().map(|i| pairs[i]));
            }
            _ => out.extend(pairs),
        }
    }
    out
}

/// All preference pairs of every query, optionally subsampled to `cap` per image.
///
/// Labels must be a permutation of `1..M` within each image.
pub fn generate_pairs(
    queries: &[LabeledQuery],
    cap: Option<usize>,
    seed: u64,
) -> Result<Vec<PreferencePair>> {
    for q in queries {
        validate_permutation(q)?;
    }
    Ok(collect_pairs(queries, cap, seed))
}

/// Like [`generate_pairs`] but for graded labels with ties; tied candidates form no pair.
pub fn generate_graded_pairs(
    queries: &[LabeledQuery],
    cap: Option<usize>,
    seed: u64,
) -> Result<Vec<PreferencePair>> {
    for q in queries {
        if q.ranks.iter().any(|r| r.value() == 0) {
            return Err(Error::InvalidLabels {
                image_id: q.image_id.clone(),
                reason: "rank 0 is not allowed".into(),
            });
        }
    }
    Ok(collect_pairs(queries, cap, seed))
}

/// Objective, gradient and generalised Hessian over a fixed pair set.
pub struct PairwiseObjective<'a> {
    queries: &'a [LabeledQuery],
    pairs: &'a [PreferencePair],
    c: f64,
    dim: usize,
}

impl<'a> PairwiseObjective<'a> {
    pub fn new(
        queries: &'a [LabeledQuery],
        pairs: &'a [PreferencePair],
        c: f64,
        dim: usize,
    ) -> Result<Self> {
        for p in pairs {
            let q = queries.get(p.query).ok_or_else(|| {
                Error::InvalidParameter(format!("pair refers to missing query {}", p.query))
            })?;
            if p.better >= q.len() || p.worse >= q.len() {
                return Err(Error::InvalidParameter(format!(
                    "pair refers to missing candidate in query {}",
                    q.image_id
                )));
            }
        }
        for q in queries {
            for v in &q.vectors {
                Error::check_dim(dim, v.dim())?;
            }
        }
        Ok(PairwiseObjective {
            queries,
            pairs,
            c,
            dim,
        })
    }

    /// Per-candidate projections `v . d_j`, one vector per query.
    fn projections(&self, v: &[f64]) -> Vec<Vec<f64>> {
        self.queries
            .iter()
            .map(|q| {
                q.vectors
                    .iter()
                    .map(|d| optim::dot(v, d.values()))
                    .collect()
            })
            .collect()
    }

    /// `base + sum_j coef_j d_j` accumulated in query order.
    fn accumulate(&self, base: &[f64], coefs: &[Vec<f64>]) -> Vec<f64> {
        let mut out = base.to_vec();
        for (q, cq) in self.queries.iter().zip(coefs) {
            for (d, &a) in q.vectors.iter().zip(cq) {
                if a != 0.0 {
                    for (o, x) in out.iter_mut().zip(d.values()) {
                        *o += a * x;
                    }
                }
            }
        }
        out
    }

    fn zero_coefs(&self) -> Vec<Vec<f64>> {
        self.queries.iter().map(|q| vec![0.0; q.len()]).collect()
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        self.value_gradient(w).0
    }
}

impl SmoothObjective for PairwiseObjective<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value_gradient(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let scores = self.projections(w);
        let mut coefs = self.zero_coefs();
        let mut loss = 0.0;
        for p in self.pairs {
            let s = &scores[p.query];
            let margin = s[p.better] - s[p.worse];
            if margin < 1.0 {
                let slack = 1.0 - margin;
                loss += slack * slack;
                let lambda = -2.0 * self.c * slack;
                coefs[p.query][p.better] += lambda;
                coefs[p.query][p.worse] -= lambda;
            }
        }
        let f = 0.5 * optim::dot(w, w) + self.c * loss;
        (f, self.accumulate(w, &coefs))
    }

    fn hessian_product(&self, w: &[f64], v: &[f64]) -> Vec<f64> {
        let scores = self.projections(w);
        let proj = self.projections(v);
        let mut coefs = self.zero_coefs();
        for p in self.pairs {
            let s = &scores[p.query];
            if s[p.better] - s[p.worse] < 1.0 {
                let t = &proj[p.query];
                let a = 2.0 * self.c * (t[p.better] - t[p.worse]);
                coefs[p.query][p.better] += a;
                coefs[p.query][p.worse] -= a;
            }
        }
        self.accumulate(v, &coefs)
    }
}

/// `1/2 |w|^2 + C * sum max(0, 1 - (w.d_k - w.d_l))^2`.
pub fn objective(
    w: &[f64],
    pairs: &[PreferencePair],
    queries: &[LabeledQuery],
    c: f64,
) -> Result<f64> {
    let obj = PairwiseObjective::new(queries, pairs, c, w.len())?;
    Ok(obj.value(w))
}

/// Exact gradient of [`objective`].
pub fn gradient(
    w: &[f64],
    pairs: &[PreferencePair],
    queries: &[LabeledQuery],
    c: f64,
) -> Result<Vec<f64>> {
    let obj = PairwiseObjective::new(queries, pairs, c, w.len())?;
    Ok(obj.value_gradient(w).1)
}

/// Result of training with the full optimisation trace.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: RankModel,
    /// Objective at `w = 0` followed by each accepted iterate.
    pub history: Vec<f64>,
}

/// Trains on an explicit pair set.
pub fn train_on_pairs(
    data: &TrainingSet,
    pairs: &[PreferencePair],
    c: f64,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    check_c(c)?;
    if pairs.is_empty() {
        return Err(Error::NoPairs);
    }
    let obj = PairwiseObjective::new(&data.queries, pairs, c, data.dim)?;
    let sol = minimize(&obj, vec![0.0; data.dim], &config.solver_options())?;
    Ok(TrainOutcome {
        model: RankModel {
            weights: sol.weights,
            c,
            gt_mode: data.gt_mode,
            dim: data.dim,
            training_stats: sol.stats,
        },
        history: sol.history,
    })
}

pub fn train_with_history(
    data: &TrainingSet,
    c: f64,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    check_c(c)?;
    let pairs = generate_pairs(&data.queries, config.pair_cap_per_image, config.seed)?;
    train_on_pairs(data, &pairs, c, config)
}

/// Trains a ranking model with regulariser weight `c`, starting from `w = 0`.
pub fn train(data: &TrainingSet, c: f64, config: &TrainConfig) -> Result<RankModel> {
    train_with_history(data, c, config).map(|o| o.model)
}

pub fn score(model: &RankModel, d: &DiffVector) -> Result<f64> {
    score_weights(&model.weights, d)
}

pub(crate) fn score_weights(w: &[f64], d: &DiffVector) -> Result<f64> {
    Error::check_dim(w.len(), d.dim())?;
    Ok(optim::dot(w, d.values()))
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        match best {
            Some(b) if !(s > scores[b]) => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Fraction of correctly ordered within-image pairs; score ties count half.
///
/// Returns 0.5 when the data contains no pair.
pub fn pairwise_accuracy_weights(w: &[f64], queries: &[LabeledQuery]) -> Result<f64> {
    let mut total = 0usize;
    let mut correct = 0.0;
    for (qi, q) in queries.iter().enumerate() {
        let scores = q
            .vectors
            .iter()
            .map(|d| score_weights(w, d))
            .collect::<Result<Vec<_>>>()?;
        for p in query_pairs(q, qi) {
            total += 1;
            let (sk, sl) = (scores[p.better], scores[p.worse]);
            if sk > sl {
                correct += 1.0;
            } else if sk == sl {
                correct += 0.5;
            }
        }
    }
    Ok(if total == 0 {
        0.5
    } else {
        correct / total as f64
    })
}

pub fn pairwise_accuracy(model: &RankModel, data: &TrainingSet) -> Result<f64> {
    pairwise_accuracy_weights(&model.weights, &data.queries)
}

/// Fraction of queries whose top-scored candidate overlaps the ground truth by more than 0.5.
pub fn top1_accuracy_weights(w: &[f64], queries: &[LabeledQuery]) -> Result<f64> {
    if queries.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for q in queries {
        let scores = q
            .vectors
            .iter()
            .map(|d| score_weights(w, d))
            .collect::<Result<Vec<_>>>()?;
        if let Some(best) = argmax(&scores) {
            if q.overlaps[best] > 0.5 {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / queries.len() as f64)
}

/// Held-out scores of one model: the selection score and, as a finer
/// tie-breaker, pairwise ordering accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeldOut {
    pub score: f64,
    pub pairwise: f64,
}

/// Fold means for one grid value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub c: f64,
    pub score: f64,
    pub pairwise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub best_c: f64,
    pub scores: Vec<CvScore>,
}

/// Seeded partition of `n` items into `folds` near-equal groups.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Vec::new(); folds];
    for (pos, i) in idx.into_iter().enumerate() {
        out[pos % folds].push(i);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    out
}

/// Held-out score used to compare regularisation weights: top-1 annotation
/// accuracy, or pairwise accuracy when no held-out candidate overlaps by more than 0.5.
pub fn validation_score(w: &[f64], held_out: &[LabeledQuery]) -> Result<HeldOut> {
    let pairwise = pairwise_accuracy_weights(w, held_out)?;
    let any_positive = held_out.iter().any(|q| q.overlaps.iter().any(|&o| o > 0.5));
    let score = if any_positive {
        top1_accuracy_weights(w, held_out)?
    } else {
        pairwise
    };
    Ok(HeldOut { score, pairwise })
}

/// Generic k-fold selection of C over images.
///
/// `fit` trains on the given subset and scores the complementary subset. The
/// best C has the highest mean score; equal scores are separated by mean
/// pairwise accuracy, then by the smaller C. Top-1 accuracy saturates on easy
/// data, where the pairwise term keeps selection from collapsing onto the
/// smallest grid value.
pub(crate) fn select_c<F>(n_images: usize, config: &TrainConfig, fit: F) -> Result<CrossValidation>
where
    F: Fn(f64, &[usize], &[usize]) -> Result<HeldOut> + Sync,
{
    config.validate()?;
    if n_images < config.folds {
        return Err(Error::TooFewImages {
            needed: config.folds,
            found: n_images,
        });
    }
    let folds = fold_assignment(n_images, config.folds, config.seed);
    let jobs: Vec<(usize, usize)> = (0..config.c_grid.len())
        .flat_map(|ci| (0..config.folds).map(move |fi| (ci, fi)))
        .collect();
    let fold_scores = jobs
        .par_iter()
        .map(|&(ci, fi)| {
            let train_idx: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|(f, _)| *f != fi)
                .flat_map(|(_, v)| v.iter().copied())
                .collect();
            fit(config.c_grid[ci], &train_idx, &folds[fi])
        })
        .collect::<Result<Vec<HeldOut>>>()?;

    let scores: Vec<CvScore> = config
        .c_grid
        .iter()
        .enumerate()
        .map(|(ci, &c)| {
            let s = &fold_scores[ci * config.folds..(ci + 1) * config.folds];
            let n = s.len() as f64;
            CvScore {
                c,
                score: s.iter().map(|h| h.score).sum::<f64>() / n,
                pairwise: s.iter().map(|h| h.pairwise).sum::<f64>() / n,
            }
        })
        .collect();
    let best_c = scores
        .iter()
        .fold(None::<&CvScore>, |best, s| match best {
            Some(b) if (s.score, s.pairwise, -s.c) <= (b.score, b.pairwise, -b.c) => Some(b),
            _ => Some(s),
        })
        .map(|s| s.c)
        .expect("grid is non-empty");
    Ok(CrossValidation { best_c, scores })
}

/// k-fold cross-validation of C over images (never over candidates).
pub fn cross_validate(data: &TrainingSet, config: &TrainConfig) -> Result<CrossValidation> {
    select_c(data.len(), config, |c, train_idx, test_idx| {
        let model = train(&data.subset(train_idx), c, config)?;
        validation_score(&model.weights, &data.subset(test_idx).queries)
    })
}
