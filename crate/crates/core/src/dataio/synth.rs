//! Synthetic candidate-region datasets with a planted ranking structure.
//!
//! The vocabulary is split into three blocks: object words, context words and
//! clutter words. Each class owns a share of the object block. Each image has an
//! object histogram `g` drawn around its class prototype, a context histogram
//! shared by its candidates, and gives every candidate its own clutter words
//! (disjoint within the image when the clutter block is large enough). A
//! candidate with overlap `a` gets
//!
//! ```text
//! x = a * g + (1 - a) * b,   b = k * context + (1 - k) * clutter_j
//! ```
//!
//! with every bin count multiplied by log-normal noise. `k` is a fixed context
//! share for overlapping candidates and decays with centre distance for the others, so
//! nearer background carries more context. In the noiseless case the clutter
//! mass of a candidate's difference vector is strictly monotone in its intended
//! rank, which makes "minus one on every clutter word" an exact planted ranker.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BBox, RankLabel};
use crate::image::{AnnotatedImage, Candidate, Histogram};

/// Largest context share, used by every overlapping candidate.
const CONTEXT_SHARE: f64 = 0.3;

/// Distribution of candidate overlaps within an image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapProfile {
    /// Expected fraction of candidates that miss the object entirely.
    pub zero_fraction: f64,
    /// Positive overlaps are `min_iou + (max_iou - min_iou) * Beta(beta_a, beta_b)`.
    pub min_iou: f64,
    pub max_iou: f64,
    pub beta_a: f64,
    pub beta_b: f64,
}

impl Default for OverlapProfile {
    fn default() -> Self {
        OverlapProfile {
            zero_fraction: 0.4,
            min_iou: 0.05,
            max_iou: 0.95,
            beta_a: 1.2,
            beta_b: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_images: usize,
    pub candidates_per_image: usize,
    pub dim: usize,
    pub n_classes: usize,
    /// Standard deviation of the log of the multiplicative per-bin noise.
    pub noise_sigma: f64,
    pub overlap_profile: OverlapProfile,
    /// Share of each region's words that follows the mixture; the rest is a
    /// uniform floor common to all regions.
    pub hidden_signal_strength: f64,
    /// Visual words per region.
    pub words_per_region: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_images: 50,
            candidates_per_image: 20,
            dim: 50,
            n_classes: 4,
            noise_sigma: 0.0,
            overlap_profile: OverlapProfile::default(),
            hidden_signal_strength: 1.0,
            words_per_region: 200.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Benchmark used to compare training schemes: noisy counts, few candidates
    /// above one half overlap, and more images than the default.
    pub fn graded_benchmark(seed: u64) -> Self {
        SynthConfig {
            n_images: 240,
            n_classes: 8,
            noise_sigma: 0.4,
            overlap_profile: OverlapProfile {
                beta_b: 4.0,
                ..OverlapProfile::default()
            },
            seed,
            ..SynthConfig::default()
        }
    }
}

/// Sizes of the object, context and clutter vocabulary blocks.
pub fn vocabulary_blocks(dim: usize) -> (usize, usize, usize) {
    let object = (dim / 5).max(1);
    let context = (dim / 10).max(1);
    (object, context, dim.saturating_sub(object + context))
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("synth config: {m}")));
        if self.n_images == 0 || self.candidates_per_image == 0 || self.n_classes == 0 {
            return bad("counts must be at least 1");
        }
        if vocabulary_blocks(self.dim).2 == 0 {
            return bad("dim must be at least 3");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be finite and non-negative");
        }
        if !(self.hidden_signal_strength > 0.0 && self.hidden_signal_strength <= 1.0) {
            return bad("hidden_signal_strength must be in (0, 1]");
        }
        if !(self.words_per_region > 0.0 && self.words_per_region.is_finite()) {
            return bad("words_per_region must be positive");
        }
        let p = &self.overlap_profile;
        if !(0.0..=1.0).contains(&p.zero_fraction) {
            return bad("zero_fraction must be in [0, 1]");
        }
        if !(p.min_iou > 0.0 && p.min_iou <= p.max_iou && p.max_iou < 1.0) {
            return bad("need 0 < min_iou <= max_iou < 1");
        }
        if !(p.beta_a > 0.0 && p.beta_b > 0.0) {
            return bad("beta parameters must be positive");
        }
        Ok(())
    }
}

/// Ground truth of the construction for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageOracle {
    pub image_id: String,
    /// Intended overlap of each candidate with the ground-truth box.
    pub ious: Vec<f64>,
    /// Centre distance of each candidate to the ground-truth box.
    pub distances: Vec<f64>,
    pub ranks: Vec<RankLabel>,
    pub best_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOracle {
    pub images: Vec<ImageOracle>,
    /// Ranker that orders noiseless candidates exactly when clutter words are
    /// not shared between candidates of one image.
    pub planted_weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub images: Vec<AnnotatedImage>,
    pub oracle: SynthOracle,
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

/// Random positive weights on `bins`, normalised to unit mass, embedded in `dim`.
fn random_block(rng: &mut ChaCha8Rng, dim: usize, bins: &[usize]) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    for &b in bins {
        v[b] = rng.gen_range(0.5..1.5);
    }
    normalized(v)
}

/// A box with the requested overlap `t` with `gt`. The image must leave at least
/// one box width/height of margin around `gt`.
fn box_with_overlap(rng: &mut ChaCha8Rng, gt: &BBox, t: f64) -> Result<BBox> {
    let (w, h) = (gt.width(), gt.height());
    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let mode = if t >= 0.25 {
        rng.gen_range(0..4)
    } else {
        rng.gen_range(0..3)
    };
    match mode {
        0 => {
            let s = sign * w * (1.0 - t) / (1.0 + t);
            BBox::new(gt.x1() + s, gt.y1(), gt.x2() + s, gt.y2())
        }
        1 => {
            let s = sign * h * (1.0 - t) / (1.0 + t);
            BBox::new(gt.x1(), gt.y1() + s, gt.x2(), gt.y2() + s)
        }
        2 => {
            let (cw, ch) = (w * t.sqrt(), h * t.sqrt());
            let x1 = gt.x1() + rng.gen_range(0.0..=1.0) * (w - cw);
            let y1 = gt.y1() + rng.gen_range(0.0..=1.0) * (h - ch);
            BBox::new(x1, y1, x1 + cw, y1 + ch)
        }
        _ => {
            let k = 1.0 / t.sqrt();
            let (cw, ch) = (w * k, h * k);
            let x1 = gt.x1() - rng.gen_range(0.0..=1.0) * (cw - w);
            let y1 = gt.y1() - rng.gen_range(0.0..=1.0) * (ch - h);
            BBox::new(x1, y1, x1 + cw, y1 + ch)
        }
    }
}

fn box_without_overlap(rng: &mut ChaCha8Rng, gt: &BBox, width: f64, height: f64) -> Result<BBox> {
    for _ in 0..10_000 {
        let cw = (gt.width() * rng.gen_range(0.5..1.5)).min(width - 1.0);
        let ch = (gt.height() * rng.gen_range(0.5..1.5)).min(height - 1.0);
        let x1 = rng.gen_range(0.0..=(width - cw));
        let y1 = rng.gen_range(0.0..=(height - ch));
        let b = BBox::new(x1, y1, x1 + cw, y1 + ch)?;
        if b.intersection_area(gt) == 0.0 {
            return Ok(b);
        }
    }
    Err(Error::InvalidParameter(
        "could not place a non-overlapping candidate".into(),
    ))
}

/// Sort order of the construction: overlapping candidates by decreasing
/// overlap, then the rest by increasing distance, ties by index.
fn intended_ranks(ious: &[f64], distances: &[f64]) -> Vec<RankLabel> {
    let mut idx: Vec<usize> = (0..ious.len()).collect();
    idx.sort_by(|&i, &j| {
        let key = |k: usize| {
            if ious[k] > 0.0 {
                (0u8, -ious[k])
            } else {
                (1u8, distances[k])
            }
        };
        let (gi, vi) = key(i);
        let (gj, vj) = key(j);
        gi.cmp(&gj).then(vi.total_cmp(&vj)).then(i.cmp(&j))
    });
    let mut ranks = vec![RankLabel(0); ious.len()];
    for (pos, i) in idx.into_iter().enumerate() {
        ranks[i] = RankLabel(pos as u32 + 1);
    }
    ranks
}

pub fn class_name(k: usize) -> String {
    format!("class{k:02}")
}

struct Vocabulary {
    object: Vec<usize>,
    context: Vec<usize>,
    clutter: Vec<usize>,
}

impl Vocabulary {
    /// Object words used by class `k`: a contiguous share of the object block,
    /// so classes use different words whenever the block is large enough.
    fn class_words(&self, k: usize, n_classes: usize) -> Vec<usize> {
        let n = self.object.len();
        let per = (n / n_classes).max(1);
        let start = (k * n / n_classes).min(n - per);
        self.object[start..start + per].to_vec()
    }

    fn new(dim: usize) -> Self {
        let (o, c, _) = vocabulary_blocks(dim);
        Vocabulary {
            object: (0..o).collect(),
            context: (o..o + c).collect(),
            clutter: (o + c..dim).collect(),
        }
    }
}

/// Generates a dataset and the record of how it was built. Deterministic in `cfg`.
pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let vocab = Vocabulary::new(cfg.dim);
    let mut class_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let prototypes: Vec<Vec<f64>> = (0..cfg.n_classes)
        .map(|k| {
            let mut v = vec![0.0; cfg.dim];
            for &b in &vocab.class_words(k, cfg.n_classes) {
                // heavy-tailed class signatures so classes look different
                v[b] = class_rng.gen_range(0.0f64..1.0).powi(3) + 0.02;
            }
            normalized(v)
        })
        .collect();

    let mut images = Vec::with_capacity(cfg.n_images);
    let mut oracles = Vec::with_capacity(cfg.n_images);
    for i in 0..cfg.n_images {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(i as u64 + 1);
        let class = i % cfg.n_classes;
        let (img, oracle) = generate_image(cfg, &vocab, &prototypes[class], class, i, &mut rng)?;
        images.push(img);
        oracles.push(oracle);
    }

    let mut planted = vec![0.0; cfg.dim];
    for &b in &vocab.clutter {
        planted[b] = -1.0;
    }
    Ok(SynthDataset {
        images,
        oracle: SynthOracle {
            images: oracles,
            planted_weights: planted,
        },
    })
}

fn generate_image(
    cfg: &SynthConfig,
    vocab: &Vocabulary,
    prototype: &[f64],
    class: usize,
    index: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(AnnotatedImage, ImageOracle)> {
    let n = cfg.candidates_per_image;
    let width: u32 = rng.gen_range(400..=600);
    let height: u32 = rng.gen_range(300..=500);
    let (wf, hf) = (width as f64, height as f64);
    let gw = wf * rng.gen_range(0.12..0.25);
    let gh = hf * rng.gen_range(0.12..0.25);
    let gx = rng.gen_range(gw..=(wf - 2.0 * gw));
    let gy = rng.gen_range(gh..=(hf - 2.0 * gh));
    let gt = BBox::new(gx, gy, gx + gw, gy + gh)?;
    let gt_diag = gw.hypot(gh);

    let profile = &cfg.overlap_profile;
    let beta = Beta::new(profile.beta_a, profile.beta_b)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut ious = Vec::with_capacity(n);
    let mut boxes = Vec::with_capacity(n);
    for _ in 0..n {
        if rng.gen_bool(profile.zero_fraction) {
            boxes.push(box_without_overlap(rng, &gt, wf, hf)?);
            ious.push(0.0);
        } else {
            let t = profile.min_iou + (profile.max_iou - profile.min_iou) * beta.sample(rng);
            boxes.push(box_with_overlap(rng, &gt, t)?);
            ious.push(t);
        }
    }
    let distances: Vec<f64> = boxes
        .iter()
        .map(|b| crate::geometry::center_distance(b, &gt))
        .collect();

    // object: class prototype with per-image jitter
    let mut g = vec![0.0; cfg.dim];
    for &b in &vocab.object {
        g[b] = prototype[b] * rng.gen_range(0.5..1.5);
    }
    let g = normalized(g);
    let context = random_block(rng, cfg.dim, &vocab.context);
    let mut clutter_bins = vocab.clutter.clone();
    clutter_bins.shuffle(rng);
    let clutter: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let own: Vec<usize> = if clutter_bins.len() >= n {
                clutter_bins.iter().skip(j).step_by(n).copied().collect()
            } else {
                vec![clutter_bins[j % clutter_bins.len()]]
            };
            random_block(rng, cfg.dim, &own)
        })
        .collect();

    let s = cfg.hidden_signal_strength;
    let floor = (1.0 - s) / cfg.dim as f64;
    let noise =
        Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let to_counts = |clean: Vec<f64>, rng: &mut ChaCha8Rng| -> Result<Histogram> {
        let v: Vec<f64> = clean
            .into_iter()
            .map(|x| {
                let c = cfg.words_per_region * (s * x + floor);
                if cfg.noise_sigma > 0.0 {
                    c * noise.sample(rng).exp()
                } else {
                    c
                }
            })
            .collect();
        Histogram::new(v)
    };

    let mut candidates = Vec::with_capacity(n);
    for j in 0..n {
        let a = ious[j];
        let k = if a > 0.0 {
            CONTEXT_SHARE
        } else {
            CONTEXT_SHARE * (-distances[j] / gt_diag).exp()
        };
        let clean: Vec<f64> = (0..cfg.dim)
            .map(|b| a * g[b] + (1.0 - a) * (k * context[b] + (1.0 - k) * clutter[j][b]))
            .collect();
        let histogram = to_counts(clean, rng)?;
        let objectness = 0.5 * a + 0.5 * rng.gen_range(0.0..1.0);
        candidates.push(Candidate {
            bbox: boxes[j],
            objectness: Some(objectness),
            histogram,
        });
    }
    // the annotated box also holds some of the surrounding scene
    let gt_clean: Vec<f64> = (0..cfg.dim)
        .map(|b| (1.0 - CONTEXT_SHARE) * g[b] + CONTEXT_SHARE * context[b])
        .collect();
    let gt_histogram = to_counts(gt_clean, rng)?;

    let ranks = intended_ranks(&ious, &distances);
    let best_index = ranks
        .iter()
        .position(|r| r.value() == 1)
        .expect("rank 1 exists");
    let image_id = format!("synth{}-{index:05}", cfg.seed);
    Ok((
        AnnotatedImage {
            image_id: image_id.clone(),
            class_label: class_name(class),
            width,
            height,
            candidates,
            ground_truth: vec![gt],
            difficult: vec![false],
            gt_histogram: Some(gt_histogram),
        },
        ImageOracle {
            image_id,
            ious,
            distances,
            ranks,
            best_index,
        },
    ))
}
