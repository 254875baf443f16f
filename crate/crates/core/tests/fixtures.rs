//! Hand-computed fixtures. Expected values were obtained with exact rational
//! arithmetic outside this crate.

use annorank::annotator::{annotate, annotate_fused, fuse_scores, FusionConfig};
use annorank::features::{build_target_features, build_training_features, GtMode};
use annorank::geometry::{assign_ranks, iou, BBox, RankLabel};
use annorank::image::{AnnotatedImage, Candidate, Histogram};
use annorank::optim::{StopReason, TrainingStats};
use annorank::ranksvm::RankModel;

fn bbox(c: [f64; 4]) -> BBox {
    BBox::new(c[0], c[1], c[2], c[3]).unwrap()
}

fn fixture() -> AnnotatedImage {
    let hists = [[1., 2., 3., 4.], [0., 5., 5., 0.], [2., 0., 0., 6.]];
    let boxes = [
        [10., 10., 30., 30.],
        [20., 10., 40., 30.],
        [100., 100., 120., 120.],
    ];
    AnnotatedImage {
        image_id: "fx".into(),
        class_label: "thing".into(),
        width: 200,
        height: 200,
        candidates: hists
            .iter()
            .zip(boxes)
            .zip([0.2, 0.9, 0.4])
            .map(|((h, b), o)| Candidate {
                bbox: bbox(b),
                objectness: Some(o),
                histogram: Histogram::new(h.to_vec()).unwrap(),
            })
            .collect(),
        ground_truth: vec![bbox([10., 10., 30., 30.])],
        difficult: vec![false],
        gt_histogram: Some(Histogram::new(vec![3., 3., 0., 2.]).unwrap()),
    }
}

fn assert_close(a: &[f64], b: &[f64]) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() < 1e-15, "{a:?} vs {b:?}");
    }
}

#[test]
fn exact_mode_difference_vectors() {
    let q = build_training_features(&fixture(), GtMode::Exact).unwrap();
    let want = [
        [11. / 40., 7. / 40., 3. / 10., 3. / 20.],
        [3. / 8., 1. / 8., 1. / 2., 1. / 4.],
        [1. / 8., 3. / 8., 0., 1. / 2.],
    ];
    for (d, w) in q.vectors.iter().zip(want) {
        assert_close(d.values(), &w);
    }
    assert_eq!(q.ranks, vec![RankLabel(1), RankLabel(2), RankLabel(3)]);
    assert_close(&q.overlaps, &[1.0, 1.0 / 3.0, 0.0]);
}

#[test]
fn approximate_mode_difference_vectors() {
    let want = [
        [1. / 140., 1. / 20., 1. / 70., 3. / 70.],
        [3. / 28., 1. / 4., 3. / 14., 5. / 14.],
        [1. / 7., 1. / 4., 2. / 7., 11. / 28.],
    ];
    let q = build_training_features(&fixture(), GtMode::Approximate).unwrap();
    let t = build_target_features(&fixture()).unwrap();
    for ((d, e), w) in q.vectors.iter().zip(&t).zip(want) {
        assert_close(d.values(), &w);
        assert_eq!(d, e);
    }
}

#[test]
fn overlap_fixtures() {
    let gt = bbox([10., 10., 30., 30.]);
    assert_eq!(iou(&bbox([20., 10., 40., 30.]), &gt), 1.0 / 3.0);
    assert_eq!(iou(&bbox([12., 14., 31., 29.]), &gt), 54.0 / 83.0);
    assert_eq!(iou(&bbox([100., 100., 120., 120.]), &gt), 0.0);
    let ranks = assign_ranks(&fixture().boxes(), &gt);
    assert_eq!(ranks, vec![RankLabel(1), RankLabel(2), RankLabel(3)]);
}

#[test]
fn fusion_fixture() {
    let cfg = FusionConfig::new(0.3).unwrap();
    let fused = fuse_scores(&[2.0, -1.0, 0.5, 3.0], &[0.1, 0.9, 0.4, 0.2], &cfg).unwrap();
    assert_close(&fused, &[0.225, 0.7, 0.375, 0.3875]);
    for (a, b) in fused.iter().zip([0.225, 0.7, 0.375, 0.3875]) {
        assert!((a - b).abs() < 1e-12);
    }
}

fn model(weights: Vec<f64>) -> RankModel {
    RankModel {
        dim: weights.len(),
        weights,
        c: 1.0,
        gt_mode: GtMode::Approximate,
        training_stats: TrainingStats {
            iterations: 0,
            objective: 0.0,
            gradient_norm: 0.0,
            stop_reason: StopReason::GradientTolerance,
        },
    }
}

#[test]
fn annotation_fixture() {
    // scores are minus the L1 mass of the approximate-mode vectors:
    // -8/70, -13/14, -15/14
    let img = fixture();
    let r = annotate(&model(vec![-1.0; 4]), &img).unwrap();
    assert_eq!(r.chosen_index, 0);
    assert_eq!(r.correct, Some(true));
    assert_close(&r.candidate_scores, &[-8. / 70., -13. / 14., -15. / 14.]);

    // objectness alone picks candidate 1, which overlaps by only 1/3
    let fused = annotate_fused(
        &model(vec![-1.0; 4]),
        &img,
        &[0.2, 0.9, 0.4],
        &FusionConfig::new(0.0).unwrap(),
    )
    .unwrap();
    assert_eq!(fused.chosen_index, 1);
    assert_eq!(fused.correct, Some(false));
}
