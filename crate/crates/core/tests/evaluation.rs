use std::collections::BTreeSet;

use annorank::annotator::{annotate, AnnotationResult};
use annorank::dataio::synth::{synth_generate, SynthConfig};
use annorank::eval::{
    evaluate, fit_method, run_split_protocol, sample_split, CSelection, Fitted, Method,
    ProtocolConfig,
};
use annorank::features::GtMode;
use annorank::geometry::{iou, BBox};
use annorank::image::{AnnotatedImage, Candidate, Histogram};
use annorank::ranksvm::{cross_validate, TrainConfig, TrainingSet};
use annorank::Error;

fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
    BBox::new(x1, y1, x2, y2).unwrap()
}

fn image(id: &str, class: &str, gt: Option<BBox>) -> AnnotatedImage {
    AnnotatedImage {
        image_id: id.into(),
        class_label: class.into(),
        width: 100,
        height: 100,
        candidates: vec![Candidate {
            bbox: b(0., 0., 10., 10.),
            objectness: None,
            histogram: Histogram::new(vec![1.0]).unwrap(),
        }],
        ground_truth: gt.into_iter().collect(),
        difficult: vec![],
        gt_histogram: None,
    }
}

fn picked(id: &str, bbox: BBox) -> AnnotationResult {
    AnnotationResult {
        image_id: id.into(),
        chosen_index: 0,
        chosen_box: bbox,
        candidate_scores: vec![0.0],
        correct: None,
    }
}

#[test]
fn ten_image_recount() {
    let gt = b(0., 0., 10., 10.);
    // chosen boxes and their overlaps with gt
    let choices = [
        ("a", b(0., 0., 10., 10.)),   // 1.0
        ("a", b(1., 0., 11., 10.)),   // 9/11
        ("a", b(0., 0., 20., 10.)),   // exactly 0.5
        ("a", b(5., 0., 15., 10.)),   // 1/3
        ("a", b(50., 50., 60., 60.)), // 0
        ("a", b(0., 0., 10., 12.)),   // 10/12
        ("b", b(2., 2., 10., 10.)),   // 0.64
        ("b", b(0., 0., 5., 10.)),    // 0.5
        ("b", b(0., 0., 10., 10.)),   // 1.0
        ("b", b(3., 3., 13., 13.)),   // 49/151
    ];
    let mut images = Vec::new();
    let mut results = Vec::new();
    for (i, (class, bbox)) in choices.iter().enumerate() {
        let id = format!("img{i}");
        images.push(image(&id, class, Some(gt)));
        results.push(picked(&id, *bbox));
    }
    assert_eq!(iou(&choices[2].1, &gt), 0.5);
    assert_eq!(iou(&choices[7].1, &gt), 0.5);

    let report = evaluate(&results, &images).unwrap();
    assert_eq!(report.per_class["a"].n_correct, 3);
    assert_eq!(report.per_class["a"].n_images, 6);
    assert_eq!(report.per_class["a"].accuracy, 50.0);
    assert_eq!(report.per_class["b"].n_correct, 2);
    assert_eq!(report.per_class["b"].accuracy, 50.0);
    assert_eq!(report.n_images, 10);
    assert_eq!(report.overall_accuracy, 50.0);
}

#[test]
fn evaluation_needs_ground_truth() {
    let images = vec![image("x", "a", None)];
    let err = evaluate(&[picked("x", b(0., 0., 1., 1.))], &images).unwrap_err();
    assert!(matches!(err, Error::MissingGroundTruth(_)));
}

#[test]
fn difficult_boxes_are_ignored() {
    let mut img = image("x", "a", Some(b(0., 0., 10., 10.)));
    img.ground_truth.push(b(50., 50., 60., 60.));
    img.difficult = vec![true, false];
    let report = evaluate(&[picked("x", b(0., 0., 10., 10.))], &[img]).unwrap();
    assert_eq!(report.per_class["a"].n_correct, 0);
}

fn four_class_data() -> Vec<AnnotatedImage> {
    synth_generate(&SynthConfig {
        n_images: 40,
        n_classes: 4,
        noise_sigma: 0.5,
        seed: 3,
        ..SynthConfig::default()
    })
    .unwrap()
    .images
}

#[test]
fn split_protocol_matches_hand_aggregation() {
    let data = four_class_data();
    let protocol = ProtocolConfig {
        n_aux: 2,
        trials: 4,
        seed: 21,
        method: Method::Objectness,
        c: CSelection::Fixed(1.0),
    };
    let report = run_split_protocol(&data, &protocol, &TrainConfig::default()).unwrap();
    let classes: BTreeSet<String> = data.iter().map(|i| i.class_label.clone()).collect();

    let mut per_class: std::collections::BTreeMap<String, Vec<f64>> = Default::default();
    let mut overall = Vec::new();
    for t in 0..4 {
        let split = sample_split(&classes, 2, 21, t);
        assert_eq!(report.trials[t].split, split);
        assert!(split.auxiliary_classes.is_disjoint(&split.target_classes));
        let (mut hits, mut total) = (0usize, 0usize);
        for class in &split.target_classes {
            let imgs: Vec<&AnnotatedImage> =
                data.iter().filter(|i| &i.class_label == class).collect();
            let correct = imgs
                .iter()
                .filter(|img| {
                    let obj: Vec<f64> = img
                        .candidates
                        .iter()
                        .map(|c| c.objectness.unwrap())
                        .collect();
                    let mut best = 0;
                    for (j, o) in obj.iter().enumerate() {
                        if *o > obj[best] {
                            best = j;
                        }
                    }
                    iou(&img.candidates[best].bbox, &img.ground_truth[0]) > 0.5
                })
                .count();
            per_class
                .entry(class.clone())
                .or_default()
                .push(100.0 * correct as f64 / imgs.len() as f64);
            hits += correct;
            total += imgs.len();
        }
        overall.push(100.0 * hits as f64 / total as f64);
    }
    for (class, accs) in &per_class {
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        assert!((report.per_class[class].accuracy - mean).abs() < 1e-9);
        assert_eq!(report.per_class[class].n_trials, accs.len());
    }
    let mean = overall.iter().sum::<f64>() / 4.0;
    let var = overall.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 3.0;
    assert!((report.mean_overall - mean).abs() < 1e-9);
    assert!((report.std_overall - var.sqrt()).abs() < 1e-9);
}

#[test]
fn single_trial_equals_one_direct_run() {
    let data = four_class_data();
    let method = Method::Ranking {
        gt_mode: GtMode::Approximate,
    };
    let protocol = ProtocolConfig {
        n_aux: 2,
        trials: 1,
        seed: 5,
        method,
        c: CSelection::Fixed(0.1),
    };
    let config = TrainConfig::default();
    let report = run_split_protocol(&data, &protocol, &config).unwrap();
    let classes: BTreeSet<String> = data.iter().map(|i| i.class_label.clone()).collect();
    let split = sample_split(&classes, 2, 5, 0);
    let aux: Vec<AnnotatedImage> = data
        .iter()
        .filter(|i| split.auxiliary_classes.contains(&i.class_label))
        .cloned()
        .collect();
    let target: Vec<AnnotatedImage> = data
        .iter()
        .filter(|i| split.target_classes.contains(&i.class_label))
        .cloned()
        .collect();
    let Fitted::Rank(model) = fit_method(&method, &aux, 0.1, &config).unwrap() else {
        panic!("ranking model expected");
    };
    let results: Vec<_> = target
        .iter()
        .map(|img| annotate(&model, img).unwrap())
        .collect();
    let direct = evaluate(&results, &target).unwrap();
    assert_eq!(report.trials[0].report, direct);
    assert_eq!(report.mean_overall, direct.overall_accuracy);
    assert_eq!(report.std_overall, 0.0);
}

#[test]
fn too_few_classes() {
    let data = four_class_data();
    let protocol = ProtocolConfig {
        n_aux: 4,
        trials: 1,
        seed: 0,
        method: Method::Objectness,
        c: CSelection::Fixed(1.0),
    };
    assert!(matches!(
        run_split_protocol(&data, &protocol, &TrainConfig::default()),
        Err(Error::InsufficientClasses { n_aux: 4, found: 4 })
    ));
}

#[test]
fn singleton_grid_returns_its_value() {
    let data = TrainingSet::from_images(&four_class_data(), GtMode::Approximate).unwrap();
    let config = TrainConfig {
        c_grid: vec![0.3],
        ..TrainConfig::default()
    };
    let cv = cross_validate(&data, &config).unwrap();
    assert_eq!(cv.best_c, 0.3);
    assert_eq!(cv.scores.len(), 1);
}

#[test]
fn cross_validation_is_deterministic() {
    let data = TrainingSet::from_images(&four_class_data(), GtMode::Approximate).unwrap();
    let config = TrainConfig {
        c_grid: vec![0.01, 1.0, 100.0],
        folds: 3,
        seed: 4,
        ..TrainConfig::default()
    };
    let a = cross_validate(&data, &config).unwrap();
    let b = cross_validate(&data, &config).unwrap();
    assert_eq!(a.scores, b.scores);
    assert!(config.c_grid.contains(&a.best_c));
    // accuracy first, then held-out pairwise agreement, then the smaller C
    let key = |s: &annorank::ranksvm::CvScore| (s.score, s.pairwise, -s.c);
    let top = a
        .scores
        .iter()
        .copied()
        .reduce(|x, y| if key(&y) > key(&x) { y } else { x })
        .unwrap();
    assert_eq!(top.c, a.best_c);
}
