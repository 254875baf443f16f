use annorank::baselines::{BinaryModel, FeatureSpace};
use annorank::dataio::{
    load_dataset, model_from_str, model_to_string, read_dataset, save_dataset, write_dataset,
    AnyModel, LoadOptions,
};
use annorank::features::GtMode;
use annorank::geometry::BBox;
use annorank::image::{AnnotatedImage, Candidate, Histogram};
use annorank::optim::{StopReason, TrainingStats};
use annorank::ranksvm::RankModel;
use annorank::Error;
use proptest::prelude::*;

fn arb_box(w: u32, h: u32) -> impl Strategy<Value = BBox> {
    (
        0.0..(w as f64 - 1.0),
        0.0..(h as f64 - 1.0),
        0.01..1.0f64,
        0.01..1.0f64,
    )
        .prop_map(move |(x, y, fw, fh)| {
            let x2 = x + (w as f64 - x) * fw;
            let y2 = y + (h as f64 - y) * fh;
            BBox::new(
                x,
                y,
                x2.max(x + 1e-6).min(w as f64),
                y2.max(y + 1e-6).min(h as f64),
            )
            .unwrap()
        })
}

fn arb_hist(dim: usize) -> impl Strategy<Value = Histogram> {
    // some exact zeros so the sparse encoding is exercised
    prop::collection::vec(prop_oneof![Just(0.0), 0.0..50.0f64, 1e-9..1e-6f64], dim)
        .prop_filter("nonzero", |v| v.iter().any(|x| *x > 0.0))
        .prop_map(|v| Histogram::new(v).unwrap())
}

fn arb_image(dim: usize) -> impl Strategy<Value = AnnotatedImage> {
    (
        50u32..500,
        50u32..500,
        "[a-z0-9_]{1,12}",
        "[a-z]{1,8}",
        1usize..6,
        0usize..3,
        any::<bool>(),
    )
        .prop_flat_map(move |(w, h, id, class, n, n_gt, with_gt_hist)| {
            (
                Just((w, h, id, class)),
                prop::collection::vec(
                    (arb_box(w, h), prop::option::of(0.0..1.0f64), arb_hist(dim)),
                    n,
                ),
                prop::collection::vec((arb_box(w, h), any::<bool>()), n_gt),
                if with_gt_hist {
                    arb_hist(dim).prop_map(Some).boxed()
                } else {
                    Just(None).boxed()
                },
            )
        })
        .prop_map(
            |((w, h, id, class), cands, gts, gt_histogram)| AnnotatedImage {
                image_id: id,
                class_label: class,
                width: w,
                height: h,
                candidates: cands
                    .into_iter()
                    .map(|(bbox, objectness, histogram)| Candidate {
                        bbox,
                        objectness,
                        histogram,
                    })
                    .collect(),
                ground_truth: gts.iter().map(|g| g.0).collect(),
                difficult: gts.iter().map(|g| g.1).collect(),
                gt_histogram,
            },
        )
}

fn stats() -> impl Strategy<Value = TrainingStats> {
    (0usize..300, any::<f64>(), 0.0..1e3f64).prop_map(|(iterations, objective, gradient_norm)| {
        TrainingStats {
            iterations,
            objective: if objective.is_finite() {
                objective
            } else {
                1.0
            },
            gradient_norm,
            stop_reason: StopReason::ObjectiveStalled,
        }
    })
}

fn finite() -> impl Strategy<Value = f64> {
    any::<f64>().prop_filter("finite", |x| x.is_finite())
}

fn arb_model() -> impl Strategy<Value = AnyModel> {
    (1usize..30).prop_flat_map(|dim| {
        prop_oneof![
            (
                prop::collection::vec(finite(), dim),
                1e-4..1e4f64,
                any::<bool>(),
                stats()
            )
                .prop_map(move |(weights, c, exact, training_stats)| {
                    AnyModel::Rank(RankModel {
                        weights,
                        c,
                        gt_mode: if exact {
                            GtMode::Exact
                        } else {
                            GtMode::Approximate
                        },
                        dim,
                        training_stats,
                    })
                }),
            (
                prop::collection::vec(finite(), dim),
                finite(),
                1e-4..1e4f64,
                stats()
            )
                .prop_map(move |(weights, bias, c, training_stats)| {
                    AnyModel::Binary(BinaryModel {
                        weights,
                        bias,
                        c,
                        dim,
                        feature_space: FeatureSpace::RawHistogram,
                        training_stats,
                    })
                }),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn dataset_round_trip(images in (1usize..12).prop_flat_map(|d| prop::collection::vec(arb_image(d), 1..5))) {
        let mut buf = Vec::new();
        write_dataset(&mut buf, &images).unwrap();
        let back = read_dataset(buf.as_slice(), &LoadOptions::default()).unwrap();
        prop_assert_eq!(back, images);
    }

    #[test]
    fn model_round_trip(model in arb_model()) {
        let text = model_to_string(&model).unwrap();
        prop_assert_eq!(model_from_str(&text).unwrap(), model);
    }
}

#[test]
fn dataset_file_round_trip() {
    let data = annorank::dataio::synth_generate(&annorank::dataio::SynthConfig {
        n_images: 6,
        noise_sigma: 0.3,
        ..Default::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    save_dataset(&path, &data.images).unwrap();
    assert_eq!(load_dataset(&path).unwrap(), data.images);
}

#[test]
fn rejects_malformed_datasets() {
    let opts = LoadOptions::default();
    let base = r#"{"image_id":"a","class_label":"c","width":10,"height":10,"candidates":[{"box":[0,0,5,5],"histogram":[1,2]}],"ground_truth":[[0,0,5,5]]}"#;
    assert!(read_dataset(base.as_bytes(), &opts).is_ok());

    let cases = [
        base.replace("[1,2]", "[0,0]"),
        base.replace(
            r#""ground_truth":[[0,0,5,5]]"#,
            r#""ground_truth":[[0,0,50,5]]"#,
        ),
        base.replace(r#""histogram":[1,2]"#, r#""histogram":[1,-2]"#),
        base.replace(r#""width":10"#, r#""width":0"#),
        base.replace(
            r#""candidates":[{"box":[0,0,5,5],"histogram":[1,2]}]"#,
            r#""candidates":[]"#,
        ),
        base.replace("}", r#","extra":1}"#),
        base.replace(r#"[0,0,5,5],"histogram""#, r#"[5,5,0,0],"histogram""#),
        "{not json".to_string(),
    ];
    for (i, bad) in cases.iter().enumerate() {
        assert!(
            read_dataset(bad.as_bytes(), &opts).is_err(),
            "case {i} accepted: {bad}"
        );
    }

    let two_dims = format!(
        "{base}\n{}",
        base.replace("[1,2]", "[1,2,3]").replace(r#""a""#, r#""b""#)
    );
    assert!(matches!(
        read_dataset(two_dims.as_bytes(), &opts),
        Err(Error::Validation { .. }) | Err(Error::DimensionMismatch { .. })
    ));

    let small = LoadOptions { max_candidates: 0 };
    assert!(read_dataset(base.as_bytes(), &small).is_err());
}

#[test]
fn rejects_other_model_versions() {
    let model = AnyModel::Binary(BinaryModel {
        weights: vec![1.0],
        bias: 0.0,
        c: 1.0,
        dim: 1,
        feature_space: FeatureSpace::DiffVector,
        training_stats: TrainingStats {
            iterations: 1,
            objective: 0.0,
            gradient_norm: 0.0,
            stop_reason: StopReason::GradientTolerance,
        },
    });
    let text = model_to_string(&model).unwrap();
    let bumped = text.replace("\"format_version\": 1", "\"format_version\": 2");
    assert!(matches!(
        model_from_str(&bumped),
        Err(Error::VersionMismatch {
            found: 2,
            expected: 1
        })
    ));
    let wrong_dim = text.replace("\"dim\": 1", "\"dim\": 2");
    assert!(model_from_str(&wrong_dim).is_err());
}
