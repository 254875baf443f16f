//! Transfer of object-location annotation from a fully annotated auxiliary
//! dataset to images of unrelated categories.
//!
//! A linear RankSVM learns, from auxiliary images with known object boxes, to
//! order candidate regions by their overlap with the object using only
//! category-independent difference vectors. On a target image the
//! top-scored candidate becomes the annotation.

pub mod annotator;
pub mod baselines;
pub mod dataio;
pub mod error;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod image;
pub mod optim;
pub mod ranksvm;

pub use annotator::{annotate, annotate_fused, fuse_scores, AnnotationResult, FusionConfig};
pub use baselines::{BinaryModel, FeatureSpace};
pub use error::{Error, Result};
pub use features::{DiffVector, GtMode, LabeledQuery};
pub use geometry::{assign_ranks, center_distance, iou, BBox, RankLabel};
pub use image::{AnnotatedImage, Candidate, Histogram};
pub use ranksvm::{RankModel, TrainConfig, TrainingSet};
