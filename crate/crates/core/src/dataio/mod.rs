//! Persistence: dataset files, model documents, VOC annotations, and the
//! synthetic data generator.

pub mod dataset;
pub mod model;
pub mod synth;
pub mod voc;

pub use dataset::{
    load_dataset, load_dataset_with, read_dataset, save_dataset, write_dataset, LoadOptions,
    DEFAULT_MAX_CANDIDATES,
};
pub use model::{load_model, model_from_str, model_to_string, save_model, AnyModel};
pub use synth::{synth_generate, OverlapProfile, SynthConfig, SynthDataset, SynthOracle};
pub use voc::{parse_voc_annotation, parse_voc_str, VocAnnotation, VocObject};
