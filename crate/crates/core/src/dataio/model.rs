//! Versioned model documents.
//!
//! A model file is one JSON object with a `format_version`, a `kind`
//! (`rank` or `binary`) and the model's fields. Weights are written with
//! shortest round-trip decimal representation, so loading is lossless.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::BinaryModel;
use crate::error::{Error, Result};
use crate::ranksvm::RankModel;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnyModel {
    Rank(RankModel),
    Binary(BinaryModel),
}

impl From<RankModel> for AnyModel {
    fn from(m: RankModel) -> Self {
        AnyModel::Rank(m)
    }
}

impl From<BinaryModel> for AnyModel {
    fn from(m: BinaryModel) -> Self {
        AnyModel::Binary(m)
    }
}

impl AnyModel {
    pub fn dim(&self) -> usize {
        match self {
            AnyModel::Rank(m) => m.dim,
            AnyModel::Binary(m) => m.dim,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Document {
    format_version: u32,
    #[serde(flatten)]
    model: AnyModel,
}

fn parse_error(e: serde_json::Error) -> Error {
    Error::Parse {
        line: e.line(),
        message: e.to_string(),
    }
}

pub fn model_to_string(model: &AnyModel) -> Result<String> {
    let doc = Document {
        format_version: MODEL_FORMAT_VERSION,
        model: model.clone(),
    };
    let mut s = serde_json::to_string_pretty(&doc).map_err(parse_error)?;
    s.push('\n');
    Ok(s)
}

pub fn model_from_str(text: &str) -> Result<AnyModel> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(parse_error)?;
    let version = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::Parse {
            line: 1,
            message: "missing format_version".into(),
        })?;
    if version != MODEL_FORMAT_VERSION as u64 {
        return Err(Error::VersionMismatch {
            found: version.min(u32::MAX as u64) as u32,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    // parse from text rather than `value` so floats go through the exact decoder
    let doc: Document = serde_json::from_str(text).map_err(parse_error)?;
    let model = doc.model;
    let (dim, weights) = match &model {
        AnyModel::Rank(m) => (m.dim, &m.weights),
        AnyModel::Binary(m) => (m.dim, &m.weights),
    };
    if weights.len() != dim {
        return Err(Error::Parse {
            line: 1,
            message: format!("{} weights for dim {dim}", weights.len()),
        });
    }
    Ok(model)
}

pub fn save_model(path: impl AsRef<Path>, model: &AnyModel) -> Result<()> {
    fs::write(path, model_to_string(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<AnyModel> {
    model_from_str(&fs::read_to_string(path)?)
}
