//! Line-delimited dataset files.
//!
//! Each non-empty line is one JSON object describing an image:
//!
//! ```text
//! {"image_id": "000012", "class_label": "car", "width": 500, "height": 333,
//!  "candidates": [{"box": [x1, y1, x2, y2], "objectness": 0.71, "histogram": [...]}, ...],
//!  "ground_truth": [[x1, y1, x2, y2]], "difficult": [false], "gt_histogram": [...]}
//! ```
//!
//! Histograms are either a dense array or `{"dim": D, "sparse": [[index, value], ...]}`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::image::{AnnotatedImage, Candidate, Histogram};

/// Default cap on candidates per image.
pub const DEFAULT_MAX_CANDIDATES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadOptions {
    pub max_candidates: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            max_candidates: DEFAULT_MAX_CANDIDATES,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum HistogramEncoding {
    Dense(Vec<f64>),
    Sparse {
        dim: usize,
        sparse: Vec<(usize, f64)>,
    },
}

impl HistogramEncoding {
    fn encode(h: &Histogram) -> Self {
        let nnz = h.values().iter().filter(|v| **v != 0.0).count();
        if 2 * nnz < h.dim() {
            HistogramEncoding::Sparse {
                dim: h.dim(),
                sparse: h
                    .values()
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(i, v)| (i, *v))
                    .collect(),
            }
        } else {
            HistogramEncoding::Dense(h.values().to_vec())
        }
    }

    fn decode(self) -> std::result::Result<Histogram, String> {
        let values = match self {
            HistogramEncoding::Dense(v) => v,
            HistogramEncoding::Sparse { dim, sparse } => {
                let mut v = vec![0.0; dim];
                for (i, x) in sparse {
                    if i >= dim {
                        return Err(format!("sparse index {i} out of range for dim {dim}"));
                    }
                    v[i] = x;
                }
                v
            }
        };
        Histogram::new(values).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CandidateRecord {
    #[serde(rename = "box")]
    bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    objectness: Option<f64>,
    histogram: HistogramEncoding,
}

/// On-disk form of one image.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetRecord {
    image_id: String,
    class_label: String,
    width: u32,
    height: u32,
    candidates: Vec<CandidateRecord>,
    #[serde(default)]
    ground_truth: Vec<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gt_histogram: Option<HistogramEncoding>,
    #[serde(default)]
    difficult: Vec<bool>,
}

fn invalid(image_id: &str, reason: impl Into<String>) -> Error {
    Error::Validation {
        image_id: image_id.to_string(),
        reason: reason.into(),
    }
}

impl DatasetRecord {
    fn from_image(img: &AnnotatedImage) -> Self {
        DatasetRecord {
            image_id: img.image_id.clone(),
            class_label: img.class_label.clone(),
            width: img.width,
            height: img.height,
            candidates: img
                .candidates
                .iter()
                .map(|c| CandidateRecord {
                    bbox: c.bbox.into(),
                    objectness: c.objectness,
                    histogram: HistogramEncoding::encode(&c.histogram),
                })
                .collect(),
            ground_truth: img.ground_truth.iter().map(|&b| b.into()).collect(),
            gt_histogram: img.gt_histogram.as_ref().map(HistogramEncoding::encode),
            difficult: img.difficult.clone(),
        }
    }

    fn into_image(self, opts: &LoadOptions) -> Result<AnnotatedImage> {
        let id = self.image_id;
        if self.width == 0 || self.height == 0 {
            return Err(invalid(&id, "image size must be positive"));
        }
        let n = self.candidates.len();
        if n == 0 || n > opts.max_candidates {
            return Err(invalid(
                &id,
                format!("{n} candidates (allowed 1..={})", opts.max_candidates),
            ));
        }
        let (w, h) = (self.width as f64, self.height as f64);
        let to_box = |c: [f64; 4], what: String| -> Result<BBox> {
            let b = BBox::try_from(c).map_err(|e| invalid(&id, format!("{what}: {e}")))?;
            if !b.within(w, h) {
                return Err(invalid(&id, format!("{what} {b} outside {w}x{h} image")));
            }
            Ok(b)
        };
        let mut candidates = Vec::with_capacity(n);
        let mut dim = None;
        for (j, c) in self.candidates.into_iter().enumerate() {
            let bbox = to_box(c.bbox, format!("candidate {j} box"))?;
            if let Some(o) = c.objectness {
                if !o.is_finite() {
                    return Err(invalid(&id, format!("candidate {j} objectness is {o}")));
                }
            }
            let histogram = c
                .histogram
                .decode()
                .map_err(|e| invalid(&id, format!("candidate {j} histogram: {e}")))?;
            if histogram.l1_norm() <= 0.0 {
                return Err(invalid(&id, format!("candidate {j} histogram is all zero")));
            }
            match dim {
                None => dim = Some(histogram.dim()),
                Some(d) => Error::check_dim(d, histogram.dim())?,
            }
            candidates.push(Candidate {
                bbox,
                objectness: c.objectness,
                histogram,
            });
        }
        let ground_truth = self
            .ground_truth
            .into_iter()
            .enumerate()
            .map(|(k, c)| to_box(c, format!("ground truth {k}")))
            .collect::<Result<Vec<_>>>()?;
        let difficult = if self.difficult.is_empty() {
            vec![false; ground_truth.len()]
        } else if self.difficult.len() == ground_truth.len() {
            self.difficult
        } else {
            return Err(invalid(
                &id,
                format!(
                    "{} difficult flags for {} ground-truth boxes",
                    self.difficult.len(),
                    ground_truth.len()
                ),
            ));
        };
        let gt_histogram = match self.gt_histogram {
            None => None,
            Some(enc) => {
                let g = enc
                    .decode()
                    .map_err(|e| invalid(&id, format!("gt_histogram: {e}")))?;
                if g.l1_norm() <= 0.0 {
                    return Err(invalid(&id, "gt_histogram is all zero"));
                }
                Error::check_dim(dim.unwrap_or(g.dim()), g.dim())?;
                Some(g)
            }
        };
        Ok(AnnotatedImage {
            image_id: id,
            class_label: self.class_label,
            width: self.width,
            height: self.height,
            candidates,
            ground_truth,
            difficult,
            gt_histogram,
        })
    }
}

/// Reads and validates a dataset from any reader.
pub fn read_dataset<R: Read>(reader: R, opts: &LoadOptions) -> Result<Vec<AnnotatedImage>> {
    let mut out: Vec<AnnotatedImage> = Vec::new();
    let mut file_dim: Option<usize> = None;
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let img = record.into_image(opts)?;
        let d = img.dim().expect("validated non-empty");
        match file_dim {
            None => file_dim = Some(d),
            Some(fd) => Error::check_dim(fd, d)?,
        }
        out.push(img);
    }
    Ok(out)
}

pub fn load_dataset_with(
    path: impl AsRef<Path>,
    opts: &LoadOptions,
) -> Result<Vec<AnnotatedImage>> {
    read_dataset(File::open(path)?, opts)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<AnnotatedImage>> {
    load_dataset_with(path, &LoadOptions::default())
}

pub fn write_dataset<W: Write>(writer: W, images: &[AnnotatedImage]) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for img in images {
        serde_json::to_writer(&mut w, &DatasetRecord::from_image(img))
            .map_err(|e| Error::Io(e.into()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(path: impl AsRef<Path>, images: &[AnnotatedImage]) -> Result<()> {
    write_dataset(File::create(path)?, images)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"{"image_id":"a","class_label":"car","width":10,"height":10,"candidates":[{"box":[0,0,5,5],"objectness":0.2,"histogram":[1,0,2]},{"box":[1,1,6,6],"histogram":{"dim":3,"sparse":[[1,4.5]]}}],"ground_truth":[[0,0,5,6]]}"#;

    fn read(s: &str) -> Result<Vec<AnnotatedImage>> {
        read_dataset(s.as_bytes(), &LoadOptions::default())
    }

    #[test]
    fn empty_input_is_empty_dataset() {
        assert!(read("").unwrap().is_empty());
        assert!(read("\n\n").unwrap().is_empty());
    }

    #[test]
    fn parses_dense_and_sparse() {
        let imgs = read(GOOD).unwrap();
        assert_eq!(imgs.len(), 1);
        let img = &imgs[0];
        assert_eq!(img.candidates[1].histogram.values(), &[0.0, 4.5, 0.0]);
        assert_eq!(img.candidates[0].objectness, Some(0.2));
        assert_eq!(img.candidates[1].objectness, None);
        assert_eq!(img.difficult, vec![false]);
    }

    #[test]
    fn inverted_box_names_image() {
        let bad = GOOD.replace("[0,0,5,5]", "[5,0,5,5]");
        match read(&bad) {
            Err(Error::Validation { image_id, .. }) => assert_eq!(image_id, "a"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_histogram_rejected() {
        let bad = GOOD.replace("[1,0,2]", "[0,0,0]");
        assert!(matches!(read(&bad), Err(Error::Validation { .. })));
    }

    #[test]
    fn out_of_bounds_box_rejected() {
        let bad = GOOD.replace("[1,1,6,6]", "[1,1,6,11]");
        assert!(matches!(read(&bad), Err(Error::Validation { .. })));
    }

    #[test]
    fn parse_error_reports_line() {
        let text = format!("{GOOD}\n{{not json\n");
        match read(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dimension_mismatch_across_file() {
        let other = GOOD
            .replace("\"a\"", "\"b\"")
            .replace("[1,0,2]", "[1,0]")
            .replace("\"dim\":3", "\"dim\":2");
        assert!(matches!(
            read(&format!("{GOOD}\n{other}")),
            Err(Error::DimensionMismatch {
                expected: 3,
                found: 2
            })
        ));
    }

    #[test]
    fn candidate_cap_enforced() {
        let opts = LoadOptions { max_candidates: 1 };
        assert!(matches!(
            read_dataset(GOOD.as_bytes(), &opts),
            Err(Error::Validation { .. })
        ));
    }

    #[test]
    fn difficult_length_must_match() {
        let bad = GOOD.replace(
            "\"ground_truth\":[[0,0,5,6]]",
            "\"ground_truth\":[[0,0,5,6]],\"difficult\":[true,false]",
        );
        assert!(matches!(read(&bad), Err(Error::Validation { .. })));
    }

    #[test]
    fn unknown_field_is_parse_error() {
        let bad = GOOD.replace("\"width\"", "\"colour\":1,\"width\"");
        assert!(matches!(read(&bad), Err(Error::Parse { .. })));
    }

    #[test]
    fn round_trip_preserves_records() {
        let imgs = read(GOOD).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &imgs).unwrap();
        assert_eq!(
            read_dataset(buf.as_slice(), &LoadOptions::default()).unwrap(),
            imgs
        );
    }
}
