//! Axis-aligned box geometry and overlap-based rank assignment.
//!
//! Boxes use continuous, half-open coordinates: a box spans `[x1, x2) x [y1, y2)`
//! and its area is `(x2 - x1) * (y2 - y1)`. VOC inclusive pixel boxes are shifted
//! by one on the max corner at ingest (see [`BBox::from_inclusive_pixels`]).

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangle with strictly positive area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        if !(x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite()) {
            return Err(Error::InvalidBox(format!(
                "non-finite coordinates ({x1}, {y1}, {x2}, {y2})"
            )));
        }
        if x2 <= x1 || y2 <= y1 {
            return Err(Error::InvalidBox(format!(
                "empty extent ({x1}, {y1}, {x2}, {y2})"
            )));
        }
        Ok(BBox { x1, y1, x2, y2 })
    }

    /// Converts an inclusive pixel box (VOC convention) to a half-open box.
    pub fn from_inclusive_pixels(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self> {
        BBox::new(xmin, ymin, xmax + 1.0, ymax + 1.0)
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }
    pub fn y1(&self) -> f64 {
        self.y1
    }
    pub fn x2(&self) -> f64 {
        self.x2
    }
    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))
    }

    /// Area of the intersection with `other` (zero when disjoint or touching).
    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// True if the box lies inside `[0, width] x [0, height]`.
    pub fn within(&self, width: f64, height: f64) -> bool {
        self.x1 >= 0.0 && self.y1 >= 0.0 && self.x2 <= width && self.y2 <= height
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(c: [f64; 4]) -> Result<Self> {
        BBox::new(c[0], c[1], c[2], c[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.x1, self.y1, self.x2, self.y2)
    }
}

/// Rank of a candidate within its image; 1 is best.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RankLabel(pub u32);

impl RankLabel {
    pub fn value(self) -> u32 {
        self.0
    }
}

/// Intersection over union.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    if a == b {
        return 1.0;
    }
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Euclidean distance between box centres.
pub fn center_distance(a: &BBox, b: &BBox) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    (ax - bx).hypot(ay - by)
}

/// Best overlap of `candidate` with any of `gts` (0 when `gts` is empty).
pub fn max_iou(candidate: &BBox, gts: &[BBox]) -> f64 {
    gts.iter().map(|g| iou(candidate, g)).fold(0.0, f64::max)
}

/// Distance from `candidate` to the nearest ground-truth centre.
pub fn min_center_distance(candidate: &BBox, gts: &[BBox]) -> f64 {
    gts.iter()
        .map(|g| center_distance(candidate, g))
        .fold(f64::INFINITY, f64::min)
}

/// Ranks candidates against a single ground-truth box.
///
/// Overlapping candidates come first in decreasing IoU; zero-overlap candidates
/// follow in increasing centre distance. Ties break toward the lower index.
pub fn assign_ranks(candidates: &[BBox], gt: &BBox) -> Vec<RankLabel> {
    assign_ranks_multi(candidates, std::slice::from_ref(gt))
}

/// Same as [`assign_ranks`] for images with several ground-truth instances:
/// overlap is the best IoU over all instances and distance is to the nearest one.
pub fn assign_ranks_multi(candidates: &[BBox], gts: &[BBox]) -> Vec<RankLabel> {
    let keys: Vec<(f64, f64)> = candidates
        .iter()
        .map(|c| (max_iou(c, gts), min_center_distance(c, gts)))
        .collect();
    ranks_from_overlap_and_distance(&keys)
}

/// Rank assignment from precomputed `(iou, distance)` pairs.
pub fn ranks_from_overlap_and_distance(keys: &[(f64, f64)]) -> Vec<RankLabel> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&i, &j| {
        let (oi, di) = keys[i];
        let (oj, dj) = keys[j];
        let by_key = match (oi > 0.0, oj > 0.0) {
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
            (true, true) => oj.total_cmp(&oi),
            (false, false) => di.total_cmp(&dj),
        };
        by_key.then(i.cmp(&j))
    });
    let mut ranks = vec![RankLabel(0); keys.len()];
    for (pos, &idx) in order.iter().enumerate() {
        ranks[idx] = RankLabel(pos as u32 + 1);
    }
    ranks
}
