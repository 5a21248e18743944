//! Detection ingestion, region ranking and attention maps.

mod remote;

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

pub use remote::{fetch_detections, FetchError};

/// Axis-aligned box in normalized image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl From<[f64; 4]> for BoundingBox {
    fn from([x1, y1, x2, y2]: [f64; 4]) -> Self {
        BoundingBox { x1, y1, x2, y2 }
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        BoundingBox { x1, y1, x2, y2 }
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

    fn check(&self) -> Result<(), String> {
        let coords = [("x1", self.x1), ("y1", self.y1), ("x2", self.x2), ("y2", self.y2)];
        for (name, v) in coords {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} in [0,1]"));
            }
        }
        if self.x1 >= self.x2 {
            return Err("x1 < x2".into());
        }
        if self.y1 >= self.y2 {
            return Err("y1 < y2".into());
        }
        Ok(())
    }
}

/// One perceived region: label, confidence and box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: String,
    pub confidence: f64,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

impl Detection {
    pub fn new(label: impl Into<String>, confidence: f64, bbox: BoundingBox) -> Self {
        Detection {
            label: label.into(),
            confidence,
            bbox,
        }
    }
}

/// Wire/fixture form of a detection, keyed by image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub image_id: String,
    pub label: String,
    pub confidence: f64,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

#[derive(Debug, thiserror::Error)]
pub enum DetectionError {
    #[error("malformed detection record at index {index}: {message}")]
    Malformed { index: usize, message: String },
    #[error("{rule} violated at index {index}")]
    InvalidBox { index: usize, rule: String },
    #[error("confidence {value} out of range [0,1] at index {index}")]
    Confidence { index: usize, value: f64 },
    #[error("reading detections: {0}")]
    Io(#[from] std::io::Error),
}

fn validate(index: usize, record: &DetectionRecord) -> Result<(), DetectionError> {
    if record.label.trim().is_empty() {
        return Err(DetectionError::Malformed {
            index,
            message: "empty label".into(),
        });
    }
    if !record.confidence.is_finite() || !(0.0..=1.0).contains(&record.confidence) {
        return Err(DetectionError::Confidence {
            index,
            value: record.confidence,
        });
    }
    record
        .bbox
        .check()
        .map_err(|rule| DetectionError::InvalidBox { index, rule })
}

/// Parses and validates every record. Index in errors counts non-blank records from 0.
pub fn load_detection_records<R: BufRead>(source: R) -> Result<Vec<DetectionRecord>, DetectionError> {
    let mut out = Vec::new();
    for line in source.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let index = out.len();
        let record: DetectionRecord = serde_json::from_str(&line).map_err(|e| DetectionError::Malformed {
            index,
            message: e.to_string(),
        })?;
        validate(index, &record)?;
        out.push(record);
    }
    Ok(out)
}

/// Validated detections in source order.
pub fn load_detections<R: BufRead>(source: R) -> Result<Vec<Detection>, DetectionError> {
    Ok(load_detection_records(source)?
        .into_iter()
        .map(|r| Detection::new(r.label, r.confidence, r.bbox))
        .collect())
}

/// Detections grouped by image id, per-image order preserved.
#[derive(Debug, Clone, Default)]
pub struct DetectionIndex {
    by_image: BTreeMap<String, Vec<Detection>>,
}

impl DetectionIndex {
    pub fn get(&self, image_id: &str) -> Option<&[Detection]> {
        self.by_image.get(image_id).map(Vec::as_slice)
    }

    pub fn image_ids(&self) -> impl Iterator<Item = &str> {
        self.by_image.keys().map(String::as_str)
    }

    pub fn insert(&mut self, image_id: impl Into<String>, detections: Vec<Detection>) {
        self.by_image.insert(image_id.into(), detections);
    }
}

impl FromIterator<DetectionRecord> for DetectionIndex {
    fn from_iter<I: IntoIterator<Item = DetectionRecord>>(iter: I) -> Self {
        let mut by_image: BTreeMap<String, Vec<Detection>> = BTreeMap::new();
        for r in iter {
            by_image
                .entry(r.image_id)
                .or_default()
                .push(Detection::new(r.label, r.confidence, r.bbox));
        }
        DetectionIndex { by_image }
    }
}

pub fn load_detection_index<R: BufRead>(source: R) -> Result<DetectionIndex, DetectionError> {
    Ok(load_detection_records(source)?.into_iter().collect())
}

/// Indices of the `k` most salient detections: confidence descending, then
/// larger area, then label ascending, then original position.
pub fn top_region_indices(detections: &[Detection], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..detections.len()).collect();
    idx.sort_by(|&a, &b| {
        let (da, db) = (&detections[a], &detections[b]);
        db.confidence
            .total_cmp(&da.confidence)
            .then_with(|| db.bbox.area().total_cmp(&da.bbox.area()))
            .then_with(|| da.label.cmp(&db.label))
            .then_with(|| a.cmp(&b))
    });
    idx.truncate(k);
    idx
}

pub fn top_regions(detections: &[Detection], k: usize) -> Vec<Detection> {
    top_region_indices(detections, k)
        .into_iter()
        .map(|i| detections[i].clone())
        .collect()
}

/// Row-major grid of non-negative weights summing to one (or all zero).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionGrid<F> {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<F>,
}

impl<F: Scalar> AttentionGrid<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        AttentionGrid {
            rows,
            cols,
            weights: vec![F::zero(); rows * cols],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> F {
        self.weights[row * self.cols + col]
    }

    pub fn total(&self) -> F {
        self.weights.iter().fold(F::zero(), |acc, &w| acc + w)
    }
}

fn spread_mass<F: Scalar>(grid: &mut AttentionGrid<F>, detections: &[Detection], unit_mass: bool) {
    let (rows, cols) = (F::count(grid.rows), F::count(grid.cols));
    for d in detections {
        let b = &d.bbox;
        let (x1, y1, x2, y2) = (F::of(b.x1), F::of(b.y1), F::of(b.x2), F::of(b.y2));
        let area = (x2 - x1) * (y2 - y1);
        if area <= F::zero() {
            continue;
        }
        let mass = if unit_mass { F::one() } else { F::of(d.confidence) };
        for r in 0..grid.rows {
            let cy1 = F::count(r) / rows;
            let cy2 = F::count(r + 1) / rows;
            let oy = (y2.min(cy2) - y1.max(cy1)).max(F::zero());
            if oy == F::zero() {
                continue;
            }
            for c in 0..grid.cols {
                let cx1 = F::count(c) / cols;
                let cx2 = F::count(c + 1) / cols;
                let ox = (x2.min(cx2) - x1.max(cx1)).max(F::zero());
                grid.weights[r * grid.cols + c] += mass * ox * oy / area;
            }
        }
    }
}

/// Confidence-weighted box coverage on a `rows`×`cols` grid.
///
/// Each detection spreads its confidence over the cells its box overlaps,
/// in proportion to the overlap area; the grid is then normalized to sum
/// to one. The map is all-zero only when `detections` is empty. If every
/// detection has zero confidence, boxes are weighted equally instead.
pub fn attention_from_detections<F: Scalar>(detections: &[Detection], rows: usize, cols: usize) -> AttentionGrid<F> {
    assert!(rows >= 1 && cols >= 1, "attention grid needs at least one cell");
    let mut grid = AttentionGrid::zeros(rows, cols);
    if detections.is_empty() {
        return grid;
    }
    spread_mass(&mut grid, detections, false);
    if grid.total() <= F::zero() {
        spread_mass(&mut grid, detections, true);
    }
    let total = grid.total();
    if total > F::zero() {
        for w in &mut grid.weights {
            *w /= total;
        }
    }
    grid
}
