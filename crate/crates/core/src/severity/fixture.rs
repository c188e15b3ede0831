use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde_json::Value;

use super::{retain_valid_boxes, BBox, PatchIndex, Scorer, SeverityDistribution, NUM_CATEGORIES};
use crate::error::{Error, Result};
use crate::image::ImageF;

/// Tolerance for fixture probability vectors; within it they are renormalized.
const FIXTURE_SUM_TOLERANCE: f64 = 1e-6;

/// Scorer that answers from a JSON table keyed by patch grid position.
///
/// The file is a JSON object mapping `"row,col"` to five probabilities, with an
/// optional `"boxes"` array of `{x0, y0, x1, y1}` objects. A `"*"` entry, when
/// present, answers every patch without its own entry.
#[derive(Debug, Clone)]
pub struct FixtureScorer {
    entries: HashMap<PatchIndex, SeverityDistribution>,
    fallback: Option<SeverityDistribution>,
    boxes: Vec<BBox>,
}

impl FixtureScorer {
    pub fn new(entries: HashMap<PatchIndex, SeverityDistribution>, boxes: Vec<BBox>) -> Self {
        Self {
            entries,
            fallback: None,
            boxes,
        }
    }

    /// Every patch receives `dist`.
    pub fn uniform_answer(dist: SeverityDistribution, boxes: Vec<BBox>) -> Self {
        Self {
            entries: HashMap::new(),
            fallback: Some(dist),
            boxes,
        }
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let root: Value = serde_json::from_str(text)
            .map_err(|e| Error::invalid(format!("fixture is not valid JSON: {e}")))?;
        let obj = root
            .as_object()
            .ok_or_else(|| Error::invalid("fixture must be a JSON object"))?;
        let mut entries = HashMap::new();
        let mut fallback = None;
        let mut boxes = Vec::new();
        for (key, value) in obj {
            match key.as_str() {
                "boxes" => {
                    let parsed: Vec<BBox> = serde_json::from_value(value.clone())
                        .map_err(|e| Error::invalid(format!("fixture boxes: {e}")))?;
                    boxes = retain_valid_boxes(parsed, "fixture");
                }
                "*" => fallback = Some(parse_probs(key, value)?),
                _ => {
                    let at = parse_key(key)?;
                    entries.insert(at, parse_probs(key, value)?);
                }
            }
        }
        Ok(Self {
            entries,
            fallback,
            boxes,
        })
    }

    pub fn boxes(&self) -> &[BBox] {
        &self.boxes
    }
}

fn parse_key(key: &str) -> Result<PatchIndex> {
    let bad = || Error::invalid(format!("fixture key '{key}' is not \"row,col\""));
    let (r, c) = key.split_once(',').ok_or_else(bad)?;
    Ok(PatchIndex {
        row: r.trim().parse().map_err(|_| bad())?,
        col: c.trim().parse().map_err(|_| bad())?,
    })
}

fn parse_probs(key: &str, value: &Value) -> Result<SeverityDistribution> {
    let probs: Vec<f64> = serde_json::from_value(value.clone())
        .map_err(|e| Error::invalid(format!("fixture entry '{key}': {e}")))?;
    let mut arr: [f64; NUM_CATEGORIES] = probs.try_into().map_err(|v: Vec<f64>| {
        Error::invalid(format!(
            "fixture entry '{key}' has {} probabilities, expected {NUM_CATEGORIES}",
            v.len()
        ))
    })?;
    let sum: f64 = arr.iter().sum();
    if arr.iter().all(|p| p.is_finite() && *p >= 0.0)
        && (sum - 1.0).abs() <= FIXTURE_SUM_TOLERANCE
        && sum != 1.0
    {
        arr.iter_mut().for_each(|p| *p /= sum);
    }
    SeverityDistribution::new(arr).map_err(|e| Error::invalid(format!("fixture entry '{key}': {e}")))
}

impl Scorer for FixtureScorer {
    fn score_patch(&self, _patch: &ImageF, at: PatchIndex) -> Result<SeverityDistribution> {
        self.entries
            .get(&at)
            .or(self.fallback.as_ref())
            .copied()
            .ok_or(Error::FixtureIncomplete {
                row: at.row,
                col: at.col,
            })
    }

    fn detect_reflection_boxes(&self, _img: &ImageF) -> Result<Vec<BBox>> {
        Ok(self.boxes.clone())
    }

    fn describe(&self) -> String {
        format!("fixture({} entries)", self.entries.len())
    }
}
