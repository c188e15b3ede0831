//! Ordinal reflection-severity scoring.
//!
//! A [`Scorer`] turns an image patch into a probability distribution over the
//! five ordered categories `None < Minor < Mid < Major < Critical`, and can
//! localize reflection-dominated regions as normalized bounding boxes. The
//! distribution comes from a softmax restricted to the category logits, and
//! its ordinal expectation with weights 1..=5 gives a continuous score.

mod cache;
mod fixture;
mod mock;
mod remote;

pub use cache::ResponseCache;
pub use fixture::FixtureScorer;
pub use mock::MockScorer;
pub use remote::{RemoteScorer, RetryPolicy, ScorerConfig, API_KEY_ENV};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageF;

pub const NUM_CATEGORIES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Severity {
    None,
    Minor,
    Mid,
    Major,
    Critical,
}

impl Severity {
    pub const ALL: [Severity; NUM_CATEGORIES] = [
        Severity::None,
        Severity::Minor,
        Severity::Mid,
        Severity::Major,
        Severity::Critical,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Severity::None => "None",
            Severity::Minor => "Minor",
            Severity::Mid => "Mid",
            Severity::Major => "Major",
            Severity::Critical => "Critical",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Ordinal weight in `1..=5`.
    pub fn weight(self) -> f64 {
        (self.index() + 1) as f64
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Raw logits for the five categories, in ordinal order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryLogits([f64; NUM_CATEGORIES]);

impl CategoryLogits {
    pub fn new(logits: [f64; NUM_CATEGORIES]) -> Result<Self> {
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::invalid(format!("non-finite category logit in {logits:?}")));
        }
        Ok(Self(logits))
    }

    pub fn values(&self) -> &[f64; NUM_CATEGORIES] {
        &self.0
    }
}

/// Probability vector over the five categories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeverityDistribution([f64; NUM_CATEGORIES]);

const SUM_TOLERANCE: f64 = 1e-9;

impl SeverityDistribution {
    pub fn new(probs: [f64; NUM_CATEGORIES]) -> Result<Self> {
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid(format!("invalid probabilities {probs:?}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::invalid(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(Self(probs))
    }

    pub fn uniform() -> Self {
        Self([1.0 / NUM_CATEGORIES as f64; NUM_CATEGORIES])
    }

    pub fn one_hot(category: Severity) -> Self {
        let mut p = [0.0; NUM_CATEGORIES];
        p[category.index()] = 1.0;
        Self(p)
    }

    pub fn probs(&self) -> &[f64; NUM_CATEGORIES] {
        &self.0
    }

    pub fn prob(&self, category: Severity) -> f64 {
        self.0[category.index()]
    }

    /// Most probable category; ties resolve to the lower category.
    pub fn argmax(&self) -> Severity {
        let mut best = 0;
        for k in 1..NUM_CATEGORIES {
            if self.0[k] > self.0[best] {
                best = k;
            }
        }
        Severity::ALL[best]
    }
}

/// Tempered softmax over the category logits only.
pub fn restricted_softmax(logits: &CategoryLogits, tau: f64) -> Result<SeverityDistribution> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::invalid(format!("temperature must be positive, got {tau}")));
    }
    let values = logits.values();
    if values.iter().any(|l| !l.is_finite()) {
        return Err(Error::invalid("non-finite category logit"));
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs = [0.0; NUM_CATEGORIES];
    for (p, &l) in probs.iter_mut().zip(values) {
        *p = ((l - max) / tau).exp();
    }
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(SeverityDistribution(probs))
}

/// Ordinal expectation `Σ w(c)·p(c)` with weights `1..=5`.
pub fn ordinal_score(dist: &SeverityDistribution) -> f64 {
    let s: f64 = Severity::ALL
        .iter()
        .map(|c| c.weight() * dist.prob(*c))
        .sum();
    s.clamp(1.0, 5.0)
}

/// Axis-aligned box in normalized image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        let b = Self { x0, y0, x1, y1 };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(Error::invalid(format!("invalid box {b:?}")))
        }
    }

    pub fn is_valid(&self) -> bool {
        let unit = |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
        unit(self.x0)
            && unit(self.y0)
            && unit(self.x1)
            && unit(self.y1)
            && self.x0 < self.x1
            && self.y0 < self.y1
    }

    /// Whether the center of pixel `(y, x)` of an `h`×`w` raster lies inside the box.
    ///
    /// Boxes are half-open: `[x0, x1) × [y0, y1)`.
    pub fn contains_pixel(&self, y: usize, x: usize, h: usize, w: usize) -> bool {
        let cx = (x as f64 + 0.5) / w as f64;
        let cy = (y as f64 + 0.5) / h as f64;
        cx >= self.x0 && cx < self.x1 && cy >= self.y0 && cy < self.y1
    }
}

/// Grid position of a patch, used by scorers that answer from precomputed tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PatchIndex {
    pub row: usize,
    pub col: usize,
}

/// Source of patch severity distributions and reflection boxes.
///
/// Implementations must be safe to call from many threads at once.
pub trait Scorer: Send + Sync {
    fn score_patch(&self, patch: &ImageF, at: PatchIndex) -> Result<SeverityDistribution>;

    fn detect_reflection_boxes(&self, img: &ImageF) -> Result<Vec<BBox>>;

    /// Short human-readable identity used in logs and dumps.
    fn describe(&self) -> String;
}

/// Keeps only boxes with coordinates inside the unit square and positive extent.
pub(crate) fn retain_valid_boxes(boxes: Vec<BBox>, source: &str) -> Vec<BBox> {
    let total = boxes.len();
    let kept: Vec<_> = boxes.into_iter().filter(BBox::is_valid).collect();
    if kept.len() < total {
        log::warn!("{source}: dropped {} invalid box(es)", total - kept.len());
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_logits_give_uniform() {
        let d = restricted_softmax(&CategoryLogits::new([0.3; 5]).unwrap(), 1.0).unwrap();
        for p in d.probs() {
            assert!((p - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn dominant_logit_matches_closed_form() {
        let d = restricted_softmax(&CategoryLogits::new([10.0, 0.0, 0.0, 0.0, 0.0]).unwrap(), 1.0)
            .unwrap();
        let e10 = 10f64.exp();
        let want = e10 / (e10 + 4.0);
        assert!((d.prob(Severity::None) - want).abs() < 1e-12);
        assert!((want - 0.999818).abs() < 1e-6);
    }

    #[test]
    fn tiny_temperature_is_one_hot() {
        let d = restricted_softmax(&CategoryLogits::new([0.1, 0.5, 0.2, 0.49, -3.0]).unwrap(), 1e-6)
            .unwrap();
        assert!((d.prob(Severity::Minor) - 1.0).abs() < 1e-9);
        assert_eq!(d.argmax(), Severity::Minor);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(CategoryLogits::new([0.0, f64::NAN, 0.0, 0.0, 0.0]).is_err());
        let l = CategoryLogits::new([0.0; 5]).unwrap();
        assert!(restricted_softmax(&l, 0.0).is_err());
        assert!(restricted_softmax(&l, -1.0).is_err());
        assert!(SeverityDistribution::new([0.5, 0.4, 0.0, 0.0, 0.0]).is_err());
        assert!(SeverityDistribution::new([1.5, -0.5, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn ordinal_examples() {
        assert!((ordinal_score(&SeverityDistribution::uniform()) - 3.0).abs() < 1e-15);
        assert_eq!(ordinal_score(&SeverityDistribution::one_hot(Severity::Critical)), 5.0);
        let d = SeverityDistribution::new([0.5, 0.5, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(ordinal_score(&d), 1.5);
    }

    #[test]
    fn bbox_validity_and_containment() {
        assert!(BBox::new(0.0, 0.0, 0.5, 1.0).is_ok());
        assert!(BBox::new(0.5, 0.0, 0.5, 1.0).is_err());
        assert!(BBox::new(-0.1, 0.0, 0.5, 1.0).is_err());
        assert!(BBox::new(0.0, 0.0, 1.2, 1.0).is_err());
        let left = BBox::new(0.0, 0.0, 0.5, 1.0).unwrap();
        assert!(left.contains_pixel(0, 1, 4, 4));
        assert!(!left.contains_pixel(0, 2, 4, 4));
        assert!(left.contains_pixel(3, 0, 4, 4));
    }
}
