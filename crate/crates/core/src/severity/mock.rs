use super::{restricted_softmax, BBox, CategoryLogits, PatchIndex, Scorer, SeverityDistribution};
use crate::error::Result;
use crate::image::integral::local_std;
use crate::image::{to_grayscale, ImageF};

/// Local-std window radius (9×9) used for box detection.
const STD_RADIUS: usize = 4;
const STD_THRESHOLD: f64 = 0.15;
const LOGIT_SCALE: f64 = 0.02;

/// Deterministic stand-in for a vision-language scorer.
///
/// Severity is driven by patch contrast: `v = clamp(2·std + |mean − 0.5|, 0, 1)`
/// and category `k` gets logit `−(v − k/4)² / 0.02`. Boxes are the bounding box
/// of the largest 8-connected region whose 9×9 local standard deviation
/// exceeds 0.15.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockScorer;

impl MockScorer {
    pub fn new() -> Self {
        Self
    }

    /// The activity statistic `v` of a patch.
    pub fn activity(patch: &ImageF) -> f64 {
        let data = patch.data();
        let n = data.len() as f64;
        // Shifted by the first sample so uniform patches give exact statistics.
        let pivot = data[0];
        let offset = data.iter().map(|v| v - pivot).sum::<f64>() / n;
        let mean = pivot + offset;
        let var = data
            .iter()
            .map(|v| (v - pivot - offset) * (v - pivot - offset))
            .sum::<f64>()
            / n;
        (2.0 * var.sqrt() + (mean - 0.5).abs()).clamp(0.0, 1.0)
    }

    pub fn logits(patch: &ImageF) -> CategoryLogits {
        let v = Self::activity(patch);
        let mut l = [0.0; 5];
        for (k, slot) in l.iter_mut().enumerate() {
            let d = v - k as f64 / 4.0;
            *slot = -(d * d) / LOGIT_SCALE;
        }
        CategoryLogits::new(l).expect("mock logits are finite")
    }
}

impl Scorer for MockScorer {
    fn score_patch(&self, patch: &ImageF, _at: PatchIndex) -> Result<SeverityDistribution> {
        restricted_softmax(&Self::logits(patch), 1.0)
    }

    fn detect_reflection_boxes(&self, img: &ImageF) -> Result<Vec<BBox>> {
        let gray = to_grayscale(img)?;
        let std = local_std(&gray, STD_RADIUS);
        let mask: Vec<bool> = std.data().iter().map(|&s| s > STD_THRESHOLD).collect();
        Ok(largest_component_box(&mask, img.height(), img.width())
            .into_iter()
            .collect())
    }

    fn describe(&self) -> String {
        "mock".to_string()
    }
}

/// Normalized bounding box of the largest 8-connected `true` region.
///
/// Ties keep the region found first in raster order.
pub(crate) fn largest_component_box(mask: &[bool], h: usize, w: usize) -> Option<BBox> {
    let mut seen = vec![false; mask.len()];
    let mut best: Option<(usize, [usize; 4])> = None;
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut count = 0;
        let (mut y0, mut x0, mut y1, mut x1) = (usize::MAX, usize::MAX, 0, 0);
        while let Some(i) = stack.pop() {
            count += 1;
            let (y, x) = (i / w, i % w);
            y0 = y0.min(y);
            x0 = x0.min(x);
            y1 = y1.max(y);
            x1 = x1.max(x);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = ny * w + nx;
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        if best.is_none_or(|(c, _)| count > c) {
            best = Some((count, [y0, x0, y1, x1]));
        }
    }
    best.map(|(_, [y0, x0, y1, x1])| BBox {
        x0: x0 as f64 / w as f64,
        y0: y0 as f64 / h as f64,
        x1: (x1 + 1) as f64 / w as f64,
        y1: (y1 + 1) as f64 / h as f64,
    })
}
