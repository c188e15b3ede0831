//! Pixel-level reflection-intensity prior.
//!
//! The image is tiled into non-overlapping patches, each scored on the ordinal
//! severity scale. Scores are broadcast to a piecewise-constant field, boosted
//! inside detected reflection boxes, densified with a guided filter whose guide
//! is the blurred luminance of the input, and finally mapped from `[1, 5]` to
//! `[0, 1]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guided::{guide_from_image, guided_filter, GuidedFilterParams};
use crate::image::{clamp_rescale, ImageF, ScalarMap};
use crate::severity::{ordinal_score, BBox, PatchIndex, Scorer, SeverityDistribution};

pub const MIN_IMAGE_SIDE: usize = 32;
pub const MIN_PATCH: usize = 32;
pub const MAX_PATCH: usize = 224;
pub const MIN_PATCH_OVERRIDE: usize = 16;

/// Patch size targeting roughly eight patches along the short side.
pub fn adaptive_patch_size(height: usize, width: usize) -> Result<usize> {
    let short = height.min(width);
    if short < MIN_IMAGE_SIDE {
        return Err(Error::invalid(format!(
            "image {height}x{width} is smaller than {MIN_IMAGE_SIDE} px"
        )));
    }
    let a = (short as f64 / 8.0).round() as usize;
    Ok(a.clamp(MIN_PATCH, MAX_PATCH))
}

/// Ordinal scores of a patch tiling, with the distributions they came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatchGrid {
    pub patch_size: usize,
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows × cols` scores in `[1, 5]`.
    pub scores: Vec<f64>,
    /// Row-major distributions; empty when the grid was built from scores alone.
    pub distributions: Vec<SeverityDistribution>,
}

impl PatchGrid {
    pub fn from_scores(patch_size: usize, rows: usize, cols: usize, scores: Vec<f64>) -> Result<Self> {
        if patch_size == 0 || rows == 0 || cols == 0 {
            return Err(Error::invalid("patch grid dimensions must be nonzero"));
        }
        if scores.len() != rows * cols {
            return Err(Error::invalid(format!(
                "{} scores for a {rows}x{cols} grid",
                scores.len()
            )));
        }
        if let Some(s) = scores.iter().find(|s| !(1.0..=5.0).contains(*s)) {
            return Err(Error::invalid(format!("patch score {s} outside [1, 5]")));
        }
        Ok(Self {
            patch_size,
            rows,
            cols,
            scores,
            distributions: Vec::new(),
        })
    }

    pub fn score(&self, row: usize, col: usize) -> f64 {
        self.scores[row * self.cols + col]
    }

    /// Whether this grid tiles an `height`×`width` image.
    pub fn fits(&self, height: usize, width: usize) -> bool {
        self.rows == height.div_ceil(self.patch_size) && self.cols == width.div_ceil(self.patch_size)
    }
}

/// Tiles the image and scores every patch; edge patches keep their smaller size.
pub fn partition_and_score(img: &ImageF, scorer: &dyn Scorer, patch_size: usize) -> Result<PatchGrid> {
    if patch_size < MIN_PATCH_OVERRIDE {
        return Err(Error::invalid(format!(
            "patch size {patch_size} is below {MIN_PATCH_OVERRIDE}"
        )));
    }
    let (h, w) = (img.height(), img.width());
    let rows = h.div_ceil(patch_size);
    let cols = w.div_ceil(patch_size);
    let distributions = (0..rows * cols)
        .into_par_iter()
        .map(|i| {
            let (row, col) = (i / cols, i % cols);
            let y0 = row * patch_size;
            let x0 = col * patch_size;
            let ph = patch_size.min(h - y0);
            let pw = patch_size.min(w - x0);
            img.crop(y0, x0, ph, pw)
                .and_then(|patch| scorer.score_patch(&patch, PatchIndex { row, col }))
                .map_err(|e| Error::AtPatch {
                    row,
                    col,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let scores = distributions.iter().map(ordinal_score).collect();
    let mut grid = PatchGrid::from_scores(patch_size, rows, cols, scores)?;
    grid.distributions = distributions;
    Ok(grid)
}

/// Piecewise-constant score field: each pixel takes its patch's score.
pub fn broadcast_scores(grid: &PatchGrid, height: usize, width: usize) -> Result<ScalarMap> {
    if !grid.fits(height, width) {
        return Err(Error::invalid(format!(
            "{}x{} grid of {} px patches does not tile {height}x{width}",
            grid.rows, grid.cols, grid.patch_size
        )));
    }
    let a = grid.patch_size;
    ScalarMap::from_fn(height, width, |y, x| grid.score(y / a, x / a))
}

/// Multiplies scores inside any box by `factor`, capped at `cap`.
pub fn apply_box_boost(scores: &ScalarMap, boxes: &[BBox], factor: f64, cap: f64) -> Result<ScalarMap> {
    if !(factor >= 1.0) || !factor.is_finite() {
        return Err(Error::invalid(format!("boost factor must be >= 1, got {factor}")));
    }
    if !(cap >= 1.0) || !cap.is_finite() {
        return Err(Error::invalid(format!("boost cap must be >= 1, got {cap}")));
    }
    if boxes.is_empty() {
        return Ok(scores.clone());
    }
    let (h, w) = (scores.height(), scores.width());
    ScalarMap::from_fn(h, w, |y, x| {
        let s = scores.get(y, x);
        if boxes.iter().any(|b| b.contains_pixel(y, x, h, w)) {
            (s * factor).min(cap)
        } else {
            s
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntensityConfig {
    /// Fixed patch size; the resolution-adaptive rule applies when unset.
    pub patch_size: Option<usize>,
    pub boost_factor: f64,
    pub boost_cap: f64,
    /// Guided-filter radius; half the patch size when unset.
    pub gf_radius: Option<usize>,
    pub gf_epsilon: f64,
    pub pre_blur_sigma: f64,
    pub clamp_lo: f64,
    pub clamp_hi: f64,
}

impl Default for IntensityConfig {
    fn default() -> Self {
        Self {
            patch_size: None,
            boost_factor: 1.5,
            boost_cap: 5.0,
            gf_radius: None,
            gf_epsilon: 1e-2,
            pre_blur_sigma: 1.0,
            clamp_lo: 1.0,
            clamp_hi: 5.0,
        }
    }
}

impl IntensityConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(a) = self.patch_size {
            if a < MIN_PATCH_OVERRIDE {
                return Err(Error::invalid(format!("patch size {a} is below {MIN_PATCH_OVERRIDE}")));
            }
        }
        if !(self.boost_factor >= 1.0) || !(self.boost_cap >= 1.0) {
            return Err(Error::invalid("boost factor and cap must be >= 1"));
        }
        if !(self.clamp_lo < self.clamp_hi) {
            return Err(Error::invalid("clamp_lo must be below clamp_hi"));
        }
        self.filter_params(32).validate()
    }

    pub fn resolve_patch_size(&self, height: usize, width: usize) -> Result<usize> {
        match self.patch_size {
            Some(a) => Ok(a),
            None => adaptive_patch_size(height, width),
        }
    }

    pub fn filter_params(&self, patch_size: usize) -> GuidedFilterParams {
        GuidedFilterParams {
            radius: self.gf_radius.unwrap_or((patch_size / 2).max(1)),
            epsilon: self.gf_epsilon,
            pre_blur_sigma: self.pre_blur_sigma,
        }
    }
}

/// Intermediate products of the intensity prior, kept for inspection and dumps.
#[derive(Debug, Clone)]
pub struct IntensityReport {
    pub prior: ScalarMap,
    pub grid: PatchGrid,
    pub boxes: Vec<BBox>,
    pub filter: GuidedFilterParams,
}

pub fn intensity_prior(img: &ImageF, scorer: &dyn Scorer, cfg: &IntensityConfig) -> Result<ScalarMap> {
    Ok(intensity_prior_report(img, scorer, cfg)?.prior)
}

pub fn intensity_prior_report(img: &ImageF, scorer: &dyn Scorer, cfg: &IntensityConfig) -> Result<IntensityReport> {
    cfg.validate()?;
    let (h, w) = (img.height(), img.width());
    let patch_size = cfg.resolve_patch_size(h, w)?;
    let grid = partition_and_score(img, scorer, patch_size)?;
    let field = broadcast_scores(&grid, h, w)?;
    let boxes = scorer.detect_reflection_boxes(img)?;
    let boosted = apply_box_boost(&field, &boxes, cfg.boost_factor, cfg.boost_cap)?;
    let filter = cfg.filter_params(patch_size);
    let guide = guide_from_image(img, filter.pre_blur_sigma)?;
    let dense = guided_filter(&boosted, &guide, &filter)?;
    let prior = clamp_rescale(&dense, cfg.clamp_lo, cfg.clamp_hi)?;
    Ok(IntensityReport {
        prior,
        grid,
        boxes,
        filter,
    })
}
