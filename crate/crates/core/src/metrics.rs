//! Full-reference image metrics and the refinement loss terms.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::image::io::read_png;
use crate::image::{gaussian_kernel, shape_mismatch, ImageF, ScalarMap};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn check_shapes(a: &ImageF, b: &ImageF) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(shape_mismatch(
            (a.height(), a.width(), a.channels()),
            (b.height(), b.width(), b.channels()),
        ))
    }
}

/// Mean absolute difference over every sample.
pub fn l1_loss(a: &ImageF, b: &ImageF) -> Result<f64> {
    check_shapes(a, b)?;
    let n = a.data().len() as f64;
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / n)
}

pub fn mse(a: &ImageF, b: &ImageF) -> Result<f64> {
    check_shapes(a, b)?;
    let n = a.data().len() as f64;
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n)
}

/// PSNR in dB for peak value 1; identical inputs give `+∞`.
pub fn psnr(a: &ImageF, b: &ImageF) -> Result<f64> {
    let e = mse(a, b)?;
    Ok(if e == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * e.log10()
    })
}

/// Normalized 2-D Gaussian window (outer product of the 1-D taps).
fn ssim_window() -> Vec<f64> {
    let taps = gaussian_kernel(SSIM_SIGMA).expect("positive sigma");
    // gaussian_kernel uses radius ceil(3σ) = 5, giving exactly 11 taps.
    debug_assert_eq!(taps.len(), SSIM_WINDOW);
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for ty in &taps {
        for tx in &taps {
            w.push(ty * tx);
        }
    }
    w
}

/// Weighted window sums at every valid (unpadded) position.
fn valid_filter(map: &ScalarMap, window: &[f64]) -> Vec<f64> {
    let (h, w) = (map.height(), map.width());
    let k = SSIM_WINDOW;
    let mut out = Vec::with_capacity((h - k + 1) * (w - k + 1));
    for y in 0..=h - k {
        for x in 0..=w - k {
            let mut acc = 0.0;
            for dy in 0..k {
                let row = &map.data()[(y + dy) * w + x..(y + dy) * w + x + k];
                let wrow = &window[dy * k..(dy + 1) * k];
                acc += row.iter().zip(wrow).map(|(v, wt)| v * wt).sum::<f64>();
            }
            out.push(acc);
        }
    }
    out
}

fn ssim_plane(a: &ScalarMap, b: &ScalarMap, window: &[f64]) -> Result<f64> {
    let c1 = (SSIM_K1 * 1.0) * (SSIM_K1 * 1.0);
    let c2 = (SSIM_K2 * 1.0) * (SSIM_K2 * 1.0);
    let mu_a = valid_filter(a, window);
    let mu_b = valid_filter(b, window);
    let aa = valid_filter(&a.map(|v| v * v)?, window);
    let bb = valid_filter(&b.map(|v| v * v)?, window);
    let ab = valid_filter(&a.zip_with(b, |x, y| x * y)?, window);
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    Ok(total / n as f64)
}

/// Mean single-scale SSIM over valid window positions, averaged across channels.
pub fn ssim(a: &ImageF, b: &ImageF) -> Result<f64> {
    check_shapes(a, b)?;
    if a.height() < SSIM_WINDOW || a.width() < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {}x{}",
            a.height(),
            a.width()
        )));
    }
    let window = ssim_window();
    let mut sum = 0.0;
    for c in 0..a.channels() {
        sum += ssim_plane(&a.channel(c), &b.channel(c), &window)?;
    }
    Ok(sum / a.channels() as f64)
}

/// Horizontal and vertical Sobel responses of one channel (replicate border).
///
/// Written as weighted central differences so flat neighborhoods give exactly 0.
pub fn sobel_gradients(map: &ScalarMap) -> (Vec<f64>, Vec<f64>) {
    let (h, w) = (map.height(), map.width());
    let mut gx = Vec::with_capacity(h * w);
    let mut gy = Vec::with_capacity(h * w);
    let at = |y: isize, x: isize| map.get_clamped(y, x);
    for y in 0..h as isize {
        for x in 0..w as isize {
            gx.push(
                (at(y - 1, x + 1) - at(y - 1, x - 1))
                    + 2.0 * (at(y, x + 1) - at(y, x - 1))
                    + (at(y + 1, x + 1) - at(y + 1, x - 1)),
            );
            gy.push(
                (at(y + 1, x - 1) - at(y - 1, x - 1))
                    + 2.0 * (at(y + 1, x) - at(y - 1, x))
                    + (at(y + 1, x + 1) - at(y - 1, x + 1)),
            );
        }
    }
    (gx, gy)
}

/// Mean of `|∇ₓa − ∇ₓb| + |∇ᵧa − ∇ᵧb|` over all samples.
pub fn sobel_gradient_loss(a: &ImageF, b: &ImageF) -> Result<f64> {
    check_shapes(a, b)?;
    let mut total = 0.0;
    for c in 0..a.channels() {
        let (ax, ay) = sobel_gradients(&a.channel(c));
        let (bx, by) = sobel_gradients(&b.channel(c));
        for i in 0..ax.len() {
            total += (ax[i] - bx[i]).abs() + (ay[i] - by[i]).abs();
        }
    }
    Ok(total / a.data().len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineWeights {
    pub pixel: f64,
    pub perceptual: f64,
    pub gradient: f64,
}

impl Default for RefineWeights {
    fn default() -> Self {
        Self {
            pixel: 0.5,
            perceptual: 0.25,
            gradient: 0.25,
        }
    }
}

/// Weighted refinement loss. The perceptual term needs a pretrained network
/// and is not computed; `perceptual_available` is always `false`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RefineLoss {
    pub total: f64,
    pub pixel: f64,
    pub gradient: f64,
    pub perceptual_available: bool,
}

pub fn composite_refine_loss(a: &ImageF, b: &ImageF, weights: &RefineWeights) -> Result<RefineLoss> {
    let pixel = l1_loss(a, b)?;
    let gradient = sobel_gradient_loss(a, b)?;
    if weights.perceptual != 0.0 {
        log::debug!("perceptual term unavailable; its weight {} is not applied", weights.perceptual);
    }
    Ok(RefineLoss {
        total: weights.pixel * pixel + weights.gradient * gradient,
        pixel,
        gradient,
        perceptual_available: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricId {
    Psnr,
    Ssim,
    L1,
    Mse,
    GradLoss,
    /// Learned perceptual distance; requires a pretrained network, not provided.
    Lpips,
}

impl MetricId {
    pub fn name(self) -> &'static str {
        match self {
            MetricId::Psnr => "psnr",
            MetricId::Ssim => "ssim",
            MetricId::L1 => "l1",
            MetricId::Mse => "mse",
            MetricId::GradLoss => "grad_loss",
            MetricId::Lpips => "lpips",
        }
    }

    pub fn is_available(self) -> bool {
        !matches!(self, MetricId::Lpips)
    }

    pub fn compute(self, a: &ImageF, b: &ImageF) -> Result<f64> {
        match self {
            MetricId::Psnr => psnr(a, b),
            MetricId::Ssim => ssim(a, b),
            MetricId::L1 => l1_loss(a, b),
            MetricId::Mse => mse(a, b),
            MetricId::GradLoss => sobel_gradient_loss(a, b),
            MetricId::Lpips => Err(Error::Unsupported("lpips")),
        }
    }
}

/// Serializes non-finite PSNR as the string `"inf"`.
fn serialize_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str("inf")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricReport {
    #[serde(serialize_with = "serialize_db")]
    pub psnr: f64,
    pub ssim: f64,
    pub l1: f64,
    pub mse: f64,
    pub grad_loss: f64,
}

pub fn evaluate(a: &ImageF, b: &ImageF) -> Result<MetricReport> {
    Ok(MetricReport {
        psnr: psnr(a, b)?,
        ssim: ssim(a, b)?,
        l1: l1_loss(a, b)?,
        mse: mse(a, b)?,
        grad_loss: sobel_gradient_loss(a, b)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairRecord {
    pub pair_id: String,
    #[serde(flatten)]
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub summary: bool,
    pub count: usize,
    #[serde(serialize_with = "serialize_db")]
    pub psnr: f64,
    pub ssim: f64,
    pub l1: f64,
    pub mse: f64,
    pub grad_loss: f64,
}

pub fn summarize(records: &[PairRecord]) -> EvalSummary {
    let n = records.len().max(1) as f64;
    let mean = |f: fn(&MetricReport) -> f64| records.iter().map(|r| f(&r.report)).sum::<f64>() / n;
    EvalSummary {
        summary: true,
        count: records.len(),
        psnr: mean(|r| r.psnr),
        ssim: mean(|r| r.ssim),
        l1: mean(|r| r.l1),
        mse: mean(|r| r.mse),
        grad_loss: mean(|r| r.grad_loss),
    }
}

fn pngs_by_stem(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), path.clone());
            }
        }
    }
    Ok(out)
}

/// Pairs PNG files sharing a file stem across two directories, sorted by stem.
pub fn pair_by_stem(pred_dir: &Path, ref_dir: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    let preds = pngs_by_stem(pred_dir)?;
    let refs = pngs_by_stem(ref_dir)?;
    let pairs: Vec<_> = preds
        .into_iter()
        .filter_map(|(stem, p)| refs.get(&stem).map(|r| (stem, p, r.clone())))
        .collect();
    if pairs.is_empty() {
        return Err(Error::invalid(format!(
            "no PNG stems shared between {} and {}",
            pred_dir.display(),
            ref_dir.display()
        )));
    }
    Ok(pairs)
}

/// Evaluates every stem-matched pair; results are ordered by stem.
pub fn evaluate_dirs(pred_dir: &Path, ref_dir: &Path) -> Result<Vec<PairRecord>> {
    pair_by_stem(pred_dir, ref_dir)?
        .into_par_iter()
        .map(|(pair_id, p, r)| {
            let report = evaluate(&read_png(&p)?, &read_png(&r)?)?;
            Ok(PairRecord { pair_id, report })
        })
        .collect()
}
