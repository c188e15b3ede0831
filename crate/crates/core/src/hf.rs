//! High-frequency prior from a multi-scale dilated-smoothing residual cascade.
//!
//! Starting from the input `M⁽⁰⁾`, each level smooths with a 3×3 box whose
//! taps are spaced `2^i` pixels apart, keeps the residual, and feeds the
//! smoothed image to the next level. Residuals plus the final smooth image
//! telescope back to the input.

use crate::error::{Error, Result};
use crate::image::{clamp_rescale, ImageF, ScalarMap};

pub const DEFAULT_LEVELS: usize = 4;
pub const DEFAULT_CLAMP_HI: f64 = 0.25;

/// Residual bands, final low-pass image, and the dilation radius of each band.
#[derive(Debug, Clone)]
pub struct DecompositionResult {
    pub residuals: Vec<ImageF>,
    pub final_smooth: ImageF,
    pub scales: Vec<usize>,
}

impl DecompositionResult {
    /// Sums every residual band and the final smooth image.
    pub fn reconstruct(&self) -> Result<ImageF> {
        self.residuals
            .iter()
            .try_fold(self.final_smooth.clone(), |acc, r| acc.zip_with(r, |a, b| a + b))
    }
}

/// Channel-wise 3×3 box with taps at `{-r, 0, r}²`, replicate border.
pub fn dilated_smooth(img: &ImageF, radius: usize) -> Result<ImageF> {
    if radius < 1 {
        return Err(Error::invalid("dilation radius must be at least 1"));
    }
    let r = radius as isize;
    img.map_planes(|plane| {
        ScalarMap::from_fn(plane.height(), plane.width(), |y, x| {
            let (y, x) = (y as isize, x as isize);
            let mut acc = 0.0;
            for dy in [-r, 0, r] {
                for dx in [-r, 0, r] {
                    acc += plane.get_clamped(y + dy, x + dx);
                }
            }
            acc / 9.0
        })
    })
}

pub fn decompose(img: &ImageF, levels: usize) -> Result<DecompositionResult> {
    if levels < 1 {
        return Err(Error::invalid("decomposition needs at least one level"));
    }
    let mut residuals = Vec::with_capacity(levels);
    let mut scales = Vec::with_capacity(levels);
    let mut current = img.clone();
    for i in 0..levels {
        let radius = 1usize << i;
        let smooth = dilated_smooth(&current, radius)?;
        residuals.push(current.zip_with(&smooth, |m, l| m - l)?);
        scales.push(radius);
        current = smooth;
    }
    Ok(DecompositionResult {
        residuals,
        final_smooth: current,
        scales,
    })
}

/// Sum of residual bands reduced to one channel by mean absolute value.
pub fn detail_magnitude(img: &ImageF, levels: usize) -> Result<ScalarMap> {
    let bands = decompose(img, levels)?;
    let channels = img.channels();
    let mut total = vec![0.0; img.data().len()];
    for band in &bands.residuals {
        for (t, v) in total.iter_mut().zip(band.data()) {
            *t += v;
        }
    }
    let data = total
        .chunks_exact(channels)
        .map(|px| px.iter().map(|v| v.abs()).sum::<f64>() / channels as f64)
        .collect();
    ScalarMap::new(img.height(), img.width(), data)
}

/// High-frequency prior in `[0, 1]`: detail magnitude clamped to `[0, clamp_hi]` and rescaled.
pub fn hf_prior(img: &ImageF, levels: usize, clamp_hi: f64) -> Result<ScalarMap> {
    if !(clamp_hi > 0.0) {
        return Err(Error::invalid(format!("clamp_hi must be positive, got {clamp_hi}")));
    }
    clamp_rescale(&detail_magnitude(img, levels)?, 0.0, clamp_hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(h: usize, w: usize, c: usize, seed: u64) -> ImageF {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageF::from_fn(h, w, c, |_, _, _| rng.random::<f64>()).unwrap()
    }

    #[test]
    fn smooth_constant_and_radius_check() {
        let img = ImageF::filled(5, 6, 3, 0.3).unwrap();
        let s = dilated_smooth(&img, 2).unwrap();
        assert!(s.data().iter().all(|&v| (v - 0.3).abs() < 1e-15));
        assert!(dilated_smooth(&img, 0).is_err());
    }

    #[test]
    fn smooth_impulse_taps() {
        for r in [1usize, 2] {
            let mut data = vec![0.0; 11 * 11];
            data[5 * 11 + 5] = 1.0;
            let img = ImageF::new(11, 11, 1, data).unwrap();
            let s = dilated_smooth(&img, r).unwrap();
            for y in 0..11isize {
                for x in 0..11isize {
                    let (dy, dx) = (y - 5, x - 5);
                    let r = r as isize;
                    let on_tap = [-r, 0, r].contains(&dy) && [-r, 0, r].contains(&dx);
                    let want = if on_tap { 1.0 / 9.0 } else { 0.0 };
                    assert!((s.get(y as usize, x as usize, 0) - want).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn decompose_constant_has_zero_residuals() {
        let img = ImageF::filled(8, 8, 3, 0.6).unwrap();
        let d = decompose(&img, 4).unwrap();
        assert_eq!(d.scales, vec![1, 2, 4, 8]);
        assert!(d.residuals.iter().all(|r| r.data().iter().all(|&v| v == 0.0)));
        assert!(decompose(&img, 0).is_err());
    }

    #[test]
    fn single_level_is_one_step() {
        let img = random_image(9, 7, 3, 3);
        let d = decompose(&img, 1).unwrap();
        let want = img.zip_with(&dilated_smooth(&img, 1).unwrap(), |a, b| a - b).unwrap();
        assert_eq!(d.residuals[0], want);
    }

    #[test]
    fn telescoping_on_random_image() {
        let img = random_image(16, 16, 3, 11);
        let back = decompose(&img, 4).unwrap().reconstruct().unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn prior_of_constant_is_zero() {
        let img = ImageF::filled(12, 12, 3, 0.42).unwrap();
        assert!(hf_prior(&img, 4, 0.25).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn step_edge_band_is_localized() {
        let (h, w) = (8, 40);
        let img = ImageF::from_fn(h, w, 1, |_, x, _| if x >= w / 2 { 1.0 } else { 0.0 }).unwrap();
        let p = hf_prior(&img, 2, 0.25).unwrap();
        // Two levels with radii 1 and 2 reach at most 1 + 2 = 3 px per side of
        // each step; the residual sum is bounded by 2·(1+2) = 6 px from the edge.
        let edge = w as isize / 2;
        for y in 0..h {
            for x in 0..w {
                let d = (x as isize - edge).abs().min((x as isize - (edge - 1)).abs());
                if d > 6 {
                    assert_eq!(p.get(y, x), 0.0, "nonzero at x={x}");
                }
            }
            assert!(p.get(y, edge as usize) > 0.0);
            assert!(p.get(y, edge as usize - 1) > 0.0);
        }
    }

    #[test]
    fn saturates_above_clamp() {
        // A lone bright pixel on one channel yields residual magnitude well above 0.25.
        let mut data = vec![0.0; 9 * 9];
        data[4 * 9 + 4] = 1.0;
        let img = ImageF::new(9, 9, 1, data).unwrap();
        let mag = detail_magnitude(&img, 1).unwrap();
        assert!((mag.get(4, 4) - 8.0 / 9.0).abs() < 1e-12);
        assert_eq!(hf_prior(&img, 1, 0.25).unwrap().get(4, 4), 1.0);
        assert!(hf_prior(&img, 1, 0.0).is_err());
    }
}
