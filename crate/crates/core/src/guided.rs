//! Edge-aware guided filter with summed-area-table window statistics.
//!
//! For each window `ω_k` of radius `r` the filter fits `q = a_k·G + b_k` with
//! `a_k = cov(G, p) / (var(G) + ε)` and `b_k = mean(p) − a_k·mean(G)`, then
//! averages the coefficients of every window covering a pixel. Windows extend
//! past the border by replicating edge samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::integral::box_mean;
use crate::image::{gaussian_blur, to_grayscale, ImageF, ScalarMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidedFilterParams {
    pub radius: usize,
    pub epsilon: f64,
    pub pre_blur_sigma: f64,
}

impl GuidedFilterParams {
    pub fn validate(&self) -> Result<()> {
        if self.radius < 1 {
            return Err(Error::invalid("guided filter radius must be at least 1"));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::invalid(format!(
                "guided filter epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.pre_blur_sigma > 0.0) {
            return Err(Error::invalid(format!(
                "pre-blur sigma must be positive, got {}",
                self.pre_blur_sigma
            )));
        }
        Ok(())
    }
}

/// Grayscale guide with a light Gaussian pre-blur.
pub fn guide_from_image(img: &ImageF, pre_blur_sigma: f64) -> Result<ScalarMap> {
    gaussian_blur(&to_grayscale(img)?, pre_blur_sigma)
}

pub fn guided_filter(input: &ScalarMap, guide: &ScalarMap, params: &GuidedFilterParams) -> Result<ScalarMap> {
    params.validate()?;
    if !input.same_shape(guide) {
        return Err(Error::invalid(format!(
            "guided filter shape mismatch: input {}x{}, guide {}x{}",
            input.height(),
            input.width(),
            guide.height(),
            guide.width()
        )));
    }
    // a_k = 0, b_k = c on constant input.
    if input.min() == input.max() {
        return Ok(input.clone());
    }

    // The filter is affine-equivariant in both p and G; centering keeps the
    // second-moment differences well conditioned.
    let p_shift = mean(input.data());
    let g_shift = mean(guide.data());
    let p = input.map(|v| v - p_shift)?;
    let g = guide.map(|v| v - g_shift)?;
    let r = params.radius;

    let mean_g = box_mean(&g, r);
    let mean_p = box_mean(&p, r);
    let corr_gp = box_mean(&g.zip_with(&p, |a, b| a * b)?, r);
    let corr_gg = box_mean(&g.map(|v| v * v)?, r);

    let n = p.len();
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for i in 0..n {
        let (mg, mp) = (mean_g.data()[i], mean_p.data()[i]);
        let var = (corr_gg.data()[i] - mg * mg).max(0.0);
        let cov = corr_gp.data()[i] - mg * mp;
        let ak = cov / (var + params.epsilon);
        a.push(ak);
        b.push(mp - ak * mg);
    }
    let (h, w) = (p.height(), p.width());
    let mean_a = box_mean(&ScalarMap::new(h, w, a)?, r);
    let mean_b = box_mean(&ScalarMap::new(h, w, b)?, r);
    let out = (0..n)
        .map(|i| mean_a.data()[i] * g.data()[i] + mean_b.data()[i] + p_shift)
        .collect();
    ScalarMap::new(h, w, out)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct per-window evaluation of the guided filter equations.
    fn brute_force(p: &ScalarMap, g: &ScalarMap, r: usize, eps: f64) -> Vec<f64> {
        let (h, w) = (p.height() as isize, p.width() as isize);
        let r = r as isize;
        let window = |cy: isize, cx: isize| {
            let mut pts = Vec::new();
            for y in cy - r..=cy + r {
                for x in cx - r..=cx + r {
                    pts.push((g.get_clamped(y, x), p.get_clamped(y, x)));
                }
            }
            pts
        };
        let mut coef = vec![(0.0, 0.0); (h * w) as usize];
        for y in 0..h {
            for x in 0..w {
                let pts = window(y, x);
                let n = pts.len() as f64;
                let mg = pts.iter().map(|t| t.0).sum::<f64>() / n;
                let mp = pts.iter().map(|t| t.1).sum::<f64>() / n;
                let var = pts.iter().map(|t| (t.0 - mg) * (t.0 - mg)).sum::<f64>() / n;
                let cov = pts.iter().map(|t| (t.0 - mg) * (t.1 - mp)).sum::<f64>() / n;
                let a = cov / (var + eps);
                coef[(y * w + x) as usize] = (a, mp - a * mg);
            }
        }
        let at = |y: isize, x: isize| {
            let yy = y.clamp(0, h - 1);
            let xx = x.clamp(0, w - 1);
            coef[(yy * w + xx) as usize]
        };
        let mut out = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let (mut sa, mut sb, mut n) = (0.0, 0.0, 0.0);
                for wy in y - r..=y + r {
                    for wx in x - r..=x + r {
                        let (a, b) = at(wy, wx);
                        sa += a;
                        sb += b;
                        n += 1.0;
                    }
                }
                out.push(sa / n * g.get(y as usize, x as usize) + sb / n);
            }
        }
        out
    }

    fn random_map(h: usize, w: usize, rng: &mut ChaCha8Rng) -> ScalarMap {
        ScalarMap::from_fn(h, w, |_, _| rng.random::<f64>()).unwrap()
    }

    fn params(r: usize, eps: f64) -> GuidedFilterParams {
        GuidedFilterParams {
            radius: r,
            epsilon: eps,
            pre_blur_sigma: 1.0,
        }
    }

    #[test]
    fn matches_brute_force_on_8x8() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = random_map(8, 8, &mut rng);
        let g = random_map(8, 8, &mut rng);
        let fast = guided_filter(&p, &g, &params(2, 0.01)).unwrap();
        for (a, b) in fast.data().iter().zip(brute_force(&p, &g, 2, 0.01)) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn constant_input_is_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_map(10, 7, &mut rng);
        let p = ScalarMap::filled(10, 7, 3.7).unwrap();
        let q = guided_filter(&p, &g, &params(3, 0.01)).unwrap();
        assert!(q.data().iter().all(|&v| (v - 3.7).abs() < 1e-6));
    }

    #[test]
    fn self_guidance_reproduces_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_map(16, 16, &mut rng);
        let q = guided_filter(&p, &p, &params(2, 1e-12)).unwrap();
        for y in 2..14 {
            for x in 2..14 {
                assert!((q.get(y, x) - p.get(y, x)).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn rejects_mismatch_and_bad_params() {
        let a = ScalarMap::filled(4, 4, 0.0).unwrap();
        let b = ScalarMap::filled(4, 5, 0.0).unwrap();
        assert!(guided_filter(&a, &b, &params(1, 0.1)).is_err());
        assert!(guided_filter(&a, &a, &params(0, 0.1)).is_err());
        assert!(guided_filter(&a, &a, &params(1, 0.0)).is_err());
    }
}
