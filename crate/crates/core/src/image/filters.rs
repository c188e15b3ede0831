use super::{ImageF, ScalarMap};
use crate::error::{Error, Result};

const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// BT.601 luminance for RGB input; one-channel input is copied.
pub fn to_grayscale(img: &ImageF) -> Result<ScalarMap> {
    match img.channels() {
        1 => Ok(img.channel(0)),
        3 => {
            let data = img
                .data()
                .chunks_exact(3)
                .map(|px| LUMA_WEIGHTS[0] * px[0] + LUMA_WEIGHTS[1] * px[1] + LUMA_WEIGHTS[2] * px[2])
                .collect();
            ScalarMap::new(img.height(), img.width(), data)
        }
        n => Err(Error::invalid(format!("cannot convert {n} channels to grayscale"))),
    }
}

/// Normalized 1-D Gaussian taps with radius `ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    Ok(taps)
}

/// Separable Gaussian blur with replicate padding.
pub fn gaussian_blur(map: &ScalarMap, sigma: f64) -> Result<ScalarMap> {
    let taps = gaussian_kernel(sigma)?;
    let tmp = convolve_rows(map, &taps);
    Ok(convolve_cols(&tmp, &taps))
}

fn convolve_rows(map: &ScalarMap, taps: &[f64]) -> ScalarMap {
    let (h, w) = (map.height(), map.width());
    let radius = (taps.len() / 2) as isize;
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let acc = taps.iter().enumerate().fold(0.0, |acc, (k, t)| {
                acc + t * map.get_clamped(y as isize, x as isize + k as isize - radius)
            });
            out.push(acc);
        }
    }
    ScalarMap::from_raw_unchecked(h, w, out)
}

fn convolve_cols(map: &ScalarMap, taps: &[f64]) -> ScalarMap {
    let (h, w) = (map.height(), map.width());
    let radius = (taps.len() / 2) as isize;
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let acc = taps.iter().enumerate().fold(0.0, |acc, (k, t)| {
                acc + t * map.get_clamped(y as isize + k as isize - radius, x as isize)
            });
            out.push(acc);
        }
    }
    ScalarMap::from_raw_unchecked(h, w, out)
}

/// Bilinear resampling with half-pixel center alignment.
pub fn resize_bilinear(map: &ScalarMap, out_h: usize, out_w: usize) -> Result<ScalarMap> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::invalid(format!(
            "resize target must be nonzero, got {out_h}x{out_w}"
        )));
    }
    let (in_h, in_w) = (map.height(), map.width());
    if in_h == out_h && in_w == out_w {
        return Ok(map.clone());
    }
    let ys = sample_positions(in_h, out_h);
    let xs = sample_positions(in_w, out_w);
    let mut out = Vec::with_capacity(out_h * out_w);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = lerp(map.get(y0, x0), map.get(y0, x1), fx);
            let bottom = lerp(map.get(y1, x0), map.get(y1, x1), fx);
            out.push(lerp(top, bottom, fy));
        }
    }
    ScalarMap::new(out_h, out_w, out)
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    // Exact for a == b, so constants survive resampling bit-for-bit.
    if t == 0.0 || a == b {
        a
    } else {
        a + (b - a) * t
    }
}

/// Source index pair and fractional weight for each output coordinate.
fn sample_positions(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    let scale = n_in as f64 / n_out as f64;
    let last = (n_in - 1) as f64;
    (0..n_out)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, last);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

/// Clamps to `[lo, hi]` and maps that interval affinely onto `[0, 1]`.
pub fn clamp_rescale(map: &ScalarMap, lo: f64, hi: f64) -> Result<ScalarMap> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid(format!(
            "clamp range must satisfy lo < hi, got [{lo}, {hi}]"
        )));
    }
    let span = hi - lo;
    map.map(|x| ((x.clamp(lo, hi) - lo) / span).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn grayscale_weights() {
        let white = ImageF::filled(2, 3, 3, 1.0).unwrap();
        assert!(to_grayscale(&white)
            .unwrap()
            .data()
            .iter()
            .all(|&v| approx(v, 1.0, 1e-12)));
        let red = ImageF::new(1, 1, 3, vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(to_grayscale(&red).unwrap().data(), &[0.299]);
        let gray = ImageF::from_fn(3, 3, 1, |y, x, _| (y + x) as f64 / 4.0).unwrap();
        assert_eq!(to_grayscale(&gray).unwrap().data(), gray.data());
    }

    #[test]
    fn blur_preserves_constants() {
        let m = ScalarMap::filled(7, 9, 0.37).unwrap();
        for sigma in [0.3, 1.0, 2.5] {
            let b = gaussian_blur(&m, sigma).unwrap();
            assert!(b.data().iter().all(|&v| approx(v, 0.37, 1e-6)));
        }
    }

    #[test]
    fn blur_impulse_center_is_squared_center_tap() {
        let mut data = vec![0.0; 15 * 15];
        data[7 * 15 + 7] = 1.0;
        let m = ScalarMap::new(15, 15, data).unwrap();
        let b = gaussian_blur(&m, 1.0).unwrap();
        // Independent evaluation: radius 3, weights exp(-k²/2), normalized.
        let norm: f64 = (-3..=3).map(|k: i32| (-(k * k) as f64 / 2.0).exp()).sum();
        let center = 1.0 / norm;
        assert!(approx(b.get(7, 7), center * center, 1e-12));
        let total: f64 = b.data().iter().sum();
        assert!(approx(total, 1.0, 1e-6));
    }

    #[test]
    fn blur_rejects_nonpositive_sigma() {
        let m = ScalarMap::filled(3, 3, 0.0).unwrap();
        assert!(gaussian_blur(&m, 0.0).is_err());
        assert!(gaussian_blur(&m, -1.0).is_err());
    }

    #[test]
    fn resize_cases() {
        let m = ScalarMap::filled(5, 3, 0.7).unwrap();
        let r = resize_bilinear(&m, 11, 2).unwrap();
        assert!(r.data().iter().all(|&v| v == 0.7));

        let src = ScalarMap::from_fn(4, 5, |y, x| (y * 5 + x) as f64 / 20.0).unwrap();
        let same = resize_bilinear(&src, 4, 5).unwrap();
        for (a, b) in same.data().iter().zip(src.data()) {
            assert!(approx(*a, *b, 1e-6));
        }

        let ramp = ScalarMap::new(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let up = resize_bilinear(&ramp, 2, 4).unwrap();
        // Half-pixel centers: src x = (i + 0.5) / 2 - 0.5 → -0.25, 0.25, 0.75, 1.25.
        let expected = [0.0, 0.25, 0.75, 1.0];
        for y in 0..2 {
            for x in 0..4 {
                assert!(approx(up.get(y, x), expected[x], 1e-12));
            }
        }
        assert!(resize_bilinear(&ramp, 0, 3).is_err());
    }

    #[test]
    fn clamp_rescale_cases() {
        let fives = ScalarMap::filled(2, 2, 5.0).unwrap();
        assert!(clamp_rescale(&fives, 1.0, 5.0).unwrap().data().iter().all(|&v| v == 1.0));
        let ones = ScalarMap::filled(2, 2, 1.0).unwrap();
        assert!(clamp_rescale(&ones, 1.0, 5.0).unwrap().data().iter().all(|&v| v == 0.0));
        let three = ScalarMap::filled(1, 1, 3.0).unwrap();
        assert_eq!(clamp_rescale(&three, 1.0, 5.0).unwrap().data(), &[0.5]);
        assert!(clamp_rescale(&three, 2.0, 2.0).is_err());
        assert!(clamp_rescale(&three, 3.0, 2.0).is_err());
    }
}
