//! Summed-area tables for constant-time box means.

use super::ScalarMap;

/// Integral image over a replicate-padded copy of a map.
///
/// Window means are taken over the `(2r+1)²` square centered on each pixel,
/// with out-of-range coordinates clamped to the nearest edge sample.
pub struct PaddedIntegral {
    radius: usize,
    stride: usize,
    sums: Vec<f64>,
}

impl PaddedIntegral {
    pub fn new(map: &ScalarMap, radius: usize) -> Self {
        let r = radius as isize;
        let (h, w) = (map.height() as isize, map.width() as isize);
        let ph = (h + 2 * r) as usize;
        let pw = (w + 2 * r) as usize;
        let stride = pw + 1;
        let mut sums = vec![0.0; (ph + 1) * stride];
        for py in 0..ph {
            let mut row = 0.0;
            for px in 0..pw {
                row += map.get_clamped(py as isize - r, px as isize - r);
                sums[(py + 1) * stride + px + 1] = sums[py * stride + px + 1] + row;
            }
        }
        Self {
            radius,
            stride,
            sums,
        }
    }

    /// Mean over the window centered at `(y, x)` of the source map.
    #[inline]
    pub fn mean(&self, y: usize, x: usize) -> f64 {
        let d = 2 * self.radius + 1;
        let (y0, x0, y1, x1) = (y, x, y + d, x + d);
        let s = self.sums[y1 * self.stride + x1] - self.sums[y0 * self.stride + x1]
            - self.sums[y1 * self.stride + x0]
            + self.sums[y0 * self.stride + x0];
        s / (d * d) as f64
    }
}

/// Replicate-padded box mean of radius `radius` at every pixel.
pub fn box_mean(map: &ScalarMap, radius: usize) -> ScalarMap {
    let integral = PaddedIntegral::new(map, radius);
    let (h, w) = (map.height(), map.width());
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            out.push(integral.mean(y, x));
        }
    }
    ScalarMap::from_raw_unchecked(h, w, out)
}

/// Replicate-padded local standard deviation of radius `radius`.
pub fn local_std(map: &ScalarMap, radius: usize) -> ScalarMap {
    let mean = box_mean(map, radius);
    let sq = ScalarMap::from_raw_unchecked(
        map.height(),
        map.width(),
        map.data().iter().map(|v| v * v).collect(),
    );
    let mean_sq = box_mean(&sq, radius);
    let data = mean
        .data()
        .iter()
        .zip(mean_sq.data())
        .map(|(m, m2)| (m2 - m * m).max(0.0).sqrt())
        .collect();
    ScalarMap::from_raw_unchecked(map.height(), map.width(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_mean(map: &ScalarMap, r: usize, y: usize, x: usize) -> f64 {
        let r = r as isize;
        let mut s = 0.0;
        for dy in -r..=r {
            for dx in -r..=r {
                s += map.get_clamped(y as isize + dy, x as isize + dx);
            }
        }
        s / ((2 * r + 1) * (2 * r + 1)) as f64
    }

    #[test]
    fn matches_brute_force_with_replicate_border() {
        let map = ScalarMap::from_fn(7, 5, |y, x| ((y * 31 + x * 17) % 11) as f64 / 10.0).unwrap();
        for r in [0, 1, 2, 4, 9] {
            let m = box_mean(&map, r);
            for y in 0..7 {
                for x in 0..5 {
                    assert!((m.get(y, x) - brute_mean(&map, r, y, x)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn std_of_constant_is_zero() {
        let map = ScalarMap::filled(6, 6, 0.4).unwrap();
        assert!(local_std(&map, 4).data().iter().all(|&v| v < 1e-7));
    }
}
