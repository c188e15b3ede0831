//! Edge-aware smoothing of a blocky map guided by an image.
//!
//! ```text
//! cargo run --example guided_filter
//! ```

use reflprior::guided::{guide_from_image, guided_filter, GuidedFilterParams};
use reflprior::image::{ImageF, ScalarMap};

fn main() -> reflprior::error::Result<()> {
    // Guide: bright disc on a dark background.
    let img = ImageF::from_fn(64, 64, 3, |y, x, _| {
        let (dy, dx) = (y as f64 - 32.0, x as f64 - 32.0);
        if dy * dy + dx * dx < 400.0 { 0.9 } else { 0.1 }
    })?;
    // Input: coarse 16x16 blocks that do not follow the disc outline.
    let blocks = ScalarMap::from_fn(64, 64, |y, x| ((y / 16 + x / 16) % 3) as f64 / 2.0)?;

    let guide = guide_from_image(&img, 1.0)?;
    for eps in [1e-4, 1e-2, 1.0] {
        let params = GuidedFilterParams {
            radius: 8,
            epsilon: eps,
            pre_blur_sigma: 1.0,
        };
        let q = guided_filter(&blocks, &guide, &params)?;
        // Contrast across the disc boundary along the middle row.
        let inside = q.get(32, 30);
        let outside = q.get(32, 8);
        println!(
            "eps {eps:>6}: range [{:.3}, {:.3}], inside {inside:.3}, outside {outside:.3}",
            q.min(),
            q.max()
        );
    }
    Ok(())
}
