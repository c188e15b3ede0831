//! High-frequency prior of an image.
//!
//! ```text
//! cargo run --example hf_prior -- [input.png] [levels]
//! ```
//! Without an input a synthetic scene is used. Writes `hf_prior.png` to the
//! system temp directory.

use reflprior::hf::{decompose, hf_prior, DEFAULT_CLAMP_HI};
use reflprior::image::io::{read_png, write_map_png16};
use reflprior::image::ImageF;

fn scene() -> ImageF {
    // Smooth gradient with a sharp-edged checker block in the middle.
    ImageF::from_fn(128, 128, 3, |y, x, c| {
        let base = (x + y) as f64 / 254.0;
        if (32..96).contains(&y) && (32..96).contains(&x) {
            if (y / 8 + x / 8) % 2 == 0 { 1.0 } else { 0.0 }
        } else {
            base * (0.6 + 0.2 * c as f64)
        }
    })
    .unwrap()
}

fn main() -> reflprior::error::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let img = match args.first() {
        Some(p) => read_png(p)?,
        None => scene(),
    };
    let levels = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(4);

    let parts = decompose(&img, levels)?;
    for (i, (h, r)) in parts.residuals.iter().zip(&parts.scales).enumerate() {
        let energy = h.data().iter().map(|v| v.abs()).sum::<f64>() / h.data().len() as f64;
        println!("level {}: dilation {r:>2}, mean |H| = {energy:.5}", i + 1);
    }

    let p = hf_prior(&img, levels, DEFAULT_CLAMP_HI)?;
    let saturated = p.data().iter().filter(|&&v| v >= 1.0).count();
    println!(
        "P_hf in [{:.3}, {:.3}], {saturated} of {} pixels saturated",
        p.min(),
        p.max(),
        p.len()
    );

    let out = std::env::temp_dir().join("hf_prior.png");
    write_map_png16(&p, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}
