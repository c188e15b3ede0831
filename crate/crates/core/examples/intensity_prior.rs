//! Reflection-intensity prior with the mock or a fixture scorer.
//!
//! ```text
//! cargo run --example intensity_prior -- [input.png] [fixture.json]
//! ```
//! A fixture file maps `"row,col"` (or `"*"`) to five probabilities and may
//! carry a `"boxes"` array.

use reflprior::image::io::{read_png, write_map_png16};
use reflprior::image::ImageF;
use reflprior::intensity::{intensity_prior_report, IntensityConfig};
use reflprior::severity::{FixtureScorer, MockScorer, Scorer};

fn scene() -> ImageF {
    // A textured band (busy, "reflective") across an otherwise calm image.
    ImageF::from_fn(160, 224, 3, |y, x, c| {
        if (60..110).contains(&y) {
            (((x * 7 + y * 13 + c * 5) % 17) as f64 / 16.0).powf(0.7)
        } else {
            0.45 + 0.1 * (x as f64 / 224.0)
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
    let scorer: Box<dyn Scorer> = match args.get(1) {
        Some(f) => Box::new(FixtureScorer::from_path(f)?),
        None => Box::new(MockScorer),
    };

    let cfg = IntensityConfig::default();
    let report = intensity_prior_report(&img, scorer.as_ref(), &cfg)?;
    let grid = &report.grid;
    println!(
        "{}x{} image, {} patches of {} px ({}x{}), scorer {}",
        img.height(),
        img.width(),
        grid.rows * grid.cols,
        grid.patch_size,
        grid.rows,
        grid.cols,
        scorer.describe()
    );
    for r in 0..grid.rows {
        let row: Vec<String> = (0..grid.cols).map(|c| format!("{:.2}", grid.score(r, c))).collect();
        println!("  {}", row.join(" "));
    }
    for b in &report.boxes {
        println!("box x [{:.3}, {:.3}) y [{:.3}, {:.3})", b.x0, b.x1, b.y0, b.y1);
    }
    let p = &report.prior;
    println!("P_int in [{:.3}, {:.3}]", p.min(), p.max());

    let out = std::env::temp_dir().join("intensity_prior.png");
    write_map_png16(p, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}
