//! Full-reference metrics between two images, or between two directories paired by stem.
//!
//! ```text
//! cargo run --example metrics -- [pred.png ref.png | pred_dir ref_dir]
//! ```

use std::path::Path;

use reflprior::image::io::read_png;
use reflprior::image::ImageF;
use reflprior::metrics::{composite_refine_loss, evaluate, evaluate_dirs, summarize, MetricId, RefineWeights};

fn main() -> reflprior::error::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.len() >= 2 && Path::new(&args[0]).is_dir() {
        let records = evaluate_dirs(Path::new(&args[0]), Path::new(&args[1]))?;
        for r in &records {
            println!("{}", serde_json::to_string(r).unwrap());
        }
        println!("{}", serde_json::to_string(&summarize(&records)).unwrap());
        return Ok(());
    }
    let (a, b) = if args.len() >= 2 {
        (read_png(&args[0])?, read_png(&args[1])?)
    } else {
        let a = ImageF::from_fn(64, 64, 3, |y, x, c| ((x * 3 + y * 5 + c * 11) % 64) as f64 / 63.0)?;
        let b = a.map(|v| (v * 0.9 + 0.03).min(1.0))?;
        (a, b)
    };

    let report = evaluate(&a, &b)?;
    println!(
        "psnr {:.3} dB  ssim {:.4}  l1 {:.5}  mse {:.6}  grad {:.5}",
        report.psnr, report.ssim, report.l1, report.mse, report.grad_loss
    );
    let loss = composite_refine_loss(&a, &b, &RefineWeights::default())?;
    println!(
        "refine loss {:.5} (pixel {:.5}, gradient {:.5}, perceptual available: {})",
        loss.total, loss.pixel, loss.gradient, loss.perceptual_available
    );
    match MetricId::Lpips.compute(&a, &b) {
        Ok(v) => println!("lpips {v}"),
        Err(e) => println!("lpips: {e}"),
    }
    Ok(())
}
