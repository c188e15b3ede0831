//! Scoring patches with an OpenAI-compatible vision model.
//!
//! ```text
//! FUMO_API_KEY=... cargo run --example remote_scorer -- input.png [endpoint] [model]
//! ```
//! Responses are cached in the temp directory, so a second run sends no requests.

use reflprior::image::io::read_png;
use reflprior::intensity::{intensity_prior_report, IntensityConfig};
use reflprior::severity::{RemoteScorer, ScorerConfig, API_KEY_ENV};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(input) = args.first() else {
        eprintln!("usage: remote_scorer input.png [endpoint] [model]");
        std::process::exit(2);
    };
    let mut cfg = ScorerConfig {
        cache_path: Some(std::env::temp_dir().join("remote_scorer_cache.jsonl")),
        ..ScorerConfig::default()
    };
    if let Some(e) = args.get(1) {
        cfg.endpoint_url = e.clone();
    }
    if let Some(m) = args.get(2) {
        cfg.model_name = m.clone();
    }

    let scorer = match RemoteScorer::from_env(cfg) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e} (set {API_KEY_ENV})");
            std::process::exit(4);
        }
    };
    let img = match read_png(input) {
        Ok(i) => i,
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(2);
        }
    };
    match intensity_prior_report(&img, &scorer, &IntensityConfig::default()) {
        Ok(report) => {
            let g = &report.grid;
            println!("{}x{} patches, {} boxes", g.rows, g.cols, report.boxes.len());
            for (i, d) in g.distributions.iter().enumerate() {
                println!("patch ({},{}): {:.3?} -> {:.3}", i / g.cols, i % g.cols, d.probs(), g.scores[i]);
            }
            println!("{} requests sent", scorer.requests_sent());
        }
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(4);
        }
    }
}
