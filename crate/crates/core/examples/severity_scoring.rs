//! Turning category logits into a severity score, and scoring patches with the mock scorer.
//!
//! ```text
//! cargo run --example severity_scoring
//! ```

use reflprior::image::ImageF;
use reflprior::severity::{
    ordinal_score, restricted_softmax, CategoryLogits, MockScorer, PatchIndex, Scorer, Severity,
};

fn main() -> reflprior::error::Result<()> {
    // Logits as a vision-language model might return them for the five category tokens.
    let logits = CategoryLogits::new([-4.1, -2.3, -0.7, -1.2, -3.9])?;
    for tau in [0.5, 1.0, 2.0] {
        let d = restricted_softmax(&logits, tau)?;
        println!(
            "tau {tau}: p = {:.3?}  argmax {}  score {:.3}",
            d.probs(),
            d.argmax(),
            ordinal_score(&d)
        );
    }

    let at = PatchIndex { row: 0, col: 0 };
    let flat = ImageF::filled(32, 32, 3, 0.5)?;
    let stripes = ImageF::from_fn(32, 32, 3, |_, x, _| if x % 4 < 2 { 0.95 } else { 0.05 })?;
    for (name, patch) in [("flat gray", &flat), ("stripes", &stripes)] {
        let d = MockScorer.score_patch(patch, at)?;
        println!(
            "{name:>9}: activity {:.3}, {} ({:.3})",
            MockScorer::activity(patch),
            d.argmax(),
            ordinal_score(&d)
        );
    }
    assert_eq!(MockScorer.score_patch(&flat, at)?.argmax(), Severity::None);
    Ok(())
}
