//! Gate map from two priors, the training-time strength schedule, and
//! modulation of a multi-scale feature stack.
//!
//! ```text
//! cargo run --example gate_modulation
//! ```

use reflprior::gate::{beta_schedule, gate_map, level_gates, modulate_stack, FeatureLevel, FeatureStack, GateConfig};
use reflprior::image::ScalarMap;

fn main() -> reflprior::error::Result<()> {
    let cfg = GateConfig::default();
    print!("beta schedule:");
    for step in [0.0, 0.05, 0.1, 0.25, 0.5, 1.0] {
        print!(" {step}->{:.4}", beta_schedule(step, &cfg)?);
    }
    println!();

    let p_int = ScalarMap::from_fn(64, 64, |_, x| x as f64 / 63.0)?;
    let p_hf = ScalarMap::from_fn(64, 64, |y, _| if y < 32 { 0.2 } else { 1.0 })?;
    let g = gate_map(&p_int, &p_hf, cfg.beta_max)?;
    println!("gate in [{:.4}, {:.4}]", g.min(), g.max());

    // Three levels, halving resolution and doubling channels.
    let levels = (0..3)
        .map(|s| {
            let (h, c) = (64 >> s, 4 << s);
            FeatureLevel::new(h, h, c, vec![1.0; h * h * c])
        })
        .collect::<Result<Vec<_>, _>>()?;
    let stack = FeatureStack::new(levels)?;
    let gates = level_gates(&stack, &g, cfg.beta_max)?;
    let out = modulate_stack(&stack, &g, cfg.beta_max)?;
    for ((lvl, gs), m) in stack.levels().iter().zip(&gates).zip(out.levels()) {
        let max = m.data().iter().cloned().fold(f32::MIN, f32::max);
        println!(
            "level {}x{}x{}: gate [{:.4}, {:.4}], max output {max:.4}",
            lvl.height(),
            lvl.width(),
            lvl.channels(),
            gs.min(),
            gs.max()
        );
    }

    let identity = gate_map(&p_int, &p_hf, 0.0)?;
    assert_eq!(modulate_stack(&stack, &identity, cfg.beta_max)?, stack);
    println!("beta = 0 leaves the stack unchanged");
    Ok(())
}
