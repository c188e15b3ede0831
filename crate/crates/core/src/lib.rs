pub mod cli;
pub mod error;
pub mod gate;
pub mod guided;
pub mod hf;
pub mod image;
pub mod intensity;
pub mod metrics;
pub mod severity;
pub mod synth;
