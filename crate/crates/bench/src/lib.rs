//! Fixtures shared by the benchmarks under `benches/`.

use csbm_core::{sample_instance, Instance, ModelParams};

/// Above-threshold instance with `λ = μ = 0.8`, `d = 3`.
pub fn instance(n: usize, gamma: f64, seed: u64) -> Instance {
    let params = ModelParams::with_gamma(0.8, 0.8, 3.0, n, gamma).expect("valid fixture parameters");
    sample_instance(&params, seed)
}
