use csbm_core::cycles::{cycle_statistic, CycleIndex};
use csbm_core::oracle::{naive_cycle_sum, OracleLimits};
use csbm_core::{sample_instance, ModelParams};

/// Relative agreement; an enumeration with no nonzero summands is an exact
/// zero, which the engine must reproduce up to rounding.
pub fn agrees(fast: f64, slow: f64, terms: u64) -> bool {
    if terms == 0 {
        return fast.abs() <= 1e-12;
    }
    (fast - slow).abs() <= 1e-9 * slow.abs().max(fast.abs())
}

#[test]
fn exact_engine_matches_enumeration() {
    for seed in 0..12u64 {
        let n = 5 + (seed as usize % 6);
        let p = 2 + (seed as usize % 7);
        let lambda = 0.2 * (seed % 4) as f64;
        let m = ModelParams::with_p(lambda, 1.0, 2.5, n, p).unwrap();
        let inst = sample_instance(&m, seed);
        for index in CycleIndex::all_up_to(4) {
            let fast = cycle_statistic(&inst, index, u64::MAX).unwrap().raw;
            let slow = naive_cycle_sum(&inst, index, OracleLimits::default()).unwrap();
            assert!(agrees(fast, slow.value, slow.terms), "seed {seed} {index}: {fast} vs {}", slow.value);
        }
    }
}
