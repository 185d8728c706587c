//! Null variance of the single-wedge statistic `(1,1)`, measured against the
//! direct computation `Var = 2p/n` and the general formula `1/(2γ)`.

use csbm_core::stats::{mean, variance};
use csbm_core::*;

#[test]
fn unit_wedge_null_variance_is_two_p_over_n() {
    let index = CycleIndex::new(1, 1).unwrap();
    for (n, gamma) in [(200, 1.0), (400, 2.0), (800, 4.0), (800, 0.5)] {
        let params = ModelParams::with_gamma(0.0, 0.0, 3.0, n, gamma).unwrap();
        let c: Vec<f64> = (0..300)
            .map(|s| cycle_statistic(&sample_instance(&params, 77 + s), index, u64::MAX).unwrap().centered)
            .collect();
        let v = variance(&c);
        let direct = 2.0 * params.p() as f64 / n as f64;
        let general = theoretical_moments(&params, index).null_variance;
        println!(
            "n={n} gamma={gamma}: mean {:.4}, var {v:.4}, 2p/n {direct:.4}, general formula {general:.4}",
            mean(&c)
        );
        assert!((v / direct - 1.0).abs() < 0.25, "n={n} gamma={gamma}: var {v} vs {direct}");
        assert!(mean(&c).abs() < 4.0 * (direct / 300.0).sqrt());
    }
}
