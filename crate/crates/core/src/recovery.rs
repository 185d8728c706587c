//! Label recovery from pair estimates: a minimum-norm correlation matrix
//! aligned with the estimate, followed by Gaussian sign rounding.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{max_eigenvalue, project_psd, sorted_eigen};
use crate::model::Instance;
use crate::rng::{stream_rng, Stream};
use crate::saw::{pair_estimator, PairEstimateMatrix, WalkConfig};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITERS: usize = 5000;
pub const DELTA_PRIME_INIT: f64 = 0.2;
pub const DELTA_PRIME_FLOOR: f64 = 1e-3;

/// Unit-diagonal PSD matrix returned by the projection step.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub sigma: DMatrix<f64>,
    /// `⟨P, Σ⟩ / (‖P‖_F n) − δ′`
    pub alignment_residual: f64,
    pub iterations: usize,
    pub feasible: bool,
}

/// Finds (approximately) the minimum-Frobenius-norm `Σ` with unit diagonal,
/// `Σ ⪰ 0` and `⟨P, Σ⟩ ≥ δ′ n ‖P‖_F`.
///
/// Dykstra's cyclic projections started from zero converge to the projection
/// of zero onto the intersection, i.e. its minimum-norm point. The returned
/// matrix is the last PSD iterate with its diagonal rescaled to one, which
/// keeps it PSD. If `δ′` exceeds the largest eigenvalue of `P/‖P‖_F` the
/// constraints cannot be met and the identity is returned as infeasible.
pub fn fit_correlation_matrix(
    p: &PairEstimateMatrix,
    delta_prime: f64,
    tol: f64,
    max_iters: usize,
) -> Result<CorrelationMatrix> {
    let n = p.p.nrows();
    if p.p.ncols() != n {
        return Err(Error::Dimension { what: "pair estimate", expected: n, found: p.p.ncols() });
    }
    if !(delta_prime > 0.0 && delta_prime <= 1.0) {
        return Err(Error::params(format!("delta_prime must lie in (0, 1], got {delta_prime}")));
    }
    let norm = p.p.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::Undefined("estimate matrix has zero or non-finite Frobenius norm"));
    }
    let phat = &p.p / norm;
    let nf = n as f64;
    let residual = |s: &DMatrix<f64>| phat.dot(s) / nf - delta_prime;

    if delta_prime > max_eigenvalue(&phat) {
        let id = DMatrix::identity(n, n);
        let r = residual(&id);
        return Ok(CorrelationMatrix { sigma: id, alignment_residual: r, iterations: 0, feasible: false });
    }

    // Aim slightly inside the half-space so the final rescaling keeps it.
    let target = delta_prime * nf * (1.0 + 1e-4) + 1e-9;
    let mut x = DMatrix::<f64>::zeros(n, n);
    let mut inc_half = DMatrix::<f64>::zeros(n, n);
    let mut inc_psd = DMatrix::<f64>::zeros(n, n);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        iterations += 1;
        let prev = x.clone();
        // unit diagonal (affine, so no correction term is needed)
        x.fill_diagonal(1.0);
        // alignment half-space
        let y = &x + &inc_half;
        let gap = target - phat.dot(&y);
        let z = if gap > 0.0 { &y + &phat * gap } else { y.clone() };
        inc_half = y - &z;
        // PSD cone
        let y = &z + &inc_psd;
        x = project_psd(&y);
        inc_psd = y - &x;
        if (&x - &prev).norm() < tol * x.norm().max(1.0) {
            converged = true;
            break;
        }
    }

    let d: Vec<f64> = (0..n).map(|i| x[(i, i)]).collect();
    let sigma = if d.iter().all(|&v| v > 0.0) {
        let s = DVector::from_iterator(n, d.iter().map(|v| 1.0 / v.sqrt()));
        let mut out = DMatrix::from_fn(n, n, |i, j| x[(i, j)] * s[i] * s[j]);
        out.fill_diagonal(1.0);
        out
    } else {
        DMatrix::identity(n, n)
    };
    let r = residual(&sigma);
    Ok(CorrelationMatrix {
        sigma,
        alignment_residual: r,
        iterations,
        feasible: converged && r >= -tol,
    })
}

/// Cached square-root factor of a correlation matrix for repeated rounding.
pub struct GaussianRounder {
    /// Columns `√λᵢ vᵢ` for eigenvalues in ascending order (negatives → 0).
    factor: DMatrix<f64>,
}

impl GaussianRounder {
    pub fn new(sigma: &DMatrix<f64>) -> Self {
        let eig = sorted_eigen(sigma);
        let mut factor = eig.vectors;
        for (i, &v) in eig.values.iter().enumerate() {
            let s = v.max(0.0).sqrt();
            factor.column_mut(i).scale_mut(s);
        }
        GaussianRounder { factor }
    }

    /// Signs of `z ~ N(0, Σ)` drawn from the rounding stream of `seed`.
    pub fn round(&self, seed: u64) -> Vec<i8> {
        let n = self.factor.nrows();
        let mut rng = stream_rng(seed, Stream::Rounding);
        let g = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)));
        let z = &self.factor * g;
        z.iter().map(|&v| if v >= 0.0 { 1 } else { -1 }).collect()
    }
}

/// Signs of a centered Gaussian vector with covariance `Σ`; `sign(0) = +1`.
pub fn gaussian_sign_rounding(sigma: &CorrelationMatrix, seed: u64) -> Vec<i8> {
    GaussianRounder::new(&sigma.sigma).round(seed)
}

/// Agreement between two label vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Overlap {
    /// `|⟨σ, σ̂⟩| / n`
    pub raw: f64,
    /// `⟨σ, σ̂⟩/n − mean(σ) mean(σ̂)`
    pub centered: f64,
}

pub fn overlap(sigma: &[i8], sigma_hat: &[i8]) -> Result<Overlap> {
    if sigma.len() != sigma_hat.len() {
        return Err(Error::LengthMismatch { left: sigma.len(), right: sigma_hat.len() });
    }
    let n = sigma.len() as f64;
    let dot: i64 = sigma.iter().zip(sigma_hat).map(|(&a, &b)| (a * b) as i64).sum();
    let s1: i64 = sigma.iter().map(|&a| a as i64).sum();
    let s2: i64 = sigma_hat.iter().map(|&a| a as i64).sum();
    Ok(Overlap {
        raw: (dot as f64).abs() / n,
        centered: dot as f64 / n - (s1 as f64 / n) * (s2 as f64 / n),
    })
}

/// Output of the full recovery pipeline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub sigma_hat: Vec<i8>,
    pub overlap_raw: Option<f64>,
    pub overlap_centered: Option<f64>,
    pub delta_prime_used: f64,
    pub iterations: usize,
    pub feasible: bool,
}

/// Tuning of the projection step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub floor: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { tol: DEFAULT_TOL, max_iters: DEFAULT_MAX_ITERS, floor: DELTA_PRIME_FLOOR }
    }
}

/// Fits with `δ′` halved on infeasibility until `floor`; returns the last fit
/// and the `δ′` it used.
pub fn fit_with_schedule(
    p: &PairEstimateMatrix,
    delta_prime_init: f64,
    opts: FitOptions,
) -> Result<(CorrelationMatrix, f64)> {
    let mut dp = delta_prime_init;
    loop {
        let fit = fit_correlation_matrix(p, dp, opts.tol, opts.max_iters)?;
        if fit.feasible || dp / 2.0 < opts.floor {
            return Ok((fit, dp));
        }
        dp /= 2.0;
    }
}

/// Pair estimates, correlation fit and rounding in sequence.
pub fn weak_recovery_pipeline(
    inst: &Instance,
    config: &WalkConfig,
    delta_prime_init: f64,
    seed: u64,
) -> Result<RecoveryReport> {
    weak_recovery_pipeline_with(inst, config, delta_prime_init, seed, FitOptions::default())
}

pub fn weak_recovery_pipeline_with(
    inst: &Instance,
    config: &WalkConfig,
    delta_prime_init: f64,
    seed: u64,
    opts: FitOptions,
) -> Result<RecoveryReport> {
    if inst.params.lambda() == 0.0 && inst.params.mu() == 0.0 {
        return Err(Error::NoSignal("neither channel carries signal"));
    }
    let p = pair_estimator(inst, config)?;
    let (fit, dp) = fit_with_schedule(&p, delta_prime_init, opts)?;
    let sigma_hat = gaussian_sign_rounding(&fit, seed);
    let ov = match inst.sigma() {
        Some(s) => Some(overlap(s, &sigma_hat)?),
        None => None,
    };
    Ok(RecoveryReport {
        sigma_hat,
        overlap_raw: ov.map(|o| o.raw),
        overlap_centered: ov.map(|o| o.centered),
        delta_prime_used: dp,
        iterations: fit.iterations,
        feasible: fit.feasible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eigenvalue;
    use crate::model::{sample_instance, ModelParams};
    use crate::saw::WalkMethod;

    fn pem(p: DMatrix<f64>) -> PairEstimateMatrix {
        PairEstimateMatrix { p, config: WalkConfig::new(1, 0, WalkMethod::WalkMatrix, 0).unwrap() }
    }

    #[test]
    fn identity_input() {
        let n = 16;
        let fit = fit_correlation_matrix(&pem(DMatrix::identity(n, n)), 0.2, 1e-9, 1000).unwrap();
        assert!(fit.feasible);
        assert!((fit.sigma - DMatrix::<f64>::identity(n, n)).amax() < 1e-6);
        let fit = fit_correlation_matrix(&pem(DMatrix::identity(n, n)), 0.3, 1e-9, 1000).unwrap();
        assert!(!fit.feasible);
    }

    fn planted(n: usize, seed: u64) -> DMatrix<f64> {
        let sigma = crate::model::sample_sigma(n, seed);
        let noise = crate::model::sample_noise(n, n, seed);
        let mut p = DMatrix::from_fn(n, n, |i, j| (sigma[i] * sigma[j]) as f64 + 2.0 * (noise[(i, j)] + noise[(j, i)]));
        p.fill_diagonal(0.0);
        p
    }

    #[test]
    fn constraints_hold_and_scale_invariance() {
        let p = planted(40, 3);
        let a = fit_correlation_matrix(&pem(p.clone()), 0.1, 1e-8, 5000).unwrap();
        let b = fit_correlation_matrix(&pem(p * 2.0), 0.1, 1e-8, 5000).unwrap();
        assert!(a.feasible);
        assert!(a.alignment_residual >= -1e-8);
        assert!(min_eigenvalue(&a.sigma) >= -1e-8);
        assert!((0..40).all(|i| (a.sigma[(i, i)] - 1.0).abs() <= 1e-8));
        assert!((a.sigma - b.sigma).amax() < 1e-9);
    }

    #[test]
    fn rounding_extremes() {
        let ones = CorrelationMatrix {
            sigma: DMatrix::from_element(8, 8, 1.0),
            alignment_residual: 0.0,
            iterations: 0,
            feasible: true,
        };
        for seed in 0..20 {
            let s = gaussian_sign_rounding(&ones, seed);
            assert!(s.iter().all(|&v| v == s[0]));
        }
        let id = DMatrix::identity(6, 6);
        let r = GaussianRounder::new(&id);
        assert_eq!(r.round(5), r.round(5));
    }

    #[test]
    fn overlap_examples() {
        let s: Vec<i8> = vec![1, -1, 1, 1];
        let o = overlap(&s, &s).unwrap();
        assert_eq!(o.raw, 1.0);
        assert!((o.centered - (1.0 - 0.25)).abs() < 1e-15);
        let bal: Vec<i8> = vec![1, -1, 1, -1];
        let neg: Vec<i8> = bal.iter().map(|v| -v).collect();
        let o = overlap(&bal, &neg).unwrap();
        assert_eq!((o.raw, o.centered), (1.0, -1.0));
        assert!(overlap(&s, &s[..3]).is_err());
    }

    #[test]
    fn pipeline_on_small_instance() {
        let m = ModelParams::with_gamma(0.9, 2.0, 6.0, 60, 1.0).unwrap();
        let inst = sample_instance(&m, 1);
        let c = WalkConfig::new(2, 1, WalkMethod::WalkMatrix, 0).unwrap();
        let r = weak_recovery_pipeline(&inst, &c, DELTA_PRIME_INIT, 1).unwrap();
        assert_eq!(r.sigma_hat.len(), 60);
        assert!(r.overlap_raw.unwrap() >= 0.0);
        let null = m.null();
        let inst = sample_instance(&null, 1);
        assert!(weak_recovery_pipeline(&inst, &c, 0.2, 1).is_err());
    }
}
