//! Limiting log-likelihood-ratio series below the detection threshold.
//!
//! Under the null, `log L` converges to
//!
//! ```text
//! Σ_{k≥3} [ log(1 − λᵏ d^{k/2}) υ_k − (λ√d)ᵏ / k ]
//!   + Σ_{1≤l≤k} (m_{k,l} υ_{k,l} − m_{k,l}² / 2) / σ²_{k,l}
//! ```
//!
//! with independent `υ_k ~ Poisson(dᵏ/k)` and `υ_{k,l} ~ N(0, σ²_{k,l})`,
//! truncated at `k ≤ K`. By default `m_{k,l}` is the mean of the `(k, l)`
//! statistic under the alternative, which makes each Gaussian factor a
//! mean-one exponential tilt. [`GaussianShift::NullMean`] uses the centred
//! null mean instead, for which the Gaussian block is identically zero.

use rand_distr::{Distribution, Normal, Poisson};
use serde::Serialize;

use crate::cycles::{theoretical_moments, CycleEngine, CycleIndex, DEFAULT_BUDGET};
use crate::error::{Error, Result};
use crate::model::{Instance, ModelParams};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TermKind {
    PoissonTerm,
    GaussianTerm,
}

/// One summand of the truncated series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpansionTerm {
    pub index: CycleIndex,
    pub contribution: f64,
    pub kind: TermKind,
}

/// Mean parameter in the Gaussian terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum GaussianShift {
    #[default]
    AltMean,
    NullMean,
}

/// Truncation of the series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationConfig {
    /// Largest cycle length kept.
    pub max_k: usize,
    /// Set once `(λ√d)ᵏ < 1` has been verified for all `k ≤ max_k`.
    pub domain_checked: bool,
    /// Leave out the `(1, 1)` statistic, whose finite-n fluctuations do not
    /// match its limiting variance.
    pub skip_unit_wedge: bool,
    pub shift: GaussianShift,
}

pub const DEFAULT_MAX_K: usize = 6;

impl TruncationConfig {
    pub fn new(max_k: usize) -> Self {
        TruncationConfig { max_k, domain_checked: false, skip_unit_wedge: false, shift: GaussianShift::AltMean }
    }

    pub fn skipping_unit_wedge(mut self) -> Self {
        self.skip_unit_wedge = true;
        self
    }

    /// Verifies the domain of the logarithms for `params`.
    pub fn checked(mut self, params: &ModelParams) -> Result<Self> {
        check_domain(params, self.max_k)?;
        self.domain_checked = true;
        Ok(self)
    }

    fn indices(&self) -> impl Iterator<Item = CycleIndex> + '_ {
        CycleIndex::all_up_to(self.max_k)
            .into_iter()
            .filter(move |ix| !(self.skip_unit_wedge && ix.k == 1 && ix.l == 1))
    }
}

impl Default for TruncationConfig {
    fn default() -> Self {
        TruncationConfig::new(DEFAULT_MAX_K)
    }
}

/// `exp(−½ log(1 − (λ² + μ²/γ)) − λ²/2 − λ⁴/4)`, valid for `λ² + μ²/γ < 1`.
pub fn second_moment_bound(params: &ModelParams) -> Result<f64> {
    let s = params.snr();
    if s >= 1.0 {
        return Err(Error::domain(
            format!("bound applies only in the contiguity regime, got λ² + μ²/γ = {s}"),
            None,
        ));
    }
    let l2 = params.lambda() * params.lambda();
    Ok((-0.5 * (1.0 - s).ln() - l2 / 2.0 - l2 * l2 / 4.0).exp())
}

/// Requires `(λ√d)ᵏ < 1` for every `1 ≤ k ≤ max_k`.
pub fn check_domain(params: &ModelParams, max_k: usize) -> Result<()> {
    let x = params.lambda() * params.d().sqrt();
    for k in 1..=max_k {
        let v = x.powi(k as i32);
        if v >= 1.0 {
            return Err(Error::domain(
                format!("log(1 − (λ√d)^k) is undefined: (λ√d)^k = {v}"),
                Some(k),
            ));
        }
    }
    Ok(())
}

fn require_contiguity(params: &ModelParams) -> Result<()> {
    let s = params.snr();
    if s >= 1.0 {
        return Err(Error::domain(format!("series requires λ² + μ²/γ < 1, got {s}"), None));
    }
    Ok(())
}

fn poisson_term(params: &ModelParams, k: usize, count: f64) -> Result<f64> {
    let x = (params.lambda() * params.d().sqrt()).powi(k as i32);
    if x >= 1.0 {
        return Err(Error::domain(format!("log(1 − (λ√d)^k) is undefined: (λ√d)^k = {x}"), Some(k)));
    }
    Ok((-x).ln_1p() * count - x / k as f64)
}

fn gaussian_shift(params: &ModelParams, index: CycleIndex, shift: GaussianShift) -> f64 {
    match shift {
        GaussianShift::AltMean => theoretical_moments(params, index).alt_mean,
        GaussianShift::NullMean => theoretical_moments(params, index).null_mean,
    }
}

fn gaussian_term(params: &ModelParams, index: CycleIndex, shift: GaussianShift, value: f64) -> f64 {
    let m = theoretical_moments(params, index);
    let shift = gaussian_shift(params, index, shift);
    (shift * value - 0.5 * shift * shift) / m.null_variance
}

/// Terms of one draw from the limiting law under the null.
pub fn limiting_loglr_terms_h0(params: &ModelParams, trunc: &TruncationConfig, seed: u64) -> Result<Vec<ExpansionTerm>> {
    require_contiguity(params)?;
    check_domain(params, trunc.max_k)?;
    let mut rng = stream_rng(seed, Stream::Limit);
    let mut out = Vec::new();
    for index in trunc.indices() {
        let m = theoretical_moments(params, index);
        if index.l == 0 {
            let draw = if m.null_mean > 0.0 {
                Poisson::new(m.null_mean)
                    .map_err(|e| Error::params(format!("Poisson mean {}: {e}", m.null_mean)))?
                    .sample(&mut rng)
            } else {
                0.0
            };
            out.push(ExpansionTerm {
                index,
                contribution: poisson_term(params, index.k, draw)?,
                kind: TermKind::PoissonTerm,
            });
        } else {
            let sd = m.null_variance.sqrt();
            let draw = Normal::new(0.0, sd)
                .map_err(|e| Error::params(format!("normal sd {sd}: {e}")))?
                .sample(&mut rng);
            out.push(ExpansionTerm {
                index,
                contribution: gaussian_term(params, index, trunc.shift, draw),
                kind: TermKind::GaussianTerm,
            });
        }
    }
    Ok(out)
}

/// One draw of the limiting `log L` under the null.
pub fn limiting_loglr_sample_h0(params: &ModelParams, trunc: &TruncationConfig, seed: u64) -> Result<f64> {
    Ok(total(&limiting_loglr_terms_h0(params, trunc, seed)?))
}

/// The same functional with measured cycle statistics in place of the draws.
pub fn empirical_loglr_terms(
    inst: &Instance,
    params: &ModelParams,
    trunc: &TruncationConfig,
    budget: u64,
) -> Result<Vec<ExpansionTerm>> {
    check_domain(params, trunc.max_k)?;
    let mut engine = CycleEngine::new(inst);
    let mut out = Vec::new();
    for index in trunc.indices() {
        if index.l == 0 {
            let count = engine.raw(index, budget)?;
            out.push(ExpansionTerm {
                index,
                contribution: poisson_term(params, index.k, count)?,
                kind: TermKind::PoissonTerm,
            });
        } else {
            // with no mean shift the term vanishes whatever the statistic
            if gaussian_shift(params, index, trunc.shift) == 0.0 {
                out.push(ExpansionTerm { index, contribution: 0.0, kind: TermKind::GaussianTerm });
                continue;
            }
            let r = engine.report(params, index, budget)?;
            out.push(ExpansionTerm {
                index,
                contribution: gaussian_term(params, index, trunc.shift, r.centered),
                kind: TermKind::GaussianTerm,
            });
        }
    }
    Ok(out)
}

pub fn empirical_loglr_from_instance(inst: &Instance, params: &ModelParams, trunc: &TruncationConfig) -> Result<f64> {
    Ok(total(&empirical_loglr_terms(inst, params, trunc, DEFAULT_BUDGET)?))
}

/// Sum of contributions.
pub fn total(terms: &[ExpansionTerm]) -> f64 {
    terms.iter().map(|t| t.contribution).sum()
}

/// Sum of `|contribution|` over the terms with the largest `k`, a rough
/// indicator of the truncation error.
pub fn last_term_magnitude(terms: &[ExpansionTerm]) -> f64 {
    let kmax = terms.iter().map(|t| t.index.k).max().unwrap_or(0);
    terms.iter().filter(|t| t.index.k == kmax).map(|t| t.contribution.abs()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sample_instance;

    #[test]
    fn bound_examples() {
        // λ² = μ²/γ = 0.25
        let m = ModelParams::with_gamma(0.5, 0.5, 3.0, 100, 1.0).unwrap();
        let want = (-0.5 * 0.5f64.ln() - 0.125 - 0.015625).exp();
        assert!((second_moment_bound(&m).unwrap() - want).abs() < 1e-15);
        assert!((want.ln() - 0.2059486).abs() < 1e-7);
        assert!((want - 1.22869).abs() < 1e-5);
        let m = ModelParams::with_gamma(0.0, 0.0, 3.0, 100, 1.0).unwrap();
        assert_eq!(second_moment_bound(&m).unwrap(), 1.0);
        let m = ModelParams::with_gamma(0.5, 1.0, 3.0, 100, 1.0).unwrap();
        assert!(matches!(second_moment_bound(&m), Err(Error::Domain { .. })));
    }

    #[test]
    fn bound_diverges_towards_threshold() {
        let mut prev = 0.0;
        for i in 1..40 {
            let s = 1.0 - 0.5f64.powi(i);
            let m = ModelParams::with_gamma(0.3, (s - 0.09f64).sqrt(), 3.0, 100, 1.0).unwrap();
            let b = second_moment_bound(&m).unwrap();
            assert!(b > prev);
            prev = b;
        }
        assert!(prev > 1e4);
    }

    #[test]
    fn bound_depends_on_mu_only_through_ratio() {
        let a = ModelParams::with_gamma(0.4, 0.6, 3.0, 100, 1.0).unwrap();
        let b = ModelParams::with_gamma(0.4, 0.6 * 2f64.sqrt(), 3.0, 100, 2.0).unwrap();
        assert!((second_moment_bound(&a).unwrap() - second_moment_bound(&b).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn null_parameters_give_zero() {
        let m = ModelParams::with_gamma(0.0, 0.0, 2.0, 60, 2.0).unwrap();
        let t = TruncationConfig::new(4);
        for seed in 0..5 {
            assert_eq!(limiting_loglr_sample_h0(&m, &t, seed).unwrap(), 0.0);
        }
        let inst = sample_instance(&m, 1);
        assert_eq!(empirical_loglr_from_instance(&inst, &m, &t).unwrap(), 0.0);
    }

    #[test]
    fn domain_violation_names_k() {
        // λ√d = 0.9 · √1.5 > 1
        let m = ModelParams::with_gamma(0.9, 0.0, 1.5, 100, 1.0).unwrap();
        match limiting_loglr_sample_h0(&m, &TruncationConfig::new(4), 0) {
            Err(Error::Domain { k: Some(1), .. }) => {}
            other => panic!("expected domain error at k = 1, got {other:?}"),
        }
        assert!(matches!(TruncationConfig::new(4).checked(&m), Err(Error::Domain { k: Some(1), .. })));
        let ok = ModelParams::with_gamma(0.3, 0.2, 2.0, 100, 1.0).unwrap();
        assert!(TruncationConfig::new(6).checked(&ok).unwrap().domain_checked);
    }

    #[test]
    fn terms_sum_to_total_and_skip_flag() {
        let m = ModelParams::with_gamma(0.3, 0.5, 2.0, 100, 1.0).unwrap();
        let t = TruncationConfig::new(4);
        let terms = limiting_loglr_terms_h0(&m, &t, 9).unwrap();
        assert!((total(&terms) - limiting_loglr_sample_h0(&m, &t, 9).unwrap()).abs() < 1e-12);
        assert!(terms.iter().all(|x| (x.kind == TermKind::PoissonTerm) == (x.index.l == 0)));
        let skip = limiting_loglr_terms_h0(&m, &t.skipping_unit_wedge(), 9).unwrap();
        assert_eq!(skip.len() + 1, terms.len());
        assert!(last_term_magnitude(&terms) > 0.0);
    }

    #[test]
    fn null_mean_shift_drops_gaussian_block() {
        let m = ModelParams::with_gamma(0.3, 0.5, 2.0, 100, 1.0).unwrap();
        let t = TruncationConfig { shift: GaussianShift::NullMean, ..TruncationConfig::new(4) };
        let terms = limiting_loglr_terms_h0(&m, &t, 3).unwrap();
        assert!(terms.iter().filter(|x| x.kind == TermKind::GaussianTerm).all(|x| x.contribution == 0.0));
        let x = 0.3 * 2f64.sqrt();
        let poisson_only: f64 = terms.iter().filter(|x| x.kind == TermKind::PoissonTerm).map(|x| x.contribution).sum();
        assert_eq!(total(&terms), poisson_only);
        assert!(terms.iter().any(|t| t.index.k == 3 && t.contribution <= -x.powi(3) / 3.0 + 1e-15));
    }
}
