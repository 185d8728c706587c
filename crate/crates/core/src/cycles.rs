//! Factor-graph cycle statistics, their limiting moments and the cycle
//! detection test.
//!
//! A cycle of type `(k, l)` visits `k` distinct nodes and takes `k` steps,
//! `l` of which are covariate wedges `i → j → i'` through distinct
//! coordinates `j`; the remaining steps are graph edges. Its weight is the
//! product of the adjacency and covariate entries it crosses, and
//! `Y_{n,k,l}` is the sum of weights over all such cycles divided by `n^l`.
//!
//! For `l = 0` the cycles are counted directly on the sparse graph. For
//! `l ≥ 1` the sum over ordered distinct tuples is rewritten by Möbius
//! inversion over set partitions as a signed sum of unconstrained sums, each
//! of which is a small matrix network contracted exactly.

use std::sync::Arc;

use num_bigint::BigUint;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::combinatorics::{
    binomial, binomial_exact, falling_factorial, mask_orbits, mobius_weight, num_blocks,
    set_partitions,
};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::{Instance, ModelParams};
use crate::network::{Cache, Csr, Mat, Network};

/// Default work budget (estimated multiply-adds) for exact evaluation.
pub const DEFAULT_BUDGET: u64 = 200_000_000_000;

/// A cycle type `(k, l)`; either `l = 0, k ≥ 3` or `1 ≤ l ≤ k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct CycleIndex {
    pub k: usize,
    pub l: usize,
}

impl CycleIndex {
    pub fn new(k: usize, l: usize) -> Result<Self> {
        let ok = (l == 0 && k >= 3) || (l >= 1 && l <= k);
        if !ok {
            return Err(Error::params(format!(
                "cycle index (k = {k}, l = {l}) must have l = 0 and k >= 3, or 1 <= l <= k"
            )));
        }
        Ok(CycleIndex { k, l })
    }

    /// Every valid index with `k ≤ max_k`, ordered by `(k, l)`.
    pub fn all_up_to(max_k: usize) -> Vec<CycleIndex> {
        let mut out = Vec::new();
        for k in 1..=max_k {
            for l in 0..=k {
                if let Ok(ix) = CycleIndex::new(k, l) {
                    out.push(ix);
                }
            }
        }
        out
    }

    /// Number of symmetries collapsed when counting ordered tuples.
    fn symmetry(&self) -> f64 {
        if self.k == 1 {
            1.0
        } else {
            2.0 * self.k as f64
        }
    }
}

impl std::fmt::Display for CycleIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.k, self.l)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Family {
    Poisson,
    Gaussian,
}

/// Limiting moments of `Y_{n,k,l}` under the null and the alternative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CycleMoments {
    pub null_mean: f64,
    pub null_variance: f64,
    pub alt_mean: f64,
    pub alt_variance: f64,
    pub family: Family,
    /// Subtracted from the raw statistic before normalizing.
    pub centering: f64,
}

/// A measured cycle statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CycleStatReport {
    pub index: CycleIndex,
    pub raw: f64,
    pub centered: f64,
    pub normalized: f64,
}

/// Number of distinct `(k, l)` cycles on `n` nodes and `p` coordinates:
/// `C(k,l) (n)_k (p)_l / 2k`, or `n p` for `(1, 1)`.
pub fn count_cycles(n: usize, p: usize, index: CycleIndex) -> BigUint {
    let CycleIndex { k, l } = index;
    let ordered = binomial_exact(k, l) * falling_factorial(n, k) * falling_factorial(p, l);
    if k == 1 {
        ordered
    } else {
        ordered / BigUint::from(2 * k)
    }
}

/// Limiting moments. Poisson for `l = 0`, Gaussian otherwise.
pub fn theoretical_moments(params: &ModelParams, index: CycleIndex) -> CycleMoments {
    let CycleIndex { k, l } = index;
    let d = params.d();
    let shift = params.lambda() * d.sqrt();
    let kf = k as f64;
    if l == 0 {
        let null_mean = d.powi(k as i32) / kf;
        let alt_mean = (d.powi(k as i32) + shift.powi(k as i32)) / kf;
        return CycleMoments {
            null_mean,
            null_variance: null_mean,
            alt_mean,
            alt_variance: alt_mean,
            family: Family::Poisson,
            centering: 0.0,
        };
    }
    let gamma = params.gamma();
    let c = binomial(k, l) / (2.0 * kf);
    let var = c * d.powi((k - l) as i32) / gamma.powi(l as i32);
    let alt_mean = c * shift.powi((k - l) as i32) * params.mu().powi(l as i32) / gamma.powi(l as i32);
    CycleMoments {
        null_mean: 0.0,
        null_variance: var,
        alt_mean,
        alt_variance: var,
        family: Family::Gaussian,
        centering: if k == 1 && l == 1 { params.p() as f64 } else { 0.0 },
    }
}

/// Number of `k`-cycles in a simple graph.
///
/// Each cycle is found once from its smallest vertex `s`, walking only
/// through vertices larger than `s`, with the orientation fixed by
/// requiring the second vertex to be smaller than the last.
pub fn count_graph_cycles(g: &Graph, k: usize) -> u64 {
    assert!(k >= 3);
    (0..g.n())
        .into_par_iter()
        .map(|s| {
            let mut path = Vec::with_capacity(k);
            let mut on_path = vec![false; g.n()];
            path.push(s);
            on_path[s] = true;
            cycles_from(g, k, s, &mut path, &mut on_path)
        })
        .sum()
}

fn cycles_from(g: &Graph, k: usize, s: usize, path: &mut Vec<usize>, on_path: &mut [bool]) -> u64 {
    let last = *path.last().unwrap();
    if path.len() == k {
        return u64::from(path[1] < last && g.has_edge(last, s));
    }
    let mut c = 0;
    for &v in g.neighbors(last) {
        let v = v as usize;
        if v <= s || on_path[v] {
            continue;
        }
        path.push(v);
        on_path[v] = true;
        c += cycles_from(g, k, s, path, on_path);
        on_path[v] = false;
        path.pop();
    }
    c
}

/// Exact evaluator of cycle sums on one instance. Products of the
/// covariate matrix with itself are memoized across indices.
pub struct CycleEngine<'a> {
    graph: &'a Graph,
    n: usize,
    p: usize,
    a: Arc<Mat>,
    b: Arc<Mat>,
    bt: Arc<Mat>,
    cache: Cache,
}

/// One term of the Möbius expansion.
struct Term {
    weight: f64,
    net: Network,
}

impl<'a> CycleEngine<'a> {
    pub fn new(inst: &'a Instance) -> Self {
        Self::from_parts(&inst.graph, &inst.b)
    }

    pub fn from_parts(graph: &'a Graph, b: &nalgebra::DMatrix<f64>) -> Self {
        let n = graph.n();
        let csr = Csr {
            nrows: n,
            ncols: n,
            indptr: graph.offsets().to_vec(),
            indices: graph.indices().to_vec(),
            values: vec![1.0; graph.indices().len()],
        };
        CycleEngine {
            graph,
            n,
            p: b.ncols(),
            a: Arc::new(Mat::Sparse(csr)),
            b: Arc::new(Mat::Dense(b.clone())),
            bt: Arc::new(Mat::Dense(b.transpose())),
            cache: Cache::default(),
        }
    }

    /// Networks whose signed sum is the ordered-tuple sum for `index`.
    fn terms(&self, index: CycleIndex) -> Vec<Term> {
        let CycleIndex { k, l } = index;
        let vparts = set_partitions(k);
        let jparts = set_partitions(l);
        let mut out = Vec::new();
        for (mask, orbit) in mask_orbits(k, l) {
            for pv in &vparts {
                // a graph step inside one block would need a loop in A
                let loops = (0..k).any(|t| mask & (1 << t) == 0 && pv[t] == pv[(t + 1) % k]);
                if loops {
                    continue;
                }
                let nv = num_blocks(pv);
                for pj in &jparts {
                    let nj = num_blocks(pj);
                    let mut dims = vec![self.n; nv];
                    dims.extend(std::iter::repeat_n(self.p, nj));
                    let mut net = Network::new(dims);
                    let mut s = 0;
                    for t in 0..k {
                        let (x, y) = (pv[t], pv[(t + 1) % k]);
                        if mask & (1 << t) == 0 {
                            net.add_edge(x, y, self.a.clone(), Some(self.a.clone()), true);
                        } else {
                            let j = nv + pj[s];
                            s += 1;
                            net.add_edge(x, j, self.b.clone(), Some(self.bt.clone()), true);
                            net.add_edge(y, j, self.b.clone(), Some(self.bt.clone()), true);
                        }
                    }
                    out.push(Term {
                        weight: orbit as f64 * mobius_weight(pv) * mobius_weight(pj),
                        net,
                    });
                }
            }
        }
        out
    }

    /// Estimated work for the exact evaluation of an `l ≥ 1` index.
    pub fn estimate_work(&self, index: CycleIndex) -> f64 {
        if index.l == 0 {
            return 0.0;
        }
        self.terms(index).iter().map(|t| t.net.estimate_work()).sum()
    }

    /// Sum over ordered tuples (not divided by symmetries or `n^l`).
    fn ordered_sum(&mut self, index: CycleIndex, budget: u64) -> Result<f64> {
        let terms = self.terms(index);
        let work: f64 = terms.iter().map(|t| t.net.estimate_work()).sum();
        if work > budget as f64 {
            return Err(Error::BudgetExceeded {
                what: "exact cycle statistic",
                required: work,
                budget,
                count: count_cycles(self.n, self.p, index).to_string(),
            });
        }
        // Neumaier summation keeps the result independent of term magnitudes.
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for t in terms {
            let v = t.weight * t.net.contract(&mut self.cache);
            let s = sum + v;
            comp += if sum.abs() >= v.abs() { (sum - s) + v } else { (v - s) + sum };
            sum = s;
        }
        Ok(sum + comp)
    }

    /// `Y_{n,k,l}` before centering.
    pub fn raw(&mut self, index: CycleIndex, budget: u64) -> Result<f64> {
        if index.l == 0 {
            return Ok(count_graph_cycles(self.graph, index.k) as f64);
        }
        // no admissible index tuples; skip the cancelling inclusion-exclusion
        if self.n < index.k || self.p < index.l {
            return Ok(0.0);
        }
        let s = self.ordered_sum(index, budget)?;
        Ok(s / index.symmetry() / (self.n as f64).powi(index.l as i32))
    }

    /// Full report for one index.
    pub fn report(&mut self, params: &ModelParams, index: CycleIndex, budget: u64) -> Result<CycleStatReport> {
        let raw = self.raw(index, budget)?;
        let m = theoretical_moments(params, index);
        let centered = raw - m.centering;
        Ok(CycleStatReport {
            index,
            raw,
            centered,
            normalized: centered / m.null_variance.sqrt(),
        })
    }
}

/// Measures `Y_{n,k,l}` on an instance. `budget` caps the estimated work of
/// the exact evaluation for `l ≥ 1`; graph-only cycles are always counted.
pub fn cycle_statistic(inst: &Instance, index: CycleIndex, budget: u64) -> Result<CycleStatReport> {
    CycleEngine::new(inst).report(&inst.params, index, budget)
}

/// Outcome of the Gaussian cycle test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectionResult {
    pub statistic: f64,
    pub l_used: usize,
    pub noncentrality: f64,
    pub threshold: f64,
    pub reject: bool,
}

/// Number of wedge steps matched to the channel ratio of `alt`.
pub fn matched_l(alt: &ModelParams, k: usize) -> usize {
    let s = alt.mu() * alt.mu() / alt.gamma();
    let lam2 = alt.lambda() * alt.lambda();
    let l = (k as f64 * s / (lam2 + s)).round() as usize;
    l.clamp(1, k)
}

/// `μ̃ = sqrt(C(k,l) λ^{2(k-l)} (μ²/γ)^l / 2k)`.
pub fn noncentrality(alt: &ModelParams, k: usize, l: usize) -> f64 {
    let s = alt.mu() * alt.mu() / alt.gamma();
    let lam2 = alt.lambda() * alt.lambda();
    (binomial(k, l) * lam2.powi((k - l) as i32) * s.powi(l as i32) / (2.0 * k as f64)).sqrt()
}

/// One-sided upper quantile `z_{1-level}` of the standard normal.
pub fn normal_upper_quantile(level: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - level)
}

/// Gaussian cycle test of the null against `alt` using cycles of length `k`.
///
/// The wedge count is matched to the channel ratio of `alt` and the
/// normalized statistic is compared with the upper `level` quantile of
/// `N(0, 1)`. Needs covariate signal; see [`poisson_cycle_test`] otherwise.
pub fn detection_test(inst: &Instance, alt: &ModelParams, k: usize, level: f64) -> Result<DetectionResult> {
    detection_test_with_budget(inst, alt, k, level, DEFAULT_BUDGET)
}

pub fn detection_test_with_budget(
    inst: &Instance,
    alt: &ModelParams,
    k: usize,
    level: f64,
    budget: u64,
) -> Result<DetectionResult> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::params(format!("level must lie in (0, 1), got {level}")));
    }
    if k == 0 {
        return Err(Error::params("k must be positive"));
    }
    if alt.mu() == 0.0 {
        return Err(Error::Unsupported(
            "covariate signal is zero; use the graph-cycle count test (poisson_cycle_test)".into(),
        ));
    }
    let l = matched_l(alt, k);
    let index = CycleIndex::new(k, l)?;
    let report = CycleEngine::new(inst).report(&inst.params, index, budget)?;
    let threshold = normal_upper_quantile(level);
    Ok(DetectionResult {
        statistic: report.normalized,
        l_used: l,
        noncentrality: noncentrality(alt, k, l),
        threshold,
        reject: report.normalized > threshold,
    })
}

/// Outcome of the graph-only cycle count test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoissonTestResult {
    pub count: f64,
    pub midpoint: f64,
    pub reject: bool,
}

/// Compares the `k`-cycle count with the midpoint of its null and
/// alternative Poisson means.
pub fn poisson_cycle_test(inst: &Instance, alt: &ModelParams, k: usize) -> Result<PoissonTestResult> {
    let index = CycleIndex::new(k, 0)?;
    let m = theoretical_moments(alt, index);
    let count = count_graph_cycles(&inst.graph, k) as f64;
    let midpoint = 0.5 * (m.null_mean + m.alt_mean);
    Ok(PoissonTestResult {
        count,
        midpoint,
        reject: count > midpoint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sample_instance;
    use nalgebra::DMatrix;

    fn ix(k: usize, l: usize) -> CycleIndex {
        CycleIndex::new(k, l).unwrap()
    }

    #[test]
    fn index_set_membership() {
        assert!(CycleIndex::new(2, 0).is_err());
        assert!(CycleIndex::new(2, 3).is_err());
        assert!(CycleIndex::new(3, 0).is_ok());
        assert!(CycleIndex::new(1, 1).is_ok());
        assert_eq!(CycleIndex::all_up_to(3).len(), 1 + 2 + 4);
    }

    #[test]
    fn counts() {
        assert_eq!(count_cycles(5, 3, ix(2, 1)), BigUint::from(30u32));
        assert_eq!(count_cycles(4, 9, ix(3, 0)), BigUint::from(4u32));
        assert_eq!(count_cycles(10, 6, ix(3, 2)), BigUint::from(10800u32));
        assert_eq!(count_cycles(7, 3, ix(1, 1)), BigUint::from(21u32));
    }

    #[test]
    fn moments_examples() {
        let m = ModelParams::with_p(0.0, 0.0, 2.0, 100, 100).unwrap();
        assert!((theoretical_moments(&m, ix(3, 0)).null_mean - 8.0 / 3.0).abs() < 1e-15);
        let m = ModelParams::with_gamma(0.0, 0.0, 4.0, 100, 2.0).unwrap();
        assert!((theoretical_moments(&m, ix(2, 1)).null_variance - 1.0).abs() < 1e-15);
        let m = ModelParams::with_gamma(0.5, 1.0, 4.0, 100, 1.0).unwrap();
        assert!((theoretical_moments(&m, ix(2, 1)).alt_mean - 0.5).abs() < 1e-15);
        let m = ModelParams::with_gamma(0.5, 0.0, 2.0, 100, 1.0).unwrap();
        let t = theoretical_moments(&m, ix(3, 0));
        let want = (8.0 + (0.5 * 2f64.sqrt()).powi(3)) / 3.0;
        assert!((t.alt_mean - want).abs() < 1e-15);
        assert_eq!(t.family, Family::Poisson);
        assert_eq!(t.alt_variance, t.alt_mean);
        let m = ModelParams::with_p(0.0, 0.0, 2.0, 100, 40).unwrap();
        assert_eq!(theoretical_moments(&m, ix(1, 1)).centering, 40.0);
        assert_eq!(theoretical_moments(&m, ix(2, 1)).centering, 0.0);
    }

    #[test]
    fn single_triangle() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        assert_eq!(count_graph_cycles(&g, 3), 1);
        assert_eq!(count_graph_cycles(&g, 4), 0);
        let k4 = Graph::from_edges(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap();
        assert_eq!(count_graph_cycles(&k4, 3), 4);
        assert_eq!(count_graph_cycles(&k4, 4), 3);
    }

    /// On the complete graph with unit covariates every cycle has weight 1,
    /// so the ordered sum equals the number of visited cycles times 2k.
    #[test]
    fn enumeration_count_matches_formula() {
        for (n, p) in [(5usize, 3usize), (6, 4), (4, 4)] {
            let edges: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
            let g = Graph::from_edges(n, &edges).unwrap();
            let b = DMatrix::from_element(n, p, 1.0);
            let mut eng = CycleEngine::from_parts(&g, &b);
            for index in CycleIndex::all_up_to(4) {
                let want = count_cycles(n, p, index).to_string().parse::<f64>().unwrap();
                let got = if index.l == 0 {
                    count_graph_cycles(&g, index.k) as f64
                } else {
                    eng.ordered_sum(index, u64::MAX).unwrap() / index.symmetry()
                };
                assert!((got - want).abs() < 1e-9 * want.max(1.0), "{index}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn zero_covariates_give_zero() {
        let m = ModelParams::with_p(0.5, 1.0, 3.0, 9, 4).unwrap();
        let mut inst = sample_instance(&m, 5);
        inst.b.fill(0.0);
        for index in CycleIndex::all_up_to(4).into_iter().filter(|i| i.l > 0) {
            assert_eq!(cycle_statistic(&inst, index, u64::MAX).unwrap().raw, 0.0);
        }
    }

    #[test]
    fn budget_refusal_names_count() {
        let m = ModelParams::with_p(0.0, 0.0, 3.0, 200, 100).unwrap();
        let inst = sample_instance(&m, 1);
        match cycle_statistic(&inst, ix(3, 2), 10) {
            Err(Error::BudgetExceeded { count, .. }) => {
                assert_eq!(count, count_cycles(200, 100, ix(3, 2)).to_string())
            }
            other => panic!("expected budget refusal, got {other:?}"),
        }
        // graph-only cycles ignore the budget
        assert!(cycle_statistic(&inst, ix(3, 0), 0).is_ok());
    }

    #[test]
    fn report_identity() {
        let m = ModelParams::with_p(0.3, 1.0, 3.0, 30, 10).unwrap();
        let inst = sample_instance(&m, 2);
        for index in CycleIndex::all_up_to(3) {
            let r = cycle_statistic(&inst, index, u64::MAX).unwrap();
            let v = theoretical_moments(&m, index);
            let back = r.normalized * v.null_variance.sqrt() + v.centering;
            assert!((back - r.raw).abs() <= 1e-12 * r.raw.abs().max(1.0));
        }
    }

    #[test]
    fn matched_wedge_count() {
        // λ = 0.8, μ²/γ = 0.6, k = 10
        let alt = ModelParams::with_p(0.8, 0.6f64.sqrt(), 5.0, 100, 100).unwrap();
        assert_eq!(matched_l(&alt, 10), 5);
        let alt = ModelParams::with_p(0.8, 0.01, 5.0, 100, 100).unwrap();
        assert_eq!(matched_l(&alt, 4), 1);
    }

    #[test]
    fn detection_requires_covariate_signal() {
        let m = ModelParams::with_p(0.5, 0.0, 3.0, 50, 50).unwrap();
        let inst = sample_instance(&m, 1);
        assert!(matches!(detection_test(&inst, &m, 2, 0.05), Err(Error::Unsupported(_))));
        let t = poisson_cycle_test(&inst, &m, 3).unwrap();
        assert_eq!(t.reject, t.count > t.midpoint);
    }

    #[test]
    fn alt_mean_monotone() {
        let mut prev = f64::NEG_INFINITY;
        for i in 0..10 {
            let m = ModelParams::with_p(0.1 * i as f64, 1.0, 5.0, 100, 100).unwrap();
            let v = theoretical_moments(&m, ix(3, 1)).alt_mean;
            assert!(v >= prev);
            prev = v;
        }
    }
}
