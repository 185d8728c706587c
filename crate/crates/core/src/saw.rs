//! Self-avoiding-walk estimates of `σᵢσⱼ`.
//!
//! A path from `i₁` to `i₂` takes `k` steps, `l` of them covariate wedges
//! through distinct coordinates and the rest graph edges, visiting distinct
//! nodes. Its polynomial is the product of centered edge weights
//! `Â = (2n/(a−b)) (A − (a+b)/2n)` and wedge weights `(n/μ) B_{xj} B_{yj}`,
//! each of which has conditional mean `σ_xσ_y`, so every path polynomial is
//! an unbiased estimate of `σ_{i₁}σ_{i₂}`. The estimator averages them.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{binomial, falling_factorial_f64, masks, mobius_weight, num_blocks, set_partitions};
use crate::error::{Error, Result};
use crate::model::{Instance, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WalkMethod {
    ExactSAW,
    WalkMatrix,
}

/// Path shape and evaluation method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub k: usize,
    pub l: usize,
    pub method: WalkMethod,
    /// Largest number of paths per pair enumerated by `ExactSAW`.
    pub budget: u64,
}

pub const DEFAULT_PATH_BUDGET: u64 = 50_000_000;

impl WalkConfig {
    pub fn new(k: usize, l: usize, method: WalkMethod, budget: u64) -> Result<Self> {
        if k == 0 || l > k {
            return Err(Error::params(format!("walk needs 0 <= l <= k and k >= 1, got k = {k}, l = {l}")));
        }
        Ok(WalkConfig { k, l, method, budget })
    }

    /// Default shape for `params`: `k = ⌈ln n⌉` for walk matrices and `3` for
    /// exact enumeration, with `l/k` matched to the channel ratio. A silent
    /// channel forces all steps onto the other one.
    pub fn default_for(params: &ModelParams, method: WalkMethod) -> Result<Self> {
        let k = match method {
            WalkMethod::WalkMatrix => ((params.n() as f64).ln().ceil() as usize).max(1),
            WalkMethod::ExactSAW => 3,
        };
        let l = matched_wedges(params, k)?;
        WalkConfig::new(k, l, method, DEFAULT_PATH_BUDGET)
    }
}

/// Wedge count for paths of length `k`: `round(k s / (λ² + s))` with
/// `s = μ²/γ`, forced to `k` when `λ = 0` and to `0` when `μ = 0`.
pub fn matched_wedges(params: &ModelParams, k: usize) -> Result<usize> {
    let (lam, mu) = (params.lambda(), params.mu());
    match (lam == 0.0, mu == 0.0) {
        (true, true) => Err(Error::NoSignal("neither channel carries signal")),
        (true, false) => Ok(k),
        (false, true) => Ok(0),
        (false, false) => {
            let s = mu * mu / params.gamma();
            Ok(((k as f64 * s / (lam * lam + s)).round() as usize).min(k))
        }
    }
}

/// Symmetric matrix of pair estimates with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct PairEstimateMatrix {
    pub p: DMatrix<f64>,
    pub config: WalkConfig,
}

fn edge_scale(params: &ModelParams) -> Result<f64> {
    let gap = params.a() - params.b();
    if gap == 0.0 {
        return Err(Error::NoSignal("graph channel carries no signal"));
    }
    Ok(2.0 * params.n() as f64 / gap)
}

fn wedge_scale(params: &ModelParams) -> Result<f64> {
    if params.mu() == 0.0 {
        return Err(Error::NoSignal("covariate channel carries no signal"));
    }
    Ok(params.n() as f64 / params.mu())
}

fn check_pair(inst: &Instance, i1: usize, i2: usize) -> Result<()> {
    if i1 == i2 || i1 >= inst.n() || i2 >= inst.n() {
        return Err(Error::params(format!("pair ({i1}, {i2}) must be two distinct nodes below n")));
    }
    Ok(())
}

/// `Â_{i₁i₂} = (2n/(a−b)) (A_{i₁i₂} − (a+b)/2n)`.
pub fn centered_edge_weight(inst: &Instance, i1: usize, i2: usize) -> Result<f64> {
    check_pair(inst, i1, i2)?;
    let m = &inst.params;
    let c = edge_scale(m)?;
    let a = if inst.graph.has_edge(i1, i2) { 1.0 } else { 0.0 };
    Ok(c * (a - (m.a() + m.b()) / (2.0 * m.n() as f64)))
}

/// `(n/μ) B_{i₁j} B_{i₂j}`.
pub fn wedge_weight(inst: &Instance, i1: usize, j: usize, i2: usize) -> Result<f64> {
    check_pair(inst, i1, i2)?;
    if j >= inst.p() {
        return Err(Error::params(format!("coordinate {j} out of range")));
    }
    Ok(wedge_scale(&inst.params)? * inst.b[(i1, j)] * inst.b[(i2, j)])
}

/// Leading-order path count `C(k,l) n^{k−1} p^l`.
pub fn path_count_estimate(n: usize, p: usize, config: &WalkConfig) -> f64 {
    binomial(config.k, config.l) * (n as f64).powi(config.k as i32 - 1) * (p as f64).powi(config.l as i32)
}

/// Exact number of paths per pair: `C(k,l) (n−2)_{k−1} (p)_l`.
pub fn exact_path_count(n: usize, p: usize, config: &WalkConfig) -> f64 {
    binomial(config.k, config.l) * falling_factorial_f64(n.saturating_sub(2), config.k - 1) * falling_factorial_f64(p, config.l)
}

/// Precomputed weights shared by all pairs.
struct Weights {
    n: usize,
    /// Centered edge weights (only when graph steps are used).
    ahat: Option<DMatrix<f64>>,
    /// `(n/μ) B Bᵀ` (only when wedge steps are used).
    gram: Option<DMatrix<f64>>,
    wscale: f64,
}

impl Weights {
    fn new(inst: &Instance, config: &WalkConfig) -> Result<Self> {
        let m = &inst.params;
        let n = m.n();
        let ahat = if config.l < config.k {
            let c = edge_scale(m)?;
            let base = -c * (m.a() + m.b()) / (2.0 * n as f64);
            let mut x = DMatrix::from_element(n, n, base);
            for (i, j) in inst.graph.edges() {
                x[(i, j)] += c;
                x[(j, i)] += c;
            }
            Some(x)
        } else {
            None
        };
        let (gram, wscale) = if config.l > 0 {
            let s = wedge_scale(m)?;
            let mut g = &inst.b * inst.b.transpose();
            g *= s;
            (Some(g), s)
        } else {
            (None, 0.0)
        };
        Ok(Weights { n, ahat, gram, wscale })
    }
}

/// `Σ_{distinct j₁..j_l} ∏_s (n/μ) B_{x_s j_s} B_{y_s j_s}` by inclusion–exclusion
/// over coincidence patterns of the coordinates.
fn distinct_wedge_sum(inst: &Instance, w: &Weights, pairs: &[(usize, usize)], parts: &[Vec<usize>]) -> f64 {
    let gram = w.gram.as_ref().unwrap();
    let mut total = 0.0;
    for part in parts {
        let nb = num_blocks(part);
        let mut prod = mobius_weight(part);
        for blk in 0..nb {
            let members: Vec<usize> = (0..pairs.len()).filter(|&s| part[s] == blk).collect();
            let v = if members.len() == 1 {
                let (x, y) = pairs[members[0]];
                gram[(x, y)]
            } else {
                let mut acc = 0.0;
                for j in 0..inst.p() {
                    let mut t = 1.0;
                    for &s in &members {
                        let (x, y) = pairs[s];
                        t *= w.wscale * inst.b[(x, j)] * inst.b[(y, j)];
                    }
                    acc += t;
                }
                acc
            };
            prod *= v;
            if prod == 0.0 {
                break;
            }
        }
        total += prod;
    }
    total
}

fn exact_pair(inst: &Instance, w: &Weights, i1: usize, i2: usize, config: &WalkConfig) -> f64 {
    let (k, l) = (config.k, config.l);
    let parts = set_partitions(l);
    let pats = masks(k, l);
    let n = w.n;
    let mut path = vec![i1];
    let mut used = vec![false; n];
    used[i1] = true;
    used[i2] = true;
    let mut sum = 0.0;

    #[allow(clippy::too_many_arguments)]
    fn rec(
        inst: &Instance,
        w: &Weights,
        k: usize,
        i2: usize,
        pats: &[u32],
        parts: &[Vec<usize>],
        path: &mut Vec<usize>,
        used: &mut [bool],
        sum: &mut f64,
    ) {
        if path.len() == k {
            path.push(i2);
            for &mask in pats {
                let mut prod = 1.0;
                let mut pairs = Vec::new();
                for t in 0..k {
                    let (x, y) = (path[t], path[t + 1]);
                    if mask & (1 << t) == 0 {
                        prod *= w.ahat.as_ref().unwrap()[(x, y)];
                    } else {
                        pairs.push((x, y));
                    }
                }
                if !pairs.is_empty() && prod != 0.0 {
                    prod *= distinct_wedge_sum(inst, w, &pairs, parts);
                }
                *sum += prod;
            }
            path.pop();
            return;
        }
        for v in 0..w.n {
            if used[v] {
                continue;
            }
            used[v] = true;
            path.push(v);
            rec(inst, w, k, i2, pats, parts, path, used, sum);
            path.pop();
            used[v] = false;
        }
    }
    rec(inst, w, k, i2, &pats, &parts, &mut path, &mut used, &mut sum);
    sum / exact_path_count(n, inst.p(), config)
}

fn check_exact(inst: &Instance, config: &WalkConfig) -> Result<()> {
    if config.method != WalkMethod::ExactSAW {
        return Err(Error::params("exact enumeration requires method ExactSAW"));
    }
    let count = exact_path_count(inst.n(), inst.p(), config);
    if count > config.budget as f64 {
        return Err(Error::BudgetExceeded {
            what: "exact path enumeration",
            required: count,
            budget: config.budget,
            count: format!("{count:.0}"),
        });
    }
    if count == 0.0 {
        return Err(Error::params("no paths of the requested shape exist"));
    }
    Ok(())
}

/// Average of path polynomials over all self-avoiding paths between a pair.
pub fn saw_pair_estimator_exact(inst: &Instance, i1: usize, i2: usize, config: &WalkConfig) -> Result<f64> {
    check_pair(inst, i1, i2)?;
    check_exact(inst, config)?;
    let w = Weights::new(inst, config)?;
    Ok(exact_pair(inst, &w, i1, i2, config))
}

/// Exact estimates for every pair.
pub fn exact_pair_matrix(inst: &Instance, config: &WalkConfig) -> Result<PairEstimateMatrix> {
    check_exact(inst, config)?;
    let w = Weights::new(inst, config)?;
    let n = inst.n();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let vals: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| exact_pair(inst, &w, i, j, config))
        .collect();
    let mut p = DMatrix::zeros(n, n);
    for (&(i, j), &v) in pairs.iter().zip(&vals) {
        p[(i, j)] = v;
        p[(j, i)] = v;
    }
    Ok(PairEstimateMatrix { p, config: *config })
}

/// Walk-matrix surrogate: the average over step orderings of products of
/// `M_A` (edge weights, zero diagonal) and `M_B = (n/μ)(BBᵀ − diag)/p`,
/// divided by `(n−2)^{k−1}`. Coincides with exact enumeration when `k = 1`
/// and, for `k = 2`, up to the terms with a repeated coordinate.
pub fn walk_matrix_estimator(inst: &Instance, config: &WalkConfig) -> Result<PairEstimateMatrix> {
    if config.method != WalkMethod::WalkMatrix {
        return Err(Error::params("walk-matrix estimator requires method WalkMatrix"));
    }
    let (k, l) = (config.k, config.l);
    let n = inst.n();
    let w = Weights::new(inst, config)?;
    let ma = w.ahat.map(|mut a| {
        a.fill_diagonal(0.0);
        a
    });
    let mb = w.gram.map(|mut g| {
        g.fill_diagonal(0.0);
        g / inst.p() as f64
    });
    // table[a][b]: sum over orderings with a graph steps and b wedge steps
    let na = k - l;
    let mut table: Vec<Vec<Option<DMatrix<f64>>>> = vec![vec![None; l + 1]; na + 1];
    table[0][0] = Some(DMatrix::identity(n, n));
    for a in 0..=na {
        for b in 0..=l {
            if a + b == 0 {
                continue;
            }
            let mut acc: Option<DMatrix<f64>> = None;
            if a > 0 {
                let prev = table[a - 1][b].as_ref().unwrap();
                let t = if a + b == 1 { ma.clone().unwrap() } else { prev * ma.as_ref().unwrap() };
                acc = Some(t);
            }
            if b > 0 {
                let prev = table[a][b - 1].as_ref().unwrap();
                let t = if a + b == 1 { mb.clone().unwrap() } else { prev * mb.as_ref().unwrap() };
                acc = Some(match acc {
                    Some(x) => x + t,
                    None => t,
                });
            }
            table[a][b] = acc;
        }
    }
    let mut p = table[na][l].take().unwrap();
    let norm = binomial(k, l) * ((n as f64) - 2.0).powi(k as i32 - 1);
    p /= norm;
    p.fill_diagonal(0.0);
    let p = (&p + p.transpose()) * 0.5;
    Ok(PairEstimateMatrix { p, config: *config })
}

/// Dispatches on `config.method`.
pub fn pair_estimator(inst: &Instance, config: &WalkConfig) -> Result<PairEstimateMatrix> {
    match config.method {
        WalkMethod::ExactSAW => exact_pair_matrix(inst, config),
        WalkMethod::WalkMatrix => walk_matrix_estimator(inst, config),
    }
}

/// Alignment of an estimate with the truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationDiagnostic {
    /// `⟨P, σσᵀ⟩`
    pub alignment: f64,
    /// `⟨P, σσᵀ⟩ / ‖P‖_F`
    pub delta_hat: f64,
}

pub fn correlation_diagnostic(p: &PairEstimateMatrix, sigma: &[i8]) -> Result<CorrelationDiagnostic> {
    let n = p.p.nrows();
    if sigma.len() != n {
        return Err(Error::LengthMismatch { left: n, right: sigma.len() });
    }
    let norm = p.p.norm();
    if norm == 0.0 {
        return Err(Error::Undefined("estimate matrix has zero Frobenius norm"));
    }
    let mut alignment = 0.0;
    for j in 0..n {
        for i in 0..n {
            alignment += p.p[(i, j)] * (sigma[i] * sigma[j]) as f64;
        }
    }
    Ok(CorrelationDiagnostic {
        alignment,
        delta_hat: alignment / norm,
    })
}
