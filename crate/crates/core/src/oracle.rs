//! Brute-force reference computations at tiny scale.
//!
//! * [`naive_cycle_statistic`] enumerates every ordered tuple directly.
//! * [`exact_likelihood_ratio`] sums the likelihood ratio over all `2^n`
//!   label vectors with the latent direction integrated out in closed form:
//!   given `σ`, each covariate column is `N(0, I + (μ/n) σσᵀ)`, so its density
//!   ratio against `N(0, I)` is `(1+μ)^{-1/2} exp(μ (σᵀb)² / (2n(1+μ)))`.
//! * [`bayes_pairwise_posterior`] returns `E[σᵢσⱼ | A, B]` from the same sum.

use rayon::prelude::*;

use crate::combinatorics::{for_each_distinct_tuple, masks};
use crate::cycles::CycleIndex;
use crate::error::{Error, Result};
use crate::model::{Instance, ModelParams};

/// Size guards for the exhaustive computations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleLimits {
    /// Largest `n` for label enumeration.
    pub max_n: usize,
    /// Largest `n`, `p` and `k` for naive cycle enumeration.
    pub max_cycle_n: usize,
    pub max_cycle_p: usize,
    pub max_cycle_k: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            max_n: 14,
            max_cycle_n: 10,
            max_cycle_p: 8,
            max_cycle_k: 4,
        }
    }
}

/// `Y_{n,k,l}` by direct enumeration of ordered vertex tuples, wedge
/// positions and ordered coordinate tuples.
pub fn naive_cycle_statistic(inst: &Instance, index: CycleIndex) -> Result<f64> {
    naive_cycle_statistic_with(inst, index, OracleLimits::default())
}

pub fn naive_cycle_statistic_with(inst: &Instance, index: CycleIndex, lim: OracleLimits) -> Result<f64> {
    naive_cycle_sum(inst, index, lim).map(|s| s.value)
}

/// Enumerated statistic with the size of the sum behind it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NaiveSum {
    pub value: f64,
    /// Number of nonzero ordered summands.
    pub terms: u64,
}

pub fn naive_cycle_sum(inst: &Instance, index: CycleIndex, lim: OracleLimits) -> Result<NaiveSum> {
    let (n, p) = (inst.n(), inst.p());
    let CycleIndex { k, l } = index;
    for (what, limit, actual) in [
        ("naive cycle enumeration n", lim.max_cycle_n, n),
        ("naive cycle enumeration p", lim.max_cycle_p, p),
        ("naive cycle enumeration k", lim.max_cycle_k, k),
    ] {
        if actual > limit {
            return Err(Error::LimitExceeded { what, limit, actual });
        }
    }
    let g = &inst.graph;
    let b = &inst.b;
    let patterns = masks(k, l);
    let mut total = 0.0;
    let mut terms = 0u64;
    for_each_distinct_tuple(n, k, |v| {
        for &mask in &patterns {
            let graph_ok = (0..k)
                .filter(|t| mask & (1 << t) == 0)
                .all(|t| g.has_edge(v[t], v[(t + 1) % k]));
            if !graph_ok {
                continue;
            }
            let wedges: Vec<(usize, usize)> = (0..k)
                .filter(|t| mask & (1 << t) != 0)
                .map(|t| (v[t], v[(t + 1) % k]))
                .collect();
            for_each_distinct_tuple(p, l, |js| {
                let mut w = 1.0;
                for (s, &(x, y)) in wedges.iter().enumerate() {
                    w *= b[(x, js[s])] * b[(y, js[s])];
                }
                total += w;
                terms += (w != 0.0) as u64;
            });
        }
    });
    let sym = if k == 1 { 1.0 } else { 2.0 * k as f64 };
    Ok(NaiveSum { value: total / sym / (n as f64).powi(l as i32), terms })
}

/// Per-pair log factors of the graph likelihood ratio, indexed by
/// `[same community][edge present]`. `None` marks a zero factor.
fn graph_log_factors(alt: &ModelParams) -> [[Option<f64>; 2]; 2] {
    let n = alt.n() as f64;
    let (a, b) = (alt.a(), alt.b());
    let mid = 0.5 * (a + b);
    let lg = |num: f64, den: f64| if num > 0.0 { Some((num / den).ln()) } else { None };
    [
        [lg(n - b, n - mid), lg(2.0 * b, a + b)],
        [lg(n - a, n - mid), lg(2.0 * a, a + b)],
    ]
}

/// Incremental state of the log-weight of one label vector.
struct LabelState {
    sigma: Vec<i8>,
    /// counts[same][edge]
    counts: [[i64; 2]; 2],
    /// σᵀ B_{·j}
    proj: Vec<f64>,
}

struct LrModel<'a> {
    inst: &'a Instance,
    adj: Vec<Vec<bool>>,
    factors: [[Option<f64>; 2]; 2],
    col_coef: f64,
    col_const: f64,
}

impl<'a> LrModel<'a> {
    fn new(inst: &'a Instance, alt: &ModelParams, lim: OracleLimits) -> Result<Self> {
        let n = inst.n();
        if n > lim.max_n {
            return Err(Error::LimitExceeded {
                what: "exact likelihood enumeration n",
                limit: lim.max_n,
                actual: n,
            });
        }
        if alt.n() != n || alt.p() != inst.p() {
            return Err(Error::Dimension {
                what: "alternative parameters",
                expected: n * inst.p(),
                found: alt.n() * alt.p(),
            });
        }
        let mu = alt.mu();
        let mut adj = vec![vec![false; n]; n];
        for (i, j) in inst.graph.edges() {
            adj[i][j] = true;
            adj[j][i] = true;
        }
        Ok(LrModel {
            inst,
            adj,
            factors: graph_log_factors(alt),
            col_coef: mu / (2.0 * n as f64 * (1.0 + mu)),
            col_const: -0.5 * inst.p() as f64 * mu.ln_1p(),
        })
    }

    fn state(&self, sigma: Vec<i8>) -> LabelState {
        let n = sigma.len();
        let mut counts = [[0i64; 2]; 2];
        for i in 0..n {
            for j in i + 1..n {
                counts[usize::from(sigma[i] == sigma[j])][usize::from(self.adj[i][j])] += 1;
            }
        }
        let b = &self.inst.b;
        let proj = (0..b.ncols())
            .map(|j| (0..n).map(|i| sigma[i] as f64 * b[(i, j)]).sum())
            .collect();
        LabelState { sigma, counts, proj }
    }

    fn flip(&self, st: &mut LabelState, i: usize) {
        let n = st.sigma.len();
        for j in 0..n {
            if j == i {
                continue;
            }
            let e = usize::from(self.adj[i][j]);
            let same = usize::from(st.sigma[i] == st.sigma[j]);
            st.counts[same][e] -= 1;
            st.counts[1 - same][e] += 1;
        }
        st.sigma[i] = -st.sigma[i];
        let s = 2.0 * st.sigma[i] as f64;
        let b = &self.inst.b;
        for (j, pj) in st.proj.iter_mut().enumerate() {
            *pj += s * b[(i, j)];
        }
    }

    fn log_weight(&self, st: &LabelState) -> f64 {
        let mut lw = self.col_const;
        for same in 0..2 {
            for e in 0..2 {
                let c = st.counts[same][e];
                if c == 0 {
                    continue;
                }
                match self.factors[same][e] {
                    Some(f) => lw += c as f64 * f,
                    None => return f64::NEG_INFINITY,
                }
            }
        }
        lw + self.col_coef * st.proj.iter().map(|s| s * s).sum::<f64>()
    }

    /// Log-weights of every label vector, in blocks over the high bits.
    /// Entry `m` corresponds to `σᵢ = +1` iff bit `i` of `m` is clear.
    fn all_log_weights(&self) -> Vec<f64> {
        let n = self.inst.n();
        let low = n.min(10);
        let high = n - low;
        let blocks: Vec<Vec<(usize, f64)>> = (0..1usize << high)
            .into_par_iter()
            .map(|hb| {
                let sigma: Vec<i8> = (0..n)
                    .map(|i| {
                        let bit = if i < low { 0 } else { (hb >> (i - low)) & 1 };
                        if bit == 1 {
                            -1
                        } else {
                            1
                        }
                    })
                    .collect();
                let mut st = self.state(sigma);
                let mut out = Vec::with_capacity(1 << low);
                let mut gray = 0usize;
                out.push((gray | (hb << low), self.log_weight(&st)));
                for step in 1..(1usize << low) {
                    let i = step.trailing_zeros() as usize;
                    self.flip(&mut st, i);
                    gray ^= 1 << i;
                    out.push((gray | (hb << low), self.log_weight(&st)));
                }
                out
            })
            .collect();
        let mut lw = vec![0.0; 1 << n];
        for block in blocks {
            for (m, v) in block {
                lw[m] = v;
            }
        }
        lw
    }
}

fn neumaier_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = s + x;
        c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
        s = t;
    }
    s + c
}

/// `log L` for the alternative `alt` against the null with the same
/// `(d, n, p)`, labels summed exhaustively.
pub fn exact_log_likelihood_ratio(inst: &Instance, alt: &ModelParams) -> Result<f64> {
    exact_log_likelihood_ratio_with(inst, alt, OracleLimits::default())
}

pub fn exact_log_likelihood_ratio_with(inst: &Instance, alt: &ModelParams, lim: OracleLimits) -> Result<f64> {
    let model = LrModel::new(inst, alt, lim)?;
    let lw = model.all_log_weights();
    let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // 2^{-n} is applied as an exact power-of-two scaling
    let scale = 0.5f64.powi(inst.n() as i32);
    let s = neumaier_sum(lw.iter().map(|&x| (x - max).exp() * scale));
    Ok(max + s.ln())
}

/// Likelihood ratio `L = dP_alt / dP_null` at the instance.
pub fn exact_likelihood_ratio(inst: &Instance, alt: &ModelParams) -> Result<f64> {
    let model = LrModel::new(inst, alt, OracleLimits::default())?;
    let lw = model.all_log_weights();
    let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = 0.5f64.powi(inst.n() as i32);
    let s = neumaier_sum(lw.iter().map(|&x| (x - max).exp() * scale));
    Ok(if max == 0.0 { s } else { max.exp() * s })
}

/// Posterior pair correlations `E[σᵢσⱼ | A, B]` under `alt`.
pub fn bayes_pairwise_posterior(inst: &Instance, alt: &ModelParams) -> Result<nalgebra::DMatrix<f64>> {
    let model = LrModel::new(inst, alt, OracleLimits::default())?;
    let n = inst.n();
    let lw = model.all_log_weights();
    let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut m = nalgebra::DMatrix::<f64>::zeros(n, n);
    let mut z = 0.0;
    for (mask, &x) in lw.iter().enumerate() {
        let w = (x - max).exp();
        if w == 0.0 {
            continue;
        }
        z += w;
        for i in 0..n {
            let si = if (mask >> i) & 1 == 1 { -1.0 } else { 1.0 };
            for j in i + 1..n {
                let sj = if (mask >> j) & 1 == 1 { -1.0 } else { 1.0 };
                m[(i, j)] += w * si * sj;
            }
        }
    }
    for i in 0..n {
        m[(i, i)] = 1.0;
        for j in i + 1..n {
            let v = (m[(i, j)] / z).clamp(-1.0, 1.0);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}
