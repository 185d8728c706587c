//! Model parameters and instance sampling for the contextual block model.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::{stream_rng, Stream};

/// Parameters `(λ, μ, d, γ, n, p)` with the derived degrees `a`, `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ModelParams {
    lambda: f64,
    mu: f64,
    d: f64,
    gamma: f64,
    n: usize,
    p: usize,
    a: f64,
    b: f64,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    lambda: f64,
    mu: f64,
    d: f64,
    gamma: f64,
    n: usize,
    p: usize,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;
    fn try_from(r: RawParams) -> Result<Self> {
        ModelParams::new(r.lambda, r.mu, r.d, r.n, r.p, r.gamma)
    }
}

impl From<ModelParams> for RawParams {
    fn from(m: ModelParams) -> Self {
        RawParams {
            lambda: m.lambda,
            mu: m.mu,
            d: m.d,
            gamma: m.gamma,
            n: m.n,
            p: m.p,
        }
    }
}

impl ModelParams {
    /// Fully specified constructor. `gamma` must be consistent with `n / p`
    /// up to rounding of `p`.
    pub fn new(lambda: f64, mu: f64, d: f64, n: usize, p: usize, gamma: f64) -> Result<Self> {
        for (name, v) in [("lambda", lambda), ("mu", mu), ("d", d), ("gamma", gamma)] {
            if !v.is_finite() {
                return Err(Error::params(format!("{name} must be finite, got {v}")));
            }
        }
        if d <= 0.0 {
            return Err(Error::params(format!("d must be positive, got {d}")));
        }
        if gamma <= 0.0 {
            return Err(Error::params(format!("gamma must be positive, got {gamma}")));
        }
        if mu < 0.0 {
            return Err(Error::params(format!("mu must be nonnegative, got {mu}")));
        }
        if n == 0 || p == 0 {
            return Err(Error::params(format!("n and p must be positive, got n = {n}, p = {p}")));
        }
        let ratio = n as f64 / p as f64;
        if (ratio - gamma).abs() > 0.5 * gamma / p as f64 + 1e-12 {
            return Err(Error::params(format!(
                "n / p = {ratio} is inconsistent with gamma = {gamma}"
            )));
        }
        let shift = lambda * d.sqrt();
        let a = d + shift;
        let b = d - shift;
        if a.min(b) < 0.0 {
            return Err(Error::params(format!(
                "edge probabilities must be nonnegative: a = {a}, b = {b}"
            )));
        }
        if a.max(b) > n as f64 {
            return Err(Error::params(format!(
                "edge probabilities must not exceed 1: a = {a}, b = {b}, n = {n}"
            )));
        }
        Ok(ModelParams {
            lambda,
            mu,
            d,
            gamma,
            n,
            p,
            a,
            b,
        })
    }

    /// Takes `p = round(n / γ)` and keeps `γ` as the nominal ratio.
    pub fn with_gamma(lambda: f64, mu: f64, d: f64, n: usize, gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::params(format!("gamma must be positive, got {gamma}")));
        }
        let p = (n as f64 / gamma).round() as usize;
        if p == 0 {
            return Err(Error::params(format!("n / gamma rounds to p = 0 (n = {n}, gamma = {gamma})")));
        }
        Self::new(lambda, mu, d, n, p, gamma)
    }

    /// Explicit `(n, p)`; `γ` becomes `n / p`.
    pub fn with_p(lambda: f64, mu: f64, d: f64, n: usize, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::params("p must be positive"));
        }
        Self::new(lambda, mu, d, n, p, n as f64 / p as f64)
    }

    /// Same dimensions and degree with different signal strengths.
    pub fn with_signal(&self, lambda: f64, mu: f64) -> Result<Self> {
        Self::new(lambda, mu, self.d, self.n, self.p, self.gamma)
    }

    /// The null model with the same `(d, n, p, γ)`.
    pub fn null(&self) -> Self {
        Self::new(0.0, 0.0, self.d, self.n, self.p, self.gamma).expect("null model is always valid")
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn d(&self) -> f64 {
        self.d
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn p(&self) -> usize {
        self.p
    }
    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn b(&self) -> f64 {
        self.b
    }

    /// Combined signal `λ² + μ²/γ`; the detection threshold sits at 1.
    pub fn snr(&self) -> f64 {
        self.lambda * self.lambda + self.mu * self.mu / self.gamma
    }

    /// True when `d ≤ 1`, below the giant-component threshold.
    pub fn below_giant_component(&self) -> bool {
        self.d <= 1.0
    }
}

/// Within- and across-community edge probabilities `(a/n, b/n)`.
pub fn derive_edge_probs(params: &ModelParams) -> (f64, f64) {
    let n = params.n as f64;
    (params.a / n, params.b / n)
}

/// Ground-truth labels and latent direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub sigma: Vec<i8>,
    pub u: Vec<f64>,
}

/// One sampled dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub params: ModelParams,
    pub graph: Graph,
    /// Covariates, `n × p`.
    pub b: DMatrix<f64>,
    pub truth: Option<Truth>,
    pub seed: u64,
}

impl Instance {
    /// Assembles an instance from parts, checking shapes.
    pub fn from_parts(
        params: ModelParams,
        graph: Graph,
        b: DMatrix<f64>,
        truth: Option<Truth>,
        seed: u64,
    ) -> Result<Self> {
        let (n, p) = (params.n, params.p);
        if graph.n() != n {
            return Err(Error::Dimension {
                what: "adjacency",
                expected: n,
                found: graph.n(),
            });
        }
        if b.nrows() != n || b.ncols() != p {
            return Err(Error::Dimension {
                what: "covariate matrix",
                expected: n * p,
                found: b.len(),
            });
        }
        if let Some(t) = &truth {
            if t.sigma.len() != n {
                return Err(Error::Dimension {
                    what: "sigma",
                    expected: n,
                    found: t.sigma.len(),
                });
            }
            if t.u.len() != p {
                return Err(Error::Dimension {
                    what: "u",
                    expected: p,
                    found: t.u.len(),
                });
            }
            if t.sigma.iter().any(|&s| s != 1 && s != -1) {
                return Err(Error::params("sigma entries must be -1 or +1"));
            }
        }
        Ok(Instance {
            params,
            graph,
            b,
            truth,
            seed,
        })
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn p(&self) -> usize {
        self.params.p
    }

    pub fn sigma(&self) -> Option<&[i8]> {
        self.truth.as_ref().map(|t| t.sigma.as_slice())
    }
}

/// Uniform labels from the `Sigma` stream.
pub fn sample_sigma(n: usize, seed: u64) -> Vec<i8> {
    let mut rng = stream_rng(seed, Stream::Sigma);
    (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect()
}

/// Standard normal latent direction from the `Latent` stream.
pub fn sample_latent(p: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, Stream::Latent);
    (0..p).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Noise matrix from the `Noise` stream, filled row by row.
pub fn sample_noise(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = stream_rng(seed, Stream::Noise);
    let mut z = DMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            z[(i, j)] = StandardNormal.sample(&mut rng);
        }
    }
    z
}

/// Edges given labels, from the `Edges` stream.
///
/// Pairs are grouped into within-`+`, within-`−` and across blocks; within
/// each block the gaps between successive edges are geometric, so the cost
/// is proportional to the number of edges rather than `n²`.
pub fn sample_edges(params: &ModelParams, sigma: &[i8], seed: u64) -> Vec<(usize, usize)> {
    let (p_in, p_out) = derive_edge_probs(params);
    let mut rng = stream_rng(seed, Stream::Edges);
    let plus: Vec<usize> = (0..sigma.len()).filter(|&i| sigma[i] > 0).collect();
    let minus: Vec<usize> = (0..sigma.len()).filter(|&i| sigma[i] < 0).collect();
    let mut edges = Vec::new();

    for group in [&plus, &minus] {
        let m = group.len();
        let total = (m as u64) * (m as u64).saturating_sub(1) / 2;
        for t in geometric_indices(total, p_in, &mut rng) {
            let (r, c) = triangle_pair(t);
            push_edge(&mut edges, group[r], group[c]);
        }
    }
    let total = plus.len() as u64 * minus.len() as u64;
    for t in geometric_indices(total, p_out, &mut rng) {
        let r = (t / minus.len() as u64) as usize;
        let c = (t % minus.len() as u64) as usize;
        push_edge(&mut edges, plus[r], minus[c]);
    }
    edges.sort_unstable();
    edges
}

fn push_edge(edges: &mut Vec<(usize, usize)>, i: usize, j: usize) {
    edges.push((i.min(j), i.max(j)));
}

/// Indices in `0..total` selected independently with probability `q`.
fn geometric_indices<R: Rng>(total: u64, q: f64, rng: &mut R) -> Vec<u64> {
    let mut out = Vec::new();
    if total == 0 || q <= 0.0 {
        return out;
    }
    if q >= 1.0 {
        out.extend(0..total);
        return out;
    }
    let log_miss = (-q).ln_1p();
    let mut pos: u64 = 0;
    loop {
        // U in (0, 1]
        let u: f64 = 1.0 - rng.random::<f64>();
        let skip = (u.ln() / log_miss).floor();
        if skip >= (total - pos) as f64 {
            break;
        }
        pos += skip as u64;
        out.push(pos);
        pos += 1;
        if pos >= total {
            break;
        }
    }
    out
}

/// Maps a linear index to the pair `(r, c)` with `r > c` in row-major
/// order of the strict lower triangle.
fn triangle_pair(t: u64) -> (usize, usize) {
    let mut r = ((1.0 + (1.0 + 8.0 * t as f64).sqrt()) / 2.0).floor() as u64;
    while r * (r - 1) / 2 > t {
        r -= 1;
    }
    while (r + 1) * r / 2 <= t {
        r += 1;
    }
    let c = t - r * (r - 1) / 2;
    (r as usize, c as usize)
}

/// Samples `(A, B, σ, u)` deterministically from `(params, seed)`.
pub fn sample_instance(params: &ModelParams, seed: u64) -> Instance {
    let (n, p) = (params.n, params.p);
    let sigma = sample_sigma(n, seed);
    let u = sample_latent(p, seed);
    let edges = sample_edges(params, &sigma, seed);
    let graph = Graph::from_edges(n, &edges).expect("sampled edges are valid");
    let mut b = sample_noise(n, p, seed);
    if params.mu > 0.0 {
        let scale = (params.mu / n as f64).sqrt();
        for j in 0..p {
            for i in 0..n {
                b[(i, j)] += scale * sigma[i] as f64 * u[j];
            }
        }
    }
    Instance {
        params: *params,
        graph,
        b,
        truth: Some(Truth { sigma, u }),
        seed,
    }
}
