//! Contraction of small tensor networks whose factors are matrices.
//!
//! A network has index nodes (each ranging over `0..dim` and carrying an
//! optional weight vector) and matrix edges between pairs of nodes. Its
//! value is the sum over all index assignments of the product of node
//! weights and edge entries. Cycle statistics reduce to such sums once the
//! distinctness constraints have been removed by Möbius inversion.
//!
//! Nodes are eliminated greedily by estimated cost: a node of degree at
//! most two is summed out by a matrix-vector or matrix-matrix product, and
//! when every node has degree three or more the cheapest node is
//! conditioned on (its values are enumerated).

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl Csr {
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row(&self, r: usize) -> (&[u32], &[f64]) {
        let (s, e) = (self.indptr[r], self.indptr[r + 1]);
        (&self.indices[s..e], &self.values[s..e])
    }

    pub fn transpose(&self) -> Csr {
        let mut count = vec![0usize; self.ncols + 1];
        for &c in &self.indices {
            count[c as usize + 1] += 1;
        }
        for c in 0..self.ncols {
            count[c + 1] += count[c];
        }
        let mut fill = count.clone();
        let mut indices = vec![0u32; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.nrows {
            let (idx, val) = self.row(r);
            for (&c, &v) in idx.iter().zip(val) {
                let slot = fill[c as usize];
                indices[slot] = r as u32;
                values[slot] = v;
                fill[c as usize] += 1;
            }
        }
        Csr {
            nrows: self.ncols,
            ncols: self.nrows,
            indptr: count,
            indices,
            values,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            let (idx, val) = self.row(r);
            for (&c, &v) in idx.iter().zip(val) {
                d[(r, c as usize)] += v;
            }
        }
        d
    }
}

/// Dense or sparse matrix factor.
#[derive(Debug, Clone, PartialEq)]
pub enum Mat {
    Dense(DMatrix<f64>),
    Sparse(Csr),
}

impl Mat {
    pub fn nrows(&self) -> usize {
        match self {
            Mat::Dense(m) => m.nrows(),
            Mat::Sparse(s) => s.nrows,
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            Mat::Dense(m) => m.ncols(),
            Mat::Sparse(s) => s.ncols,
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, Mat::Sparse(_))
    }

    pub fn nnz(&self) -> usize {
        match self {
            Mat::Dense(m) => m.len(),
            Mat::Sparse(s) => s.nnz(),
        }
    }

    pub fn transpose(&self) -> Mat {
        match self {
            Mat::Dense(m) => Mat::Dense(m.transpose()),
            Mat::Sparse(s) => Mat::Sparse(s.transpose()),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Mat::Dense(m) => m.clone(),
            Mat::Sparse(s) => s.to_dense(),
        }
    }

    /// Entrywise product of two equally oriented matrices.
    pub fn hadamard(&self, other: &Mat) -> Mat {
        match (self, other) {
            (Mat::Dense(x), Mat::Dense(y)) => Mat::Dense(x.component_mul(y)),
            (Mat::Sparse(s), Mat::Dense(d)) | (Mat::Dense(d), Mat::Sparse(s)) => {
                let mut out = s.clone();
                for r in 0..s.nrows {
                    for k in s.indptr[r]..s.indptr[r + 1] {
                        out.values[k] *= d[(r, s.indices[k] as usize)];
                    }
                }
                Mat::Sparse(out)
            }
            (Mat::Sparse(x), Mat::Sparse(y)) => {
                let mut indptr = vec![0usize];
                let mut indices = Vec::new();
                let mut values = Vec::new();
                for r in 0..x.nrows {
                    let (xi, xv) = x.row(r);
                    let (yi, yv) = y.row(r);
                    let (mut a, mut b) = (0, 0);
                    while a < xi.len() && b < yi.len() {
                        match xi[a].cmp(&yi[b]) {
                            std::cmp::Ordering::Less => a += 1,
                            std::cmp::Ordering::Greater => b += 1,
                            std::cmp::Ordering::Equal => {
                                indices.push(xi[a]);
                                values.push(xv[a] * yv[b]);
                                a += 1;
                                b += 1;
                            }
                        }
                    }
                    indptr.push(indices.len());
                }
                Mat::Sparse(Csr {
                    nrows: x.nrows,
                    ncols: x.ncols,
                    indptr,
                    indices,
                    values,
                })
            }
        }
    }

    /// `Σ_r w_r M[r, c]` for every column `c`.
    pub fn tr_matvec(&self, w: Option<&[f64]>) -> Vec<f64> {
        let weight = |r: usize| w.map_or(1.0, |w| w[r]);
        match self {
            Mat::Dense(m) => (0..m.ncols())
                .map(|c| {
                    let col = m.column(c);
                    match w {
                        None => col.iter().sum(),
                        Some(w) => col.iter().zip(w).map(|(a, b)| a * b).sum(),
                    }
                })
                .collect(),
            Mat::Sparse(s) => {
                let mut out = vec![0.0; s.ncols];
                for r in 0..s.nrows {
                    let wr = weight(r);
                    if wr == 0.0 {
                        continue;
                    }
                    let (idx, val) = s.row(r);
                    for (&c, &v) in idx.iter().zip(val) {
                        out[c as usize] += wr * v;
                    }
                }
                out
            }
        }
    }

    /// Row `r` as a dense vector.
    pub fn dense_row(&self, r: usize) -> Vec<f64> {
        match self {
            Mat::Dense(m) => m.row(r).iter().copied().collect(),
            Mat::Sparse(s) => {
                let mut out = vec![0.0; s.ncols];
                let (idx, val) = s.row(r);
                for (&c, &v) in idx.iter().zip(val) {
                    out[c as usize] = v;
                }
                out
            }
        }
    }
}

/// `M1ᵀ diag(w) M2` where both factors have rows indexed by the summed node.
pub fn tr_product(m1: &Mat, w: Option<&[f64]>, m2: &Mat) -> Mat {
    match (m1, m2) {
        (Mat::Dense(a), Mat::Dense(b)) => match w {
            None => Mat::Dense(a.tr_mul(b)),
            Some(w) => {
                let mut bw = b.clone();
                for (r, &wr) in w.iter().enumerate() {
                    bw.row_mut(r).scale_mut(wr);
                }
                Mat::Dense(a.tr_mul(&bw))
            }
        },
        (Mat::Sparse(s), Mat::Dense(d)) => Mat::Dense(sparse_tr_dense(s, w, d)),
        (Mat::Dense(d), Mat::Sparse(s)) => Mat::Dense(sparse_tr_dense(s, w, d).transpose()),
        (Mat::Sparse(x), Mat::Sparse(y)) => Mat::Sparse(sparse_tr_sparse(x, w, y)),
    }
}

/// `Sᵀ diag(w) D` with a dense result.
fn sparse_tr_dense(s: &Csr, w: Option<&[f64]>, d: &DMatrix<f64>) -> DMatrix<f64> {
    // Work on transposed storage so the inner loop runs over contiguous columns.
    let dt = d.transpose();
    let mut out_t = DMatrix::<f64>::zeros(d.ncols(), s.ncols);
    for r in 0..s.nrows {
        let wr = w.map_or(1.0, |w| w[r]);
        if wr == 0.0 {
            continue;
        }
        let src = dt.column(r);
        let (idx, val) = s.row(r);
        for (&c, &v) in idx.iter().zip(val) {
            out_t.column_mut(c as usize).axpy(wr * v, &src, 1.0);
        }
    }
    out_t.transpose()
}

/// `Xᵀ diag(w) Y` for sparse `X`, `Y` (Gustavson's algorithm).
fn sparse_tr_sparse(x: &Csr, w: Option<&[f64]>, y: &Csr) -> Csr {
    let xt = x.transpose();
    let mut acc = vec![0.0; y.ncols];
    let mut mark = vec![usize::MAX; y.ncols];
    let mut touched: Vec<u32> = Vec::new();
    let mut indptr = vec![0usize];
    let mut indices = Vec::new();
    let mut values = Vec::new();
    for r in 0..xt.nrows {
        touched.clear();
        let (ti, tv) = xt.row(r);
        for (&t, &xv) in ti.iter().zip(tv) {
            let coef = xv * w.map_or(1.0, |w| w[t as usize]);
            let (yi, yv) = y.row(t as usize);
            for (&c, &v) in yi.iter().zip(yv) {
                if mark[c as usize] != r {
                    mark[c as usize] = r;
                    acc[c as usize] = 0.0;
                    touched.push(c);
                }
                acc[c as usize] += coef * v;
            }
        }
        touched.sort_unstable();
        for &c in &touched {
            indices.push(c);
            values.push(acc[c as usize]);
        }
        indptr.push(indices.len());
    }
    Csr {
        nrows: x.ncols,
        ncols: y.ncols,
        indptr,
        indices,
        values,
    }
}

/// `E ∘ (M1ᵀ diag(w) M2)` evaluated only on the sparsity pattern of `E`.
pub fn sampled_tr_product(
    e: &Csr,
    m1: &DMatrix<f64>,
    w: Option<&[f64]>,
    m2: &DMatrix<f64>,
) -> Csr {
    let mut out = e.clone();
    let scaled;
    let m1 = match w {
        None => m1,
        Some(w) => {
            let mut s = m1.clone();
            for (r, &wr) in w.iter().enumerate() {
                s.row_mut(r).scale_mut(wr);
            }
            scaled = s;
            &scaled
        }
    };
    for r in 0..e.nrows {
        let a = m1.column(r);
        for k in e.indptr[r]..e.indptr[r + 1] {
            let b = m2.column(e.indices[k] as usize);
            out.values[k] *= a.dot(&b);
        }
    }
    out
}

/// Operation tag and operand addresses.
type CacheKey = (u8, usize, usize);
/// Both operands and the result.
type CacheEntry = (Arc<Mat>, Arc<Mat>, Arc<Mat>);

/// Shared memo for products and transposes of long-lived factors.
#[derive(Default)]
pub struct Cache {
    map: HashMap<CacheKey, CacheEntry>,
}

impl Cache {
    fn get_or(
        &mut self,
        op: u8,
        x: &Arc<Mat>,
        y: &Arc<Mat>,
        f: impl FnOnce() -> Mat,
    ) -> Arc<Mat> {
        let key = (op, Arc::as_ptr(x) as usize, Arc::as_ptr(y) as usize);
        self.map
            .entry(key)
            // inputs are kept alive so their addresses cannot be reused
            .or_insert_with(|| (x.clone(), y.clone(), Arc::new(f())))
            .2
            .clone()
    }
}

#[derive(Clone)]
struct Edge {
    u: usize,
    v: usize,
    /// Rows indexed by `u`, columns by `v`.
    m: Arc<Mat>,
    /// Transpose, when known.
    mt: Option<Arc<Mat>>,
    /// Factor outlives the contraction, so results derived from it may be memoized.
    pinned: bool,
}

impl Edge {
    fn other(&self, x: usize) -> usize {
        if self.u == x {
            self.v
        } else {
            self.u
        }
    }
}

/// A matrix network to be summed out.
#[derive(Clone)]
pub struct Network {
    dims: Vec<usize>,
    weights: Vec<Option<Vec<f64>>>,
    alive: Vec<bool>,
    edges: Vec<Option<Edge>>,
    scalar: f64,
}

#[derive(Debug, Clone, Copy)]
struct EdgeMeta {
    u: usize,
    v: usize,
    sparse: bool,
    nnz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Step {
    Eliminate(usize),
    Condition(usize),
}

impl Network {
    pub fn new(dims: Vec<usize>) -> Self {
        let k = dims.len();
        Network {
            dims,
            weights: vec![None; k],
            alive: vec![true; k],
            edges: Vec::new(),
            scalar: 1.0,
        }
    }

    /// Adds a factor with rows indexed by `u` and columns by `v`. `mt` is its
    /// transpose if already available. Leaf factors should be `pinned`.
    pub fn add_edge(&mut self, u: usize, v: usize, m: Arc<Mat>, mt: Option<Arc<Mat>>, pinned: bool) {
        assert!(u != v, "self-loops must be folded into node weights");
        assert_eq!(m.nrows(), self.dims[u]);
        assert_eq!(m.ncols(), self.dims[v]);
        self.edges.push(Some(Edge { u, v, m, mt, pinned }));
    }

    /// Multiplies a node weight entrywise by `w`.
    pub fn scale_node(&mut self, x: usize, w: &[f64]) {
        assert_eq!(w.len(), self.dims[x]);
        match &mut self.weights[x] {
            Some(cur) => cur.iter_mut().zip(w).for_each(|(a, b)| *a *= b),
            None => self.weights[x] = Some(w.to_vec()),
        }
    }

    fn meta(&self) -> (Vec<usize>, Vec<bool>, Vec<EdgeMeta>) {
        let edges = self
            .edges
            .iter()
            .flatten()
            .map(|e| EdgeMeta {
                u: e.u,
                v: e.v,
                sparse: e.m.is_sparse(),
                nnz: e.m.nnz() as f64,
            })
            .collect();
        (self.dims.clone(), self.alive.clone(), edges)
    }

    /// Estimated number of multiply-adds for a full contraction.
    pub fn estimate_work(&self) -> f64 {
        let (dims, alive, edges) = self.meta();
        let mut m = MetaNet { dims, alive, edges };
        m.merge_parallel();
        m.total_cost()
    }

    /// Sums the network out.
    pub fn contract(mut self, cache: &mut Cache) -> f64 {
        self.merge_parallel(cache);
        loop {
            let (dims, alive, edges) = self.meta();
            let meta = MetaNet { dims, alive, edges };
            let Some(step) = meta.choose() else {
                return self.scalar;
            };
            match step {
                Step::Eliminate(x) => self.eliminate(x, cache),
                Step::Condition(x) => return self.condition(x, cache),
            }
            if self.scalar == 0.0 {
                return 0.0;
            }
        }
    }

    fn incident(&self, x: usize) -> Vec<usize> {
        (0..self.edges.len())
            .filter(|&i| matches!(&self.edges[i], Some(e) if e.u == x || e.v == x))
            .collect()
    }

    /// Factor of edge `i` oriented with rows indexed by `x`.
    fn oriented(&mut self, i: usize, x: usize, cache: &mut Cache) -> (Arc<Mat>, bool) {
        let e = self.edges[i].as_mut().unwrap();
        if e.u == x {
            return (e.m.clone(), e.pinned);
        }
        if e.mt.is_none() {
            let t = if e.pinned {
                let m = e.m.clone();
                cache.get_or(b't', &m, &m, || m.transpose())
            } else {
                Arc::new(e.m.transpose())
            };
            e.mt = Some(t);
        }
        (e.mt.clone().unwrap(), e.pinned)
    }

    /// Merges parallel edges by entrywise products.
    fn merge_parallel(&mut self, cache: &mut Cache) {
        let mut i = 0;
        while i < self.edges.len() {
            if self.edges[i].is_none() {
                i += 1;
                continue;
            }
            let (u, v) = {
                let e = self.edges[i].as_ref().unwrap();
                (e.u, e.v)
            };
            for j in i + 1..self.edges.len() {
                let same = matches!(&self.edges[j], Some(f) if (f.u == u && f.v == v) || (f.u == v && f.v == u));
                if same {
                    let (mj, pj) = self.oriented(j, u, cache);
                    let e = self.edges[i].as_ref().unwrap();
                    let (mi, pi) = (e.m.clone(), e.pinned);
                    let pinned = pi && pj;
                    let h = if pinned {
                        cache.get_or(b'h', &mi, &mj, || mi.hadamard(&mj))
                    } else {
                        Arc::new(mi.hadamard(&mj))
                    };
                    self.edges[i] = Some(Edge { u, v, m: h, mt: None, pinned });
                    self.edges[j] = None;
                }
            }
            i += 1;
        }
    }

    fn eliminate(&mut self, x: usize, cache: &mut Cache) {
        let inc = self.incident(x);
        let w = self.weights[x].take();
        self.alive[x] = false;
        match inc.len() {
            0 => {
                let s: f64 = match &w {
                    None => self.dims[x] as f64,
                    Some(w) => w.iter().sum(),
                };
                self.scalar *= s;
            }
            1 => {
                let (m, _) = self.oriented(inc[0], x, cache);
                let y = self.edges[inc[0]].as_ref().unwrap().other(x);
                self.edges[inc[0]] = None;
                let v = m.tr_matvec(w.as_deref());
                self.scale_node(y, &v);
            }
            2 => {
                let (m1, p1) = self.oriented(inc[0], x, cache);
                let (m2, p2) = self.oriented(inc[1], x, cache);
                let y = self.edges[inc[0]].as_ref().unwrap().other(x);
                let z = self.edges[inc[1]].as_ref().unwrap().other(x);
                self.edges[inc[0]] = None;
                self.edges[inc[1]] = None;
                let existing = (0..self.edges.len()).find(|&i| {
                    matches!(&self.edges[i], Some(f) if (f.u == y && f.v == z) || (f.u == z && f.v == y))
                });
                if let (Some(ei), Mat::Dense(d1), Mat::Dense(d2)) = (existing, &*m1, &*m2) {
                    let (em, _) = self.oriented(ei, y, cache);
                    if let Mat::Sparse(pattern) = &*em {
                        let out = sampled_tr_product(pattern, d1, w.as_deref(), d2);
                        self.edges[ei] = Some(Edge {
                            u: y,
                            v: z,
                            m: Arc::new(Mat::Sparse(out)),
                            mt: None,
                            pinned: false,
                        });
                        return;
                    }
                }
                let pinned = p1 && p2 && w.is_none();
                let prod = if pinned {
                    cache.get_or(b'p', &m1, &m2, || tr_product(&m1, None, &m2))
                } else {
                    Arc::new(tr_product(&m1, w.as_deref(), &m2))
                };
                self.edges.push(Some(Edge {
                    u: y,
                    v: z,
                    m: prod,
                    mt: None,
                    pinned,
                }));
                self.merge_parallel(cache);
            }
            _ => unreachable!("elimination chosen only for degree <= 2"),
        }
    }

    fn condition(mut self, x: usize, cache: &mut Cache) -> f64 {
        let inc = self.incident(x);
        let rows: Vec<(usize, Arc<Mat>)> = inc
            .iter()
            .map(|&i| {
                let y = self.edges[i].as_ref().unwrap().other(x);
                (y, self.oriented(i, x, cache).0)
            })
            .collect();
        for &i in &inc {
            self.edges[i] = None;
        }
        let w = self.weights[x].take();
        self.alive[x] = false;
        let mut total = 0.0;
        'values: for t in 0..self.dims[x] {
            let wt = w.as_ref().map_or(1.0, |w| w[t]);
            if wt == 0.0 {
                continue;
            }
            let mut sub = self.clone();
            for (y, m) in &rows {
                let r = m.dense_row(t);
                if r.iter().all(|&v| v == 0.0) {
                    continue 'values;
                }
                sub.scale_node(*y, &r);
            }
            sub.scalar *= wt;
            total += sub.contract(cache);
        }
        total
    }
}

/// Structural copy of a network used to plan and cost contractions.
#[derive(Clone)]
struct MetaNet {
    dims: Vec<usize>,
    alive: Vec<bool>,
    edges: Vec<EdgeMeta>,
}

impl MetaNet {
    fn merge_parallel(&mut self) {
        let mut out: Vec<EdgeMeta> = Vec::new();
        for e in self.edges.drain(..) {
            match out
                .iter_mut()
                .find(|f| (f.u == e.u && f.v == e.v) || (f.u == e.v && f.v == e.u))
            {
                Some(f) => {
                    f.sparse = f.sparse || e.sparse;
                    f.nnz = f.nnz.min(e.nnz);
                }
                None => out.push(e),
            }
        }
        self.edges = out;
    }

    fn incident(&self, x: usize) -> Vec<usize> {
        (0..self.edges.len())
            .filter(|&i| self.edges[i].u == x || self.edges[i].v == x)
            .collect()
    }

    fn other(e: &EdgeMeta, x: usize) -> usize {
        if e.u == x {
            e.v
        } else {
            e.u
        }
    }

    /// Cost of eliminating `x` and the resulting new edge, if any.
    fn elimination_cost(&self, x: usize) -> Option<(f64, Option<EdgeMeta>)> {
        let inc = self.incident(x);
        let dx = self.dims[x] as f64;
        match inc.len() {
            0 => Some((dx, None)),
            1 => Some((self.edges[inc[0]].nnz.max(1.0), None)),
            2 => {
                let (e1, e2) = (self.edges[inc[0]], self.edges[inc[1]]);
                let (y, z) = (Self::other(&e1, x), Self::other(&e2, x));
                let (dy, dz) = (self.dims[y] as f64, self.dims[z] as f64);
                let existing = self
                    .edges
                    .iter()
                    .find(|f| (f.u == y && f.v == z) || (f.u == z && f.v == y));
                let res = match (e1.sparse, e2.sparse) {
                    (false, false) => match existing {
                        Some(f) if f.sparse => (f.nnz * dx, EdgeMeta { u: y, v: z, sparse: true, nnz: f.nnz }),
                        _ => (dy * dz * dx, EdgeMeta { u: y, v: z, sparse: false, nnz: dy * dz }),
                    },
                    (true, false) => (e1.nnz * dz + dy * dz, EdgeMeta { u: y, v: z, sparse: false, nnz: dy * dz }),
                    (false, true) => (e2.nnz * dy + dy * dz, EdgeMeta { u: y, v: z, sparse: false, nnz: dy * dz }),
                    (true, true) => {
                        let w = e1.nnz * e2.nnz / dx.max(1.0);
                        (w + dx, EdgeMeta { u: y, v: z, sparse: true, nnz: w.min(dy * dz) })
                    }
                };
                Some((res.0, Some(res.1)))
            }
            _ => None,
        }
    }

    fn choose(&self) -> Option<Step> {
        let mut best: Option<(f64, usize)> = None;
        let mut any = false;
        for x in 0..self.dims.len() {
            if !self.alive[x] {
                continue;
            }
            any = true;
            if let Some((c, _)) = self.elimination_cost(x) {
                if best.is_none_or(|(bc, _)| c < bc) {
                    best = Some((c, x));
                }
            }
        }
        if !any {
            return None;
        }
        if let Some((_, x)) = best {
            return Some(Step::Eliminate(x));
        }
        // every live node has degree >= 3: condition on the smallest one
        let x = (0..self.dims.len())
            .filter(|&x| self.alive[x])
            .min_by_key(|&x| (self.dims[x], usize::MAX - self.incident(x).len()))
            .unwrap();
        Some(Step::Condition(x))
    }

    fn apply(&mut self, step: Step) -> f64 {
        match step {
            Step::Eliminate(x) => {
                let (c, new) = self.elimination_cost(x).unwrap();
                self.alive[x] = false;
                self.edges.retain(|e| e.u != x && e.v != x);
                if let Some(e) = new {
                    self.edges.push(e);
                    self.merge_parallel();
                }
                c
            }
            Step::Condition(x) => {
                let dx = self.dims[x] as f64;
                let inc: f64 = self.incident(x).iter().map(|&i| self.dims[Self::other(&self.edges[i], x)] as f64).sum();
                self.alive[x] = false;
                self.edges.retain(|e| e.u != x && e.v != x);
                let rest = self.clone().total_cost();
                // the remainder is summed once per value of x
                self.alive.iter_mut().for_each(|a| *a = false);
                self.edges.clear();
                dx * (inc + rest)
            }
        }
    }

    fn total_cost(mut self) -> f64 {
        let mut total = 0.0;
        while let Some(step) = self.choose() {
            total += self.apply(step);
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dense(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_sparse(r: usize, c: usize, rng: &mut ChaCha8Rng) -> Csr {
        let d = DMatrix::from_fn(r, c, |_, _| {
            if rng.random_bool(0.4) {
                rng.random_range(-1.0..1.0)
            } else {
                0.0
            }
        });
        dense_to_csr(&d)
    }

    fn dense_to_csr(d: &DMatrix<f64>) -> Csr {
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for r in 0..d.nrows() {
            for c in 0..d.ncols() {
                if d[(r, c)] != 0.0 {
                    indices.push(c as u32);
                    values.push(d[(r, c)]);
                }
            }
            indptr.push(indices.len());
        }
        Csr {
            nrows: d.nrows(),
            ncols: d.ncols(),
            indptr,
            indices,
            values,
        }
    }

    /// Brute-force value of a network with dense factors.
    fn brute(dims: &[usize], weights: &[Option<Vec<f64>>], edges: &[(usize, usize, DMatrix<f64>)]) -> f64 {
        let total: usize = dims.iter().product();
        let mut s = 0.0;
        let mut idx = vec![0usize; dims.len()];
        for mut t in 0..total {
            for (k, &d) in dims.iter().enumerate() {
                idx[k] = t % d;
                t /= d;
            }
            let mut term = 1.0;
            for (k, w) in weights.iter().enumerate() {
                if let Some(w) = w {
                    term *= w[idx[k]];
                }
            }
            for (u, v, m) in edges {
                term *= m[(idx[*u], idx[*v])];
            }
            s += term;
        }
        s
    }

    #[test]
    fn products_agree_with_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s1 = random_sparse(7, 5, &mut rng);
        let s2 = random_sparse(7, 4, &mut rng);
        let d1 = random_dense(7, 5, &mut rng);
        let d2 = random_dense(7, 4, &mut rng);
        let dw = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(w.clone()));
        let cases = [
            (Mat::Sparse(s1.clone()), Mat::Sparse(s2.clone())),
            (Mat::Sparse(s1.clone()), Mat::Dense(d2.clone())),
            (Mat::Dense(d1.clone()), Mat::Sparse(s2.clone())),
            (Mat::Dense(d1.clone()), Mat::Dense(d2.clone())),
        ];
        for (a, b) in cases {
            let want = a.to_dense().transpose() * &dw * b.to_dense();
            let got = tr_product(&a, Some(&w), &b).to_dense();
            assert!((want - got).abs().max() < 1e-12);
        }
        let e = random_sparse(5, 4, &mut rng);
        let got = sampled_tr_product(&e, &d1, Some(&w), &d2).to_dense();
        let want = e.to_dense().component_mul(&(d1.transpose() * &dw * &d2));
        assert!((want - got).abs().max() < 1e-12);
        assert_eq!(s1.transpose().transpose(), s1);
    }

    #[test]
    fn contraction_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // A mix of shapes: cycles, chords, parallel edges, isolated nodes and
        // a complete graph (forcing conditioning).
        let shapes: Vec<(Vec<usize>, Vec<(usize, usize)>)> = vec![
            (vec![3, 4, 5], vec![(0, 1), (1, 2), (2, 0)]),
            (vec![3, 4, 3, 2], vec![(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)]),
            (vec![3, 3], vec![(0, 1), (1, 0), (0, 1)]),
            (vec![2, 3, 4], vec![(0, 1)]),
            (vec![3, 2, 3, 2], vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]),
            (vec![3, 3, 3, 3, 3], vec![(0, 1), (0, 2), (0, 3), (0, 4), (1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)]),
        ];
        for (dims, pairs) in shapes {
            for trial in 0..4 {
                let mut net = Network::new(dims.clone());
                let mut dense_edges = Vec::new();
                for &(u, v) in &pairs {
                    let m = if (trial + u + v) % 2 == 0 {
                        Mat::Sparse(random_sparse(dims[u], dims[v], &mut rng))
                    } else {
                        Mat::Dense(random_dense(dims[u], dims[v], &mut rng))
                    };
                    dense_edges.push((u, v, m.to_dense()));
                    net.add_edge(u, v, Arc::new(m), None, trial % 2 == 0);
                }
                let mut weights = vec![None; dims.len()];
                if trial >= 2 {
                    let w: Vec<f64> = (0..dims[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
                    net.scale_node(0, &w);
                    weights[0] = Some(w);
                }
                let want = brute(&dims, &weights, &dense_edges);
                assert!(net.estimate_work() > 0.0);
                let got = net.contract(&mut Cache::default());
                assert!((want - got).abs() <= 1e-10 * (1.0 + want.abs()), "{want} vs {got}");
            }
        }
    }
}
