//! Small combinatorial helpers: binomials, falling factorials, set
//! partitions with their Möbius weights, and cyclic step patterns.

use num_bigint::BigUint;

/// `C(n, k)` as `f64`.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r.round()
}

/// `C(n, k)` exactly.
pub fn binomial_exact(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::from(0u32);
    }
    falling_factorial(n, k) / falling_factorial(k, k)
}

/// `n (n-1) ... (n-k+1)` exactly; zero when `k > n`.
pub fn falling_factorial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::from(0u32);
    }
    (0..k).fold(BigUint::from(1u32), |acc, i| acc * BigUint::from(n - i))
}

/// `n (n-1) ... (n-k+1)` as `f64`.
pub fn falling_factorial_f64(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).map(|i| (n - i) as f64).product()
}

/// All set partitions of `0..m` as restricted growth strings: `labels[i]` is
/// the block of element `i`, and blocks are numbered by first appearance.
pub fn set_partitions(m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(m);
    fn rec(m: usize, cur: &mut Vec<usize>, max: usize, out: &mut Vec<Vec<usize>>) {
        if cur.len() == m {
            out.push(cur.clone());
            return;
        }
        let top = if cur.is_empty() { 0 } else { max + 1 };
        for b in 0..=top {
            cur.push(b);
            rec(m, cur, max.max(b), out);
            cur.pop();
        }
    }
    rec(m, &mut cur, 0, &mut out);
    out
}

/// Number of blocks in a restricted growth string.
pub fn num_blocks(labels: &[usize]) -> usize {
    labels.iter().max().map_or(0, |&x| x + 1)
}

/// Möbius weight of a partition relative to the finest one:
/// `∏ (-1)^{|B|-1} (|B|-1)!` over blocks.
pub fn mobius_weight(labels: &[usize]) -> f64 {
    let mut sizes = vec![0usize; num_blocks(labels)];
    for &b in labels {
        sizes[b] += 1;
    }
    sizes
        .iter()
        .map(|&s| {
            let f: f64 = (1..s).map(|x| x as f64).product();
            if s % 2 == 0 {
                -f
            } else {
                f
            }
        })
        .product()
}

/// All `k`-bit masks with `l` bits set, in increasing order.
pub fn masks(k: usize, l: usize) -> Vec<u32> {
    (0u32..(1 << k)).filter(|m| m.count_ones() as usize == l).collect()
}

/// Smallest image of a `k`-bit cyclic pattern under rotation and reversal.
pub fn dihedral_canonical(mask: u32, k: usize) -> u32 {
    let full = if k == 32 { u32::MAX } else { (1u32 << k) - 1 };
    let rev = (0..k).fold(0u32, |acc, i| acc | (((mask >> i) & 1) << (k - 1 - i)));
    let mut best = u32::MAX;
    for base in [mask, rev] {
        for s in 0..k {
            let r = if s == 0 {
                base
            } else {
                ((base >> s) | (base << (k - s))) & full
            };
            best = best.min(r);
        }
    }
    best
}

/// Dihedral orbits of the `C(k, l)` patterns as `(representative, size)`.
pub fn mask_orbits(k: usize, l: usize) -> Vec<(u32, usize)> {
    let mut orbits: Vec<(u32, usize)> = Vec::new();
    for m in masks(k, l) {
        let c = dihedral_canonical(m, k);
        match orbits.iter_mut().find(|(r, _)| *r == c) {
            Some(o) => o.1 += 1,
            None => orbits.push((c, 1)),
        }
    }
    orbits
}

/// Lexicographic successor of a permutation, in place. Returns false after
/// the last permutation.
pub fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Calls `f` with every ordered tuple of `r` distinct values from `0..n`.
pub fn for_each_distinct_tuple(n: usize, r: usize, mut f: impl FnMut(&[usize])) {
    let mut cur = Vec::with_capacity(r);
    let mut used = vec![false; n];
    fn rec(
        n: usize,
        r: usize,
        cur: &mut Vec<usize>,
        used: &mut [bool],
        f: &mut dyn FnMut(&[usize]),
    ) {
        if cur.len() == r {
            f(cur);
            return;
        }
        for v in 0..n {
            if !used[v] {
                used[v] = true;
                cur.push(v);
                rec(n, r, cur, used, f);
                cur.pop();
                used[v] = false;
            }
        }
    }
    rec(n, r, &mut cur, &mut used, &mut f);
}
