//! Transaction-id sets used for support counting.
//!
//! Rare tokens keep a sorted `u32` list, frequent ones (support >= n/32) a
//! bitmap over all transaction ordinals. Intersections work across both
//! forms and return the cheaper form for the result.

use alloc::vec::Vec;

const DENSE_RATIO: usize = 32;
const GALLOP_RATIO: usize = 16;

#[derive(Debug, Clone)]
pub(crate) enum TidSet {
    Sparse(Vec<u32>),
    Dense { words: Vec<u64>, len: u32 },
}

fn prefers_dense(len: usize, universe: usize) -> bool {
    universe >= 64 && len * DENSE_RATIO >= universe
}

impl TidSet {
    pub(crate) fn from_sorted(tids: &[u32], universe: usize) -> Self {
        if prefers_dense(tids.len(), universe) {
            let mut words = alloc::vec![0u64; universe.div_ceil(64)];
            for &t in tids {
                words[(t / 64) as usize] |= 1 << (t % 64);
            }
            TidSet::Dense {
                words,
                len: tids.len() as u32,
            }
        } else {
            TidSet::Sparse(tids.to_vec())
        }
    }

    pub(crate) fn len(&self) -> u32 {
        match self {
            TidSet::Sparse(v) => v.len() as u32,
            TidSet::Dense { len, .. } => *len,
        }
    }

    pub(crate) fn intersect(&self, other: &TidSet, universe: usize) -> TidSet {
        match (self, other) {
            (TidSet::Sparse(a), TidSet::Sparse(b)) => TidSet::Sparse(intersect_sorted(a, b)),
            (TidSet::Sparse(s), TidSet::Dense { words, .. })
            | (TidSet::Dense { words, .. }, TidSet::Sparse(s)) => {
                TidSet::Sparse(s.iter().copied().filter(|&t| test(words, t)).collect())
            }
            (TidSet::Dense { words: a, .. }, TidSet::Dense { words: b, .. }) => {
                let words: Vec<u64> = a.iter().zip(b).map(|(x, y)| x & y).collect();
                let len: u32 = words.iter().map(|w| w.count_ones()).sum();
                if prefers_dense(len as usize, universe) {
                    TidSet::Dense { words, len }
                } else {
                    TidSet::Sparse(bits_to_list(&words, len as usize))
                }
            }
        }
    }

    pub(crate) fn intersect_count(&self, other: &TidSet) -> u32 {
        match (self, other) {
            (TidSet::Sparse(a), TidSet::Sparse(b)) => intersect_count_sorted(a, b),
            (TidSet::Sparse(s), TidSet::Dense { words, .. })
            | (TidSet::Dense { words, .. }, TidSet::Sparse(s)) => {
                s.iter().filter(|&&t| test(words, t)).count() as u32
            }
            (TidSet::Dense { words: a, .. }, TidSet::Dense { words: b, .. }) => {
                a.iter().zip(b).map(|(x, y)| (x & y).count_ones()).sum()
            }
        }
    }
}

#[inline]
fn test(words: &[u64], t: u32) -> bool {
    words[(t / 64) as usize] & (1 << (t % 64)) != 0
}

fn bits_to_list(words: &[u64], len: usize) -> Vec<u32> {
    let mut out = Vec::with_capacity(len);
    for (i, &w) in words.iter().enumerate() {
        let mut w = w;
        while w != 0 {
            let bit = w.trailing_zeros();
            out.push(i as u32 * 64 + bit);
            w &= w - 1;
        }
    }
    out
}

/// First index in `list[from..]` holding a value >= `target`, found by
/// exponential then binary search.
fn gallop(list: &[u32], from: usize, target: u32) -> usize {
    let mut step = 1;
    let mut hi = from;
    while hi < list.len() && list[hi] < target {
        hi = from + step;
        step *= 2;
    }
    let lo = from + step / 4;
    let hi = hi.min(list.len());
    lo.max(from) + list[lo.max(from)..hi].partition_point(|&x| x < target)
}

fn visit_intersection(a: &[u32], b: &[u32], mut f: impl FnMut(u32)) {
    let (small, big) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if small.is_empty() {
        return;
    }
    if big.len() / small.len() >= GALLOP_RATIO {
        let mut j = 0;
        for &x in small {
            j = gallop(big, j, x);
            if j == big.len() {
                break;
            }
            if big[j] == x {
                f(x);
                j += 1;
            }
        }
    } else {
        let (mut i, mut j) = (0, 0);
        while i < small.len() && j < big.len() {
            let (x, y) = (small[i], big[j]);
            if x < y {
                i += 1;
            } else if y < x {
                j += 1;
            } else {
                f(x);
                i += 1;
                j += 1;
            }
        }
    }
}

pub(crate) fn intersect_sorted(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len().min(b.len()));
    visit_intersection(a, b, |x| out.push(x));
    out
}

pub(crate) fn intersect_count_sorted(a: &[u32], b: &[u32]) -> u32 {
    let mut n = 0;
    visit_intersection(a, b, |_| n += 1);
    n
}
