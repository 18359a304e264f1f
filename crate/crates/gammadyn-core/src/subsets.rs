//! Enumeration helpers over sorted cell sets.
//!
//! Every enumerator visits subsets in a fixed order so that reductions built
//! on top of them are bit-reproducible.

use alloc::vec::Vec;

use crate::grid::Cell;

/// Calls `f(sub, rest)` for each of the `2^|set|` splits of `set`, in
/// increasing bitmask order. Both parts stay sorted.
pub fn for_each_split(set: &[Cell], mut f: impl FnMut(&[Cell], &[Cell])) {
    let n = set.len();
    assert!(n < 31, "configuration too large to split");
    let mut sub = Vec::with_capacity(n);
    let mut rest = Vec::with_capacity(n);
    for mask in 0u32..(1u32 << n) {
        sub.clear();
        rest.clear();
        for (i, &c) in set.iter().enumerate() {
            if mask & (1 << i) != 0 {
                sub.push(c);
            } else {
                rest.push(c);
            }
        }
        f(&sub, &rest);
    }
}

/// Calls `f(sub)` for every subset of `candidates` (sorted) of size at most
/// `max_size`, the empty set first, then in lexicographic order.
pub fn for_each_subset_upto(candidates: &[Cell], max_size: usize, mut f: impl FnMut(&[Cell])) {
    let mut buf = Vec::with_capacity(max_size);
    f(&buf);
    fn rec(c: &[Cell], start: usize, max: usize, buf: &mut Vec<Cell>, f: &mut impl FnMut(&[Cell])) {
        if buf.len() == max {
            return;
        }
        for i in start..c.len() {
            buf.push(c[i]);
            f(buf);
            rec(c, i + 1, max, buf, f);
            buf.pop();
        }
    }
    rec(candidates, 0, max_size, &mut buf, &mut f);
}

/// Calls `f` on every configuration of size at most `n_max` drawn from
/// `0..n_cells`, level by level, lexicographically within a level.
pub fn for_each_configuration(n_cells: usize, n_max: usize, mut f: impl FnMut(&[Cell])) {
    let mut buf: Vec<Cell> = Vec::with_capacity(n_max);
    for n in 0..=n_max.min(n_cells) {
        combinations(n_cells, n, &mut buf, &mut f);
    }
}

fn combinations(n_cells: usize, k: usize, buf: &mut Vec<Cell>, f: &mut impl FnMut(&[Cell])) {
    buf.clear();
    buf.extend(0..k as Cell);
    if k == 0 {
        f(buf);
        return;
    }
    loop {
        f(buf);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if (buf[i] as usize) < n_cells - k + i {
                break;
            }
            if i == 0 {
                return;
            }
        }
        buf[i] += 1;
        for j in i + 1..k {
            buf[j] = buf[j - 1] + 1;
        }
    }
}

/// Merge two disjoint sorted sets into `out`.
pub fn union_into(a: &[Cell], b: &[Cell], out: &mut Vec<Cell>) {
    out.clear();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] < b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
}

pub fn union(a: &[Cell], b: &[Cell]) -> Vec<Cell> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    union_into(a, b, &mut out);
    out
}

/// `a ∪ {x}` (x not in a) into `out`.
pub fn insert_into(a: &[Cell], x: Cell, out: &mut Vec<Cell>) {
    out.clear();
    let pos = a.partition_point(|&c| c < x);
    out.extend_from_slice(&a[..pos]);
    out.push(x);
    out.extend_from_slice(&a[pos..]);
}

/// `a ∖ {x}` into `out`.
pub fn remove_into(a: &[Cell], x: Cell, out: &mut Vec<Cell>) {
    out.clear();
    out.extend(a.iter().copied().filter(|&c| c != x));
}

pub fn contains(a: &[Cell], x: Cell) -> bool {
    a.binary_search(&x).is_ok()
}

pub fn is_disjoint(a: &[Cell], b: &[Cell]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => return false,
        }
    }
    true
}

/// Sorted, deduplicated copy.
pub fn normalized(mut v: Vec<Cell>) -> Vec<Cell> {
    v.sort_unstable();
    v.dedup();
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn splits_cover_all_subsets() {
        let mut seen = Vec::new();
        for_each_split(&[1, 4, 9], |s, r| {
            assert_eq!(s.len() + r.len(), 3);
            assert!(is_disjoint(s, r));
            seen.push(s.to_vec());
        });
        assert_eq!(seen.len(), 8);
        assert_eq!(seen[0], Vec::<Cell>::new());
        assert_eq!(seen[7], vec![1, 4, 9]);
    }

    #[test]
    fn bounded_subsets_count() {
        let c: Vec<Cell> = (0..6).collect();
        let mut count = 0;
        for_each_subset_upto(&c, 2, |s| {
            assert!(s.windows(2).all(|w| w[0] < w[1]));
            count += 1;
        });
        assert_eq!(count, 1 + 6 + 15);
    }

    #[test]
    fn configurations_are_binomial_sums() {
        let mut count = 0;
        let mut last: Vec<Cell> = Vec::new();
        for_each_configuration(8, 3, |c| {
            if c.len() == last.len() {
                assert!(c > last.as_slice() || c.is_empty());
            }
            last = c.to_vec();
            count += 1;
        });
        assert_eq!(count, 1 + 8 + 28 + 56);
        let mut full = 0;
        for_each_configuration(5, 9, |_| full += 1);
        assert_eq!(full, 32);
    }

    #[test]
    fn set_ops() {
        assert_eq!(union(&[1, 5], &[2, 7]), vec![1, 2, 5, 7]);
        let mut out = Vec::new();
        insert_into(&[1, 5], 3, &mut out);
        assert_eq!(out, vec![1, 3, 5]);
        remove_into(&[1, 3, 5], 3, &mut out);
        assert_eq!(out, vec![1, 5]);
        assert!(!is_disjoint(&[1, 3], &[3]));
    }
}
