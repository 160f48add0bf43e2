//! Finite unions of unsigned intervals, used as per-variable domains.

use super::expr::mask;
use crate::wasm::CmpOp;

/// Sorted, disjoint, non-adjacent inclusive ranges within `[0, mask(width)]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalSet {
    width: u8,
    ranges: Vec<(u64, u64)>,
}

impl IntervalSet {
    pub fn full(width: u8) -> Self {
        IntervalSet {
            width,
            ranges: vec![(0, mask(width))],
        }
    }

    pub fn empty(width: u8) -> Self {
        IntervalSet {
            width,
            ranges: Vec::new(),
        }
    }

    pub fn point(width: u8, v: u64) -> Self {
        IntervalSet {
            width,
            ranges: vec![(v, v)],
        }
    }

    fn from_ranges(width: u8, mut ranges: Vec<(u64, u64)>) -> Self {
        ranges.retain(|(a, b)| a <= b);
        ranges.sort_unstable();
        let mut merged: Vec<(u64, u64)> = Vec::with_capacity(ranges.len());
        for (a, b) in ranges {
            match merged.last_mut() {
                Some((_, hi)) if a <= hi.saturating_add(1) => *hi = (*hi).max(b),
                _ => merged.push((a, b)),
            }
        }
        IntervalSet { width, ranges: merged }
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.ranges == [(0, mask(self.width))]
    }

    pub fn count(&self) -> u128 {
        self.ranges.iter().map(|(a, b)| (*b - *a) as u128 + 1).sum()
    }

    pub fn contains(&self, v: u64) -> bool {
        self.ranges.iter().any(|(a, b)| *a <= v && v <= *b)
    }

    pub fn ranges(&self) -> &[(u64, u64)] {
        &self.ranges
    }

    pub fn intersect(&self, other: &IntervalSet) -> IntervalSet {
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.ranges.len() && j < other.ranges.len() {
            let (a1, b1) = self.ranges[i];
            let (a2, b2) = other.ranges[j];
            let lo = a1.max(a2);
            let hi = b1.min(b2);
            if lo <= hi {
                out.push((lo, hi));
            }
            if b1 < b2 {
                i += 1;
            } else {
                j += 1;
            }
        }
        IntervalSet {
            width: self.width,
            ranges: out,
        }
    }

    pub fn remove(&self, v: u64) -> IntervalSet {
        let mut out = Vec::with_capacity(self.ranges.len() + 1);
        for &(a, b) in &self.ranges {
            if v < a || v > b {
                out.push((a, b));
                continue;
            }
            if a < v {
                out.push((a, v - 1));
            }
            if v < b {
                out.push((v + 1, b));
            }
        }
        IntervalSet {
            width: self.width,
            ranges: out,
        }
    }

    /// Values in increasing order.
    pub fn iter(&self) -> impl Iterator<Item = u64> + '_ {
        self.ranges.iter().flat_map(|&(a, b)| a..=b)
    }

    /// Range endpoints, useful as candidate values.
    pub fn endpoints(&self) -> Vec<u64> {
        let mut v: Vec<u64> = self.ranges.iter().flat_map(|&(a, b)| [a, b]).collect();
        v.dedup();
        v
    }

    /// The set `{x | x op c}` over `width`-bit values.
    pub fn satisfying(op: CmpOp, width: u8, c: u64) -> IntervalSet {
        let m = mask(width);
        let c = c & m;
        let unsigned = |op: CmpOp, c: u64| -> Vec<(u64, u64)> {
            match op {
                CmpOp::Eq => vec![(c, c)],
                CmpOp::Ne => {
                    let mut v = Vec::new();
                    if c > 0 {
                        v.push((0, c - 1));
                    }
                    if c < m {
                        v.push((c + 1, m));
                    }
                    v
                }
                CmpOp::LtU | CmpOp::LtS => {
                    if c == 0 {
                        vec![]
                    } else {
                        vec![(0, c - 1)]
                    }
                }
                CmpOp::LeU | CmpOp::LeS => vec![(0, c)],
                CmpOp::GtU | CmpOp::GtS => {
                    if c == m {
                        vec![]
                    } else {
                        vec![(c + 1, m)]
                    }
                }
                CmpOp::GeU | CmpOp::GeS => vec![(c, m)],
            }
        };
        let signed = matches!(op, CmpOp::LtS | CmpOp::LeS | CmpOp::GtS | CmpOp::GeS);
        if !signed {
            return IntervalSet::from_ranges(width, unsigned(op, c));
        }
        // Signed order is unsigned order after flipping the sign bit.
        let sb = 1u64 << (width - 1);
        let biased = unsigned(op, c ^ sb);
        let mut out = Vec::new();
        for (a, b) in biased {
            if a < sb {
                out.push((a ^ sb, b.min(sb - 1) ^ sb));
            }
            if b >= sb {
                out.push((a.max(sb) ^ sb, b ^ sb));
            }
        }
        IntervalSet::from_ranges(width, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::expr::eval_cmp;

    #[test]
    fn satisfying_matches_brute_force_at_width_8() {
        for op in CmpOp::ALL {
            for c in [0u64, 1, 5, 0x7F, 0x80, 0x81, 0xFE, 0xFF] {
                let set = IntervalSet::satisfying(op, 8, c);
                for x in 0..=0xFFu64 {
                    assert_eq!(set.contains(x), eval_cmp(op, 8, x, c), "{op:?} {x} {c}");
                }
            }
        }
    }

    #[test]
    fn set_operations() {
        let a = IntervalSet::satisfying(CmpOp::LtS, 32, 0);
        let b = IntervalSet::satisfying(CmpOp::GtS, 32, 0);
        assert!(a.intersect(&b).is_empty());
        let c = IntervalSet::satisfying(CmpOp::LeU, 8, 10).remove(3).remove(0);
        assert_eq!(c.count(), 9);
        assert_eq!(c.iter().next(), Some(1));
        assert!(IntervalSet::full(8).is_full());
    }
}
