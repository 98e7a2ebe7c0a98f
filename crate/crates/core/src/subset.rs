//! Subsets of `{1, ..., d}` and label sets.
//!
//! Subsets are stored as bitmasks where variable `j` (1-based) occupies bit
//! `j - 1`. All ordered collections of subsets use the canonical order:
//! cardinality first, then lexicographic order of the sorted member lists.
//! This puts the empty set first and reproduces the row layout of the
//! coefficient matrix (`∅`, all pairs, all 4-sets, ...).

use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::error::{Error, Result};

/// Largest dimension representable by the bitmask encoding.
pub const MAX_DIM: usize = 30;

/// A subset `I ⊆ {1, ..., d}`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct SubsetIndex {
    d: usize,
    mask: u32,
}

impl SubsetIndex {
    /// Builds a subset from 1-based members. Members may be given in any
    /// order but must be distinct and lie in `1..=d`.
    pub fn new(d: usize, members: &[usize]) -> Result<Self> {
        check_dim(d)?;
        let mut mask = 0u32;
        for &m in members {
            if m == 0 || m > d {
                return Err(Error::InvalidSubset(format!(
                    "member {m} outside 1..={d}"
                )));
            }
            let bit = 1u32 << (m - 1);
            if mask & bit != 0 {
                return Err(Error::InvalidSubset(format!("duplicate member {m}")));
            }
            mask |= bit;
        }
        Ok(Self { d, mask })
    }

    pub fn empty(d: usize) -> Self {
        Self { d, mask: 0 }
    }

    pub fn from_mask(d: usize, mask: u32) -> Result<Self> {
        check_dim(d)?;
        if mask & !full_mask(d) != 0 {
            return Err(Error::InvalidSubset(format!(
                "mask {mask:#x} has members beyond {d}"
            )));
        }
        Ok(Self { d, mask })
    }

    pub(crate) fn from_mask_unchecked(d: usize, mask: u32) -> Self {
        Self { d, mask }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn mask(&self) -> u32 {
        self.mask
    }

    pub fn len(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.mask == 0
    }

    pub fn contains(&self, member: usize) -> bool {
        member >= 1 && member <= self.d && self.mask & (1 << (member - 1)) != 0
    }

    /// Sorted 1-based members.
    pub fn members(&self) -> Vec<usize> {
        (1..=self.d).filter(|&j| self.contains(j)).collect()
    }

    pub fn is_subset_of(&self, other: &SubsetIndex) -> bool {
        self.mask & !other.mask == 0
    }
}

impl Ord for SubsetIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.len()
            .cmp(&other.len())
            .then_with(|| lex_cmp(self.mask, other.mask))
            .then_with(|| self.d.cmp(&other.d))
    }
}

impl PartialOrd for SubsetIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for SubsetIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for SubsetIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, m) in self.members().iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{m}")?;
        }
        f.write_str("}")
    }
}

/// Lexicographic comparison of two equal-size member lists encoded as masks.
fn lex_cmp(a: u32, b: u32) -> Ordering {
    let (mut a, mut b) = (a, b);
    while a != 0 && b != 0 {
        let (la, lb) = (a.trailing_zeros(), b.trailing_zeros());
        if la != lb {
            return la.cmp(&lb);
        }
        a &= a - 1;
        b &= b - 1;
    }
    // a shorter list is a prefix and sorts first
    (a != 0).cmp(&(b != 0))
}

pub(crate) fn check_dim(d: usize) -> Result<()> {
    if d == 0 || d > MAX_DIM {
        return Err(Error::DimensionTooLarge { d, max: MAX_DIM });
    }
    Ok(())
}

pub(crate) fn full_mask(d: usize) -> u32 {
    if d >= 32 {
        u32::MAX
    } else {
        (1u32 << d) - 1
    }
}

/// Exact binomial coefficient; `None` on overflow.
pub fn binomial(n: u64, k: u64) -> Option<u64> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return None;
        }
    }
    Some(acc as u64)
}

/// All `size`-subsets of `{1..d}` in lexicographic order, as masks.
pub(crate) fn combinations(d: usize, size: usize) -> Vec<u32> {
    let mut out = Vec::new();
    if size > d {
        return out;
    }
    let mut idx: Vec<usize> = (0..size).collect();
    loop {
        out.push(idx.iter().fold(0u32, |m, &i| m | (1 << i)));
        let mut i = size;
        while i > 0 && idx[i - 1] == i - 1 + d - size {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..size {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// The even power set `E(D)` in canonical order (starting with `∅`).
pub fn even_power_set(d: usize) -> Vec<SubsetIndex> {
    (0..=d)
        .step_by(2)
        .flat_map(|c| combinations(d, c))
        .map(|m| SubsetIndex::from_mask_unchecked(d, m))
        .collect()
}

/// The full power set `P(D)` in canonical order.
pub fn power_set(d: usize) -> Vec<SubsetIndex> {
    (0..=d)
        .flat_map(|c| combinations(d, c))
        .map(|m| SubsetIndex::from_mask_unchecked(d, m))
        .collect()
}

/// The label set `{∅, {1,2}, ..., {d-1,d}}`.
pub fn pair_labels(d: usize) -> Vec<SubsetIndex> {
    let mut v = alloc::vec![SubsetIndex::empty(d)];
    v.extend(combinations(d, 2).into_iter().map(|m| SubsetIndex::from_mask_unchecked(d, m)));
    v
}

/// Lexicographic rank of a subset among all subsets of the same size.
fn lex_rank(d: usize, mask: u32) -> usize {
    let size = mask.count_ones() as u64;
    let mut rank = 0u64;
    let mut prev = 0usize; // last member, 1-based; 0 before the first
    let mut i = 0u64;
    let mut m = mask;
    while m != 0 {
        let c = m.trailing_zeros() as usize + 1;
        i += 1;
        for x in prev + 1..c {
            rank += binomial((d - x) as u64, size - i).unwrap_or(0);
        }
        prev = c;
        m &= m - 1;
    }
    rank as usize
}

/// Position of an even-cardinality subset in the canonical ordering of `E(D)`.
pub fn even_rank(subset: &SubsetIndex) -> Option<usize> {
    let size = subset.len();
    if size % 2 != 0 {
        return None;
    }
    let d = subset.d as u64;
    let before: u64 = (0..size as u64)
        .step_by(2)
        .map(|c| binomial(d, c).unwrap_or(0))
        .sum();
    Some(before as usize + lex_rank(subset.d, subset.mask))
}

/// Position of a subset in the canonical ordering of `P(D)`.
pub fn full_rank(subset: &SubsetIndex) -> usize {
    let d = subset.d as u64;
    let before: u64 = (0..subset.len() as u64)
        .map(|c| binomial(d, c).unwrap_or(0))
        .sum();
    before as usize + lex_rank(subset.d, subset.mask)
}

/// A collection of subsets containing `∅`, kept in canonical order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSet {
    d: usize,
    subsets: Vec<SubsetIndex>,
}

impl LabelSet {
    /// Sorts the subsets into canonical order. Fails if `∅` is missing, a
    /// subset is repeated, or a subset belongs to another dimension.
    pub fn new(d: usize, mut subsets: Vec<SubsetIndex>) -> Result<Self> {
        check_dim(d)?;
        if let Some(s) = subsets.iter().find(|s| s.d != d) {
            return Err(Error::InvalidLabelSet(format!(
                "subset {s} has dimension {} but the label set has {d}",
                s.d
            )));
        }
        subsets.sort();
        if subsets.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidLabelSet("duplicate subsets".into()));
        }
        if subsets.first().map_or(true, |s| !s.is_empty()) {
            return Err(Error::InvalidLabelSet("the empty set is missing".into()));
        }
        Ok(Self { d, subsets })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn subsets(&self) -> &[SubsetIndex] {
        &self.subsets
    }

    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    pub fn position(&self, s: &SubsetIndex) -> Option<usize> {
        self.subsets.binary_search(s).ok()
    }

    pub fn contains(&self, s: &SubsetIndex) -> bool {
        self.position(s).is_some()
    }

    pub fn is_even(&self) -> bool {
        self.subsets.iter().all(|s| s.len() % 2 == 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn s(d: usize, m: &[usize]) -> SubsetIndex {
        SubsetIndex::new(d, m).unwrap()
    }

    #[test]
    fn members_are_sorted_and_validated() {
        assert_eq!(s(5, &[4, 2]).members(), vec![2, 4]);
        assert!(SubsetIndex::new(3, &[4]).is_err());
        assert!(SubsetIndex::new(3, &[0]).is_err());
        assert!(SubsetIndex::new(3, &[2, 2]).is_err());
        assert!(s(3, &[]).is_empty());
    }

    #[test]
    fn even_power_set_matches_canonical_row_order() {
        let labels: Vec<Vec<usize>> = even_power_set(4).iter().map(|s| s.members()).collect();
        assert_eq!(
            labels,
            vec![
                vec![],
                vec![1, 2],
                vec![1, 3],
                vec![1, 4],
                vec![2, 3],
                vec![2, 4],
                vec![3, 4],
                vec![1, 2, 3, 4]
            ]
        );
    }

    #[test]
    fn four_sets_are_lexicographic_within_cardinality() {
        let e6 = even_power_set(6);
        let fours: Vec<Vec<usize>> = e6.iter().filter(|s| s.len() == 4).map(|s| s.members()).collect();
        assert_eq!(fours.len(), 15);
        assert_eq!(fours[0], vec![1, 2, 3, 4]);
        assert_eq!(fours[1], vec![1, 2, 3, 5]);
        assert_eq!(fours[9], vec![1, 4, 5, 6]);
        assert_eq!(fours[10], vec![2, 3, 4, 5]);
        assert_eq!(e6.len(), 32);
        assert_eq!(e6.last().unwrap().members(), vec![1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn ranks_agree_with_enumeration() {
        for d in 1..=9 {
            for (i, sub) in even_power_set(d).iter().enumerate() {
                assert_eq!(even_rank(sub), Some(i));
            }
            for (i, sub) in power_set(d).iter().enumerate() {
                assert_eq!(full_rank(sub), i);
            }
        }
        assert_eq!(even_rank(&s(4, &[1, 2, 3])), None);
    }

    #[test]
    fn label_set_requires_empty_and_rejects_duplicates() {
        let d = 4;
        let ls = LabelSet::new(d, vec![s(d, &[3, 4]), SubsetIndex::empty(d), s(d, &[1, 2])]).unwrap();
        assert_eq!(ls.subsets()[0], SubsetIndex::empty(d));
        assert_eq!(ls.subsets()[1], s(d, &[1, 2]));
        assert!(LabelSet::new(d, vec![s(d, &[1, 2])]).is_err());
        assert!(LabelSet::new(d, vec![SubsetIndex::empty(d), s(d, &[1, 2]), s(d, &[2, 1])]).is_err());
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(7, 4), Some(35));
        assert_eq!(binomial(30, 15), Some(155_117_520));
        assert_eq!(binomial(3, 5), Some(0));
    }
}
