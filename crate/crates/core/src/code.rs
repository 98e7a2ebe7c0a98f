//! Binary coding of the extremal copulas.
//!
//! The extremal copula `C^(k)`, `k = 1..2^(d-1)`, is labelled by the `d`-digit
//! binary expansion `s_k` of `k - 1` (most significant digit first). The
//! leading digit is always 0; a pattern and its complement describe the same
//! diagonal, so arbitrary patterns are flipped into leading-zero form first.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::subset::{check_dim, full_mask, SubsetIndex};

/// Binary code `s_k` of the extremal copula `C^(k)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExtremalCode {
    pub k: usize,
    pub bits: Vec<u8>,
    /// `J_k`: the 1-based positions of the zero digits.
    pub index_set: SubsetIndex,
}

/// Number of extremal copulas in dimension `d`.
pub fn num_extremal(d: usize) -> usize {
    1usize << (d - 1)
}

pub fn binary_code(k: usize, d: usize) -> Result<ExtremalCode> {
    if d < 2 {
        return Err(Error::OutOfRange(format!("dimension {d} must be at least 2")));
    }
    check_dim(d)?;
    if k == 0 || k > num_extremal(d) {
        return Err(Error::OutOfRange(format!(
            "k = {k} outside 1..={}",
            num_extremal(d)
        )));
    }
    let ones = ones_mask(k, d);
    let bits = (0..d).map(|j| ((ones >> j) & 1) as u8).collect();
    let index_set = SubsetIndex::from_mask_unchecked(d, !ones & full_mask(d));
    Ok(ExtremalCode { k, bits, index_set })
}

/// Inverse of [`binary_code`] under the identification `s ~ 1 - s`.
pub fn canonical_index(bits: &[u8]) -> Result<usize> {
    let d = bits.len();
    if d < 2 {
        return Err(Error::InvalidBits(format!("need at least 2 digits, got {d}")));
    }
    check_dim(d)?;
    let mut mask = 0u32;
    for (j, &b) in bits.iter().enumerate() {
        match b {
            0 => {}
            1 => mask |= 1 << j,
            _ => return Err(Error::InvalidBits(format!("digit {b} at position {}", j + 1))),
        }
    }
    Ok(k_from_pattern(mask, d))
}

/// Mask (bit `j-1` for variable `j`) of the positions where `s_k` has a one.
#[inline]
pub fn ones_mask(k: usize, d: usize) -> u32 {
    // s_{k,j} is digit d-j of k-1, so variable j maps to bit d-j of k-1
    reverse_bits((k - 1) as u32, d)
}

/// Index `k` of the diagonal described by a 0/1 pattern in mask form.
#[inline]
pub fn k_from_pattern(mask: u32, d: usize) -> usize {
    let m = if mask & 1 != 0 { !mask & full_mask(d) } else { mask };
    reverse_bits(m, d) as usize + 1
}

#[inline]
fn reverse_bits(x: u32, d: usize) -> u32 {
    x.reverse_bits() >> (32 - d)
}

/// `a_{I,k}`: 1 if `I ⊆ J_k` or `I ⊆ J_k^c`.
#[inline]
pub fn coefficient(subset_mask: u32, ones: u32) -> bool {
    let hit = ones & subset_mask;
    hit == 0 || hit == subset_mask
}

/// Masks `ones_mask(k, d)` for every `k`, in order.
pub fn all_ones_masks(d: usize) -> Vec<u32> {
    (1..=num_extremal(d)).map(|k| ones_mask(k, d)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn known_codes() {
        let c1 = binary_code(1, 4).unwrap();
        assert_eq!(c1.bits, vec![0, 0, 0, 0]);
        assert_eq!(c1.index_set.members(), vec![1, 2, 3, 4]);
        let c8 = binary_code(8, 4).unwrap();
        assert_eq!(c8.bits, vec![0, 1, 1, 1]);
        assert_eq!(c8.index_set.members(), vec![1]);
        assert_eq!(binary_code(2, 4).unwrap().bits, vec![0, 0, 0, 1]);
        assert_eq!(binary_code(5, 4).unwrap().bits, vec![0, 1, 0, 0]);
        assert_eq!(binary_code(1, 2).unwrap().bits, vec![0, 0]);
    }

    #[test]
    fn out_of_range() {
        assert!(binary_code(0, 3).is_err());
        assert!(binary_code(5, 3).is_err());
        assert!(binary_code(1, 1).is_err());
        assert!(canonical_index(&[0, 2, 1]).is_err());
    }

    #[test]
    fn canonical_index_flips_leading_one() {
        assert_eq!(canonical_index(&[1, 0, 1, 1]).unwrap(), 5);
        assert_eq!(canonical_index(&[0, 0, 0, 0]).unwrap(), 1);
        assert_eq!(canonical_index(&[0, 1, 1, 1]).unwrap(), 8);
        assert_eq!(canonical_index(&[1, 1, 1, 1]).unwrap(), 1);
    }

    #[test]
    fn round_trip_all_codes() {
        for d in 2..=12 {
            for k in 1..=num_extremal(d) {
                let c = binary_code(k, d).unwrap();
                assert_eq!(c.bits[0], 0);
                assert_eq!(canonical_index(&c.bits).unwrap(), k);
                let flipped: Vec<u8> = c.bits.iter().map(|b| 1 - b).collect();
                assert_eq!(canonical_index(&flipped).unwrap(), k);
                // decimal value of the digits is k-1
                let v = c.bits.iter().fold(0usize, |acc, &b| 2 * acc + b as usize);
                assert_eq!(v + 1, k);
            }
        }
    }
}
