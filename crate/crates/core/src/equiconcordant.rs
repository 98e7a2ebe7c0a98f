//! Equiconcordant copulas and skeletal signatures.
//!
//! When `κ_I` depends on `|I|` only, the weight system collapses onto groups
//! of extremal copulas sharing a comonotonic number
//! `η_k = max(|J_k|, |J_k^c|)`. Group weights `v` then solve the small square
//! system `k = B_d v` with exact rational coefficients.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_rational::Ratio;

use crate::code::{num_extremal, ones_mask};
use crate::error::{Error, Result};
use crate::signature::{EvenSignature, MixtureWeights, NEG_TOL};
use crate::subset::{binomial, even_power_set};

/// Largest dimension with exact binomial arithmetic.
pub const MAX_EXACT_DIM: usize = 30;

fn check_d(d: usize) -> Result<()> {
    if d < 2 {
        return Err(Error::OutOfRange(format!("dimension {d} must be at least 2")));
    }
    if d > MAX_EXACT_DIM {
        return Err(Error::DimensionTooLarge { d, max: MAX_EXACT_DIM });
    }
    Ok(())
}

/// Number of distinct comonotonic numbers, `1 + ⌊d/2⌋`.
pub fn group_count(d: usize) -> usize {
    1 + d / 2
}

/// Comonotonic numbers per `k`, their distinct values and multiplicities.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComonotonicProfile {
    pub d: usize,
    pub eta: Vec<usize>,
    /// `(d, d-1, ..., ⌈d/2⌉)`.
    pub h: Vec<usize>,
    pub mu: Vec<u64>,
}

impl ComonotonicProfile {
    /// Group (0-based position in `h`) of the extremal copula `k`.
    pub fn group_of(&self, k: usize) -> usize {
        self.d - self.eta[k - 1]
    }
}

pub fn comonotonic_number(k: usize, d: usize) -> usize {
    let ones = ones_mask(k, d).count_ones() as usize;
    ones.max(d - ones)
}

pub fn comonotonic_profile(d: usize) -> Result<ComonotonicProfile> {
    check_d(d)?;
    if d > crate::signature::TRANSFORM_MAX_DIM {
        return Err(Error::DimensionTooLarge { d, max: crate::signature::TRANSFORM_MAX_DIM });
    }
    let eta = (1..=num_extremal(d)).map(|k| comonotonic_number(k, d)).collect();
    let h: Vec<usize> = (0..group_count(d)).map(|i| d - i).collect();
    let mu = h.iter().map(|&hi| multiplicity(d, hi)).collect();
    Ok(ComonotonicProfile { d, eta, h, mu })
}

fn multiplicity(d: usize, h: usize) -> u64 {
    let c = binomial(d as u64, h as u64).expect("d within exact range");
    if 2 * h == d {
        c / 2
    } else {
        c
    }
}

fn binom_i64(n: i64, p: i64) -> i64 {
    if p < 0 || n < 0 || p > n {
        0
    } else {
        binomial(n as u64, p as u64).expect("d within exact range") as i64
    }
}

/// The matrix `B_d` with exact rational entries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BMatrix {
    pub d: usize,
    pub entries: Vec<Vec<Ratio<i64>>>,
}

impl BMatrix {
    pub fn size(&self) -> usize {
        self.entries.len()
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        let m = self.size();
        DMatrix::from_fn(m, m, |i, j| {
            let r = self.entries[i][j];
            *r.numer() as f64 / *r.denom() as f64
        })
    }
}

pub fn build_b_matrix(d: usize) -> Result<BMatrix> {
    check_d(d)?;
    let m = group_count(d);
    let dd = d as i64;
    let h: Vec<i64> = (0..m).map(|i| dd - i as i64).collect();
    let mut entries = vec![vec![Ratio::from_integer(1); m]; m];
    for (i, row) in entries.iter_mut().enumerate().skip(1) {
        let l = 2 * i as i64;
        for (j, e) in row.iter_mut().enumerate() {
            let num = binom_i64(dd - l, h[j] - l) + binom_i64(dd - l, dd - h[j] - l);
            *e = Ratio::new(num, binom_i64(dd, h[j]));
        }
    }
    Ok(BMatrix { d, entries })
}

/// `(κ_0, κ_2, ..., κ_{2⌊d/2⌋})` with `κ_0 = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct SkeletalSignature {
    d: usize,
    k: Vec<f64>,
}

impl SkeletalSignature {
    pub fn new(d: usize, k: Vec<f64>) -> Result<Self> {
        check_d(d)?;
        if k.len() != group_count(d) {
            return Err(Error::InvalidSignature(format!(
                "expected {} skeletal values for d = {d}, got {}",
                group_count(d),
                k.len()
            )));
        }
        if (k[0] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidSignature(format!("κ_0 must be 1, got {}", k[0])));
        }
        if let Some(v) = k.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
            return Err(Error::InvalidSignature(format!("value {v} outside [0, 1]")));
        }
        Ok(Self { d, k })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[f64] {
        &self.k
    }

    /// Averages an even signature over subsets of equal size.
    pub fn from_signature(kappa: &EvenSignature) -> Self {
        Self { d: kappa.d(), k: skeleton_of(kappa) }
    }

    /// Expands into the even signature that is constant on each cardinality.
    pub fn to_even(&self) -> Result<EvenSignature> {
        let values = even_power_set(self.d).iter().map(|s| self.k[s.len() / 2]).collect();
        EvenSignature::new(self.d, values)
    }
}

/// Mean of the entries of each cardinality `0, 2, 4, ...`.
pub fn skeleton_of(kappa: &EvenSignature) -> Vec<f64> {
    let d = kappa.d();
    let mut sums = vec![0.0; group_count(d)];
    let mut counts = vec![0usize; group_count(d)];
    for (s, v) in even_power_set(d).iter().zip(kappa.values()) {
        sums[s.len() / 2] += v;
        counts[s.len() / 2] += 1;
    }
    sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect()
}

/// Solution of `k = B_d v`.
#[derive(Clone, Debug, PartialEq)]
pub struct SkeletalSolution {
    /// Group weights; clamped and renormalized when attainable.
    pub v: Vec<f64>,
    /// The unmodified solution.
    pub raw: Vec<f64>,
    pub attainable: bool,
}

pub fn skeletal_solve(k: &SkeletalSignature) -> Result<SkeletalSolution> {
    let b = build_b_matrix(k.d)?.to_dmatrix();
    let rhs = DVector::from_column_slice(&k.k);
    let raw: Vec<f64> = b
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NumericalFailure("B matrix is singular".into()))?
        .iter()
        .copied()
        .collect();
    let attainable = raw.iter().all(|&x| x >= -NEG_TOL);
    let v = if attainable {
        let mut v: Vec<f64> = raw.iter().map(|x| x.max(0.0)).collect();
        let t: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= t);
        v
    } else {
        raw.clone()
    };
    Ok(SkeletalSolution { v, raw, attainable })
}

/// Spreads each group weight evenly over the group: `w_k = v_i / μ_i`.
pub fn expand_skeletal(v: &[f64], d: usize) -> Result<MixtureWeights> {
    let profile = comonotonic_profile(d)?;
    if v.len() != profile.h.len() {
        return Err(Error::InvalidWeights(format!(
            "expected {} group weights for d = {d}, got {}",
            profile.h.len(),
            v.len()
        )));
    }
    if let Some(x) = v.iter().find(|x| !(**x >= -NEG_TOL)) {
        return Err(Error::InvalidWeights(format!("group weight {x} is negative")));
    }
    let total: f64 = v.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidWeights(format!("group weights sum to {total}")));
    }
    let w = (1..=num_extremal(d))
        .map(|k| {
            let g = profile.group_of(k);
            v[g].max(0.0) / profile.mu[g] as f64
        })
        .collect();
    MixtureWeights::new(d, w)
}

/// Whether `κ_I` depends on `|I|` only, up to `tol`.
pub fn is_equiconcordant(kappa: &EvenSignature, tol: f64) -> bool {
    let d = kappa.d();
    let mut first: Vec<Option<f64>> = vec![None; group_count(d)];
    for (s, &v) in even_power_set(d).iter().zip(kappa.values()) {
        match first[s.len() / 2] {
            None => first[s.len() / 2] = Some(v),
            Some(f) if (f - v).abs() > tol => return false,
            Some(_) => {}
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signature::{build_a_matrix, signature_from_weights};
    use crate::subset::SubsetIndex;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn r(n: i64, d: i64) -> Ratio<i64> {
        Ratio::new(n, d)
    }

    #[test]
    fn profiles() {
        let p = comonotonic_profile(4).unwrap();
        assert_eq!(p.eta, vec![4, 3, 3, 2, 3, 2, 2, 3]);
        assert_eq!(p.h, vec![4, 3, 2]);
        assert_eq!(p.mu, vec![1, 4, 3]);
        let p = comonotonic_profile(2).unwrap();
        assert_eq!((p.h, p.mu), (vec![2, 1], vec![1, 1]));
        let p = comonotonic_profile(7).unwrap();
        assert_eq!((p.h, p.mu), (vec![7, 6, 5, 4], vec![1, 7, 21, 35]));
        for d in 2..=12 {
            let p = comonotonic_profile(d).unwrap();
            assert_eq!(p.mu.iter().sum::<u64>(), num_extremal(d) as u64);
            for (g, &m) in p.mu.iter().enumerate() {
                let members = (1..=num_extremal(d)).filter(|&k| p.group_of(k) == g).count();
                assert_eq!(members as u64, m);
            }
        }
    }

    #[test]
    fn b7_exact_entries() {
        let b = build_b_matrix(7).unwrap();
        let expected = [
            [r(1, 1), r(1, 1), r(1, 1), r(1, 1)],
            [r(1, 1), r(5, 7), r(11, 21), r(15, 35)],
            [r(1, 1), r(3, 7), r(3, 21), r(1, 35)],
            [r(1, 1), r(1, 7), r(0, 1), r(0, 1)],
        ];
        for (row, e) in b.entries.iter().zip(expected) {
            assert_eq!(row.as_slice(), e.as_slice());
        }
    }

    #[test]
    fn small_b_matrices() {
        let b = build_b_matrix(4).unwrap();
        assert_eq!(b.entries, vec![
            vec![r(1, 1), r(1, 1), r(1, 1)],
            vec![r(1, 1), r(1, 2), r(1, 3)],
            vec![r(1, 1), r(0, 1), r(0, 1)],
        ]);
        let b = build_b_matrix(2).unwrap();
        assert_eq!(b.entries, vec![vec![r(1, 1), r(1, 1)], vec![r(1, 1), r(0, 1)]]);
        assert!(build_b_matrix(31).is_err());
        assert!(build_b_matrix(30).is_ok());
    }

    /// Averages the columns of `A_d` within each group and keeps one row per
    /// cardinality.
    fn b_oracle(d: usize) -> Vec<Vec<f64>> {
        let a = build_a_matrix(d).unwrap();
        let p = comonotonic_profile(d).unwrap();
        let m = group_count(d);
        let rows = even_power_set(d);
        let mut out = vec![vec![0.0; m]; m];
        for (i, s) in rows.iter().enumerate() {
            let c = s.len() / 2;
            let mut avg = vec![0.0; m];
            for k in 1..=num_extremal(d) {
                avg[p.group_of(k)] += a.get(i, k - 1) as f64 / p.mu[p.group_of(k)] as f64;
            }
            // every row of the same cardinality gives the same averages
            if rows.iter().position(|t| t.len() == s.len()) == Some(i) {
                out[c] = avg;
            } else {
                assert!(out[c].iter().zip(&avg).all(|(x, y)| (x - y).abs() < 1e-12));
            }
        }
        out
    }

    #[test]
    fn b_matches_group_averages() {
        for d in 2..=8 {
            let b = build_b_matrix(d).unwrap().to_dmatrix();
            let o = b_oracle(d);
            for i in 0..b.nrows() {
                for j in 0..b.ncols() {
                    assert!((b[(i, j)] - o[i][j]).abs() < 1e-12, "d={d} ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn skeletal_examples() {
        let k = SkeletalSignature::new(4, vec![1.0, 2.0 / 3.0, 0.4]).unwrap();
        let s = skeletal_solve(&k).unwrap();
        assert!(s.attainable);
        for (a, b) in s.v.iter().zip([0.4, 0.4, 0.2]) {
            assert!((a - b).abs() < 1e-12);
        }
        let w = expand_skeletal(&s.v, 4).unwrap();
        let third = 0.2 / 3.0;
        let expected = [0.4, 0.1, 0.1, third, 0.1, third, third, 0.1];
        for (a, b) in w.as_slice().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        let s = skeletal_solve(&SkeletalSignature::new(4, vec![1.0, 0.4, 0.4]).unwrap()).unwrap();
        assert!(!s.attainable);
        assert!((s.raw[1] + 1.2).abs() < 1e-12);
        for d in 2..=9 {
            let s = skeletal_solve(&SkeletalSignature::new(d, vec![1.0; group_count(d)]).unwrap()).unwrap();
            assert!((s.v[0] - 1.0).abs() < 1e-12);
            assert!(s.v[1..].iter().all(|x| x.abs() < 1e-12));
        }
        let w = expand_skeletal(&[0.5, 0.5], 2).unwrap();
        assert_eq!(w.as_slice(), &[0.5, 0.5]);
        let w = expand_skeletal(&[1.0, 0.0, 0.0], 4).unwrap();
        assert_eq!(w.as_slice(), MixtureWeights::unit(4, 1).as_slice());
        assert!(expand_skeletal(&[0.5, 0.6, -0.1], 4).is_err());
    }

    #[test]
    fn equiconcordance_checks() {
        let crypto = EvenSignature::new(4, vec![1.0, 0.639, 0.666, 0.598, 0.681, 0.630, 0.661, 0.364]).unwrap();
        assert!(!is_equiconcordant(&crypto, 1e-9));
        assert!(is_equiconcordant(&EvenSignature::comonotone(6), 0.0));
    }

    fn random_group_weights(m: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut v: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
        let t: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= t);
        v
    }

    #[test]
    fn expansion_round_trip_and_exchangeability() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 0..60 {
            let d = 2 + i % 7;
            let v = random_group_weights(group_count(d), &mut rng);
            let w = expand_skeletal(&v, d).unwrap();
            let kappa = signature_from_weights(&w);
            assert!(is_equiconcordant(&kappa, 1e-12));
            let sol = skeletal_solve(&SkeletalSignature::from_signature(&kappa)).unwrap();
            assert!(sol.attainable);
            for (a, b) in sol.v.iter().zip(&v) {
                assert!((a - b).abs() < 1e-9);
            }
            // relabelling the variables leaves every entry unchanged
            let full = crate::signature::full_signature_from_weights(&w);
            let perm: Vec<usize> = {
                let mut p: Vec<usize> = (1..=d).collect();
                for j in (1..d).rev() {
                    p.swap(j, rng.random_range(0..=j));
                }
                p
            };
            for s in full.labels() {
                let image: Vec<usize> = s.members().iter().map(|&m| perm[m - 1]).collect();
                let t = SubsetIndex::new(d, &image).unwrap();
                assert!((full.get(&s).unwrap() - full.get(&t).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn equiconcordant_window_for_d4() {
        // pairs-only skeleton (1, κ_2, κ_4) is attainable iff
        // max(2κ_2 - 1, 0) ≤ κ_4 ≤ (3κ_2 - 1)/2, which needs κ_2 ≥ 1/3
        for &k2 in &[0.2, 0.3, 0.33] {
            for j in 0..=20 {
                let k4 = j as f64 / 20.0;
                let s = skeletal_solve(&SkeletalSignature::new(4, vec![1.0, k2, k4]).unwrap()).unwrap();
                assert!(!s.attainable, "κ2={k2} κ4={k4}");
            }
        }
        let s = skeletal_solve(&SkeletalSignature::new(4, vec![1.0, 1.0 / 3.0, 0.0]).unwrap()).unwrap();
        assert!(s.attainable);
    }
}
