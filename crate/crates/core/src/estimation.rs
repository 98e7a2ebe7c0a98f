//! Empirical concordance signatures.
//!
//! Every unordered pair of observations `(X_i, X_j)` yields the binary vector
//! `Y_ij` with `Y_l = 1` iff `X_il > X_jl`. Counting the diagonals hit by the
//! canonical forms of these vectors gives weights `ŵ_k`, and the extremal
//! mixture with these weights has exactly the empirical U-statistic
//! signature. The estimate is therefore always attainable.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;

use crate::code::{k_from_pattern, num_extremal};
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::signature::{full_signature_from_weights, signature_from_weights, FullSignature, MixtureWeights};
use crate::subset::check_dim;

/// `n × d` table of observations, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleMatrix {
    n: usize,
    d: usize,
    values: Vec<f64>,
    names: Option<Vec<String>>,
}

impl SampleMatrix {
    pub fn new(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidMatrix(format!("need at least 2 columns, got {d}")));
        }
        check_dim(d)?;
        if values.len() != n * d {
            return Err(Error::InvalidMatrix(format!(
                "{} values do not fill a {n}x{d} table",
                values.len()
            )));
        }
        if let Some(p) = values.iter().position(|v| v.is_nan()) {
            return Err(Error::InvalidMatrix(format!(
                "NaN at row {}, column {}",
                p / d + 1,
                p % d + 1
            )));
        }
        Ok(Self { n, d, values, names: None })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, |r| r.len());
        if let Some(i) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::InvalidMatrix(format!(
                "row {} has {} entries, expected {d}",
                i + 1,
                rows[i].len()
            )));
        }
        Self::new(rows.len(), d, rows.concat())
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.d {
            return Err(Error::InvalidMatrix(format!(
                "{} column names for {} columns",
                names.len(),
                self.d
            )));
        }
        self.names = Some(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.values[i * self.d + j]).collect()
    }

    /// First column (0-based) containing two equal values, if any.
    pub fn first_tied_column(&self) -> Option<usize> {
        (0..self.d).find(|&j| {
            let mut col = self.column(j);
            col.sort_by(f64::total_cmp);
            col.windows(2).any(|w| w[0] == w[1])
        })
    }

    /// Maps row `t` to `ln(x_t / x_(t-1))`, dropping the first row.
    pub fn log_returns(&self) -> Result<SampleMatrix> {
        for (p, &v) in self.values.iter().enumerate() {
            if !(v > 0.0) {
                return Err(Error::NonPositivePrice { row: p / self.d + 1, column: p % self.d + 1, value: v });
            }
        }
        let mut out = Vec::with_capacity(self.n.saturating_sub(1) * self.d);
        for t in 1..self.n {
            for j in 0..self.d {
                out.push(libm::log(self.values[t * self.d + j] / self.values[(t - 1) * self.d + j]));
            }
        }
        Ok(SampleMatrix { n: self.n.saturating_sub(1), d: self.d, values: out, names: self.names.clone() })
    }

    pub fn select_rows(&self, rows: &[usize]) -> SampleMatrix {
        let mut values = Vec::with_capacity(rows.len() * self.d);
        for &i in rows {
            values.extend_from_slice(self.row(i));
        }
        SampleMatrix { n: rows.len(), d: self.d, values, names: self.names.clone() }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Result<SampleMatrix> {
        if let Some(&c) = cols.iter().find(|&&c| c >= self.d) {
            return Err(Error::InvalidMatrix(format!("column {} does not exist", c + 1)));
        }
        let mut values = Vec::with_capacity(self.n * cols.len());
        for i in 0..self.n {
            values.extend(cols.iter().map(|&c| self.values[i * self.d + c]));
        }
        let m = SampleMatrix::new(self.n, cols.len(), values)?;
        match &self.names {
            Some(names) => m.with_names(cols.iter().map(|&c| names[c].clone()).collect()),
            None => Ok(m),
        }
    }
}

/// Result of the estimators.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalSignature {
    pub full: FullSignature,
    pub weights: MixtureWeights,
    pub n: usize,
    pub n_pairs: u64,
    pub tie_adjusted: bool,
    /// Number of pairs (possibly fractional under tie splitting) per diagonal.
    pub counts: Vec<f64>,
}

fn check_rows(data: &SampleMatrix) -> Result<()> {
    if data.n < 2 {
        return Err(Error::TooFewRows { n: data.n, required: 2 });
    }
    Ok(())
}

/// Diagonal counts for the pairs `(i, j)`, `i` in `rows`, `j > i`.
///
/// With `split_ties`, a pair tied in `m` coordinates spreads weight `2^-m`
/// over each binary resolution; otherwise ties are an error.
pub fn accumulate_pairs(data: &SampleMatrix, rows: Range<usize>, split_ties: bool) -> Result<Vec<f64>> {
    let d = data.d;
    if data.first_tied_column().is_none() {
        return Ok(accumulate_untied(data, rows));
    }
    let mut counts = vec![0.0; num_extremal(d)];
    let mut tied: Vec<usize> = Vec::with_capacity(d);
    for i in rows {
        let xi = data.row(i);
        for j in i + 1..data.n {
            let xj = data.row(j);
            let mut mask = 0u32;
            tied.clear();
            for l in 0..d {
                if xi[l] > xj[l] {
                    mask |= 1 << l;
                } else if xi[l] == xj[l] {
                    tied.push(l);
                }
            }
            if tied.is_empty() {
                counts[k_from_pattern(mask, d) - 1] += 1.0;
            } else if !split_ties {
                return Err(Error::TiesPresent { column: tied[0] + 1 });
            } else {
                split_pair(&mut counts, mask, &tied, d);
            }
        }
    }
    Ok(counts)
}

fn accumulate_untied(data: &SampleMatrix, rows: Range<usize>) -> Vec<f64> {
    let d = data.d;
    let mut hist = vec![0u64; 1 << d];
    for i in rows {
        let xi = data.row(i);
        for xj in data.values[(i + 1) * d..].chunks_exact(d) {
            let mask = xi.iter().zip(xj).enumerate().fold(0usize, |m, (l, (a, b))| m | (usize::from(a > b) << l));
            hist[mask] += 1;
        }
    }
    let mut counts = vec![0.0; num_extremal(d)];
    for (mask, &c) in hist.iter().enumerate() {
        counts[k_from_pattern(mask as u32, d) - 1] += c as f64;
    }
    counts
}

fn split_pair(counts: &mut [f64], base: u32, tied: &[usize], d: usize) {
    let m = tied.len();
    let share = libm::exp2(-(m as f64));
    for r in 0..(1u64 << m) {
        let mut mask = base;
        for (b, &l) in tied.iter().enumerate() {
            if r & (1 << b) != 0 {
                mask |= 1 << l;
            }
        }
        counts[k_from_pattern(mask, d) - 1] += share;
    }
}

/// Builds the estimate from diagonal counts over `n_pairs` pairs.
pub fn signature_from_counts(
    d: usize,
    n: usize,
    n_pairs: u64,
    counts: Vec<f64>,
    tie_adjusted: bool,
) -> EmpiricalSignature {
    let total = n_pairs as f64;
    let w: Vec<f64> = counts.iter().map(|c| c / total).collect();
    let weights = MixtureWeights::from_raw(d, w);
    EmpiricalSignature { full: full_signature_from_weights(&weights), weights, n, n_pairs, tie_adjusted, counts }
}

fn n_pairs(n: usize) -> u64 {
    n as u64 * (n as u64 - 1) / 2
}

pub fn empirical_signature(data: &SampleMatrix) -> Result<EmpiricalSignature> {
    check_rows(data)?;
    if let Some(c) = data.first_tied_column() {
        return Err(Error::TiesPresent { column: c + 1 });
    }
    let counts = accumulate_pairs(data, 0..data.n, false)?;
    Ok(signature_from_counts(data.d, data.n, n_pairs(data.n), counts, false))
}

pub fn empirical_signature_ties(data: &SampleMatrix) -> Result<EmpiricalSignature> {
    check_rows(data)?;
    let tie_adjusted = data.first_tied_column().is_some();
    let counts = accumulate_pairs(data, 0..data.n, true)?;
    Ok(signature_from_counts(data.d, data.n, n_pairs(data.n), counts, tie_adjusted))
}

/// Even signature of one bootstrap resample. Pairs of copies of the same
/// observation carry no ordering information and are skipped.
pub fn bootstrap_replicate(data: &SampleMatrix, seed: u64, replicate: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, replicate);
    let n = data.n;
    let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    let d = data.d;
    let mut counts = vec![0.0; num_extremal(d)];
    let mut tied: Vec<usize> = Vec::with_capacity(d);
    let mut pairs = 0u64;
    for a in 0..n {
        let xi = data.row(idx[a]);
        for b in a + 1..n {
            if idx[a] == idx[b] {
                continue;
            }
            pairs += 1;
            let xj = data.row(idx[b]);
            let mut mask = 0u32;
            tied.clear();
            for l in 0..d {
                if xi[l] > xj[l] {
                    mask |= 1 << l;
                } else if xi[l] == xj[l] {
                    tied.push(l);
                }
            }
            if tied.is_empty() {
                counts[k_from_pattern(mask, d) - 1] += 1.0;
            } else {
                split_pair(&mut counts, mask, &tied, d);
            }
        }
    }
    let total = pairs.max(1) as f64;
    let w = MixtureWeights::from_raw(d, counts.into_iter().map(|c| c / total).collect());
    signature_from_weights(&w).into_values()
}

/// Standard deviation of each even-signature entry over bootstrap replicates.
pub fn std_errors_from_replicates(replicates: &[Vec<f64>]) -> Vec<f64> {
    let b = replicates.len();
    if b < 2 {
        return replicates.first().map_or(Vec::new(), |r| vec![0.0; r.len()]);
    }
    let len = replicates[0].len();
    (0..len)
        .map(|i| {
            let mean = replicates.iter().map(|r| r[i]).sum::<f64>() / b as f64;
            let var = replicates.iter().map(|r| (r[i] - mean) * (r[i] - mean)).sum::<f64>() / (b - 1) as f64;
            libm::sqrt(var)
        })
        .collect()
}

/// Bootstrap standard errors of the even signature (sequential driver).
pub fn bootstrap_std_errors(data: &SampleMatrix, resamples: usize, seed: u64) -> Result<Vec<f64>> {
    check_rows(data)?;
    let reps: Vec<Vec<f64>> = (0..resamples as u64).map(|b| bootstrap_replicate(data, seed, b)).collect();
    Ok(std_errors_from_replicates(&reps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::{coefficient, ones_mask};
    use crate::subset::{power_set, SubsetIndex};
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn kappa(e: &EmpiricalSignature, m: &[usize]) -> f64 {
        e.full.get(&SubsetIndex::new(e.full.d(), m).unwrap()).unwrap()
    }

    #[test]
    fn single_concordant_pair() {
        let data = SampleMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let e = empirical_signature(&data).unwrap();
        assert_eq!(kappa(&e, &[1, 2]), 1.0);
        assert_eq!(e.weights.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn three_rows_by_hand() {
        let data = SampleMatrix::from_rows(&[vec![1.0, 1.0], vec![2.0, 3.0], vec![3.0, 2.0]]).unwrap();
        let e = empirical_signature(&data).unwrap();
        assert!((kappa(&e, &[1, 2]) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(e.n_pairs, 3);
    }

    #[test]
    fn flip_rule_in_three_dimensions() {
        let data = SampleMatrix::from_rows(&[vec![1.0, 1.0, 1.0], vec![2.0, 2.0, 0.0]]).unwrap();
        let e = empirical_signature(&data).unwrap();
        assert_eq!(e.weights.as_slice(), &[0.0, 1.0, 0.0, 0.0]);
        let even = e.full.to_even();
        assert_eq!(even.values(), &[1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn ties_are_detected_and_split() {
        let data = SampleMatrix::from_rows(&[vec![1.0, 5.0], vec![1.0, 7.0]]).unwrap();
        assert!(matches!(empirical_signature(&data), Err(Error::TiesPresent { column: 1 })));
        let e = empirical_signature_ties(&data).unwrap();
        assert_eq!(e.weights.as_slice(), &[0.5, 0.5]);
        assert_eq!(kappa(&e, &[1, 2]), 0.5);
        assert!(e.tie_adjusted);
    }

    #[test]
    fn tie_resolutions_follow_the_half_rule() {
        // pair with Y = (1, 0, ½, ½)
        let data = SampleMatrix::from_rows(&[vec![2.0, 0.0, 3.0, 3.0], vec![1.0, 1.0, 3.0, 3.0]]).unwrap();
        let e = empirical_signature_ties(&data).unwrap();
        let mut expected = vec![0.0; 8];
        for bits in [[1u8, 0, 1, 1], [1, 0, 1, 0], [1, 0, 0, 1], [1, 0, 0, 0]] {
            expected[crate::code::canonical_index(&bits).unwrap() - 1] += 0.25;
        }
        assert_eq!(e.weights.as_slice(), expected.as_slice());
    }

    #[test]
    fn tie_free_data_match_plain_estimator() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<Vec<f64>> = (0..30).map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect();
        let data = SampleMatrix::from_rows(&rows).unwrap();
        let a = empirical_signature(&data).unwrap();
        let b = empirical_signature_ties(&data).unwrap();
        assert_eq!(a.weights, b.weights);
        assert!(!b.tie_adjusted);
    }

    #[test]
    fn too_few_rows() {
        let data = SampleMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(matches!(empirical_signature(&data), Err(Error::TooFewRows { .. })));
        assert!(matches!(empirical_signature_ties(&data), Err(Error::TooFewRows { .. })));
    }

    #[test]
    fn log_returns_by_hand() {
        let e = core::f64::consts::E;
        let p = SampleMatrix::from_rows(&[vec![1.0, 1.0], vec![e, e], vec![e, e * e]]).unwrap();
        let r = p.log_returns().unwrap();
        assert_eq!(r.n(), 2);
        let expected = [1.0, 1.0, 0.0, 1.0];
        for (a, b) in r.values().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        let bad = SampleMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(bad.log_returns(), Err(Error::NonPositivePrice { row: 1, column: 2, .. })));
    }

    /// Exact U-statistic identity on integer pair counts.
    #[test]
    fn u_statistic_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for case in 0..50 {
            let d = 2 + case % 4;
            let n = 2 + rng.random_range(0..39);
            let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
            let data = SampleMatrix::from_rows(&rows).unwrap();
            let e = empirical_signature(&data).unwrap();
            for s in power_set(d) {
                if s.len() < 2 {
                    continue;
                }
                // Σ_{i≠j} Π_{l∈I} 1{X_il ≤ X_jl}
                let mut direct = 0u64;
                for i in 0..n {
                    for j in 0..n {
                        if i != j && s.members().iter().all(|&l| rows[i][l - 1] <= rows[j][l - 1]) {
                            direct += 1;
                        }
                    }
                }
                let via_counts: f64 = (1..=num_extremal(d))
                    .filter(|&k| coefficient(s.mask(), ones_mask(k, d)))
                    .map(|k| e.counts[k - 1])
                    .sum();
                assert_eq!(via_counts as u64, direct, "case {case} I={s}");
                let u = 2.0 * direct as f64 / (n * (n - 1)) as f64;
                assert!((e.full.get(&s).unwrap() - u).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn row_order_is_irrelevant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut rows: Vec<Vec<f64>> = (0..25).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let a = empirical_signature(&SampleMatrix::from_rows(&rows).unwrap()).unwrap();
        rows.shuffle(&mut rng);
        let b = empirical_signature(&SampleMatrix::from_rows(&rows).unwrap()).unwrap();
        assert_eq!(a.counts, b.counts);
        assert_eq!(a.weights, b.weights);
    }

    #[test]
    fn row_blocks_add_up() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let rows: Vec<Vec<f64>> = (0..40).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let data = SampleMatrix::from_rows(&rows).unwrap();
        let whole = accumulate_pairs(&data, 0..40, false).unwrap();
        let mut parts = accumulate_pairs(&data, 0..13, false).unwrap();
        for (p, q) in parts.iter_mut().zip(accumulate_pairs(&data, 13..40, false).unwrap()) {
            *p += q;
        }
        assert_eq!(whole, parts);
    }

    #[test]
    fn bootstrap_is_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let rows: Vec<Vec<f64>> = (0..50).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let data = SampleMatrix::from_rows(&rows).unwrap();
        let a = bootstrap_std_errors(&data, 50, 1).unwrap();
        let b = bootstrap_std_errors(&data, 50, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0], 0.0);
        // independent uniforms: κ_ij ≈ ½ with SE of order n^{-1/2}
        assert!(a[1] > 0.01 && a[1] < 0.2, "{}", a[1]);
    }
}
