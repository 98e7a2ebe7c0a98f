//! Sampling from extremal mixtures, their distribution functions, and a
//! diagnostic for the extremal-mixture characterization.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::code::{k_from_pattern, num_extremal, ones_mask};
use crate::error::{Error, Result};
use crate::estimation::SampleMatrix;
use crate::rng::stream_rng;
use crate::signature::MixtureWeights;
use crate::stats::ks_uniform;

/// Rows per RNG stream.
pub const SAMPLE_BLOCK: usize = 65_536;
pub const DIAGONAL_TOL: f64 = 1e-12;
/// Smallest diagonal group that gets a uniformity test.
pub const MIN_GROUP_ROWS: usize = 20;
pub const MAX_THETA: f64 = 4.0;

fn check_point(d: usize, u: &[f64]) -> Result<()> {
    if u.len() != d {
        return Err(Error::OutOfRange(format!("point has {} coordinates, expected {d}", u.len())));
    }
    if let Some(x) = u.iter().find(|x| !(**x >= 0.0 && **x <= 1.0)) {
        return Err(Error::OutOfRange(format!("coordinate {x} outside [0, 1]")));
    }
    Ok(())
}

fn extremal_cdf_unchecked(ones: u32, u: &[f64]) -> f64 {
    let (mut a, mut b) = (1.0f64, 1.0f64);
    for (j, &x) in u.iter().enumerate() {
        if ones & (1 << j) != 0 {
            a = a.min(x);
        } else {
            b = b.min(x);
        }
    }
    (a + b - 1.0).max(0.0)
}

/// Distribution function of the `k`-th extremal copula at `u`.
pub fn extremal_cdf(k: usize, u: &[f64]) -> Result<f64> {
    let d = u.len();
    if d < 1 || d > crate::subset::MAX_DIM {
        return Err(Error::OutOfRange(format!("dimension {d} not supported")));
    }
    if k < 1 || k > num_extremal(d) {
        return Err(Error::OutOfRange(format!("k = {k} outside 1..={}", num_extremal(d))));
    }
    check_point(d, u)?;
    Ok(extremal_cdf_unchecked(ones_mask(k, d), u))
}

pub fn mixture_cdf(w: &MixtureWeights, u: &[f64]) -> Result<f64> {
    let d = w.d();
    check_point(d, u)?;
    Ok(w.as_slice()
        .iter()
        .enumerate()
        .filter(|(_, &wk)| wk > 0.0)
        .map(|(i, &wk)| wk * extremal_cdf_unchecked(ones_mask(i + 1, d), u))
        .sum())
}

/// `n × d` draws from an extremal mixture, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureSample {
    pub d: usize,
    pub n: usize,
    pub values: Vec<f64>,
    pub seed: u64,
    pub weights: MixtureWeights,
}

impl MixtureSample {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn to_sample_matrix(&self) -> Result<SampleMatrix> {
        SampleMatrix::new(self.n, self.d, self.values.clone())
    }
}

/// Draws rows one RNG stream at a time, so blocks can be generated
/// independently and concatenated in block order.
#[derive(Clone, Debug)]
pub struct MixtureSampler {
    d: usize,
    masks: Vec<u32>,
    index: WeightedIndex<f64>,
}

impl MixtureSampler {
    pub fn new(w: &MixtureWeights) -> Result<Self> {
        let d = w.d();
        let masks: Vec<u32> = (1..=num_extremal(d)).map(|k| ones_mask(k, d)).collect();
        let index = WeightedIndex::new(w.as_slice().iter().map(|x| x.max(0.0)))
            .map_err(|e| Error::InvalidWeights(format!("{e}")))?;
        Ok(Self { d, masks, index })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of blocks needed for `n` rows.
    pub fn blocks(n: usize) -> usize {
        n.div_ceil(SAMPLE_BLOCK)
    }

    pub fn block_len(n: usize, block: usize) -> usize {
        (n - block * SAMPLE_BLOCK).min(SAMPLE_BLOCK)
    }

    pub fn block(&self, seed: u64, block: usize, len: usize) -> Vec<f64> {
        let mut rng = stream_rng(seed, block as u64);
        let mut out = Vec::with_capacity(len * self.d);
        for _ in 0..len {
            let mut ones = self.masks[self.index.sample(&mut rng)];
            if rng.random::<bool>() {
                ones = !ones;
            }
            let u: f64 = rng.random();
            out.extend((0..self.d).map(|j| if ones & (1 << j) != 0 { u } else { 1.0 - u }));
        }
        out
    }
}

pub fn sample_mixture(w: &MixtureWeights, n: usize, seed: u64) -> Result<MixtureSample> {
    if n == 0 {
        return Err(Error::OutOfRange("sample size must be at least 1".into()));
    }
    let sampler = MixtureSampler::new(w)?;
    let mut values = Vec::with_capacity(n * w.d());
    for b in 0..MixtureSampler::blocks(n) {
        values.extend(sampler.block(seed, b, MixtureSampler::block_len(n, b)));
    }
    Ok(MixtureSample { d: w.d(), n, values, seed, weights: w.clone() })
}

/// Index `k` of the diagonal through `row`, if any.
pub fn diagonal_of(row: &[f64]) -> Option<usize> {
    let u1 = *row.first()?;
    let mut mask = 1u32;
    for (j, &x) in row.iter().enumerate().skip(1) {
        if (x - u1).abs() <= DIAGONAL_TOL {
            mask |= 1 << j;
        } else if (x - (1.0 - u1)).abs() > DIAGONAL_TOL {
            return None;
        }
    }
    Some(k_from_pattern(mask, row.len()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalTest {
    pub k: usize,
    pub rows: usize,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticReport {
    pub n: usize,
    pub on_diagonal: usize,
    pub on_diagonal_fraction: f64,
    /// Groups of at least [`MIN_GROUP_ROWS`] rows, by `k`.
    pub tests: Vec<DiagonalTest>,
    /// Rows on diagonals too sparse to test.
    pub untested_rows: usize,
    pub level: f64,
    /// `level / tests.len()`.
    pub corrected_level: f64,
    /// False when no group was large enough; the verdict then rests on the
    /// diagonal check alone.
    pub conditional_checked: bool,
    pub pass: bool,
}

impl DiagnosticReport {
    pub fn min_p_value(&self) -> Option<f64> {
        self.tests.iter().map(|t| t.p_value).reduce(f64::min)
    }

    /// The error that stopped the conditional check, if it was skipped.
    pub fn skipped_reason(&self) -> Option<Error> {
        (!self.conditional_checked)
            .then_some(Error::TooFewRows { n: self.on_diagonal, required: MIN_GROUP_ROWS })
    }
}

/// Checks that every row lies on a main diagonal and that, within each
/// diagonal, the first coordinate is standard uniform.
pub fn validate_mixture(sample: &SampleMatrix, level: f64) -> Result<DiagnosticReport> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::OutOfRange(format!("level {level} outside (0, 1)")));
    }
    if sample.d() < 2 {
        return Err(Error::OutOfRange("need at least two columns".into()));
    }
    let n = sample.n();
    let mut groups: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for i in 0..n {
        let row = sample.row(i);
        if let Some(k) = diagonal_of(row) {
            groups.entry(k).or_default().push(row[0]);
        }
    }
    let on_diagonal: usize = groups.values().map(Vec::len).sum();
    let mut tests = Vec::new();
    let mut untested_rows = 0;
    for (&k, u) in &groups {
        if u.len() < MIN_GROUP_ROWS {
            untested_rows += u.len();
            continue;
        }
        let (statistic, p_value) = ks_uniform(u);
        tests.push(DiagonalTest { k, rows: u.len(), statistic, p_value });
    }
    let conditional_checked = !tests.is_empty();
    let corrected_level = level / tests.len().max(1) as f64;
    let pass = on_diagonal == n && tests.iter().all(|t| t.p_value >= corrected_level);
    Ok(DiagnosticReport {
        n,
        on_diagonal,
        on_diagonal_fraction: if n == 0 { 0.0 } else { on_diagonal as f64 / n as f64 },
        tests,
        untested_rows,
        level,
        corrected_level,
        conditional_checked,
        pass,
    })
}

/// Runs [`validate_mixture`] on every bivariate margin.
pub fn validate_pairs(sample: &SampleMatrix, level: f64) -> Result<Vec<((usize, usize), DiagnosticReport)>> {
    let d = sample.d();
    let mut out = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            let pair = sample.select_columns(&[i, j])?;
            out.push(((i + 1, j + 1), validate_mixture(&pair, level)?));
        }
    }
    Ok(out)
}

/// Solves `(1 + a) u - a u^2 = t` on `[0, 1]` for `|a| ≤ 1`.
pub fn conditional_quantile(a: f64, t: f64) -> f64 {
    let b = 1.0 + a;
    let denom = b + libm::sqrt((b * b - 4.0 * a * t).max(0.0));
    if denom > 1e-8 {
        (2.0 * t / denom).clamp(0.0, 1.0)
    } else {
        bisect_quantile(a, t)
    }
}

fn bisect_quantile(a: f64, t: f64) -> f64 {
    let f = |u: f64| (1.0 + a) * u - a * u * u;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Trivariate law in which `U` is uniform and independent of each `Y_i`
/// separately but not of `(Y_1, Y_2, Y_3)`: given `y`, `U` has distribution
/// function `u + (-1)^{y_1+y_2+y_3} θ u (1 - u) / 4`. Rows are
/// `U Y + (1 - U)(1 - Y)`.
pub fn sample_pairwise_counterexample(theta: f64, n: usize, seed: u64) -> Result<SampleMatrix> {
    if !(theta.abs() <= MAX_THETA) {
        return Err(Error::ThetaOutOfRange(theta));
    }
    if n == 0 {
        return Err(Error::OutOfRange("sample size must be at least 1".into()));
    }
    let mut values = Vec::with_capacity(3 * n);
    for b in 0..MixtureSampler::blocks(n) {
        let mut rng = stream_rng(seed, b as u64);
        for _ in 0..MixtureSampler::block_len(n, b) {
            let y: u32 = rng.random_range(0..8);
            let sign = if y.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            let u = conditional_quantile(sign * theta / 4.0, rng.random());
            values.extend((0..3).map(|j| if y & (1 << j) != 0 { u } else { 1.0 - u }));
        }
    }
    SampleMatrix::new(n, 3, values)
}

/// Empirical distribution function of the rows at `u`.
pub fn empirical_cdf(sample: &SampleMatrix, u: &[f64]) -> f64 {
    let hits = (0..sample.n())
        .filter(|&i| sample.row(i).iter().zip(u).all(|(x, y)| x <= y))
        .count();
    hits as f64 / sample.n() as f64
}

/// KS test of each column against the standard uniform.
pub fn marginal_ks(sample: &SampleMatrix) -> Vec<(f64, f64)> {
    (0..sample.d()).map(|j| ks_uniform(&sample.column(j))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::estimation::empirical_signature;
    use crate::signature::{kendall_matrix_from_even, signature_from_weights};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn crypto() -> MixtureWeights {
        MixtureWeights::new(4, vec![0.364, 0.129, 0.069, 0.077, 0.098, 0.075, 0.066, 0.122]).unwrap()
    }

    #[test]
    fn extremal_cdf_examples() {
        assert!((extremal_cdf(1, &[0.2, 0.5, 0.7]).unwrap() - 0.2).abs() < 1e-15);
        assert!((extremal_cdf(2, &[0.6, 0.7]).unwrap() - 0.3).abs() < 1e-15);
        assert!((extremal_cdf(2, &[0.8, 0.9, 0.7, 0.6]).unwrap() - 0.3).abs() < 1e-15);
        assert!(extremal_cdf(3, &[0.5, 0.5]).is_err());
        assert!(extremal_cdf(1, &[0.5, 1.5]).is_err());
        let w = MixtureWeights::new(2, vec![0.5, 0.5]).unwrap();
        assert!((mixture_cdf(&w, &[0.6, 0.7]).unwrap() - 0.45).abs() < 1e-15);
    }

    #[test]
    fn copula_boundaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in 2..=6 {
            for k in 1..=num_extremal(d) {
                for _ in 0..20 {
                    let mut u: Vec<f64> = (0..d).map(|_| rng.random()).collect();
                    let j = rng.random_range(0..d);
                    let saved = u[j];
                    u[j] = 0.0;
                    assert_eq!(extremal_cdf(k, &u).unwrap(), 0.0);
                    let mut v = vec![1.0; d];
                    v[j] = saved;
                    assert!((extremal_cdf(k, &v).unwrap() - saved).abs() < 1e-15);
                }
                assert_eq!(extremal_cdf(k, &vec![1.0; d]).unwrap(), 1.0);
            }
        }
    }

    #[test]
    fn mixture_cdf_is_monotone_on_grid() {
        let w = crypto();
        let grid: Vec<f64> = (0..=6).map(|i| i as f64 / 6.0).collect();
        let mut idx = [0usize; 4];
        loop {
            let u: Vec<f64> = idx.iter().map(|&i| grid[i]).collect();
            let c = mixture_cdf(&w, &u).unwrap();
            for j in 0..4 {
                if idx[j] + 1 < grid.len() {
                    let mut v = u.clone();
                    v[j] = grid[idx[j] + 1];
                    assert!(mixture_cdf(&w, &v).unwrap() >= c - 1e-15);
                }
            }
            let mut j = 0;
            while j < 4 {
                idx[j] += 1;
                if idx[j] < grid.len() {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
            if j == 4 {
                break;
            }
        }
    }

    #[test]
    fn comonotone_rows_are_constant() {
        let s = sample_mixture(&MixtureWeights::unit(3, 1), 3, 9).unwrap();
        for i in 0..3 {
            let r = s.row(i);
            assert!(r.iter().all(|&x| x == r[0]));
        }
    }

    #[test]
    fn sample_is_reproducible_and_blocked() {
        let w = crypto();
        let a = sample_mixture(&w, SAMPLE_BLOCK + 17, 5).unwrap();
        let b = sample_mixture(&w, SAMPLE_BLOCK + 17, 5).unwrap();
        assert_eq!(a, b);
        let sampler = MixtureSampler::new(&w).unwrap();
        assert_eq!(&a.values[SAMPLE_BLOCK * 4..], sampler.block(5, 1, 17).as_slice());
        assert_ne!(a.values, sample_mixture(&w, SAMPLE_BLOCK + 17, 6).unwrap().values);
    }

    #[test]
    fn samples_lie_on_diagonals() {
        let w = crypto();
        let s = sample_mixture(&w, 5000, 1).unwrap();
        let counts = (0..s.n).fold(vec![0usize; 8], |mut c, i| {
            c[diagonal_of(s.row(i)).unwrap() - 1] += 1;
            c
        });
        for (c, w) in counts.iter().zip(w.as_slice()) {
            let p = *c as f64 / 5000.0;
            assert!((p - w).abs() < 4.0 * (w * (1.0 - w) / 5000.0).sqrt() + 1e-3);
        }
        assert_eq!(diagonal_of(&[0.3, 0.7, 0.3]), Some(k_from_pattern(0b101, 3)));
        assert_eq!(diagonal_of(&[0.3, 0.6]), None);
    }

    #[test]
    fn sampled_tau_and_signature() {
        let w = MixtureWeights::new(2, vec![0.5, 0.5]).unwrap();
        let s = sample_mixture(&w, 100_000, 11).unwrap().to_sample_matrix().unwrap();
        let e = empirical_signature(&s).unwrap();
        let tau = 2.0 * e.full.values()[3] - 1.0;
        assert!(tau.abs() < 0.01, "{tau}");

        let w = crypto();
        let s = sample_mixture(&w, 100_000, 12).unwrap().to_sample_matrix().unwrap();
        let e = empirical_signature(&s).unwrap();
        let truth = signature_from_weights(&w);
        let est = e.full.to_even();
        assert!(truth.values().iter().zip(est.values()).all(|(a, b)| (a - b).abs() < 0.01));
        let km = kendall_matrix_from_even(&truth);
        for i in 0..4 {
            for j in i + 1..4 {
                let k = est.pair(i + 1, j + 1);
                assert!(((2.0 * k - 1.0) - km[(i, j)]).abs() < 0.01);
            }
        }
    }

    #[test]
    fn empirical_cdf_tracks_mixture_cdf() {
        let w = crypto();
        let s = sample_mixture(&w, 100_000, 13).unwrap().to_sample_matrix().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..20 {
            let u: Vec<f64> = (0..4).map(|_| rng.random()).collect();
            let c = mixture_cdf(&w, &u).unwrap();
            let se = (c * (1.0 - c) / 100_000.0).sqrt();
            assert!((empirical_cdf(&s, &u) - c).abs() <= 3.0 * se + 1e-12);
        }
    }

    #[test]
    fn mixture_samples_pass_validation() {
        for (seed, w) in [(1, crypto()), (2, MixtureWeights::uniform(3)), (3, MixtureWeights::unit(5, 7))] {
            let s = sample_mixture(&w, 20_000, seed).unwrap().to_sample_matrix().unwrap();
            let r = validate_mixture(&s, 0.01).unwrap();
            assert!(r.pass, "{r:?}");
            assert_eq!(r.on_diagonal_fraction, 1.0);
            assert!(r.tests.iter().all(|t| (0.0..=1.0).contains(&t.p_value)));
        }
    }

    #[test]
    fn sparse_groups_skip_conditional_check() {
        let s = sample_mixture(&crypto(), 30, 4).unwrap().to_sample_matrix().unwrap();
        let r = validate_mixture(&s, 0.01).unwrap();
        assert!(!r.conditional_checked);
        assert!(r.pass);
        assert!(matches!(r.skipped_reason(), Some(Error::TooFewRows { .. })));
        let off = SampleMatrix::new(1, 2, vec![0.3, 0.6]).unwrap();
        assert!(!validate_mixture(&off, 0.01).unwrap().pass);
        assert!(validate_mixture(&off, 1.5).is_err());
    }

    #[test]
    fn conditional_quantile_inverts() {
        for &a in &[-1.0, -0.75, -0.3, 0.0, 0.4, 0.75, 1.0] {
            for i in 0..=100 {
                let t = i as f64 / 100.0;
                let u = conditional_quantile(a, t);
                assert!(((1.0 + a) * u - a * u * u - t).abs() < 1e-12, "a={a} t={t}");
                let v = bisect_quantile(a, t);
                assert!(((1.0 + a) * v - a * v * v - t).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn counterexample_range() {
        assert!(matches!(sample_pairwise_counterexample(4.5, 10, 0), Err(Error::ThetaOutOfRange(_))));
        assert!(sample_pairwise_counterexample(-4.0, 10, 0).is_ok());
        assert!(sample_pairwise_counterexample(f64::NAN, 10, 0).is_err());
    }

    #[test]
    fn counterexample_fails_only_jointly() {
        let s = sample_pairwise_counterexample(3.0, 100_000, 21).unwrap();
        for (_, p) in marginal_ks(&s) {
            assert!(p > 0.01);
        }
        let r = validate_mixture(&s, 0.01).unwrap();
        assert_eq!(r.on_diagonal_fraction, 1.0);
        assert!(!r.pass);
        for (_, r) in validate_pairs(&s, 0.01).unwrap() {
            assert!(r.pass, "{r:?}");
        }
        let s = sample_pairwise_counterexample(0.0, 100_000, 22).unwrap();
        assert!(validate_mixture(&s, 0.01).unwrap().pass);
    }
}
