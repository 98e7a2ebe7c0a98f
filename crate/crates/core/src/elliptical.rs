//! Concordance signatures of elliptical copulas.
//!
//! For an elliptical copula with correlation matrix `P`, `κ_I` equals twice
//! the Gaussian orthant probability `P(Z_I < 0)`, `Z ~ N(0, P)`. Pairs and
//! triples have closed forms through `arcsin`; larger subsets are estimated
//! by Monte Carlo. All Monte Carlo entries of one signature come from a single
//! histogram of sign patterns of `AZ` with `AAᵀ = P`, so the estimates are
//! mutually consistent.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::attainability::validate_unit_symmetric;
use crate::code::{all_ones_masks, num_extremal, ones_mask};
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::signature::{
    clamp_weights, signature_from_weights, solve_unchecked, weights_from_signature, EvenSignature,
    MixtureWeights,
};
use crate::equiconcordant::skeleton_of;
use crate::subset::{even_power_set, full_mask};

/// Number of normal vectors per Monte Carlo batch.
pub const BATCH_SIZE: u64 = 1 << 16;
/// Largest dimension for Monte Carlo pattern histograms.
pub const MC_MAX_DIM: usize = 20;
const PSD_TOL: f64 = 1e-9;

/// A valid correlation matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationMatrix {
    m: DMatrix<f64>,
}

impl CorrelationMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        validate_unit_symmetric(&m)?;
        let min = m.clone().symmetric_eigen().eigenvalues.min();
        if min < -PSD_TOL {
            return Err(Error::InvalidMatrix(format!(
                "not positive semi-definite (smallest eigenvalue {min:e})"
            )));
        }
        Ok(Self { m })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidMatrix("rows must form a square matrix".into()));
        }
        Self::new(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
    }

    /// Unit diagonal, `rho` everywhere else.
    pub fn equicorrelated(d: usize, rho: f64) -> Result<Self> {
        let mut m = DMatrix::from_element(d, d, rho);
        m.fill_diagonal(1.0);
        Self::new(m)
    }

    /// Matrix with the given off-diagonal entries in lexicographic pair order.
    pub fn from_pairs(d: usize, pairs: &[f64]) -> Result<Self> {
        if pairs.len() != d * (d - 1) / 2 {
            return Err(Error::InvalidMatrix(format!(
                "expected {} pair values for d = {d}, got {}",
                d * (d - 1) / 2,
                pairs.len()
            )));
        }
        let mut m = DMatrix::identity(d, d);
        let mut it = pairs.iter();
        for i in 0..d {
            for j in i + 1..d {
                let v = *it.next().unwrap();
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Self::new(m)
    }

    pub fn d(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    /// `A` with `AAᵀ = P` from the eigendecomposition, negative rounding
    /// noise in the spectrum clamped to zero.
    pub fn root(&self) -> DMatrix<f64> {
        let eig = self.m.clone().symmetric_eigen();
        let sqrt = DVector::from_iterator(
            self.d(),
            eig.eigenvalues.iter().map(|&l| libm::sqrt(l.max(0.0))),
        );
        &eig.eigenvectors * DMatrix::from_diagonal(&sqrt)
    }
}

/// Monte Carlo settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct McConfig {
    pub samples: u64,
    pub seed: u64,
    pub antithetic: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { samples: 1_000_000, seed: 0x5eed, antithetic: true }
    }
}

impl McConfig {
    pub fn new(samples: u64, seed: u64) -> Result<Self> {
        if samples == 0 {
            return Err(Error::OutOfRange("Monte Carlo sample size must be positive".into()));
        }
        Ok(Self { samples, seed, antithetic: true })
    }

    pub fn batches(&self) -> u64 {
        self.samples.div_ceil(BATCH_SIZE)
    }

    pub fn batch_len(&self, batch: u64) -> u64 {
        (self.samples - batch * BATCH_SIZE).min(BATCH_SIZE)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Exact,
    MonteCarlo,
}

/// A concordance probability (twice an orthant probability) with its
/// standard error; exact values have zero error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrthantEstimate {
    pub value: f64,
    pub std_error: f64,
    pub method: Method,
}

/// `κ_ij = 1/2 + arcsin(ρ)/π`.
pub fn pair_kappa(rho: f64) -> f64 {
    0.5 + libm::asin(rho.clamp(-1.0, 1.0)) / PI
}

/// `κ_ijk = 1/4 + (arcsin ρ_12 + arcsin ρ_13 + arcsin ρ_23)/(2π)`.
pub fn triple_kappa(r12: f64, r13: f64, r23: f64) -> f64 {
    let s: f64 = [r12, r13, r23].iter().map(|r| libm::asin(r.clamp(-1.0, 1.0))).sum();
    0.25 + s / (2.0 * PI)
}

pub fn check_margins(root: &DMatrix<f64>) -> Result<()> {
    for i in 0..root.nrows() {
        if root.row(i).norm() < 0.5 {
            return Err(Error::DegenerateMargin(i + 1));
        }
    }
    Ok(())
}

/// Histogram of sign patterns of `AZ` for one batch. Pattern bit `j - 1` is
/// set when component `j` is positive.
pub fn pattern_histogram_batch(root: &DMatrix<f64>, seed: u64, batch: u64, len: u64) -> Vec<u64> {
    let d = root.nrows();
    let mut hist = vec![0u64; 1 << d];
    let mut rng = stream_rng(seed, batch);
    let mut z = vec![0.0f64; d];
    for _ in 0..len {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let mut mask = 0usize;
        for i in 0..d {
            let row = root.row(i);
            let x: f64 = row.iter().zip(&z).map(|(a, b)| a * b).sum();
            if x > 0.0 {
                mask |= 1 << i;
            }
        }
        hist[mask] += 1;
    }
    hist
}

/// Sequential driver: sums the batch histograms in batch order.
pub fn pattern_histogram(root: &DMatrix<f64>, mc: &McConfig) -> Vec<u64> {
    let mut hist = vec![0u64; 1 << root.nrows()];
    for b in 0..mc.batches() {
        for (h, c) in hist.iter_mut().zip(pattern_histogram_batch(root, mc.seed, b, mc.batch_len(b))) {
            *h += c;
        }
    }
    hist
}

/// Estimates of `κ_I` for every subset (indexed by mask) from a pattern
/// histogram over `n` draws.
pub fn kappa_from_histogram(d: usize, hist: &[u64], antithetic: bool) -> Vec<OrthantEstimate> {
    let n: u64 = hist.iter().sum();
    let size = 1usize << d;
    let full = full_mask(d) as usize;
    // all_zero[I] = #draws with no positive component in I
    let mut subset_sum: Vec<u64> = hist.to_vec();
    let mut superset_sum: Vec<u64> = hist.to_vec();
    for b in 0..d {
        let bit = 1 << b;
        for mask in 0..size {
            if mask & bit != 0 {
                subset_sum[mask] += subset_sum[mask ^ bit];
            } else {
                superset_sum[mask] += superset_sum[mask | bit];
            }
        }
    }
    let nf = n as f64;
    (0..size)
        .map(|i| {
            let neg = subset_sum[full & !i] as f64 / nf;
            let pos = superset_sum[i] as f64 / nf;
            if i == 0 {
                return OrthantEstimate { value: 1.0, std_error: 0.0, method: Method::Exact };
            }
            let (value, std_error) = if antithetic {
                let p = (neg + pos).min(1.0);
                (p, libm::sqrt(p * (1.0 - p) / nf))
            } else {
                ((2.0 * neg).min(1.0), 2.0 * libm::sqrt(neg * (1.0 - neg) / nf))
            };
            OrthantEstimate { value, std_error, method: Method::MonteCarlo }
        })
        .collect()
}

/// Weights `w_k = P(Y = s_k) + P(Y = 1 - s_k)` with binomial standard errors.
pub fn weights_from_histogram(d: usize, hist: &[u64]) -> (Vec<f64>, Vec<f64>) {
    let n = hist.iter().sum::<u64>() as f64;
    let full = full_mask(d);
    all_ones_masks(d)
        .into_iter()
        .map(|o| {
            let w = (hist[o as usize] + hist[(!o & full) as usize]) as f64 / n;
            (w, libm::sqrt(w * (1.0 - w) / n))
        })
        .unzip()
}

/// Elliptical signature with Monte Carlo diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct EllipticalSignature {
    /// Exact pairs combined with raw Monte Carlo entries.
    pub raw: EvenSignature,
    /// Signature of the projected weights (attainable by construction).
    pub projected: EvenSignature,
    pub weights: MixtureWeights,
    /// Solution of the raw system before clamping.
    pub raw_weights: Vec<f64>,
    /// One estimate per entry of `raw`.
    pub estimates: Vec<OrthantEstimate>,
    pub samples: u64,
}

impl EllipticalSignature {
    pub fn std_errors(&self) -> Vec<f64> {
        self.estimates.iter().map(|e| e.std_error).collect()
    }

    pub fn method(&self) -> Method {
        if self.estimates.iter().any(|e| e.method == Method::MonteCarlo) {
            Method::MonteCarlo
        } else {
            Method::Exact
        }
    }
}

/// Exact even-signature entries; `None` where Monte Carlo is needed.
fn exact_entries(p: &CorrelationMatrix) -> Vec<Option<f64>> {
    even_power_set(p.d())
        .iter()
        .map(|s| match s.len() {
            0 => Some(1.0),
            2 => {
                let m = s.members();
                Some(pair_kappa(p.get(m[0] - 1, m[1] - 1)))
            }
            _ => None,
        })
        .collect()
}

pub fn elliptical_signature(p: &CorrelationMatrix, mc: &McConfig) -> Result<EllipticalSignature> {
    let root = p.root();
    check_margins(&root)?;
    let needs_mc = p.d() >= 4;
    let hist = if needs_mc {
        if p.d() > MC_MAX_DIM {
            return Err(Error::DimensionTooLarge { d: p.d(), max: MC_MAX_DIM });
        }
        Some(pattern_histogram(&root, mc))
    } else {
        None
    };
    elliptical_signature_from_histogram(p, hist.as_deref(), mc)
}

/// Assembles the signature from a precomputed histogram (`None` when every
/// entry is exact, i.e. `d ≤ 3`).
pub fn elliptical_signature_from_histogram(
    p: &CorrelationMatrix,
    hist: Option<&[u64]>,
    mc: &McConfig,
) -> Result<EllipticalSignature> {
    let d = p.d();
    let exact = exact_entries(p);
    let mc_all = hist.map(|h| kappa_from_histogram(d, h, mc.antithetic));
    let estimates: Vec<OrthantEstimate> = even_power_set(d)
        .iter()
        .zip(&exact)
        .map(|(s, e)| match (e, &mc_all) {
            (Some(v), _) => OrthantEstimate { value: *v, std_error: 0.0, method: Method::Exact },
            (None, Some(all)) => all[s.mask() as usize],
            (None, None) => unreachable!("monte carlo histogram required for d >= 4"),
        })
        .collect();
    let raw = EvenSignature::new(d, estimates.iter().map(|e| e.value.clamp(0.0, 1.0)).collect())?;
    let raw_weights = solve_unchecked(&raw)?;
    let mut w: Vec<f64> = raw_weights.iter().map(|&x| x.max(0.0)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    let weights = MixtureWeights::new(d, w)?;
    let projected = signature_from_weights(&weights);
    Ok(EllipticalSignature {
        raw,
        projected,
        weights,
        raw_weights,
        estimates,
        samples: hist.map_or(0, |h| h.iter().sum()),
    })
}

/// Componentwise `2 arcsin(ρ)/π`.
pub fn arcsin_tau_matrix(p: &CorrelationMatrix) -> DMatrix<f64> {
    p.m.map(|r| 2.0 * libm::asin(r.clamp(-1.0, 1.0)) / PI)
}

/// Componentwise `sin(πτ/2)`.
pub fn tau_to_correlation(p_tau: &DMatrix<f64>) -> DMatrix<f64> {
    p_tau.map(|t| libm::sin(PI * t / 2.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EllipticalVerdict {
    pub attainable: bool,
    pub back_transform: DMatrix<f64>,
    pub min_eigenvalue: f64,
}

/// Whether a Kendall matrix belongs to some elliptical distribution.
pub fn elliptical_attainable(p_tau: &DMatrix<f64>) -> Result<EllipticalVerdict> {
    validate_unit_symmetric(p_tau)?;
    let back = tau_to_correlation(p_tau);
    let min = back.clone().symmetric_eigen().eigenvalues.min();
    Ok(EllipticalVerdict { attainable: min >= -PSD_TOL, back_transform: back, min_eigenvalue: min })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TLimitMode {
    Analytic,
    MonteCarlo,
}

/// Weights of the extremal mixture approached by the `t` copula as `ν → 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct TLimit {
    pub weights: MixtureWeights,
    pub std_errors: Vec<f64>,
    pub method: Method,
}

pub fn t_limit_weights(p: &CorrelationMatrix, mode: TLimitMode, mc: &McConfig) -> Result<TLimit> {
    let d = p.d();
    match mode {
        TLimitMode::Analytic if d <= 3 => {
            let sig = elliptical_signature(p, mc)?;
            let weights = weights_from_signature(&sig.raw).map_err(|e| match e {
                Error::NotAttainable { k, weight } => Error::NumericalFailure(format!(
                    "elliptical signature produced w_{k} = {weight:e}"
                )),
                other => other,
            })?;
            Ok(TLimit { weights, std_errors: vec![0.0; num_extremal(d)], method: Method::Exact })
        }
        TLimitMode::Analytic => {
            let sig = elliptical_signature(p, mc)?;
            // no closed form beyond triples: propagate the Monte Carlo error
            // through the binomial SE of each weight
            let n = sig.samples.max(1) as f64;
            let se = sig.weights.as_slice().iter().map(|w| libm::sqrt(w * (1.0 - w) / n)).collect();
            Ok(TLimit { weights: sig.weights, std_errors: se, method: Method::MonteCarlo })
        }
        TLimitMode::MonteCarlo => {
            if d > MC_MAX_DIM {
                return Err(Error::DimensionTooLarge { d, max: MC_MAX_DIM });
            }
            let root = p.root();
            check_margins(&root)?;
            let hist = pattern_histogram(&root, mc);
            t_limit_from_histogram(d, &hist)
        }
    }
}

pub fn t_limit_from_histogram(d: usize, hist: &[u64]) -> Result<TLimit> {
    let (w, se) = weights_from_histogram(d, hist);
    Ok(TLimit { weights: clamp_weights(d, w)?, std_errors: se, method: Method::MonteCarlo })
}

/// Diagonals that carry no mass in the `t`-limit of a rank-deficient `P`.
pub fn rank_deficient_support(p: &CorrelationMatrix) -> Vec<usize> {
    let d = p.d();
    let mut forced = vec![false; num_extremal(d)];
    for i in 0..d {
        for j in i + 1..d {
            // ‖A_i ∓ A_j‖² = 2 ∓ 2ρ_ij
            let same = 2.0 - 2.0 * p.get(i, j) <= 1e-10;
            let opposite = 2.0 + 2.0 * p.get(i, j) <= 1e-10;
            if !(same || opposite) {
                continue;
            }
            for (k, f) in forced.iter_mut().enumerate() {
                let o = ones_mask(k + 1, d);
                let differ = ((o >> i) & 1) != ((o >> j) & 1);
                if (same && differ) || (opposite && !differ) {
                    *f = true;
                }
            }
        }
    }
    (1..=forced.len()).filter(|&k| forced[k - 1]).collect()
}

/// Skeletal signatures `(1, κ_2, κ_4, ...)` of equicorrelated elliptical
/// copulas over a grid of correlations. Each entry averages all subsets of
/// the same size.
pub fn equicorrelated_skeletal(d: usize, rhos: &[f64], mc: &McConfig) -> Result<Vec<(f64, Vec<f64>)>> {
    rhos.iter()
        .map(|&rho| {
            let p = CorrelationMatrix::equicorrelated(d, rho)?;
            let sig = elliptical_signature(&p, mc)?;
            Ok((rho, skeleton_of(&sig.raw)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attainability::check_cut_polytope;
    use crate::signature::kendall_matrix_from_even;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trivariate() -> CorrelationMatrix {
        CorrelationMatrix::from_pairs(3, &[0.2, 0.5, 0.8]).unwrap()
    }

    fn non_elliptical() -> DMatrix<f64> {
        let k = [0.405, 0.355, 0.745, 0.33, 0.65, 0.105];
        let mut p = DMatrix::identity(4, 4);
        let mut it = k.iter();
        for i in 0..4 {
            for j in i + 1..4 {
                let t = 2.0 * it.next().unwrap() - 1.0;
                p[(i, j)] = t;
                p[(j, i)] = t;
            }
        }
        p
    }

    fn random_correlation(d: usize, rng: &mut ChaCha8Rng) -> CorrelationMatrix {
        let g: DMatrix<f64> = DMatrix::from_fn(d, d + 2, |_, _| StandardNormal.sample(rng));
        let s = &g * g.transpose();
        let dinv = DVector::from_iterator(d, (0..d).map(|i| 1.0 / libm::sqrt(s[(i, i)])));
        let mut c = DMatrix::from_fn(d, d, |i, j| s[(i, j)] * dinv[i] * dinv[j]);
        c.fill_diagonal(1.0);
        let c = (&c + c.transpose()) * 0.5;
        CorrelationMatrix::new(c).unwrap()
    }

    #[test]
    fn validation() {
        assert!(CorrelationMatrix::from_pairs(3, &[0.9, 0.9, -0.9]).is_err());
        assert!(CorrelationMatrix::from_pairs(2, &[1.2]).is_err());
        assert!(CorrelationMatrix::from_rows(&[vec![1.0, 0.2], vec![0.3, 1.0]]).is_err());
        assert!(CorrelationMatrix::equicorrelated(4, -0.4).is_err());
        assert!(McConfig::new(0, 1).is_err());
    }

    #[test]
    fn closed_forms() {
        assert_eq!(pair_kappa(0.0), 0.5);
        assert!((pair_kappa(0.5) - 2.0 / 3.0).abs() < 1e-15);
        let p = trivariate();
        let s = elliptical_signature(&p, &McConfig::default()).unwrap();
        assert_eq!(s.method(), Method::Exact);
        let v = s.raw.values();
        assert!((v[1] - 0.5641).abs() < 5e-5);
        assert!((v[2] - 2.0 / 3.0).abs() < 1e-15);
        assert!((v[3] - 0.7952).abs() < 5e-5);
        // the recursion reproduces the trivariate orthant formula
        let full = crate::signature::extend_to_full(&s.raw);
        let t = full.get(&crate::subset::SubsetIndex::new(3, &[1, 2, 3]).unwrap()).unwrap();
        assert!((t - triple_kappa(0.2, 0.5, 0.8)).abs() < 1e-14);
    }

    #[test]
    fn trivariate_weights() {
        let p = trivariate();
        let a = t_limit_weights(&p, TLimitMode::Analytic, &McConfig::default()).unwrap();
        let expected = [0.513, 0.051, 0.154, 0.282];
        for (w, e) in a.weights.as_slice().iter().zip(expected) {
            assert!((w - e).abs() < 5e-4, "{w} vs {e}");
        }
        let mc = McConfig::new(200_000, 3).unwrap();
        let m = t_limit_weights(&p, TLimitMode::MonteCarlo, &mc).unwrap();
        for ((w, e), se) in m.weights.as_slice().iter().zip(a.weights.as_slice()).zip(&m.std_errors) {
            assert!((w - e).abs() < 4.0 * se, "{w} vs {e}");
        }
    }

    #[test]
    fn independence_limit() {
        let p = CorrelationMatrix::from_pairs(2, &[0.0]).unwrap();
        let t = t_limit_weights(&p, TLimitMode::Analytic, &McConfig::default()).unwrap();
        assert_eq!(t.weights.as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn histogram_reductions_match_direct_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = 4;
        let hist: Vec<u64> = (0..16).map(|_| rng.random_range(0..50)).collect();
        let n: u64 = hist.iter().sum();
        let est = kappa_from_histogram(d, &hist, true);
        for i in 1..16usize {
            let same: u64 = (0..16usize)
                .filter(|m| m & i == 0 || m & i == i)
                .map(|m| hist[m])
                .sum();
            assert!((est[i].value - same as f64 / n as f64).abs() < 1e-15);
        }
        let est = kappa_from_histogram(d, &hist, false);
        for i in 1..16usize {
            let neg: u64 = (0..16usize).filter(|m| m & i == 0).map(|m| hist[m]).sum();
            assert!((est[i].value - (2.0 * neg as f64 / n as f64).min(1.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn batches_are_reproducible() {
        let root = trivariate().root();
        let mc = McConfig::new(100_000, 9).unwrap();
        assert_eq!(pattern_histogram(&root, &mc), pattern_histogram(&root, &mc));
        let other = McConfig::new(100_000, 10).unwrap();
        assert_ne!(pattern_histogram(&root, &mc), pattern_histogram(&root, &other));
    }

    #[test]
    fn root_reproduces_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for d in 2..=6 {
            let p = random_correlation(d, &mut rng);
            let a = p.root();
            assert!((&a * a.transpose() - p.matrix()).abs().max() < 1e-12);
        }
        let p = CorrelationMatrix::from_pairs(3, &[1.0, 0.0, 0.0]).unwrap();
        let a = p.root();
        assert!((&a * a.transpose() - p.matrix()).abs().max() < 1e-12);
    }

    #[test]
    fn arcsin_transform_examples() {
        let p = CorrelationMatrix::from_pairs(3, &[1.0, 0.5, 0.8]).unwrap_err();
        assert!(matches!(p, Error::InvalidMatrix(_)));
        let p = CorrelationMatrix::from_pairs(2, &[0.5]).unwrap();
        let t = arcsin_tau_matrix(&p);
        assert!((t[(0, 1)] - 1.0 / 3.0).abs() < 1e-15);
        let p = CorrelationMatrix::from_pairs(2, &[1.0]).unwrap();
        assert_eq!(arcsin_tau_matrix(&p)[(0, 1)], 1.0);
        let p = CorrelationMatrix::from_pairs(2, &[0.8]).unwrap();
        assert!((arcsin_tau_matrix(&p)[(0, 1)] - 0.59033).abs() < 5e-6);
    }

    #[test]
    fn strict_subset_witness() {
        let m = non_elliptical();
        assert!(check_cut_polytope(&m).unwrap().feasible);
        let v = elliptical_attainable(&m).unwrap();
        assert!(!v.attainable);
        assert!(v.min_eigenvalue < -1e-6);
        let id = elliptical_attainable(&DMatrix::identity(3, 3)).unwrap();
        assert!(id.attainable);
        assert!((id.back_transform - DMatrix::<f64>::identity(3, 3)).abs().max() < 1e-15);
    }

    #[test]
    fn arcsin_then_back_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..50 {
            let p = random_correlation(2 + i % 5, &mut rng);
            let v = elliptical_attainable(&arcsin_tau_matrix(&p)).unwrap();
            assert!(v.attainable);
            assert!((v.back_transform - p.matrix()).abs().max() < 1e-12);
        }
    }

    #[test]
    fn rank_deficient_examples() {
        let p = CorrelationMatrix::from_pairs(3, &[1.0, 0.0, 0.0]).unwrap();
        // k with s_{k,1} ≠ s_{k,2}: s = (0,1,0), (0,1,1)
        assert_eq!(rank_deficient_support(&p), vec![3, 4]);
        let p = CorrelationMatrix::from_pairs(2, &[-1.0]).unwrap();
        assert_eq!(rank_deficient_support(&p), vec![1]);
        assert!(rank_deficient_support(&trivariate()).is_empty());
        // the limit indeed puts no mass there
        let p = CorrelationMatrix::from_pairs(3, &[1.0, 0.3, 0.3]).unwrap();
        let t = t_limit_weights(&p, TLimitMode::Analytic, &McConfig::default()).unwrap();
        for k in rank_deficient_support(&p) {
            assert!(t.weights.weight(k).abs() < 1e-12);
        }
        let m = t_limit_weights(&p, TLimitMode::MonteCarlo, &McConfig::new(20_000, 1).unwrap()).unwrap();
        for k in rank_deficient_support(&p) {
            assert_eq!(m.weights.weight(k), 0.0);
        }
    }

    #[test]
    fn elliptical_signatures_are_attainable() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for i in 0..100 {
            let d = 2 + i % 2;
            let p = random_correlation(d, &mut rng);
            let s = elliptical_signature(&p, &McConfig::default()).unwrap();
            assert!(s.raw_weights.iter().all(|&w| w >= -1e-12));
        }
        // d = 4, 5 go through Monte Carlo; projected weights are valid and
        // raw weights are negative only within noise
        for i in 0..10 {
            let d = 4 + i % 2;
            let p = random_correlation(d, &mut rng);
            let s = elliptical_signature(&p, &McConfig::new(100_000, i as u64).unwrap()).unwrap();
            assert!(s.raw_weights.iter().all(|&w| w >= -0.02));
            let t = kendall_matrix_from_even(&s.projected);
            assert!(t.symmetric_eigen().eigenvalues.min() > -1e-9);
        }
    }

    #[test]
    fn analytic_limit_reproduces_signature() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let p = random_correlation(3, &mut rng);
            let t = t_limit_weights(&p, TLimitMode::Analytic, &McConfig::default()).unwrap();
            let s = elliptical_signature(&p, &McConfig::default()).unwrap();
            let back = signature_from_weights(&t.weights);
            for (a, b) in back.values().iter().zip(s.raw.values()) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn bivariate_mc_matches_arcsin() {
        let mc = McConfig::new(20_000, 5).unwrap();
        for i in 0..=40 {
            let rho = -1.0 + i as f64 * 0.05;
            let p = CorrelationMatrix::from_pairs(2, &[rho]).unwrap();
            let root = p.root();
            let est = kappa_from_histogram(2, &pattern_histogram(&root, &mc), true)[3];
            let exact = pair_kappa(rho);
            assert!((est.value - exact).abs() <= 4.0 * est.std_error + 1e-12, "rho {rho}");
        }
    }

    #[test]
    fn equicorrelated_curve() {
        let curve = equicorrelated_skeletal(4, &[0.0, 0.5, 1.0], &McConfig::new(50_000, 1).unwrap()).unwrap();
        assert_eq!(curve.len(), 3);
        assert!((curve[0].1[1] - 0.5).abs() < 1e-12);
        assert!((curve[1].1[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!((curve[2].1[2] - 1.0).abs() < 1e-12);
    }
}
