//! Concordance signatures, mixture weights and the coefficient matrix `A_d`.
//!
//! An extremal mixture with weights `w` has even signature `κ = A_d w`. The
//! matrix is square and invertible, so every even signature determines a
//! unique weight vector, and the odd-cardinality entries follow from the even
//! ones by inclusion-exclusion.
//!
//! Besides the dense LU route, weights and signatures are converted through
//! the moments `m_T = E[Π_{i∈T} ε_i]` of the symmetric sign vector
//! `ε = 1 - 2Y` attached to the mixture. Odd moments vanish, and
//! `κ_I = 2^(1-|I|) Σ_{T⊆I} m_T` for nonempty `I`; both directions then reduce
//! to subset-sum and Walsh-Hadamard transforms in `O(d² 2^d)`, which is what
//! makes dimensions beyond the dense-matrix range practical.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::code::{all_ones_masks, coefficient, num_extremal};
use crate::error::{Error, Result};
use crate::subset::{check_dim, even_power_set, even_rank, full_rank, power_set, SubsetIndex};

/// Default cap on the dimension for dense `A_d` matrices.
pub const DEFAULT_DIM_CAP: usize = 14;
/// Largest dimension solved through a dense LU factorization.
pub const LU_MAX_DIM: usize = 8;
/// Weights above `-NEG_TOL` are clamped to zero, weights below are rejected.
pub const NEG_TOL: f64 = 1e-9;
/// Largest dimension accepted by the transform-based conversions.
pub const TRANSFORM_MAX_DIM: usize = 24;

/// Even concordance signature, indexed by `E(D)` in canonical order.
#[derive(Clone, Debug, PartialEq)]
pub struct EvenSignature {
    d: usize,
    values: Vec<f64>,
}

impl EvenSignature {
    pub fn new(d: usize, values: Vec<f64>) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidSignature(format!("dimension {d} must be at least 2")));
        }
        check_dim(d)?;
        if values.len() != num_extremal(d) {
            return Err(Error::InvalidSignature(format!(
                "expected {} values for d = {d}, got {}",
                num_extremal(d),
                values.len()
            )));
        }
        if (values[0] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidSignature(format!(
                "value for the empty set must be 1, got {}",
                values[0]
            )));
        }
        check_unit_interval(&values)?;
        Ok(Self { d, values })
    }

    pub(crate) fn from_raw(d: usize, values: Vec<f64>) -> Self {
        Self { d, values }
    }

    /// Signature of the comonotone copula: every entry equals one.
    pub fn comonotone(d: usize) -> Self {
        Self { d, values: vec![1.0; num_extremal(d)] }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn labels(&self) -> Vec<SubsetIndex> {
        even_power_set(self.d)
    }

    pub fn get(&self, subset: &SubsetIndex) -> Option<f64> {
        if subset.d() != self.d {
            return None;
        }
        even_rank(subset).map(|r| self.values[r])
    }

    /// Value for the pair `{i, j}` (1-based).
    pub fn pair(&self, i: usize, j: usize) -> f64 {
        let s = SubsetIndex::new(self.d, &[i, j]).expect("valid pair");
        self.get(&s).unwrap()
    }
}

/// Concordance signature over the full power set, in canonical order.
#[derive(Clone, Debug, PartialEq)]
pub struct FullSignature {
    d: usize,
    values: Vec<f64>,
}

impl FullSignature {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> Vec<SubsetIndex> {
        power_set(self.d)
    }

    pub fn get(&self, subset: &SubsetIndex) -> Option<f64> {
        (subset.d() == self.d).then(|| self.values[full_rank(subset)])
    }

    /// The even-cardinality part.
    pub fn to_even(&self) -> EvenSignature {
        let values = even_power_set(self.d)
            .iter()
            .map(|s| self.values[full_rank(s)])
            .collect();
        EvenSignature::from_raw(self.d, values)
    }
}

/// Weights of an extremal mixture; `w[k-1]` belongs to `C^(k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureWeights {
    d: usize,
    w: Vec<f64>,
}

impl MixtureWeights {
    pub fn new(d: usize, w: Vec<f64>) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidWeights(format!("dimension {d} must be at least 2")));
        }
        check_dim(d)?;
        if w.len() != num_extremal(d) {
            return Err(Error::InvalidWeights(format!(
                "expected {} weights for d = {d}, got {}",
                num_extremal(d),
                w.len()
            )));
        }
        if let Some((k, &x)) = w.iter().enumerate().find(|(_, x)| !(**x >= -NEG_TOL)) {
            return Err(Error::InvalidWeights(format!("w_{} = {x} is negative", k + 1)));
        }
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidWeights(format!("weights sum to {total}")));
        }
        Ok(Self { d, w })
    }

    pub(crate) fn from_raw(d: usize, w: Vec<f64>) -> Self {
        Self { d, w }
    }

    /// All mass on `C^(k)`.
    pub fn unit(d: usize, k: usize) -> Self {
        let mut w = vec![0.0; num_extremal(d)];
        w[k - 1] = 1.0;
        Self { d, w }
    }

    pub fn uniform(d: usize) -> Self {
        let n = num_extremal(d);
        Self { d, w: vec![1.0 / n as f64; n] }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.w
    }

    /// Weight of `C^(k)`, 1-based.
    pub fn weight(&self, k: usize) -> f64 {
        self.w[k - 1]
    }

    pub fn max_abs_diff(&self, other: &MixtureWeights) -> f64 {
        max_abs_diff(&self.w, &other.w)
    }
}

/// The 0/1 matrix `A_d` with rows `E(D)` and columns `k = 1..2^(d-1)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoefficientMatrix {
    d: usize,
    n: usize,
    data: Vec<u8>,
}

impl CoefficientMatrix {
    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of rows (= number of columns).
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.n + col]
    }

    pub fn row(&self, row: usize) -> &[u8] {
        &self.data[row * self.n..(row + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u8]> {
        self.data.chunks(self.n)
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j) as f64)
    }

    /// `A_d w`.
    pub fn mul_vec(&self, w: &[f64]) -> Vec<f64> {
        self.rows()
            .map(|r| r.iter().zip(w).filter(|(a, _)| **a == 1).map(|(_, x)| x).sum())
            .collect()
    }
}

pub fn build_a_matrix(d: usize) -> Result<CoefficientMatrix> {
    build_a_matrix_capped(d, DEFAULT_DIM_CAP)
}

pub fn build_a_matrix_capped(d: usize, cap: usize) -> Result<CoefficientMatrix> {
    if d < 2 {
        return Err(Error::OutOfRange(format!("dimension {d} must be at least 2")));
    }
    if d > cap {
        return Err(Error::DimensionTooLarge { d, max: cap });
    }
    check_dim(d)?;
    let n = num_extremal(d);
    let cols = all_ones_masks(d);
    let mut data = Vec::with_capacity(n * n);
    for s in even_power_set(d) {
        data.extend(cols.iter().map(|&o| coefficient(s.mask(), o) as u8));
    }
    Ok(CoefficientMatrix { d, n, data })
}

/// Row `(a_{I,1}, ..., a_{I,2^(d-1)})` for any subset `I`, as floats.
pub fn coefficient_row(subset: &SubsetIndex) -> Vec<f64> {
    let d = subset.d();
    all_ones_masks(d)
        .into_iter()
        .map(|o| if coefficient(subset.mask(), o) { 1.0 } else { 0.0 })
        .collect()
}

pub fn signature_from_weights(w: &MixtureWeights) -> EvenSignature {
    let d = w.d;
    let values = if d <= 10 {
        let cols = all_ones_masks(d);
        even_power_set(d)
            .iter()
            .map(|s| {
                let v: f64 = cols
                    .iter()
                    .zip(&w.w)
                    .filter(|(o, _)| coefficient(s.mask(), **o))
                    .map(|(_, x)| x)
                    .sum();
                v.clamp(0.0, 1.0)
            })
            .collect()
    } else {
        let by_mask = kappa_by_mask_from_weights(d, &w.w);
        even_power_set(d).iter().map(|s| by_mask[s.mask() as usize]).collect()
    };
    let mut values: Vec<f64> = values;
    values[0] = 1.0;
    EvenSignature::from_raw(d, values)
}

/// Full signature `κ_I = Σ_k w_k a_{I,k}` over all of `P(D)`.
pub fn full_signature_from_weights(w: &MixtureWeights) -> FullSignature {
    let d = w.d;
    let by_mask = kappa_by_mask_from_weights(d, &w.w);
    FullSignature { d, values: reorder_full(d, &by_mask) }
}

/// Solves `A_d w = κ`. Negative weights above `-1e-9` are clamped to zero.
pub fn weights_from_signature(kappa: &EvenSignature) -> Result<MixtureWeights> {
    let raw = if kappa.d <= LU_MAX_DIM {
        solve_lu(kappa)?
    } else {
        solve_transform(kappa)?
    };
    clamp_weights(kappa.d, raw)
}

/// Solves `A_d w = κ` without the sign check; entries may be negative.
pub fn solve_unchecked(kappa: &EvenSignature) -> Result<Vec<f64>> {
    if kappa.d <= LU_MAX_DIM {
        solve_lu(kappa)
    } else {
        solve_transform(kappa)
    }
}

/// Dense LU route, available for any `d` within the matrix cap.
pub fn weights_from_signature_lu(kappa: &EvenSignature) -> Result<Vec<f64>> {
    solve_lu(kappa)
}

/// Transform route, available up to `d = 24`.
pub fn weights_from_signature_transform(kappa: &EvenSignature) -> Result<Vec<f64>> {
    solve_transform(kappa)
}

pub(crate) fn clamp_weights(d: usize, mut raw: Vec<f64>) -> Result<MixtureWeights> {
    for (k, x) in raw.iter_mut().enumerate() {
        if *x < -NEG_TOL {
            return Err(Error::NotAttainable { k: k + 1, weight: *x });
        }
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    Ok(MixtureWeights::from_raw(d, raw))
}

fn solve_lu(kappa: &EvenSignature) -> Result<Vec<f64>> {
    let a = build_a_matrix(kappa.d)?.to_dmatrix();
    let b = DVector::from_column_slice(&kappa.values);
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::NumericalFailure("coefficient matrix is singular".into()))?;
    Ok(x.iter().copied().collect())
}

fn solve_transform(kappa: &EvenSignature) -> Result<Vec<f64>> {
    let d = kappa.d;
    if d > TRANSFORM_MAX_DIM {
        return Err(Error::DimensionTooLarge { d, max: TRANSFORM_MAX_DIM });
    }
    let size = 1usize << d;
    // g_I = 2^(|I|-1) κ_I = Σ_{T⊆I, |T| even} m_T for nonempty even I
    let mut g = vec![0.0; size];
    for (s, &v) in even_power_set(d).iter().zip(&kappa.values) {
        let m = s.mask() as usize;
        g[m] = if m == 0 { 1.0 } else { v * (1u64 << (s.len() - 1)) as f64 };
    }
    let mut moments = vec![0.0; size];
    moments[0] = 1.0;
    for c in (2..=d).step_by(2) {
        let mut z = moments.clone();
        subset_zeta(&mut z, d);
        for mask in 0..size {
            if (mask as u32).count_ones() as usize == c {
                moments[mask] = g[mask] - z[mask];
            }
        }
    }
    // P(Y = y) = 2^-d Σ_T m_T (-1)^{|T ∩ y|}
    walsh_hadamard(&mut moments, d);
    let scale = 2.0 / size as f64;
    Ok(all_ones_masks(d)
        .into_iter()
        .map(|o| moments[o as usize] * scale)
        .collect())
}

/// `κ` indexed by mask for every subset, from mixture weights.
pub(crate) fn kappa_by_mask_from_weights(d: usize, w: &[f64]) -> Vec<f64> {
    let size = 1usize << d;
    let full = (size - 1) as u32;
    let mut f = vec![0.0; size];
    for (o, &x) in all_ones_masks(d).into_iter().zip(w) {
        f[o as usize] += 0.5 * x;
        f[(!o & full) as usize] += 0.5 * x;
    }
    walsh_hadamard(&mut f, d);
    // f now holds m_T; odd moments are zero up to rounding
    for (t, v) in f.iter_mut().enumerate() {
        if (t as u32).count_ones() % 2 == 1 {
            *v = 0.0;
        }
    }
    subset_zeta(&mut f, d);
    for (mask, v) in f.iter_mut().enumerate() {
        let c = (mask as u32).count_ones() as i32;
        *v = if mask == 0 { 1.0 } else { (*v * libm::exp2((1 - c) as f64)).clamp(0.0, 1.0) };
    }
    f
}

fn subset_zeta(f: &mut [f64], d: usize) {
    for b in 0..d {
        let bit = 1usize << b;
        for mask in 0..f.len() {
            if mask & bit != 0 {
                f[mask] += f[mask ^ bit];
            }
        }
    }
}

fn walsh_hadamard(f: &mut [f64], d: usize) {
    for b in 0..d {
        let bit = 1usize << b;
        for mask in 0..f.len() {
            if mask & bit == 0 {
                let (x, y) = (f[mask], f[mask | bit]);
                f[mask] = x + y;
                f[mask | bit] = x - y;
            }
        }
    }
}

fn reorder_full(d: usize, by_mask: &[f64]) -> Vec<f64> {
    power_set(d).iter().map(|s| by_mask[s.mask() as usize]).collect()
}

/// Completes an even signature with its odd-cardinality entries.
pub fn extend_to_full(kappa: &EvenSignature) -> FullSignature {
    let d = kappa.d;
    let by_mask = if d <= 12 {
        odd_recursion(kappa)
    } else {
        // the recursion costs 3^d; go through the weights instead
        let raw = solve_transform(kappa).expect("dimension checked by signature");
        kappa_by_mask_from_weights(d, &raw)
    };
    FullSignature { d, values: reorder_full(d, &by_mask) }
}

/// `κ_I = 1 - |I|/2 + Σ_{A⊂I, 2≤|A|<|I|} (-1)^|A| κ_A / 2` for odd `|I|`.
fn odd_recursion(kappa: &EvenSignature) -> Vec<f64> {
    let d = kappa.d;
    let mut by_mask = vec![0.0; 1usize << d];
    for (s, &v) in even_power_set(d).iter().zip(&kappa.values) {
        by_mask[s.mask() as usize] = v;
    }
    for s in power_set(d) {
        let len = s.len();
        if len % 2 == 0 {
            continue;
        }
        let mask = s.mask();
        if len == 1 {
            by_mask[mask as usize] = 1.0;
            continue;
        }
        let mut v = 1.0 - len as f64 / 2.0;
        // proper submasks of `mask`
        let mut sub = (mask.wrapping_sub(1)) & mask;
        while sub != 0 {
            let c = sub.count_ones();
            if c >= 2 {
                let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
                v += sign * by_mask[sub as usize] / 2.0;
            }
            sub = (sub - 1) & mask;
        }
        by_mask[mask as usize] = v;
    }
    by_mask
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    Kappa,
    Tau,
}

/// Converts between `κ_I` and `τ_I` for `|I| = m` using
/// `(2^(m-1) - 1) τ = 2^(m-1) κ - 1`.
pub fn tau_kappa_convert(value: f64, m: usize, to: Scale) -> Result<f64> {
    if m < 2 || m > 52 {
        return Err(Error::OutOfRange(format!("cardinality {m} must be in 2..=52")));
    }
    let p = libm::exp2((m - 1) as f64);
    let eps = 1e-12;
    match to {
        Scale::Tau => {
            if !(value >= -eps && value <= 1.0 + eps) {
                return Err(Error::OutOfRange(format!("κ = {value} outside [0, 1]")));
            }
            Ok((p * value - 1.0) / (p - 1.0))
        }
        Scale::Kappa => {
            let lo = -1.0 / (p - 1.0);
            if !(value >= lo - eps && value <= 1.0 + eps) {
                return Err(Error::OutOfRange(format!("τ = {value} outside [{lo}, 1]")));
            }
            Ok(((p - 1.0) * value + 1.0) / p)
        }
    }
}

/// Pairwise Kendall matrix `P_τ[i,j] = 2κ_{ij} - 1`.
pub fn kendall_matrix_from_even(kappa: &EvenSignature) -> DMatrix<f64> {
    let d = kappa.d;
    DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            1.0
        } else {
            2.0 * kappa.pair(i.min(j) + 1, i.max(j) + 1) - 1.0
        }
    })
}

pub(crate) fn check_unit_interval(values: &[f64]) -> Result<()> {
    if let Some(v) = values.iter().find(|v| !(**v >= -1e-12 && **v <= 1.0 + 1e-12)) {
        return Err(Error::InvalidSignature(format!("value {v} outside [0, 1]")));
    }
    Ok(())
}

pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
