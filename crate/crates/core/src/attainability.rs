//! Attainability of partial signatures.
//!
//! A partial signature `κ_S` over a label set `S ⊆ E(D)` is attainable iff the
//! weight polytope `{w ≥ 0 : A^(1) w = κ_S}` is nonempty, where `A^(1)` holds
//! the rows of the coefficient matrix for `S`. Every question here reduces to
//! linear programming over that polytope.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicBool, Ordering};

use nalgebra::{DMatrix, DVector};

use crate::code::num_extremal;
use crate::error::{Error, Result};
use crate::signature::{
    coefficient_row, max_abs_diff, weights_from_signature, EvenSignature, MixtureWeights,
    DEFAULT_DIM_CAP, NEG_TOL,
};
use crate::simplex::{
    basic_solution, default_max_iter, phase_one, EqualitySystem, FeasibleTableau, PhaseOne,
    CERTIFY_TOL,
};
use crate::subset::{combinations, even_power_set, pair_labels, LabelSet, SubsetIndex};

/// Equality constraints are checked at this tolerance.
pub const EQ_TOL: f64 = 1e-8;
/// Vertices closer than this in max-norm are merged.
pub const VERTEX_TOL: f64 = 1e-8;

/// Limits applied by the attainability routines.
#[derive(Clone, Debug, PartialEq)]
pub struct Limits {
    /// Largest dimension for feasibility and bounds.
    pub dim_cap: usize,
    /// Largest dimension for vertex enumeration.
    pub enumeration_cap: usize,
    /// Largest number of bases visited during vertex enumeration.
    pub max_bases: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self { dim_cap: DEFAULT_DIM_CAP, enumeration_cap: 6, max_bases: 2_000_000 }
    }
}

/// Values for a subset of the even power set.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialSignature {
    labels: LabelSet,
    values: Vec<f64>,
}

impl PartialSignature {
    pub fn new(labels: LabelSet, values: Vec<f64>) -> Result<Self> {
        if labels.len() != values.len() {
            return Err(Error::InvalidSignature(format!(
                "{} labels but {} values",
                labels.len(),
                values.len()
            )));
        }
        if !labels.is_even() {
            return Err(Error::InvalidLabelSet("labels must have even cardinality".into()));
        }
        if labels.d() < 2 {
            return Err(Error::InvalidLabelSet("dimension must be at least 2".into()));
        }
        if (values[0] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidSignature(format!(
                "value for the empty set must be 1, got {}",
                values[0]
            )));
        }
        if let Some((s, v)) = labels
            .subsets()
            .iter()
            .zip(&values)
            .find(|(_, v)| !(**v >= 0.0 && **v <= 1.0))
        {
            return Err(Error::InvalidSignature(format!("value {v} for {s} outside [0, 1]")));
        }
        Ok(Self { labels, values })
    }

    /// Builds a partial signature from unordered `(subset, value)` entries;
    /// `∅ ↦ 1` is added when missing.
    pub fn from_entries(d: usize, entries: &[(SubsetIndex, f64)]) -> Result<Self> {
        let mut all: Vec<(SubsetIndex, f64)> = entries.to_vec();
        if !all.iter().any(|(s, _)| s.is_empty()) {
            all.push((SubsetIndex::empty(d), 1.0));
        }
        all.sort_by(|a, b| a.0.cmp(&b.0));
        let labels = LabelSet::new(d, all.iter().map(|e| e.0).collect())?;
        Self::new(labels, all.into_iter().map(|e| e.1).collect())
    }

    /// All pairs, values given in lexicographic pair order.
    pub fn from_pairs(d: usize, pairs: &[f64]) -> Result<Self> {
        let labels = pair_labels(d);
        if pairs.len() + 1 != labels.len() {
            return Err(Error::InvalidSignature(format!(
                "expected {} pair values for d = {d}, got {}",
                labels.len() - 1,
                pairs.len()
            )));
        }
        let mut values = vec![1.0];
        values.extend_from_slice(pairs);
        Self::new(LabelSet::new(d, labels)?, values)
    }

    pub fn from_even(kappa: &EvenSignature) -> Self {
        let labels = LabelSet::new(kappa.d(), kappa.labels()).expect("even power set");
        Self { labels, values: kappa.values().to_vec() }
    }

    pub fn d(&self) -> usize {
        self.labels.d()
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, s: &SubsetIndex) -> Option<f64> {
        self.labels.position(s).map(|i| self.values[i])
    }

    /// True when every even subset carries a value.
    pub fn is_complete(&self) -> bool {
        self.labels.len() == num_extremal(self.d())
    }

    /// Even subsets without a value.
    pub fn missing_labels(&self) -> Vec<SubsetIndex> {
        even_power_set(self.d())
            .into_iter()
            .filter(|s| !self.labels.contains(s))
            .collect()
    }

    /// The constraint system `A^(1) w = κ_S`.
    pub fn system(&self) -> EqualitySystem {
        let n = num_extremal(self.d());
        let mut a = Vec::with_capacity(self.labels.len() * n);
        for s in self.labels.subsets() {
            a.extend(coefficient_row(s));
        }
        EqualitySystem::new(self.labels.len(), n, a, self.values.clone())
    }

    /// Copy with an extra or replaced entry.
    pub fn with_entry(&self, s: SubsetIndex, value: f64) -> Result<Self> {
        let mut entries: Vec<(SubsetIndex, f64)> = self
            .labels
            .subsets()
            .iter()
            .copied()
            .zip(self.values.iter().copied())
            .filter(|(t, _)| *t != s)
            .collect();
        entries.push((s, value));
        Self::from_entries(self.d(), &entries)
    }
}

/// Outcome of a feasibility test.
#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityCertificate {
    pub feasible: bool,
    pub witness: Option<MixtureWeights>,
    pub infeasibility_reason: Option<String>,
    /// Optimal phase-one objective (sum of artificial variables).
    pub phase_one_objective: f64,
    /// For infeasible verdicts: the phase-one optimum exceeds `1e-7`.
    pub certified: bool,
}

/// Vertices of the weight polytope.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightPolytope {
    pub vertices: Vec<MixtureWeights>,
    pub rank: usize,
}

/// Per-target lower and upper bounds with their witnesses.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundsReport {
    pub targets: Vec<SubsetIndex>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub argmin: Vec<MixtureWeights>,
    pub argmax: Vec<MixtureWeights>,
}

fn check_dimension(partial: &PartialSignature, cap: usize) -> Result<()> {
    if partial.d() > cap {
        return Err(Error::DimensionTooLarge { d: partial.d(), max: cap });
    }
    Ok(())
}

fn to_weights(d: usize, mut x: Vec<f64>) -> MixtureWeights {
    for v in &mut x {
        if *v < 0.0 && *v >= -NEG_TOL {
            *v = 0.0;
        }
    }
    MixtureWeights::from_raw(d, x)
}

enum Prepared {
    Feasible(FeasibleTableau),
    Infeasible(f64),
}

fn prepare(partial: &PartialSignature, limits: &Limits) -> Result<Prepared> {
    check_dimension(partial, limits.dim_cap)?;
    let system = partial.system();
    let max_iter = default_max_iter(system.m, system.n);
    Ok(match phase_one(&system, max_iter)? {
        PhaseOne::Feasible(t) => Prepared::Feasible(t),
        PhaseOne::Infeasible { objective } => Prepared::Infeasible(objective),
    })
}

pub fn check_attainable(partial: &PartialSignature) -> Result<FeasibilityCertificate> {
    check_attainable_with(partial, &Limits::default())
}

pub fn check_attainable_with(partial: &PartialSignature, limits: &Limits) -> Result<FeasibilityCertificate> {
    match prepare(partial, limits)? {
        Prepared::Feasible(t) => {
            let x = t.solution();
            let residual = t.system().residual(&x);
            if residual > EQ_TOL {
                return Err(Error::NumericalFailure(format!(
                    "witness violates the constraints by {residual:e}"
                )));
            }
            Ok(FeasibilityCertificate {
                feasible: true,
                witness: Some(to_weights(partial.d(), x)),
                infeasibility_reason: None,
                phase_one_objective: 0.0,
                certified: true,
            })
        }
        Prepared::Infeasible(objective) => Ok(FeasibilityCertificate {
            feasible: false,
            witness: None,
            infeasibility_reason: Some(format!(
                "no nonnegative weights reproduce the values; phase-one optimum {objective:e}"
            )),
            phase_one_objective: objective,
            certified: objective > CERTIFY_TOL,
        }),
    }
}

pub fn validate_targets(partial: &PartialSignature, targets: &[SubsetIndex]) -> Result<()> {
    if targets.is_empty() {
        return Err(Error::EmptyTargets);
    }
    for t in targets {
        if t.d() != partial.d() || t.len() % 2 != 0 || t.is_empty() {
            return Err(Error::InvalidSubset(format!(
                "target {t} is not a nonempty even subset of 1..={}",
                partial.d()
            )));
        }
        if partial.labels().contains(t) {
            return Err(Error::InvalidSubset(format!("target {t} already has a value")));
        }
    }
    Ok(())
}

/// Feasible tableau of a partial signature, reusable for many objectives.
#[derive(Clone, Debug)]
pub struct BoundsSolver {
    d: usize,
    tableau: FeasibleTableau,
}

/// Lower and upper bound for one target with witnesses.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetBounds {
    pub lower: f64,
    pub upper: f64,
    pub argmin: MixtureWeights,
    pub argmax: MixtureWeights,
}

impl BoundsSolver {
    pub fn new(partial: &PartialSignature, limits: &Limits) -> Result<Self> {
        match prepare(partial, limits)? {
            Prepared::Feasible(tableau) => Ok(Self { d: partial.d(), tableau }),
            Prepared::Infeasible(objective) => {
                Err(Error::Infeasible { phase_one_objective: objective })
            }
        }
    }

    pub fn rank(&self) -> usize {
        self.tableau.rank()
    }

    pub fn witness(&self) -> MixtureWeights {
        to_weights(self.d, self.tableau.solution())
    }

    /// Minimum and maximum of `κ_I` over the weight polytope.
    pub fn bounds(&self, target: &SubsetIndex) -> Result<TargetBounds> {
        let c = coefficient_row(target);
        let (lo, wlo) = self.tableau.minimize(&c)?;
        let (hi, whi) = self.tableau.maximize(&c)?;
        Ok(TargetBounds {
            lower: lo.clamp(0.0, 1.0),
            upper: hi.clamp(0.0, 1.0).max(lo.clamp(0.0, 1.0)),
            argmin: to_weights(self.d, wlo),
            argmax: to_weights(self.d, whi),
        })
    }

    /// Minimizes `c·w` over the weight polytope.
    pub fn minimize(&self, c: &[f64]) -> Result<(f64, MixtureWeights)> {
        let (v, x) = self.tableau.minimize(c)?;
        Ok((v, to_weights(self.d, x)))
    }
}

pub fn bound_missing(partial: &PartialSignature, targets: &[SubsetIndex]) -> Result<BoundsReport> {
    bound_missing_with(partial, targets, &Limits::default())
}

pub fn bound_missing_with(
    partial: &PartialSignature,
    targets: &[SubsetIndex],
    limits: &Limits,
) -> Result<BoundsReport> {
    validate_targets(partial, targets)?;
    let solver = BoundsSolver::new(partial, limits)?;
    let mut report = BoundsReport {
        targets: targets.to_vec(),
        lower: Vec::with_capacity(targets.len()),
        upper: Vec::with_capacity(targets.len()),
        argmin: Vec::with_capacity(targets.len()),
        argmax: Vec::with_capacity(targets.len()),
    };
    for t in targets {
        let b = solver.bounds(t)?;
        report.lower.push(b.lower);
        report.upper.push(b.upper);
        report.argmin.push(b.argmin);
        report.argmax.push(b.argmax);
    }
    Ok(report)
}

/// Which extreme of the missing coordinates a norm problem looks for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormExtreme {
    /// Minimize `‖κ_T‖²`.
    Smallest,
    /// Minimize `‖1 - κ_T‖²`.
    Largest,
}

/// Result of a joint norm problem over the missing coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct NormSolution {
    pub targets: Vec<SubsetIndex>,
    pub values: Vec<f64>,
    pub weights: MixtureWeights,
    pub objective: f64,
    pub iterations: usize,
    pub gap: f64,
}

/// Jointly smallest or largest missing values in the Euclidean sense, by
/// Frank-Wolfe iterations over the weight polytope.
pub fn norm_bounds(
    partial: &PartialSignature,
    targets: &[SubsetIndex],
    extreme: NormExtreme,
    limits: &Limits,
) -> Result<NormSolution> {
    validate_targets(partial, targets)?;
    let solver = BoundsSolver::new(partial, limits)?;
    let rows: Vec<Vec<f64>> = targets.iter().map(coefficient_row).collect();
    let goal = match extreme {
        NormExtreme::Smallest => 0.0,
        NormExtreme::Largest => 1.0,
    };
    let apply = |w: &[f64]| -> Vec<f64> {
        rows.iter().map(|r| r.iter().zip(w).map(|(a, x)| a * x).sum()).collect()
    };
    let n = num_extremal(partial.d());
    let mut w = solver.tableau.solution();
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    while iterations < 1000 {
        iterations += 1;
        let resid: Vec<f64> = apply(&w).iter().map(|v| v - goal).collect();
        let mut grad = vec![0.0; n];
        for (r, res) in rows.iter().zip(&resid) {
            for (g, a) in grad.iter_mut().zip(r) {
                *g += 2.0 * a * res;
            }
        }
        let (_, s) = solver.tableau.minimize(&grad)?;
        let dir: Vec<f64> = s.iter().zip(&w).map(|(s, w)| s - w).collect();
        gap = -grad.iter().zip(&dir).map(|(g, d)| g * d).sum::<f64>();
        if gap < 1e-12 {
            break;
        }
        let ad = apply(&dir);
        let denom: f64 = ad.iter().map(|v| v * v).sum();
        if denom <= 0.0 {
            break;
        }
        let step = (-resid.iter().zip(&ad).map(|(r, a)| r * a).sum::<f64>() / denom).clamp(0.0, 1.0);
        for (x, d) in w.iter_mut().zip(&dir) {
            *x += step * d;
        }
    }
    let values = apply(&w);
    let objective = values.iter().map(|v| (v - goal) * (v - goal)).sum();
    Ok(NormSolution {
        targets: targets.to_vec(),
        values,
        weights: to_weights(partial.d(), w),
        objective,
        iterations,
        gap,
    })
}

/// How vertices are enumerated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum VertexMethod {
    /// Traverse the graph of feasible bases by simplex pivots.
    #[default]
    BasisGraph,
    /// Try every set of `rank` columns.
    Combinations,
}

pub fn enumerate_vertices(partial: &PartialSignature) -> Result<WeightPolytope> {
    enumerate_vertices_with(partial, &Limits::default(), VertexMethod::BasisGraph, None)
}

pub fn enumerate_vertices_with(
    partial: &PartialSignature,
    limits: &Limits,
    method: VertexMethod,
    cancel: Option<&AtomicBool>,
) -> Result<WeightPolytope> {
    check_dimension(partial, limits.enumeration_cap)?;
    let d = partial.d();
    if partial.is_complete() {
        let kappa = EvenSignature::new(d, partial.values().to_vec())?;
        match weights_from_signature(&kappa) {
            Ok(w) => return Ok(WeightPolytope { vertices: vec![w], rank: num_extremal(d) }),
            Err(Error::NotAttainable { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    let tableau = match prepare(partial, limits)? {
        Prepared::Feasible(t) => t,
        Prepared::Infeasible(objective) => {
            return Err(Error::Infeasible { phase_one_objective: objective })
        }
    };
    let raw = match method {
        VertexMethod::BasisGraph => traverse_bases(&tableau, limits.max_bases, cancel)?,
        VertexMethod::Combinations => combination_vertices(&tableau, cancel)?,
    };
    let mut vertices: Vec<Vec<f64>> = Vec::new();
    for x in raw {
        if !vertices.iter().any(|v| max_abs_diff(v, &x) <= VERTEX_TOL) {
            vertices.push(x);
        }
    }
    vertices.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| y.total_cmp(x))
            .find(|o| o.is_ne())
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    Ok(WeightPolytope {
        vertices: vertices.into_iter().map(|x| to_weights(d, x)).collect(),
        rank: tableau.rank(),
    })
}

fn cancelled(cancel: Option<&AtomicBool>) -> bool {
    cancel.is_some_and(|c| c.load(Ordering::Relaxed))
}

/// Depth-first search over feasible bases. Each basis is re-solved from the
/// original data, so no error accumulates along long pivot paths.
fn traverse_bases(
    start: &FeasibleTableau,
    max_bases: usize,
    cancel: Option<&AtomicBool>,
) -> Result<Vec<Vec<f64>>> {
    let system = start.system();
    let rows = start.retained_rows();
    let r = rows.len();
    let n = system.n;
    let full = DMatrix::from_fn(r, n + 1, |i, j| {
        if j < n {
            system.a[rows[i] * n + j]
        } else {
            system.b[rows[i]]
        }
    });

    let mut first: Vec<usize> = start.basis().to_vec();
    first.sort_unstable();
    let mut visited: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut stack = vec![first.clone()];
    visited.insert(first);
    let mut out = Vec::new();

    while let Some(basis) = stack.pop() {
        if cancelled(cancel) {
            return Err(Error::Cancelled);
        }
        let bmat = DMatrix::from_fn(r, r, |i, j| full[(i, basis[j])]);
        let Some(t) = bmat.lu().solve(&full) else {
            continue;
        };
        let xb: Vec<f64> = (0..r).map(|i| t[(i, n)]).collect();
        if xb.iter().any(|&v| v < -1e-9) {
            continue;
        }
        let mut x = vec![0.0; n];
        for (i, &j) in basis.iter().enumerate() {
            x[j] = xb[i].max(0.0);
        }
        out.push(x);

        for e in 0..n {
            if basis.binary_search(&e).is_ok() {
                continue;
            }
            let col: Vec<f64> = (0..r).map(|i| t[(i, e)]).collect();
            let ratio = (0..r)
                .filter(|&i| col[i] > 1e-9)
                .map(|i| xb[i].max(0.0) / col[i])
                .fold(f64::INFINITY, f64::min);
            for i in 0..r {
                let ok = (col[i] > 1e-9 && xb[i].max(0.0) / col[i] <= ratio + 1e-9)
                    || (col[i] < -1e-9 && xb[i].abs() <= 1e-9);
                if !ok {
                    continue;
                }
                let mut next = basis.clone();
                next[i] = e;
                next.sort_unstable();
                if visited.insert(next.clone()) {
                    if visited.len() > max_bases {
                        return Err(Error::NumericalFailure(format!(
                            "more than {max_bases} feasible bases"
                        )));
                    }
                    stack.push(next);
                }
            }
        }
    }
    Ok(out)
}

/// Every choice of `rank` columns with a nonsingular, nonnegative solution.
fn combination_vertices(start: &FeasibleTableau, cancel: Option<&AtomicBool>) -> Result<Vec<Vec<f64>>> {
    let system = start.system();
    let rows = start.retained_rows();
    let r = rows.len();
    let mut out = Vec::new();
    for cols in combinations(system.n, r) {
        if cancelled(cancel) {
            return Err(Error::Cancelled);
        }
        let basis: Vec<usize> = (0..system.n).filter(|j| cols & (1 << j) != 0).collect();
        let bmat = DMatrix::from_fn(r, r, |i, j| system.a[rows[i] * system.n + basis[j]]);
        if bmat.clone().lu().determinant().abs() < 1e-9 {
            continue;
        }
        let Some(x) = basic_solution(system, rows, &basis) else {
            continue;
        };
        if x.iter().all(|&v| v >= -1e-9) && system.residual(&x) <= EQ_TOL {
            out.push(x.into_iter().map(|v| v.max(0.0)).collect());
        }
    }
    Ok(out)
}

/// Images `A^(2) w_i` of the vertices for the given targets.
pub fn project_vertices(polytope: &WeightPolytope, targets: &[SubsetIndex]) -> Vec<Vec<f64>> {
    let rows: Vec<Vec<f64>> = targets.iter().map(coefficient_row).collect();
    polytope
        .vertices
        .iter()
        .map(|w| {
            rows.iter()
                .map(|r| r.iter().zip(w.as_slice()).map(|(a, x)| a * x).sum())
                .collect()
        })
        .collect()
}

pub(crate) fn validate_unit_symmetric(p: &DMatrix<f64>) -> Result<usize> {
    let d = p.nrows();
    if d != p.ncols() || d < 2 {
        return Err(Error::InvalidMatrix(format!("expected a square matrix of size at least 2, got {}x{}", p.nrows(), p.ncols())));
    }
    for i in 0..d {
        if (p[(i, i)] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMatrix(format!("diagonal entry {} is {}", i + 1, p[(i, i)])));
        }
        for j in 0..i {
            let v = p[(i, j)];
            if !(v >= -1.0 - 1e-12 && v <= 1.0 + 1e-12) {
                return Err(Error::InvalidMatrix(format!("entry ({},{}) = {v} outside [-1, 1]", i + 1, j + 1)));
            }
            if (v - p[(j, i)]).abs() > 1e-12 {
                return Err(Error::InvalidMatrix(format!("not symmetric at ({},{})", i + 1, j + 1)));
            }
        }
    }
    Ok(d)
}

/// Pair values `κ_ij = (1 + τ_ij) / 2` in lexicographic order.
pub fn pairs_from_tau_matrix(p: &DMatrix<f64>) -> Result<Vec<f64>> {
    let d = validate_unit_symmetric(p)?;
    let mut out = Vec::with_capacity(d * (d - 1) / 2);
    for i in 0..d {
        for j in i + 1..d {
            out.push(((1.0 + p[(i, j)]) / 2.0).clamp(0.0, 1.0));
        }
    }
    Ok(out)
}

/// Membership of a Kendall matrix in the cut polytope.
pub fn check_cut_polytope(p_tau: &DMatrix<f64>) -> Result<FeasibilityCertificate> {
    let d = p_tau.nrows();
    let pairs = pairs_from_tau_matrix(p_tau)?;
    check_attainable(&PartialSignature::from_pairs(d, &pairs)?)
}

/// `Σ_k w_k (2s_k - 1)(2s_k - 1)ᵀ`.
pub fn kendall_matrix_from_weights(w: &MixtureWeights) -> DMatrix<f64> {
    let d = w.d();
    let mut p = DMatrix::zeros(d, d);
    for (k, &wk) in w.as_slice().iter().enumerate() {
        let ones = crate::code::ones_mask(k + 1, d);
        let v = DVector::from_fn(d, |j, _| if ones & (1 << j) != 0 { 1.0 } else { -1.0 });
        p += wk * &v * v.transpose();
    }
    p
}
