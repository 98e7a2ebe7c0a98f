//! Requests and operations shared by the command line and the service.

use std::sync::atomic::AtomicBool;

use concordance_core::attainability::{
    check_attainable_with, check_cut_polytope, enumerate_vertices_with, project_vertices, Limits, PartialSignature,
    VertexMethod,
};
use concordance_core::elliptical::{
    elliptical_attainable, tau_to_correlation, CorrelationMatrix, McConfig, TLimitMode,
};
use concordance_core::equiconcordant::{build_b_matrix, expand_skeletal, skeletal_solve, SkeletalSignature};
use concordance_core::estimation::SampleMatrix;
use concordance_core::sampler::{validate_mixture, validate_pairs};
use concordance_core::{build_a_matrix, Error as CoreError, SubsetIndex};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fraction::de_matrix;
use crate::parallel;
use crate::schema::{
    rows_to_matrix, BMatrixDoc, BoundsDoc, CertificateDoc, DiagnosticDoc, EllipticalDoc, EstimateDoc,
    GroupWeightsDoc, PolytopeDoc, SignatureDoc, SkeletalDoc, SkeletalSolutionDoc, TLimitDoc, VerdictDoc, WeightsDoc,
};

/// Projected points closer than this in max-norm are reported once.
pub const POINT_TOL: f64 = 1e-9;

pub fn amatrix(d: usize, limits: &Limits) -> Result<Vec<Vec<u8>>> {
    if d > limits.dim_cap {
        return Err(CoreError::DimensionTooLarge { d, max: limits.dim_cap }.into());
    }
    Ok(build_a_matrix(d)?.rows().map(<[u8]>::to_vec).collect())
}

pub fn attainability(sig: &SignatureDoc, limits: &Limits) -> Result<CertificateDoc> {
    let cert = check_attainable_with(&sig.to_partial()?, limits)?;
    Ok(CertificateDoc::from(&cert))
}

fn subsets(d: usize, labels: &[Vec<usize>]) -> Result<Vec<SubsetIndex>> {
    Ok(labels.iter().map(|l| SubsetIndex::new(d, l)).collect::<std::result::Result<_, _>>()?)
}

/// The given targets, or every missing label.
fn targets_for(partial: &PartialSignature, labels: Option<&[Vec<usize>]>) -> Result<Vec<SubsetIndex>> {
    match labels {
        Some(l) => subsets(partial.d(), l),
        None => Ok(partial.missing_labels()),
    }
}

pub fn distinct_points(points: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for p in points {
        let seen = out.iter().any(|q| q.iter().zip(&p).all(|(a, b)| (a - b).abs() <= POINT_TOL));
        if !seen {
            out.push(p);
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    out
}

#[derive(Clone, Debug, Deserialize)]
pub struct BoundsRequest {
    #[serde(flatten)]
    pub signature: SignatureDoc,
    #[serde(default)]
    pub targets: Option<Vec<Vec<usize>>>,
    /// Also report the vertices of the projection onto the targets.
    #[serde(default)]
    pub vertices: bool,
}

pub fn bounds(req: &BoundsRequest, limits: &Limits, cancel: Option<&AtomicBool>) -> Result<BoundsDoc> {
    let partial = req.signature.to_partial()?;
    let targets = targets_for(&partial, req.targets.as_deref())?;
    let report = parallel::bound_targets(&partial, &targets, limits)?;
    let mut doc = BoundsDoc::from_report(&report);
    if req.vertices {
        let poly = enumerate_vertices_with(&partial, limits, VertexMethod::BasisGraph, cancel)?;
        doc.vertices = Some(distinct_points(project_vertices(&poly, &targets)));
    }
    Ok(doc)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VertexMethodDoc {
    #[default]
    BasisGraph,
    Combinations,
}

#[derive(Clone, Debug, Deserialize)]
pub struct VerticesRequest {
    #[serde(flatten)]
    pub signature: SignatureDoc,
    /// Labels to project the vertices onto.
    #[serde(default)]
    pub project: Option<Vec<Vec<usize>>>,
    #[serde(default)]
    pub method: VertexMethodDoc,
}

pub fn vertices(req: &VerticesRequest, limits: &Limits, cancel: Option<&AtomicBool>) -> Result<PolytopeDoc> {
    let partial = req.signature.to_partial()?;
    let method = match req.method {
        VertexMethodDoc::BasisGraph => VertexMethod::BasisGraph,
        VertexMethodDoc::Combinations => VertexMethod::Combinations,
    };
    let poly = enumerate_vertices_with(&partial, limits, method, cancel)?;
    let doc = PolytopeDoc::from_polytope(partial.d(), &poly);
    Ok(match &req.project {
        Some(labels) => {
            let targets = subsets(partial.d(), labels)?;
            let points = distinct_points(project_vertices(&poly, &targets));
            doc.with_projection(&targets, points)
        }
        None => doc,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixKind {
    /// Linear correlations `ρ`.
    #[default]
    Correlation,
    /// Pairwise Kendall's `τ`, mapped to `ρ = sin(πτ/2)`.
    Kendall,
}

#[derive(Clone, Debug, Deserialize)]
pub struct EllipticalRequest {
    #[serde(deserialize_with = "de_matrix")]
    pub matrix: Vec<Vec<f64>>,
    #[serde(default)]
    pub kind: MatrixKind,
    #[serde(default)]
    pub samples: Option<u64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl EllipticalRequest {
    pub fn correlation(&self) -> Result<CorrelationMatrix> {
        let m = rows_to_matrix(&self.matrix)?;
        Ok(CorrelationMatrix::new(match self.kind {
            MatrixKind::Correlation => m,
            MatrixKind::Kendall => tau_to_correlation(&m),
        })?)
    }

    pub fn mc(&self, defaults: &McConfig) -> Result<McConfig> {
        let mut mc = McConfig::new(self.samples.unwrap_or(defaults.samples), self.seed.unwrap_or(defaults.seed))?;
        mc.antithetic = defaults.antithetic;
        Ok(mc)
    }
}

pub fn elliptical(req: &EllipticalRequest, mc: &McConfig, cancel: Option<&AtomicBool>) -> Result<EllipticalDoc> {
    let sig = parallel::elliptical_signature(&req.correlation()?, &req.mc(mc)?, cancel)?;
    Ok(EllipticalDoc::from(&sig))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TLimitModeDoc {
    #[default]
    Analytic,
    MonteCarlo,
}

#[derive(Clone, Debug, Deserialize)]
pub struct TLimitRequest {
    #[serde(flatten)]
    pub matrix: EllipticalRequest,
    #[serde(default)]
    pub mode: TLimitModeDoc,
}

pub fn tlimit(req: &TLimitRequest, mc: &McConfig, cancel: Option<&AtomicBool>) -> Result<TLimitDoc> {
    let mode = match req.mode {
        TLimitModeDoc::Analytic => TLimitMode::Analytic,
        TLimitModeDoc::MonteCarlo => TLimitMode::MonteCarlo,
    };
    let t = parallel::t_limit_weights(&req.matrix.correlation()?, mode, &req.matrix.mc(mc)?, cancel)?;
    Ok(TLimitDoc::from(&t))
}

#[derive(Clone, Debug, Deserialize)]
pub struct KendallRequest {
    #[serde(deserialize_with = "de_matrix")]
    pub matrix: Vec<Vec<f64>>,
}

/// Elliptical verdict next to cut-polytope membership of the same matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticalCheckDoc {
    pub elliptical: VerdictDoc,
    pub cut_polytope: CertificateDoc,
}

pub fn elliptical_check(req: &KendallRequest) -> Result<EllipticalCheckDoc> {
    let p = rows_to_matrix(&req.matrix)?;
    let verdict = elliptical_attainable(&p)?;
    let cert = check_cut_polytope(&p)?;
    Ok(EllipticalCheckDoc { elliptical: VerdictDoc::from(&verdict), cut_polytope: CertificateDoc::from(&cert) })
}

/// Solves the collapsed system; the full weights are included when the
/// solution is attainable and `d` is within the dimension cap.
pub fn skeletal(doc: &SkeletalDoc, limits: &Limits) -> Result<SkeletalSolutionDoc> {
    let k = SkeletalSignature::new(doc.d, doc.k.clone())?;
    let s = skeletal_solve(&k)?;
    let weights = if s.attainable && doc.d <= limits.dim_cap { Some(expand_skeletal(&s.v, doc.d)?) } else { None };
    Ok(SkeletalSolutionDoc::new(doc.d, &s, weights.as_ref()))
}

pub fn expand(doc: &GroupWeightsDoc, limits: &Limits) -> Result<WeightsDoc> {
    if doc.d > limits.dim_cap {
        return Err(CoreError::DimensionTooLarge { d: doc.d, max: limits.dim_cap }.into());
    }
    Ok(WeightsDoc::from_weights(&expand_skeletal(&doc.v, doc.d)?))
}

pub fn bmatrix(d: usize) -> Result<BMatrixDoc> {
    Ok(BMatrixDoc::from(&build_b_matrix(d)?))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TiePolicy {
    /// Ties are an error.
    #[default]
    Reject,
    /// Tied pairs spread their weight over every resolution of the ties.
    Split,
}

#[derive(Clone, Debug, Default, Deserialize)]
pub struct EstimateOptions {
    #[serde(default)]
    pub ties: TiePolicy,
    /// Number of bootstrap resamples for standard errors.
    #[serde(default)]
    pub bootstrap: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

pub const DEFAULT_BOOTSTRAP_SEED: u64 = 0xb007;

pub fn estimate(data: &SampleMatrix, opts: &EstimateOptions) -> Result<EstimateDoc> {
    let est = parallel::empirical_signature(data, opts.ties == TiePolicy::Split)?;
    let se = match opts.bootstrap {
        Some(b) if b >= 2 => {
            Some(parallel::bootstrap_std_errors(data, b, opts.seed.unwrap_or(DEFAULT_BOOTSTRAP_SEED))?)
        }
        Some(b) => return Err(Error::Invalid(format!("need at least 2 bootstrap resamples, got {b}"))),
        None => None,
    };
    Ok(EstimateDoc::new(&est, se))
}

pub const DEFAULT_LEVEL: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairDiagnosticDoc {
    pub pair: [usize; 2],
    pub report: DiagnosticDoc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationDoc {
    pub joint: DiagnosticDoc,
    pub pairs: Vec<PairDiagnosticDoc>,
}

pub fn validate(data: &SampleMatrix, level: f64) -> Result<ValidationDoc> {
    let joint = validate_mixture(data, level)?;
    let pairs = validate_pairs(data, level)?
        .into_iter()
        .map(|((i, j), r)| PairDiagnosticDoc { pair: [i, j], report: DiagnosticDoc::from(&r) })
        .collect();
    Ok(ValidationDoc { joint: DiagnosticDoc::from(&joint), pairs })
}

/// Kendall matrix `2κ_ij - 1` from the pair entries of a signature.
pub fn kendall_rows(sig: &SignatureDoc) -> Result<Vec<Vec<f64>>> {
    let partial = sig.to_partial()?;
    let d = partial.d();
    let mut rows = vec![vec![1.0; d]; d];
    for i in 0..d {
        for j in i + 1..d {
            let s = SubsetIndex::new(d, &[i + 1, j + 1])?;
            let k = partial.get(&s).ok_or_else(|| Error::Invalid(format!("pair {s} missing")))?;
            rows[i][j] = 2.0 * k - 1.0;
            rows[j][i] = rows[i][j];
        }
    }
    Ok(rows)
}
