//! JSON documents shared by the CLI and the HTTP service.

use concordance_core::attainability::{BoundsReport, FeasibilityCertificate, PartialSignature, WeightPolytope};
use concordance_core::elliptical::{EllipticalSignature, EllipticalVerdict, Method, TLimit};
use concordance_core::equiconcordant::{BMatrix, SkeletalSolution};
use concordance_core::estimation::EmpiricalSignature;
use concordance_core::sampler::DiagnosticReport;
use concordance_core::{
    tau_kappa_convert, EvenSignature, FullSignature, MixtureWeights, Scale, SubsetIndex,
};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fraction::{de_matrix, de_numbers};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleDoc {
    #[default]
    Kappa,
    Tau,
}

/// `{ "d": int, "labels": [[int,...],...], "values": [float,...] }`.
///
/// Values may be given as Kendall-type `τ_I` with `"scale": "tau"`; they are
/// converted to concordance probabilities on input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignatureDoc {
    pub d: usize,
    pub labels: Vec<Vec<usize>>,
    #[serde(deserialize_with = "de_numbers")]
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<ScaleDoc>,
}

fn labels_of(subsets: &[SubsetIndex]) -> Vec<Vec<usize>> {
    subsets.iter().map(SubsetIndex::members).collect()
}

impl SignatureDoc {
    pub fn new(d: usize, labels: &[SubsetIndex], values: Vec<f64>) -> Self {
        Self { d, labels: labels_of(labels), values, scale: None }
    }

    pub fn from_even(kappa: &EvenSignature) -> Self {
        Self::new(kappa.d(), &kappa.labels(), kappa.values().to_vec())
    }

    pub fn from_full(kappa: &FullSignature) -> Self {
        Self::new(kappa.d(), &kappa.labels(), kappa.values().to_vec())
    }

    pub fn from_partial(p: &PartialSignature) -> Self {
        Self::new(p.d(), p.labels().subsets(), p.values().to_vec())
    }

    /// `(subset, κ)` entries in the order given.
    pub fn entries(&self) -> Result<Vec<(SubsetIndex, f64)>> {
        if self.labels.len() != self.values.len() {
            return Err(Error::Invalid(format!(
                "{} labels but {} values",
                self.labels.len(),
                self.values.len()
            )));
        }
        let tau = self.scale == Some(ScaleDoc::Tau);
        self.labels
            .iter()
            .zip(&self.values)
            .map(|(l, &v)| {
                let s = SubsetIndex::new(self.d, l)?;
                let v = if tau && s.len() >= 2 { tau_kappa_convert(v, s.len(), Scale::Kappa)? } else { v };
                Ok((s, v))
            })
            .collect()
    }

    pub fn to_partial(&self) -> Result<PartialSignature> {
        Ok(PartialSignature::from_entries(self.d, &self.entries()?)?)
    }

    /// The complete even signature; every even label must be present.
    pub fn to_even(&self) -> Result<EvenSignature> {
        let p = self.to_partial()?;
        if !p.is_complete() {
            return Err(Error::Invalid(format!(
                "signature has {} of {} even labels",
                p.labels().len(),
                1usize << (self.d - 1)
            )));
        }
        Ok(EvenSignature::new(self.d, p.values().to_vec())?)
    }
}

/// `{ "d": int, "w": [float,...] }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightsDoc {
    pub d: usize,
    #[serde(deserialize_with = "de_numbers")]
    pub w: Vec<f64>,
}

impl WeightsDoc {
    pub fn from_weights(w: &MixtureWeights) -> Self {
        Self { d: w.d(), w: w.as_slice().to_vec() }
    }

    pub fn to_weights(&self) -> Result<MixtureWeights> {
        Ok(MixtureWeights::new(self.d, self.w.clone())?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateDoc {
    pub feasible: bool,
    pub certified: bool,
    pub phase_one_objective: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<WeightsDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl From<&FeasibilityCertificate> for CertificateDoc {
    fn from(c: &FeasibilityCertificate) -> Self {
        Self {
            feasible: c.feasible,
            certified: c.certified,
            phase_one_objective: c.phase_one_objective,
            witness: c.witness.as_ref().map(WeightsDoc::from_weights),
            reason: c.infeasibility_reason.clone(),
        }
    }
}

/// `{ "targets": [...], "lower": [...], "upper": [...], "vertices": [[...]] }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsDoc {
    pub targets: Vec<Vec<usize>>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Vertices of the attainable region projected onto the targets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertices: Option<Vec<Vec<f64>>>,
}

impl BoundsDoc {
    pub fn from_report(r: &BoundsReport) -> Self {
        Self { targets: labels_of(&r.targets), lower: r.lower.clone(), upper: r.upper.clone(), vertices: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolytopeDoc {
    pub d: usize,
    pub rank: usize,
    pub vertices: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection: Option<ProjectionDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionDoc {
    pub targets: Vec<Vec<usize>>,
    pub points: Vec<Vec<f64>>,
}

impl PolytopeDoc {
    pub fn from_polytope(d: usize, p: &WeightPolytope) -> Self {
        Self {
            d,
            rank: p.rank,
            vertices: p.vertices.iter().map(|w| w.as_slice().to_vec()).collect(),
            projection: None,
        }
    }

    pub fn with_projection(mut self, targets: &[SubsetIndex], points: Vec<Vec<f64>>) -> Self {
        self.projection = Some(ProjectionDoc { targets: labels_of(targets), points });
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateDoc {
    pub signature: SignatureDoc,
    pub full: SignatureDoc,
    pub weights: WeightsDoc,
    pub n: usize,
    pub n_pairs: u64,
    pub tie_adjusted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_errors: Option<Vec<f64>>,
}

impl EstimateDoc {
    pub fn new(e: &EmpiricalSignature, std_errors: Option<Vec<f64>>) -> Self {
        Self {
            signature: SignatureDoc::from_even(&e.full.to_even()),
            full: SignatureDoc::from_full(&e.full),
            weights: WeightsDoc::from_weights(&e.weights),
            n: e.n,
            n_pairs: e.n_pairs,
            tie_adjusted: e.tie_adjusted,
            std_errors,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodDoc {
    Exact,
    MonteCarlo,
}

impl From<Method> for MethodDoc {
    fn from(m: Method) -> Self {
        match m {
            Method::Exact => MethodDoc::Exact,
            Method::MonteCarlo => MethodDoc::MonteCarlo,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticalDoc {
    /// Orthant-probability signature before projection.
    pub signature: SignatureDoc,
    pub projected: SignatureDoc,
    pub weights: WeightsDoc,
    pub std_errors: Vec<f64>,
    pub entry_methods: Vec<MethodDoc>,
    pub method: MethodDoc,
    pub samples: u64,
}

impl From<&EllipticalSignature> for EllipticalDoc {
    fn from(s: &EllipticalSignature) -> Self {
        Self {
            signature: SignatureDoc::from_even(&s.raw),
            projected: SignatureDoc::from_even(&s.projected),
            weights: WeightsDoc::from_weights(&s.weights),
            std_errors: s.std_errors(),
            entry_methods: s.estimates.iter().map(|e| e.method.into()).collect(),
            method: s.method().into(),
            samples: s.samples,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TLimitDoc {
    pub d: usize,
    pub w: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub method: MethodDoc,
}

impl From<&TLimit> for TLimitDoc {
    fn from(t: &TLimit) -> Self {
        Self {
            d: t.weights.d(),
            w: t.weights.as_slice().to_vec(),
            std_errors: t.std_errors.clone(),
            method: t.method.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerdictDoc {
    pub attainable: bool,
    pub min_eigenvalue: f64,
    pub back_transform: Vec<Vec<f64>>,
}

impl From<&EllipticalVerdict> for VerdictDoc {
    fn from(v: &EllipticalVerdict) -> Self {
        Self {
            attainable: v.attainable,
            min_eigenvalue: v.min_eigenvalue,
            back_transform: matrix_rows(&v.back_transform),
        }
    }
}

/// `{ "d": int, "k": [float,...] }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkeletalDoc {
    pub d: usize,
    #[serde(deserialize_with = "de_numbers")]
    pub k: Vec<f64>,
}

/// `{ "d": int, "v": [float,...] }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupWeightsDoc {
    pub d: usize,
    #[serde(deserialize_with = "de_numbers")]
    pub v: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkeletalSolutionDoc {
    pub d: usize,
    pub v: Vec<f64>,
    pub raw: Vec<f64>,
    pub attainable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightsDoc>,
}

impl SkeletalSolutionDoc {
    pub fn new(d: usize, s: &SkeletalSolution, weights: Option<&MixtureWeights>) -> Self {
        Self { d, v: s.v.clone(), raw: s.raw.clone(), attainable: s.attainable, weights: weights.map(WeightsDoc::from_weights) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BMatrixDoc {
    pub d: usize,
    /// Exact entries as `"p/q"`.
    pub exact: Vec<Vec<String>>,
    pub values: Vec<Vec<f64>>,
}

impl From<&BMatrix> for BMatrixDoc {
    fn from(b: &BMatrix) -> Self {
        Self {
            d: b.d,
            exact: b.entries.iter().map(|r| r.iter().map(|x| format!("{}/{}", x.numer(), x.denom())).collect()).collect(),
            values: matrix_rows(&b.to_dmatrix()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagonalTestDoc {
    pub k: usize,
    pub rows: usize,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticDoc {
    pub n: usize,
    pub on_diagonal_fraction: f64,
    pub tests: Vec<DiagonalTestDoc>,
    pub untested_rows: usize,
    pub level: f64,
    pub corrected_level: f64,
    pub conditional_checked: bool,
    pub pass: bool,
}

impl From<&DiagnosticReport> for DiagnosticDoc {
    fn from(r: &DiagnosticReport) -> Self {
        Self {
            n: r.n,
            on_diagonal_fraction: r.on_diagonal_fraction,
            tests: r
                .tests
                .iter()
                .map(|t| DiagonalTestDoc { k: t.k, rows: t.rows, statistic: t.statistic, p_value: t.p_value })
                .collect(),
            untested_rows: r.untested_rows,
            level: r.level,
            corrected_level: r.corrected_level,
            conditional_checked: r.conditional_checked,
            pass: r.pass,
        }
    }
}

/// A correlation (or Kendall) matrix given as a bare array of rows or as
/// `{ "matrix": [[...]] }`.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum MatrixDoc {
    Rows(#[serde(deserialize_with = "de_matrix")] Vec<Vec<f64>>),
    Wrapped {
        #[serde(deserialize_with = "de_matrix")]
        matrix: Vec<Vec<f64>>,
    },
}

impl MatrixDoc {
    pub fn rows(&self) -> &[Vec<f64>] {
        match self {
            MatrixDoc::Rows(r) | MatrixDoc::Wrapped { matrix: r } => r,
        }
    }

    pub fn to_dmatrix(&self) -> Result<DMatrix<f64>> {
        rows_to_matrix(self.rows())
    }
}

pub fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Core(concordance_core::Error::InvalidMatrix("matrix must be square and nonempty".into())));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signature_round_trip() {
        let kappa = EvenSignature::new(4, vec![1.0, 0.639, 0.666, 0.598, 0.681, 0.630, 0.661, 0.364]).unwrap();
        let doc = SignatureDoc::from_even(&kappa);
        let text = serde_json::to_string(&doc).unwrap();
        assert!(text.starts_with(r#"{"d":4,"labels":[[],[1,2],[1,3]"#));
        let back: SignatureDoc = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_even().unwrap(), kappa);
    }

    #[test]
    fn tau_scale_and_order() {
        let doc: SignatureDoc =
            serde_json::from_str(r#"{"d":3,"labels":[[2,3],[1,2],[1,3]],"values":["-5/12","-5/12","-5/12"],"scale":"tau"}"#)
                .unwrap();
        let p = doc.to_partial().unwrap();
        assert_eq!(p.values()[0], 1.0);
        assert!(p.values()[1..].iter().all(|&v| (v - 7.0 / 24.0).abs() < 1e-15));
        assert!(doc.to_even().is_ok());
        let partial: SignatureDoc = serde_json::from_str(r#"{"d":4,"labels":[[1,2]],"values":[0.5]}"#).unwrap();
        assert!(partial.to_even().is_err());
    }

    #[test]
    fn matrices_in_both_shapes() {
        let a: MatrixDoc = serde_json::from_str("[[1,0.5],[0.5,1]]").unwrap();
        let b: MatrixDoc = serde_json::from_str(r#"{"matrix":[[1,"1/2"],["1/2",1]]}"#).unwrap();
        assert_eq!(a.to_dmatrix().unwrap(), b.to_dmatrix().unwrap());
        let c: MatrixDoc = serde_json::from_str("[[1,0.5]]").unwrap();
        assert!(c.to_dmatrix().is_err());
    }
}
