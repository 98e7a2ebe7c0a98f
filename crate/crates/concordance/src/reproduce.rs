//! Regenerates the published numeric artifacts into a directory and checks
//! each against its printed values.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use concordance_core::attainability::{
    bound_missing, check_attainable, enumerate_vertices, pairs_from_tau_matrix, PartialSignature,
};
use concordance_core::elliptical::{CorrelationMatrix, McConfig, TLimitMode};
use concordance_core::equiconcordant::build_b_matrix;
use concordance_core::{build_a_matrix, weights_from_signature, EvenSignature, SubsetIndex};
use nalgebra::DMatrix;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::Result;
use crate::parallel;
use crate::schema::{BMatrixDoc, EllipticalDoc, SignatureDoc, TLimitDoc, WeightsDoc};

pub const A4: [[u8; 8]; 8] = [
    [1, 1, 1, 1, 1, 1, 1, 1],
    [1, 1, 1, 1, 0, 0, 0, 0],
    [1, 1, 0, 0, 1, 1, 0, 0],
    [1, 0, 1, 0, 1, 0, 1, 0],
    [1, 1, 0, 0, 0, 0, 1, 1],
    [1, 0, 1, 0, 0, 1, 0, 1],
    [1, 0, 0, 1, 1, 0, 0, 1],
    [1, 0, 0, 0, 0, 0, 0, 0],
];

pub const CRYPTO_KAPPA: [f64; 8] = [1.0, 0.639, 0.666, 0.598, 0.681, 0.630, 0.661, 0.364];
pub const CRYPTO_WEIGHTS: [f64; 8] = [0.364, 0.129, 0.069, 0.077, 0.098, 0.075, 0.066, 0.122];

/// Kendall matrix that lies in the cut polytope but not in the image of the
/// elliptope.
pub const KENDALL_TAU: [f64; 6] = [-0.19, -0.29, 0.49, -0.34, 0.30, -0.79];
pub const KENDALL_BOUNDS: [f64; 2] = [0.04, 0.0425];
pub const KENDALL_VERTICES: [[f64; 8]; 2] = [
    [0.04, 0.005, 0.36, 0.0, 0.0625, 0.2475, 0.2825, 0.0025],
    [0.0425, 0.0025, 0.3575, 0.0025, 0.06, 0.25, 0.285, 0.0],
];

pub const TRIPLE_RHO: [f64; 3] = [0.2, 0.5, 0.8];
pub const TRIPLE_WEIGHTS: [f64; 4] = [0.513, 0.051, 0.154, 0.282];

/// Off-diagonal entries of the six-dimensional correlation matrix, times 16.
pub const SIX_RHO_16: [f64; 15] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0, 13.0, 14.0, 15.0];
pub const SIX_WEIGHTS: [f64; 32] = [
    0.2627, 0.0009, 0.0131, 0.0037, 0.0304, 0.0037, 0.0088, 0.0179, 0.0579, 0.0029, 0.0100, 0.0108, 0.0165, 0.0085,
    0.0063, 0.0659, 0.1037, 0.0029, 0.0114, 0.0091, 0.0193, 0.0073, 0.0062, 0.0390, 0.0338, 0.0064, 0.0076, 0.0232,
    0.0100, 0.0136, 0.0036, 0.1831,
];
/// Even signature in canonical order.
pub const SIX_KAPPA: [f64; 32] = [
    1.0000, 0.5199, 0.5399, 0.5600, 0.5804, 0.6012, 0.6224, 0.6441, 0.6667, 0.6902, 0.7149, 0.7413, 0.7699, 0.8019,
    0.8391, 0.8869, 0.2804, 0.2977, 0.3150, 0.3244, 0.3437, 0.3675, 0.3702, 0.3909, 0.4161, 0.4581, 0.4503, 0.4725,
    0.4993, 0.5427, 0.6153, 0.2627,
];
/// Half a unit in the last printed digit.
pub const SIX_ROUNDING: f64 = 5e-5;

pub const B7: [[(i64, i64); 4]; 4] = [
    [(1, 1), (1, 1), (1, 1), (1, 1)],
    [(1, 1), (5, 7), (11, 21), (15, 35)],
    [(1, 1), (3, 7), (3, 21), (1, 35)],
    [(1, 1), (1, 7), (0, 1), (0, 1)],
];

pub fn kendall_matrix() -> DMatrix<f64> {
    let mut p = DMatrix::identity(4, 4);
    let mut it = KENDALL_TAU.iter();
    for i in 0..4 {
        for j in i + 1..4 {
            let t = *it.next().unwrap();
            p[(i, j)] = t;
            p[(j, i)] = t;
        }
    }
    p
}

pub fn six_correlation() -> CorrelationMatrix {
    let pairs: Vec<f64> = SIX_RHO_16.iter().map(|x| x / 16.0).collect();
    CorrelationMatrix::from_pairs(6, &pairs).expect("positive definite")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    /// Largest deviation from the printed values, or the largest ratio of
    /// deviation to tolerance when tolerances vary by entry.
    pub worst: f64,
    pub limit: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<String>,
    pub file: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub seed: u64,
    pub mc_samples: u64,
    pub checks: Vec<Check>,
    pub pass: bool,
}

pub struct Options {
    pub out: PathBuf,
    pub seed: u64,
    pub mc_samples: u64,
}

impl Default for Options {
    fn default() -> Self {
        Self { out: PathBuf::from("reproduction"), seed: 0x5eed, mc_samples: 10_000_000 }
    }
}

fn max_dev(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn write(dir: &Path, name: &str, value: &impl Serialize) -> Result<String> {
    fs::write(dir.join(name), serde_json::to_vec_pretty(value)?)?;
    Ok(name.to_string())
}

struct Tally {
    worst: f64,
    failures: Vec<String>,
}

impl Tally {
    fn new() -> Self {
        Self { worst: 0.0, failures: Vec::new() }
    }

    /// Records `|ours - printed| / tol`.
    fn entry(&mut self, what: impl FnOnce() -> String, ours: f64, printed: f64, tol: f64) {
        let r = (ours - printed).abs() / tol;
        self.worst = self.worst.max(r);
        if r > 1.0 {
            self.failures.push(format!("{}: {ours:.6} vs {printed} (tolerance {tol:.2e})", what()));
        }
    }
}

pub fn run(opts: &Options) -> Result<Report> {
    fs::create_dir_all(&opts.out)?;
    let dir = opts.out.as_path();
    let mc = McConfig::new(opts.mc_samples, opts.seed)?;
    let mut checks = Vec::new();

    let t = Instant::now();
    let a = build_a_matrix(4)?;
    let rows: Vec<Vec<u8>> = a.rows().map(<[u8]>::to_vec).collect();
    let mismatches = rows.iter().zip(A4).filter(|(r, p)| r.as_slice() != p).count();
    checks.push(Check {
        name: "coefficient matrix A_4".into(),
        pass: mismatches == 0,
        worst: mismatches as f64,
        limit: 0.0,
        failures: Vec::new(),
        file: write(dir, "a4_matrix.json", &rows)?,
        seconds: t.elapsed().as_secs_f64(),
    });

    let t = Instant::now();
    let kappa = EvenSignature::new(4, CRYPTO_KAPPA.to_vec())?;
    let w = weights_from_signature(&kappa)?;
    let worst = max_dev(w.as_slice(), &CRYPTO_WEIGHTS);
    checks.push(Check {
        name: "crypto signature weights".into(),
        pass: worst <= 2e-3,
        worst,
        limit: 2e-3,
        failures: Vec::new(),
        file: write(
            dir,
            "crypto_weights.json",
            &json!({ "signature": SignatureDoc::from_even(&kappa), "weights": WeightsDoc::from_weights(&w) }),
        )?,
        seconds: t.elapsed().as_secs_f64(),
    });

    let t = Instant::now();
    let partial = PartialSignature::from_pairs(4, &pairs_from_tau_matrix(&kendall_matrix())?)?;
    let target = SubsetIndex::new(4, &[1, 2, 3, 4])?;
    let b = bound_missing(&partial, &[target])?;
    let poly = enumerate_vertices(&partial)?;
    let mut tally = Tally::new();
    tally.entry(|| "lower".into(), b.lower[0], KENDALL_BOUNDS[0], 1e-6);
    tally.entry(|| "upper".into(), b.upper[0], KENDALL_BOUNDS[1], 1e-6);
    if poly.vertices.len() != 2 {
        tally.failures.push(format!("{} vertices, expected 2", poly.vertices.len()));
    }
    for (i, printed) in KENDALL_VERTICES.iter().enumerate() {
        let nearest = poly.vertices.iter().map(|v| max_dev(v.as_slice(), printed)).fold(f64::INFINITY, f64::min);
        tally.entry(|| format!("vertex {}", i + 1), nearest, 0.0, 5e-4);
    }
    checks.push(Check {
        name: "bounds and vertices for the non-elliptical Kendall matrix".into(),
        pass: tally.failures.is_empty(),
        worst: tally.worst,
        limit: 1.0,
        failures: tally.failures,
        file: write(
            dir,
            "kendall_bounds.json",
            &json!({
                "lower": b.lower[0],
                "upper": b.upper[0],
                "vertices": poly.vertices.iter().map(|v| v.as_slice().to_vec()).collect::<Vec<_>>(),
            }),
        )?,
        seconds: t.elapsed().as_secs_f64(),
    });

    let t = Instant::now();
    let p3 = CorrelationMatrix::from_pairs(3, &TRIPLE_RHO)?;
    let analytic = parallel::t_limit_weights(&p3, TLimitMode::Analytic, &mc, None)?;
    let sampled = parallel::t_limit_weights(&p3, TLimitMode::MonteCarlo, &mc, None)?;
    let mut tally = Tally::new();
    for (k, (&ours, &printed)) in analytic.weights.as_slice().iter().zip(&TRIPLE_WEIGHTS).enumerate() {
        tally.entry(|| format!("analytic w_{}", k + 1), ours, printed, 5e-4);
    }
    for (k, ((&x, &se), &exact)) in
        sampled.weights.as_slice().iter().zip(&sampled.std_errors).zip(analytic.weights.as_slice()).enumerate()
    {
        tally.entry(|| format!("sampled w_{}", k + 1), x, exact, (3.0 * se).max(f64::EPSILON));
    }
    checks.push(Check {
        name: "t-limit weights of the trivariate matrix".into(),
        pass: tally.failures.is_empty(),
        worst: tally.worst,
        limit: 1.0,
        failures: tally.failures,
        file: write(
            dir,
            "t_limit_triple.json",
            &json!({ "analytic": TLimitDoc::from(&analytic), "monte_carlo": TLimitDoc::from(&sampled) }),
        )?,
        seconds: t.elapsed().as_secs_f64(),
    });

    let t = Instant::now();
    let p6 = six_correlation();
    let sig = parallel::elliptical_signature(&p6, &mc, None)?;
    let weights = parallel::t_limit_weights(&p6, TLimitMode::MonteCarlo, &mc, None)?;
    let mut tally = Tally::new();
    let labels = sig.raw.labels();
    for (i, (est, &printed)) in sig.estimates.iter().zip(&SIX_KAPPA).enumerate() {
        let tol = if labels[i].len() <= 2 { 5e-4 } else { 3.0 * est.std_error + SIX_ROUNDING };
        tally.entry(|| format!("κ{}", labels[i]), est.value, printed, tol);
    }
    for (k, ((&x, &se), &printed)) in
        weights.weights.as_slice().iter().zip(&weights.std_errors).zip(&SIX_WEIGHTS).enumerate()
    {
        tally.entry(|| format!("w_{}", k + 1), x, printed, 3.0 * se + SIX_ROUNDING);
    }
    checks.push(Check {
        name: "elliptical signature and weights in six dimensions".into(),
        pass: tally.failures.is_empty(),
        worst: tally.worst,
        limit: 1.0,
        failures: tally.failures,
        file: write(
            dir,
            "elliptical_six.json",
            &json!({ "signature": EllipticalDoc::from(&sig), "weights": TLimitDoc::from(&weights) }),
        )?,
        seconds: t.elapsed().as_secs_f64(),
    });

    let t = Instant::now();
    let b7 = build_b_matrix(7)?;
    let mut failures = Vec::new();
    for (i, row) in B7.iter().enumerate() {
        for (j, &(n, d)) in row.iter().enumerate() {
            if b7.entries[i][j] != Ratio::new(n, d) {
                failures.push(format!("B({},{}) = {} vs {n}/{d}", i + 1, j + 1, b7.entries[i][j]));
            }
        }
    }
    checks.push(Check {
        name: "collapsed matrix B_7".into(),
        pass: failures.is_empty(),
        worst: failures.len() as f64,
        limit: 0.0,
        failures,
        file: write(dir, "b7_matrix.json", &BMatrixDoc::from(&b7))?,
        seconds: t.elapsed().as_secs_f64(),
    });

    let t = Instant::now();
    let third = PartialSignature::from_pairs(3, &[7.0 / 24.0; 3])?;
    let cert = check_attainable(&third)?;
    checks.push(Check {
        name: "equal pairs 7/24 in three dimensions are not attainable".into(),
        pass: !cert.feasible && cert.certified && cert.phase_one_objective > 1e-7,
        worst: cert.phase_one_objective,
        limit: 1e-7,
        failures: Vec::new(),
        file: write(dir, "seven_24ths.json", &crate::schema::CertificateDoc::from(&cert))?,
        seconds: t.elapsed().as_secs_f64(),
    });

    let pass = checks.iter().all(|c| c.pass);
    let report = Report { seed: opts.seed, mc_samples: opts.mc_samples, checks, pass };
    write(dir, "report.json", &report)?;
    Ok(report)
}
