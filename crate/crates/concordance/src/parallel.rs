//! Multi-threaded drivers for the core routines. Work is split into blocks
//! keyed by `(seed, block)` and reduced in block order, so results match
//! the sequential drivers exactly.

use std::sync::atomic::{AtomicBool, Ordering};

use concordance_core::attainability::{validate_targets, BoundsReport, BoundsSolver, Limits, PartialSignature};
use concordance_core::elliptical::{
    check_margins, elliptical_signature_from_histogram, pattern_histogram_batch, t_limit_from_histogram,
    t_limit_weights as t_limit_sequential, CorrelationMatrix, EllipticalSignature, McConfig, TLimit, TLimitMode,
    MC_MAX_DIM,
};
use concordance_core::estimation::{
    accumulate_pairs, bootstrap_replicate, signature_from_counts, std_errors_from_replicates, EmpiricalSignature,
    SampleMatrix,
};
use concordance_core::sampler::{MixtureSample, MixtureSampler};
use concordance_core::{Error as CoreError, MixtureWeights, SubsetIndex};
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::Result;

fn cancelled(cancel: Option<&AtomicBool>) -> bool {
    cancel.is_some_and(|c| c.load(Ordering::Relaxed))
}

pub fn pattern_histogram(root: &DMatrix<f64>, mc: &McConfig, cancel: Option<&AtomicBool>) -> Result<Vec<u64>> {
    let d = root.nrows();
    let parts: Vec<Option<Vec<u64>>> = (0..mc.batches())
        .into_par_iter()
        .map(|b| (!cancelled(cancel)).then(|| pattern_histogram_batch(root, mc.seed, b, mc.batch_len(b))))
        .collect();
    let mut hist = vec![0u64; 1 << d];
    for part in parts {
        let part = part.ok_or(CoreError::Cancelled)?;
        hist.iter_mut().zip(part).for_each(|(h, c)| *h += c);
    }
    if cancelled(cancel) {
        return Err(CoreError::Cancelled.into());
    }
    Ok(hist)
}

fn histogram_for(p: &CorrelationMatrix, mc: &McConfig, cancel: Option<&AtomicBool>) -> Result<Vec<u64>> {
    if p.d() > MC_MAX_DIM {
        return Err(CoreError::DimensionTooLarge { d: p.d(), max: MC_MAX_DIM }.into());
    }
    let root = p.root();
    check_margins(&root)?;
    pattern_histogram(&root, mc, cancel)
}

pub fn elliptical_signature(
    p: &CorrelationMatrix,
    mc: &McConfig,
    cancel: Option<&AtomicBool>,
) -> Result<EllipticalSignature> {
    check_margins(&p.root())?;
    let hist = if p.d() >= 4 { Some(histogram_for(p, mc, cancel)?) } else { None };
    Ok(elliptical_signature_from_histogram(p, hist.as_deref(), mc)?)
}

pub fn t_limit_weights(
    p: &CorrelationMatrix,
    mode: TLimitMode,
    mc: &McConfig,
    cancel: Option<&AtomicBool>,
) -> Result<TLimit> {
    match mode {
        TLimitMode::Analytic if p.d() <= 3 => Ok(t_limit_sequential(p, mode, mc)?),
        TLimitMode::Analytic => {
            let sig = elliptical_signature(p, mc, cancel)?;
            let n = sig.samples.max(1) as f64;
            let std_errors = sig.weights.as_slice().iter().map(|w| (w * (1.0 - w) / n).sqrt()).collect();
            let method = sig.method();
            Ok(TLimit { weights: sig.weights, std_errors, method })
        }
        TLimitMode::MonteCarlo => {
            let hist = histogram_for(p, mc, cancel)?;
            Ok(t_limit_from_histogram(p.d(), &hist)?)
        }
    }
}

/// Row ranges with roughly equal numbers of pairs `(i, j > i)`.
pub fn pair_blocks(n: usize, blocks: usize) -> Vec<std::ops::Range<usize>> {
    let total = n * n.saturating_sub(1) / 2;
    let per = total.div_ceil(blocks.max(1)).max(1);
    let mut out = Vec::new();
    let (mut start, mut acc) = (0, 0);
    for i in 0..n {
        acc += n - 1 - i;
        if acc >= per || i + 1 == n {
            out.push(start..i + 1);
            start = i + 1;
            acc = 0;
        }
    }
    out
}

/// Pair counts accumulated over row blocks in parallel.
pub fn empirical_signature(data: &SampleMatrix, split_ties: bool) -> Result<EmpiricalSignature> {
    if data.n() < 2 {
        return Err(CoreError::TooFewRows { n: data.n(), required: 2 }.into());
    }
    let tied = data.first_tied_column();
    if let (Some(c), false) = (tied, split_ties) {
        return Err(CoreError::TiesPresent { column: c + 1 }.into());
    }
    let blocks = pair_blocks(data.n(), 4 * rayon::current_num_threads());
    let parts: Vec<Vec<f64>> = blocks
        .into_par_iter()
        .map(|r| accumulate_pairs(data, r, split_ties))
        .collect::<std::result::Result<_, _>>()?;
    let mut counts = vec![0.0; parts.first().map_or(0, Vec::len)];
    for part in parts {
        counts.iter_mut().zip(part).for_each(|(c, p)| *c += p);
    }
    let n = data.n() as u64;
    Ok(signature_from_counts(data.d(), data.n(), n * (n - 1) / 2, counts, tied.is_some()))
}

pub fn bootstrap_std_errors(data: &SampleMatrix, resamples: usize, seed: u64) -> Result<Vec<f64>> {
    if data.n() < 2 {
        return Err(CoreError::TooFewRows { n: data.n(), required: 2 }.into());
    }
    let reps: Vec<Vec<f64>> =
        (0..resamples as u64).into_par_iter().map(|b| bootstrap_replicate(data, seed, b)).collect();
    Ok(std_errors_from_replicates(&reps))
}

pub fn sample_mixture(w: &MixtureWeights, n: usize, seed: u64) -> Result<MixtureSample> {
    if n == 0 {
        return Err(CoreError::OutOfRange("sample size must be at least 1".into()).into());
    }
    let sampler = MixtureSampler::new(w)?;
    let parts: Vec<Vec<f64>> = (0..MixtureSampler::blocks(n))
        .into_par_iter()
        .map(|b| sampler.block(seed, b, MixtureSampler::block_len(n, b)))
        .collect();
    Ok(MixtureSample { d: w.d(), n, values: parts.concat(), seed, weights: w.clone() })
}

/// Per-target bounds with the targets solved concurrently on one shared
/// feasible tableau.
pub fn bound_targets(partial: &PartialSignature, targets: &[SubsetIndex], limits: &Limits) -> Result<BoundsReport> {
    validate_targets(partial, targets)?;
    let solver = BoundsSolver::new(partial, limits)?;
    let results: Vec<_> =
        targets.par_iter().map(|t| solver.bounds(t)).collect::<std::result::Result<Vec<_>, _>>()?;
    let mut report = BoundsReport {
        targets: targets.to_vec(),
        lower: Vec::new(),
        upper: Vec::new(),
        argmin: Vec::new(),
        argmax: Vec::new(),
    };
    for b in results {
        report.lower.push(b.lower);
        report.upper.push(b.upper);
        report.argmin.push(b.argmin);
        report.argmax.push(b.argmax);
    }
    Ok(report)
}
