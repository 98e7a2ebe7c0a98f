//! Concordance signatures of copulas and their extremal-mixture
//! representation.
//!
//! The crate works without the standard library (it needs `alloc`). It
//! covers the coefficient matrix linking mixture weights and even
//! signatures, attainability tests and bounds for partial signatures,
//! estimation from samples, elliptical signatures, equiconcordant systems
//! and sampling from extremal mixtures.
#![no_std]

extern crate alloc;

pub mod attainability;
pub mod code;
pub mod elliptical;
pub mod equiconcordant;
pub mod error;
pub mod estimation;
pub mod signature;
pub mod rng;
pub mod sampler;
pub mod simplex;
pub mod stats;
pub mod subset;

pub use code::{binary_code, canonical_index, ExtremalCode};
pub use error::{Error, Result};
pub use signature::{
    build_a_matrix, extend_to_full, kendall_matrix_from_even, signature_from_weights,
    tau_kappa_convert, weights_from_signature, CoefficientMatrix, EvenSignature, FullSignature,
    MixtureWeights, Scale,
};
pub use subset::{even_power_set, LabelSet, SubsetIndex};
