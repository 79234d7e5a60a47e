//! Harness crate for the chebslice eigensolver: matrix ingestion, synthetic
//! test problems with exact spectra, subspace-quality metrics and the
//! experiment runner behind the `chebslice` binary.

pub mod deviation;
pub mod experiment;
pub mod mm;
pub mod synthetic;
