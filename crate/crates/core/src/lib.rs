//! Allocation-only core of the persona toolkit.
//!
//! Everything here is pure computation over in-memory data: essay cleaning
//! and chunking, embedding-record validation, layer selection and feature
//! fusion, a soft-margin kernel SVM trained with SMO, bagged ensembles with
//! two-level majority voting, stratified fold assignment and paired t-tests.
//! File formats, the evaluation runner and the command line live in the
//! `persona` crate.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod embedding;
pub mod ensemble;
mod error;
pub mod features;
pub mod folds;
pub mod linalg;
pub mod personality;
pub mod stats;
pub mod svm;
pub mod textprep;

pub use error::{Error, Result};
pub use personality::{Essay, PersonalityTrait, TraitLabels};
