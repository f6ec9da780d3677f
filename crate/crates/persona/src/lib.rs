//! File formats, evaluation harness and command-line front end for the
//! bagged-SVM personality classifier in `persona-core`.

pub mod ceb;
pub mod chunks;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod fixture;
pub mod model_io;

pub use error::{Error, Result};
