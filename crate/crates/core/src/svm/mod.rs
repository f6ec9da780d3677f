//! Soft-margin kernel SVM trained with sequential minimal optimization.
//!
//! Training solves the dual
//!
//! ```text
//! max  Σ αᵢ − ½ Σᵢⱼ αᵢ αⱼ yᵢ yⱼ k(xᵢ, xⱼ)
//! s.t. 0 ≤ αᵢ ≤ C,  Σ αᵢ yᵢ = 0
//! ```
//!
//! two multipliers at a time, always picking the maximal violating pair.

mod cache;
mod kernel;
mod model;
mod smo;

pub use kernel::{kernel_eval, Gamma, Kernel, KernelSpec};
pub use model::SvmModel;
pub use smo::{train_smo, SvmProblem, TrainReport, Trained};

/// A binary class label, `−1` or `+1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn from_bool(positive: bool) -> Self {
        if positive {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    /// Sign of a decision value, with `sign(0) = +1`.
    pub fn from_decision(value: f64) -> Self {
        Label::from_bool(value >= 0.0)
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }

    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        }
    }
}

/// Solver and preprocessing settings for one SVM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmConfig {
    pub kernel: KernelSpec,
    /// Box constraint.
    pub c: f64,
    /// KKT tolerance; training stops once the maximal violation drops below it.
    pub tol: f64,
    /// Cap on pair updates.
    pub max_iter: u64,
    /// Z-score features on the training sample before solving.
    pub scale: bool,
    /// Budget for cached kernel rows.
    pub cache_bytes: usize,
    /// Record the dual objective after every update (test and diagnostics hook).
    pub record_objective: bool,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            kernel: KernelSpec::Rbf(Gamma::Auto),
            c: 1.0,
            tol: 1e-3,
            max_iter: 10_000_000,
            scale: true,
            cache_bytes: 256 << 20,
            record_objective: false,
        }
    }
}
