use alloc::format;
use alloc::vec::Vec;

use super::{Kernel, Label};
use crate::features::Scaler;
use crate::linalg::Matrix;
use crate::{Error, Result};

// Slack on the `α ≤ C` check for values that went through a decimal round trip.
const BOX_SLACK: f64 = 1e-9;

/// A trained binary SVM. Support vectors are stored in scaled feature space;
/// inputs are scaled internally before evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    kernel: Kernel,
    c: f64,
    scaler: Scaler,
    support_vectors: Matrix,
    alpha_y: Vec<f64>,
    bias: f64,
}

impl SvmModel {
    /// Builds a model, checking `0 < αᵢ ≤ C`, finiteness and shapes.
    pub fn new(
        kernel: Kernel,
        c: f64,
        scaler: Scaler,
        support_vectors: Matrix,
        alpha_y: Vec<f64>,
        bias: f64,
    ) -> Result<Self> {
        let invalid = |msg: alloc::string::String| Err(Error::InvalidModel(msg));
        if !(c.is_finite() && c > 0.0) {
            return invalid(format!("C must be positive and finite, got {c}"));
        }
        if let Kernel::Rbf { gamma } = kernel {
            Kernel::rbf(gamma).map_err(|_| Error::InvalidModel(format!("invalid RBF gamma {gamma}")))?;
        }
        if !bias.is_finite() {
            return invalid(format!("bias is not finite: {bias}"));
        }
        if support_vectors.rows() == 0 {
            return invalid("a model needs at least one support vector".into());
        }
        if support_vectors.rows() != alpha_y.len() {
            return invalid(format!("{} support vectors but {} coefficients", support_vectors.rows(), alpha_y.len()));
        }
        if scaler.stds.len() != scaler.means.len() {
            return invalid("scaler means and stds differ in length".into());
        }
        if support_vectors.cols() != scaler.dim() {
            return invalid(format!(
                "support vectors have {} features, scaler has {}",
                support_vectors.cols(),
                scaler.dim()
            ));
        }
        if scaler.means.iter().any(|m| !m.is_finite()) || scaler.stds.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return invalid("scaler statistics must be finite with non-negative stds".into());
        }
        if support_vectors.as_slice().iter().any(|v| !v.is_finite()) {
            return invalid("support vectors contain non-finite values".into());
        }
        for (i, ay) in alpha_y.iter().enumerate() {
            let a = ay.abs();
            if !(a.is_finite() && a > 0.0 && a <= c * (1.0 + BOX_SLACK)) {
                return invalid(format!("alpha of support vector {i} is {a}, outside (0, {c}]"));
            }
        }
        Ok(SvmModel { kernel, c, scaler, support_vectors, alpha_y, bias })
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn scaler(&self) -> &Scaler {
        &self.scaler
    }

    pub fn support_vectors(&self) -> &Matrix {
        &self.support_vectors
    }

    pub fn alpha_y(&self) -> &[f64] {
        &self.alpha_y
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    /// Input dimension, before scaling.
    pub fn dim(&self) -> usize {
        self.scaler.dim()
    }

    /// `f(x) = Σ αᵢyᵢ k(svᵢ, scale(x)) + b`.
    pub fn decision_function(&self, x: &[f64]) -> Result<f64> {
        let xs = self.scaler.apply(x)?;
        let sum: f64 =
            self.support_vectors.iter_rows().zip(&self.alpha_y).map(|(sv, ay)| ay * self.kernel.eval(sv, &xs)).sum();
        Ok(sum + self.bias)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        self.decision_function(x).map(Label::from_decision)
    }
}
