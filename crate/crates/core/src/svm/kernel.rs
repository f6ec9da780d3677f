use alloc::format;

use crate::linalg::{dot, squared_distance, Matrix};
use crate::{Error, Result};

/// RBF width, either explicit or derived from the training data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma {
    /// `1 / (d · v)` with `d` the feature count and `v` the mean per-feature
    /// variance of the training matrix.
    Auto,
    Value(f64),
}

/// Kernel as configured, before `Gamma::Auto` is resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    Linear,
    Rbf(Gamma),
}

/// A fully resolved kernel function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl KernelSpec {
    pub fn resolve(&self, x: &Matrix) -> Result<Kernel> {
        match *self {
            KernelSpec::Linear => Ok(Kernel::Linear),
            KernelSpec::Rbf(Gamma::Value(gamma)) => Kernel::rbf(gamma),
            KernelSpec::Rbf(Gamma::Auto) => {
                let (n, d) = (x.rows(), x.cols());
                if n == 0 || d == 0 {
                    return Err(Error::EmptyTrainingSet);
                }
                let nf = n as f64;
                let mut total_var = 0.0;
                for j in 0..d {
                    let mean = x.iter_rows().map(|r| r[j]).sum::<f64>() / nf;
                    total_var += x.iter_rows().map(|r| (r[j] - mean) * (r[j] - mean)).sum::<f64>() / nf;
                }
                let var = total_var / d as f64;
                let gamma = if var > 0.0 { 1.0 / (d as f64 * var) } else { 1.0 / d as f64 };
                Kernel::rbf(gamma)
            }
        }
    }
}

impl Kernel {
    pub fn rbf(gamma: f64) -> Result<Self> {
        if gamma.is_finite() && gamma > 0.0 {
            Ok(Kernel::Rbf { gamma })
        } else {
            Err(Error::InvalidProblem(format!("RBF gamma must be positive and finite, got {gamma}")))
        }
    }

    /// Evaluates the kernel; callers guarantee equal lengths.
    #[inline]
    pub fn eval(&self, x: &[f64], z: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => dot(x, z),
            Kernel::Rbf { gamma } => libm::exp(-gamma * squared_distance(x, z)),
        }
    }
}

pub fn kernel_eval(k: &Kernel, x: &[f64], z: &[f64]) -> Result<f64> {
    if x.len() != z.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: z.len() });
    }
    Ok(k.eval(x, z))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_examples() {
        let rbf1 = Kernel::rbf(1.0).unwrap();
        assert_eq!(kernel_eval(&rbf1, &[0.3, -2.0], &[0.3, -2.0]).unwrap(), 1.0);
        assert_eq!(kernel_eval(&Kernel::Linear, &[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        let v = kernel_eval(&rbf1, &[0.0], &[1.0]).unwrap();
        assert!((v - 0.367_879_441_171_442_3).abs() < 1e-15);
        assert!(matches!(kernel_eval(&rbf1, &[0.0], &[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn gamma_must_be_positive() {
        assert!(Kernel::rbf(0.0).is_err());
        assert!(Kernel::rbf(-1.0).is_err());
        assert!(Kernel::rbf(f64::NAN).is_err());
    }

    #[test]
    fn auto_gamma_uses_mean_feature_variance() {
        // Column variances 1 and 4 (population), mean 2.5, d = 2 → γ = 1/5.
        let x = Matrix::from_rows(&[[0.0, 0.0], [2.0, 4.0]]).unwrap();
        assert_eq!(KernelSpec::Rbf(Gamma::Auto).resolve(&x).unwrap(), Kernel::Rbf { gamma: 0.2 });
        let flat = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert_eq!(KernelSpec::Rbf(Gamma::Auto).resolve(&flat).unwrap(), Kernel::Rbf { gamma: 0.5 });
    }
}
