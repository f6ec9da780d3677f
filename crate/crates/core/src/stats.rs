//! Two-sided paired t-test over per-fold accuracies.

use crate::{Error, Result};

// Sample standard deviations below this are treated as zero.
const ZERO_SPREAD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTestResult {
    /// Signed; `±∞` when the differences are constant and non-zero.
    pub t_statistic: f64,
    pub p_value: f64,
    pub df: usize,
    pub mean_difference: f64,
    /// Set when the differences have zero variance but non-zero mean.
    pub degenerate: bool,
}

/// Paired two-sided t-test of `a − b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    let k = a.len();
    if k < 2 {
        return Err(Error::TooFewSamples(k));
    }
    let n = k as f64;
    let mean = a.iter().zip(b).map(|(x, y)| x - y).sum::<f64>() / n;
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y - mean) * (x - y - mean)).sum();
    let sd = libm::sqrt(ss / (n - 1.0));
    let df = k - 1;
    if sd < ZERO_SPREAD {
        return Ok(if mean == 0.0 {
            TTestResult { t_statistic: 0.0, p_value: 1.0, df, mean_difference: 0.0, degenerate: false }
        } else {
            TTestResult {
                t_statistic: f64::INFINITY.copysign(mean),
                p_value: 0.0,
                df,
                mean_difference: mean,
                degenerate: true,
            }
        });
    }
    let t = mean / (sd / libm::sqrt(n));
    Ok(TTestResult {
        t_statistic: t,
        p_value: student_t_two_sided_p(t, df as f64),
        df,
        mean_difference: mean,
        degenerate: false,
    })
}

/// `P(|T| ≥ |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// `I_x(a, b)`, via the continued fraction on whichever side converges fastest.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b) + a * libm::log(x) + b * libm::log1p(-x);
    let front = libm::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

// Modified Lentz evaluation of the incomplete beta continued fraction.
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const EPS: f64 = 1e-15;
    const FPMIN: f64 = 1e-300;
    const MAX_TERMS: usize = 500;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_TERMS {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}
