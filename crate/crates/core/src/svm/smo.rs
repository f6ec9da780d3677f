use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::cache::KernelCache;
use super::{Kernel, Label, SvmConfig, SvmModel};
use crate::features::Scaler;
use crate::linalg::Matrix;
use crate::{Error, Result};

// Curvature floor for pairs whose kernel restriction is not positive definite.
const TAU: f64 = 1e-12;

/// Training data for one binary SVM.
#[derive(Debug, Clone, Copy)]
pub struct SvmProblem<'a> {
    pub x: &'a Matrix,
    pub y: &'a [Label],
}

impl SvmProblem<'_> {
    pub fn validate(&self) -> Result<()> {
        if self.x.rows() != self.y.len() {
            return Err(Error::LengthMismatch { left: self.x.rows(), right: self.y.len() });
        }
        if self.x.rows() < 2 {
            return Err(Error::InvalidProblem(format!("need at least 2 samples, got {}", self.x.rows())));
        }
        if self.x.cols() == 0 {
            return Err(Error::InvalidProblem("samples have no features".into()));
        }
        let positives = self.y.iter().filter(|l| l.is_positive()).count();
        if positives == 0 || positives == self.y.len() {
            return Err(Error::SingleClass);
        }
        if let Some(i) = self.x.iter_rows().position(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidProblem(format!("sample {i} has non-finite features")));
        }
        Ok(())
    }
}

/// Diagnostics from one SMO run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Pair updates performed.
    pub iterations: u64,
    /// False when `max_iter` was hit first.
    pub converged: bool,
    /// Maximal KKT violation `m(α) − M(α)` at exit.
    pub max_violation: f64,
    /// Dual objective at exit.
    pub dual_objective: f64,
    /// Final multipliers for every training sample, in input order.
    pub alpha: Vec<f64>,
    /// `Σ αᵢ yᵢ` at exit.
    pub equality_residual: f64,
    /// Dual objective before the first and after every update, when recorded.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: SvmModel,
    pub report: TrainReport,
}

struct Solver<'a> {
    x: &'a Matrix,
    y: Vec<f64>,
    kernel: Kernel,
    cache: KernelCache,
    diag: Vec<f64>,
    alpha: Vec<f64>,
    // Gradient of ½αᵀQα − Σα, with Qᵢⱼ = yᵢyⱼk(xᵢ, xⱼ).
    grad: Vec<f64>,
    c: f64,
    // Scan order for working-set selection; a seeded permutation so exact
    // ties are broken at random but reproducibly.
    order: Vec<usize>,
}

impl Solver<'_> {
    fn row(&mut self, i: usize) -> alloc::rc::Rc<[f64]> {
        let (x, kernel) = (self.x, self.kernel);
        self.cache.get(i, || x.iter_rows().map(|r| kernel.eval(x.row(i), r)).collect())
    }

    fn in_up(&self, t: usize) -> bool {
        if self.y[t] > 0.0 {
            self.alpha[t] < self.c
        } else {
            self.alpha[t] > 0.0
        }
    }

    fn in_low(&self, t: usize) -> bool {
        if self.y[t] > 0.0 {
            self.alpha[t] > 0.0
        } else {
            self.alpha[t] < self.c
        }
    }

    /// Maximal violating pair and the violation `m − M`.
    fn select(&self) -> Option<(usize, usize, f64)> {
        let mut g_max = f64::NEG_INFINITY;
        let mut g_min = f64::INFINITY;
        let (mut i, mut j) = (None, None);
        for &t in &self.order {
            let v = -self.y[t] * self.grad[t];
            if v > g_max && self.in_up(t) {
                g_max = v;
                i = Some(t);
            }
            if v < g_min && self.in_low(t) {
                g_min = v;
                j = Some(t);
            }
        }
        Some((i?, j?, g_max - g_min))
    }

    fn objective(&self) -> f64 {
        0.5 * self.alpha.iter().zip(&self.grad).map(|(a, g)| a * (1.0 - g)).sum::<f64>()
    }

    fn update(&mut self, i: usize, j: usize) {
        let ki = self.row(i);
        let kj = self.row(j);
        let (yi, yj, c) = (self.y[i], self.y[j], self.c);
        let q_ij = yi * yj * ki[j];
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let (mut ai, mut aj) = (old_i, old_j);

        if yi != yj {
            let mut quad = self.diag[i] + self.diag[j] + 2.0 * q_ij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-self.grad[i] - self.grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let mut quad = self.diag[i] + self.diag[j] - 2.0 * q_ij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (self.grad[i] - self.grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }

        self.alpha[i] = ai;
        self.alpha[j] = aj;
        let di = (ai - old_i) * yi;
        let dj = (aj - old_j) * yj;
        for (k, g) in self.grad.iter_mut().enumerate() {
            *g += self.y[k] * (di * ki[k] + dj * kj[k]);
        }
    }

    /// Bias from the free multipliers, or the midpoint of the feasible range
    /// when every multiplier sits at a bound.
    fn bias(&self) -> f64 {
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut free_sum, mut n_free) = (0.0, 0usize);
        for t in 0..self.alpha.len() {
            let yg = self.y[t] * self.grad[t];
            let positive = self.y[t] > 0.0;
            if self.alpha[t] >= self.c {
                if positive {
                    lb = lb.max(yg);
                } else {
                    ub = ub.min(yg);
                }
            } else if self.alpha[t] <= 0.0 {
                if positive {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                free_sum += yg;
                n_free += 1;
            }
        }
        let rho = if n_free > 0 {
            free_sum / n_free as f64
        } else if ub.is_finite() && lb.is_finite() {
            (ub + lb) / 2.0
        } else if ub.is_finite() {
            ub
        } else if lb.is_finite() {
            lb
        } else {
            0.0
        };
        -rho
    }
}

/// Trains a soft-margin SVM. Non-convergence within `max_iter` is reported
/// through `TrainReport::converged`, not as an error.
pub fn train_smo(problem: &SvmProblem<'_>, config: &SvmConfig, seed: u64) -> Result<Trained> {
    problem.validate()?;
    if !(config.c.is_finite() && config.c > 0.0) {
        return Err(Error::InvalidProblem(format!("C must be positive and finite, got {}", config.c)));
    }
    if !(config.tol.is_finite() && config.tol > 0.0) {
        return Err(Error::InvalidProblem(format!("tol must be positive and finite, got {}", config.tol)));
    }

    let scaler = if config.scale { Scaler::fit(problem.x.iter_rows())? } else { Scaler::identity(problem.x.cols()) };
    let mut xs = problem.x.clone();
    if config.scale {
        for i in 0..xs.rows() {
            scaler.apply_into(problem.x.row(i), xs.row_mut(i))?;
        }
    }
    let kernel = config.kernel.resolve(&xs)?;

    let n = xs.rows();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let diag = xs.iter_rows().map(|r| kernel.eval(r, r)).collect();
    let mut solver = Solver {
        x: &xs,
        y: problem.y.iter().map(|l| l.sign()).collect(),
        kernel,
        cache: KernelCache::new(n, config.cache_bytes),
        diag,
        alpha: alloc::vec![0.0; n],
        grad: alloc::vec![-1.0; n],
        c: config.c,
        order,
    };

    let mut trace = Vec::new();
    if config.record_objective {
        trace.push(solver.objective());
    }
    let mut iterations = 0u64;
    let mut converged = false;
    let mut max_violation = 0.0;
    loop {
        match solver.select() {
            None => {
                converged = true;
                break;
            }
            Some((_, _, gap)) if gap < config.tol => {
                max_violation = gap;
                converged = true;
                break;
            }
            Some((i, j, gap)) => {
                max_violation = gap;
                if iterations >= config.max_iter {
                    break;
                }
                solver.update(i, j);
                iterations += 1;
                if config.record_objective {
                    trace.push(solver.objective());
                }
            }
        }
    }

    let bias = solver.bias();
    let dual_objective = solver.objective();
    let equality_residual: f64 = solver.alpha.iter().zip(&solver.y).map(|(a, y)| a * y).sum();
    let support: Vec<usize> = (0..n).filter(|&t| solver.alpha[t] > 0.0).collect();
    let alpha_y = support.iter().map(|&t| solver.alpha[t] * solver.y[t]).collect();
    let alpha = solver.alpha;
    let model = SvmModel::new(kernel, config.c, scaler, xs.select_rows(&support), alpha_y, bias)?;
    Ok(Trained {
        model,
        report: TrainReport {
            iterations,
            converged,
            max_violation,
            dual_objective,
            alpha,
            equality_residual,
            objective_trace: trace,
        },
    })
}
