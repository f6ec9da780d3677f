//! Exhaustive solver for small SVM duals, independent of the SMO code path.
//!
//! Every multiplier is either at 0, at C, or free. For each of the 3ⁿ patterns
//! the free multipliers are solved from the stationarity conditions plus the
//! equality constraint; the best box-feasible candidate is the global optimum.

#![allow(dead_code)]

/// `Qᵢⱼ = yᵢ yⱼ Kᵢⱼ`.
pub fn signed_gram(k: &[Vec<f64>], y: &[f64]) -> Vec<Vec<f64>> {
    (0..y.len()).map(|i| (0..y.len()).map(|j| y[i] * y[j] * k[i][j]).collect()).collect()
}

pub fn dual_objective(q: &[Vec<f64>], alpha: &[f64]) -> f64 {
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * q[i][j];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for col in 0..n {
        let pivot = (col..n).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))?;
        if a[pivot][col].abs() < 1e-10 * scale {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        let pivot_row = a[col].clone();
        for r in 0..n {
            if r != col {
                let f = a[r][col] / pivot_row[col];
                for (x, p) in a[r][col..].iter_mut().zip(&pivot_row[col..]) {
                    *x -= f * p;
                }
                b[r] -= f * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Global maximum of the dual and a maximizer.
pub fn brute_force_dual(k: &[Vec<f64>], y: &[f64], c: f64) -> (f64, Vec<f64>) {
    let n = y.len();
    let q = signed_gram(k, y);
    let mut best = (f64::NEG_INFINITY, vec![0.0; n]);
    let patterns = 3usize.pow(n as u32);
    for code in 0..patterns {
        // 0 → at zero, 1 → at C, 2 → free
        let status: Vec<usize> = (0..n).map(|i| (code / 3usize.pow(i as u32)) % 3).collect();
        let free: Vec<usize> = (0..n).filter(|&i| status[i] == 2).collect();
        let mut alpha: Vec<f64> = status.iter().map(|&s| if s == 1 { c } else { 0.0 }).collect();
        if free.is_empty() {
            let eq: f64 = alpha.iter().zip(y).map(|(a, y)| a * y).sum();
            if eq.abs() > 1e-12 {
                continue;
            }
        } else {
            let m = free.len();
            let mut mat = vec![vec![0.0; m + 1]; m + 1];
            let mut rhs = vec![0.0; m + 1];
            for (r, &i) in free.iter().enumerate() {
                for (s, &j) in free.iter().enumerate() {
                    mat[r][s] = q[i][j];
                }
                mat[r][m] = y[i];
                rhs[r] = 1.0 - (0..n).filter(|j| status[*j] != 2).map(|j| q[i][j] * alpha[j]).sum::<f64>();
                mat[m][r] = y[i];
            }
            rhs[m] = -(0..n).filter(|j| status[*j] != 2).map(|j| y[j] * alpha[j]).sum::<f64>();
            let Some(sol) = solve(mat, rhs) else { continue };
            if free.iter().zip(&sol).any(|(_, v)| *v < -1e-9 || *v > c + 1e-9) {
                continue;
            }
            for (&i, v) in free.iter().zip(&sol) {
                alpha[i] = v.clamp(0.0, c);
            }
        }
        let w = dual_objective(&q, &alpha);
        if w > best.0 {
            best = (w, alpha);
        }
    }
    best
}

/// Largest violation of the KKT conditions, in units of `yᵢ f(xᵢ)`.
pub fn kkt_violation(k: &[Vec<f64>], y: &[f64], alpha: &[f64], bias: f64, c: f64) -> f64 {
    let n = y.len();
    let mut worst = 0.0f64;
    for i in 0..n {
        let f: f64 = (0..n).map(|j| alpha[j] * y[j] * k[j][i]).sum::<f64>() + bias;
        let margin = y[i] * f;
        let v = if alpha[i] <= 0.0 {
            (1.0 - margin).max(0.0)
        } else if alpha[i] >= c {
            (margin - 1.0).max(0.0)
        } else {
            (margin - 1.0).abs()
        };
        worst = worst.max(v);
    }
    worst
}
