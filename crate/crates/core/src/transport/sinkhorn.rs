use nalgebra::DMatrix;

use super::{check_marginals, Coupling};
use crate::error::{invalid, Result};

/// Output of [`sinkhorn`].
#[derive(Debug, Clone)]
pub struct SinkhornResult {
    pub coupling: Coupling,
    /// Whether the L1 marginal violation reached `tol` before `max_iter`.
    pub converged: bool,
    pub iterations: usize,
    /// Row-marginal L1 violation observed at the start of every iteration.
    pub violations: Vec<f64>,
}

fn log_sum_exp(vals: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = vals.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + vals.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Entropic optimal transport by log-domain Sinkhorn iterations.
///
/// Iterates dual potentials `f, g` so that `P_ij = exp((f_i + g_j - C_ij)/eps)`;
/// columns are exact after every iteration and the row violation
/// `Σ_i |Σ_j P_ij - a_i|` is the stopping criterion.
pub fn sinkhorn(
    a: &[f64],
    b: &[f64],
    cost: &DMatrix<f64>,
    epsilon: f64,
    max_iter: usize,
    tol: f64,
) -> Result<SinkhornResult> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    let (n, m) = cost.shape();
    if a.len() != n || b.len() != m {
        return Err(invalid(format!(
            "cost is {n}x{m} but marginals have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(invalid("cost matrix contains non-finite entries"));
    }
    check_marginals(a, b)?;

    let log_a: Vec<f64> = a.iter().map(|v| v.ln()).collect();
    let log_b: Vec<f64> = b.iter().map(|v| v.ln()).collect();
    // Row-major copy of -C/eps for cache-friendly row sweeps.
    let neg = DMatrix::from_fn(n, m, |i, j| -cost[(i, j)] / epsilon);
    let neg_t = neg.transpose();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut violations = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iter {
        // f-update; the same log-sum-exp yields the current row sums.
        let mut viol = 0.0;
        for i in 0..n {
            let row = neg_t.column(i);
            let lse = log_sum_exp(row.iter().zip(&g).map(|(c, gj)| c + gj));
            if iterations > 0 {
                let row_sum = (f[i] + lse).exp();
                viol += (row_sum - a[i]).abs();
            }
            f[i] = if a[i] > 0.0 {
                log_a[i] - lse
            } else {
                f64::NEG_INFINITY
            };
        }
        if iterations > 0 {
            violations.push(viol);
            if viol <= tol {
                converged = true;
                break;
            }
        }
        for j in 0..m {
            let col = neg.column(j);
            let lse = log_sum_exp(col.iter().zip(&f).map(|(c, fi)| c + fi));
            g[j] = if b[j] > 0.0 {
                log_b[j] - lse
            } else {
                f64::NEG_INFINITY
            };
        }
        iterations += 1;
    }
    if !converged {
        // measure the final iterate
        let plan = build(&neg, &f, &g);
        let viol: f64 = plan
            .row_iter()
            .zip(a)
            .map(|(r, ai)| (r.sum() - ai).abs())
            .sum();
        violations.push(viol);
        converged = viol <= tol;
    }
    let matrix = build(&neg, &f, &g);
    Ok(SinkhornResult {
        coupling: Coupling {
            matrix,
            a: a.to_vec(),
            b: b.to_vec(),
        },
        converged,
        iterations,
        violations,
    })
}

fn build(neg: &DMatrix<f64>, f: &[f64], g: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(neg.nrows(), neg.ncols(), |i, j| {
        let v = neg[(i, j)] + f[i] + g[j];
        if v == f64::NEG_INFINITY {
            0.0
        } else {
            v.exp()
        }
    })
}
