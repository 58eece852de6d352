//! Couplings and transport solvers for the squared Euclidean cost.

mod assignment;
mod one_d;
mod simplex;
mod sinkhorn;

use std::io::Write;

use nalgebra::DMatrix;

pub use assignment::{assignment_cost, optimal_assignment};
pub use one_d::{
    barycentric_projection_1d, nw_corner, nw_corner_entries, quantile_coupling, w2_squared_1d,
};
pub use simplex::{exact_ot, MAX_EXACT_CELLS};
pub use sinkhorn::{sinkhorn, SinkhornResult};

use crate::error::{invalid, Error, Result};
use crate::measures::DiscreteMeasure;

/// Marginal tolerance for couplings and for balanced-mass checks.
pub const MARGINAL_TOL: f64 = 1e-8;

/// A transport plan `P` in the polytope `U(a, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub matrix: DMatrix<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl Coupling {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    /// `<P, C>`.
    pub fn cost(&self, cost: &DMatrix<f64>) -> f64 {
        self.matrix.component_mul(cost).sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.matrix.row_iter().map(|r| r.sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        self.matrix.column_iter().map(|c| c.sum()).collect()
    }

    /// L1 distance of both marginals to `(a, b)`.
    pub fn marginal_violation(&self) -> f64 {
        let r: f64 = self
            .row_sums()
            .iter()
            .zip(&self.a)
            .map(|(s, a)| (s - a).abs())
            .sum();
        let c: f64 = self
            .col_sums()
            .iter()
            .zip(&self.b)
            .map(|(s, b)| (s - b).abs())
            .sum();
        r + c
    }

    /// Number of entries above `tol`.
    pub fn nnz(&self, tol: f64) -> usize {
        self.matrix.iter().filter(|&&v| v > tol).count()
    }

    /// Row-wise barycenters `Σ_j P_ij y_j / Σ_j P_ij` (zero rows map to the origin).
    pub fn barycenters(&self, ys: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let d = ys.first().map_or(0, |y| y.len());
        self.matrix
            .row_iter()
            .map(|row| {
                let mass = row.sum();
                let mut out = vec![0.0; d];
                if mass > 0.0 {
                    for (j, p) in row.iter().enumerate() {
                        if *p != 0.0 {
                            for (o, y) in out.iter_mut().zip(&ys[j]) {
                                *o += p * y;
                            }
                        }
                    }
                    for o in out.iter_mut() {
                        *o /= mass;
                    }
                }
                out
            })
            .collect()
    }

    /// Dense CSV dump, one row per source atom.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for row in self.matrix.row_iter() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Squared Euclidean cost matrix `C_ij = |x_i - y_j|²`.
pub fn cost_matrix(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = xs.first().or(ys.first()).map_or(0, |p| p.len());
    for p in xs.iter().chain(ys) {
        if p.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: p.len(),
            });
        }
    }
    Ok(DMatrix::from_fn(xs.len(), ys.len(), |i, j| {
        crate::linalg::sq_dist(&xs[i], &ys[j])
    }))
}

/// Checks that `a` and `b` are nonnegative with equal total mass.
pub(crate) fn check_marginals(a: &[f64], b: &[f64]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("empty marginal"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite() || *v < 0.0) {
        return Err(invalid("marginals must be finite and nonnegative"));
    }
    let sa: f64 = a.iter().sum();
    let sb: f64 = b.iter().sum();
    if (sa - sb).abs() > MARGINAL_TOL {
        return Err(Error::Infeasible(format!(
            "marginal masses differ: {sa} vs {sb}"
        )));
    }
    Ok(())
}

/// Exact 2-Wasserstein distance between two discrete measures.
///
/// On the real line the quantile coupling is used; otherwise the transport
/// LP is solved by network simplex.
pub fn w2_distance(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            found: nu.dim(),
        });
    }
    if mu.dim() == 1 {
        return Ok(
            w2_squared_1d(&mu.coords_1d(), mu.weights(), &nu.coords_1d(), nu.weights())?
                .max(0.0)
                .sqrt(),
        );
    }
    let c = cost_matrix(mu.points(), nu.points())?;
    let plan = exact_ot(mu.weights(), nu.weights(), &c)?;
    Ok(plan.cost(&c).max(0.0).sqrt())
}
