//! A small dense SDP solver: one PSD block `X`, free scalars `f`, affine
//! equalities and inequalities.
//!
//! ```text
//! minimize   ⟨C, X⟩ + cᵀf + c₀
//! subject to g_r(X, f) = 0   (equality rows)
//!            g_r(X, f) ≤ 0   (inequality rows)
//!            X ⪰ 0
//! ```
//!
//! Solved by ADMM over the splitting `x = y`, `Ax = z` with `y` in the cone
//! and `z` in the constraint box; see [`SdpWorkspace`].

mod admm;

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};

pub use admm::{solve_sdp, SdpSettings, SdpWorkspace, WarmStart};

use crate::error::{invalid, Result};

/// An affine functional `Σ v·X_ij + Σ v·f_k + constant`.
///
/// PSD entries are addressed once per unordered pair: a term `(i, j, v)`
/// multiplies the single entry `X_ij = X_ji`. Repeated terms add up.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffineExpr {
    pub psd: Vec<(usize, usize, f64)>,
    pub free: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            ..Self::default()
        }
    }

    /// Adds `v · X_ij` (order of `i`, `j` irrelevant).
    pub fn add_psd(&mut self, i: usize, j: usize, v: f64) -> &mut Self {
        if v != 0.0 {
            self.psd.push((i.min(j), i.max(j), v));
        }
        self
    }

    pub fn add_free(&mut self, k: usize, v: f64) -> &mut Self {
        if v != 0.0 {
            self.free.push((k, v));
        }
        self
    }

    pub fn add_constant(&mut self, v: f64) -> &mut Self {
        self.constant += v;
        self
    }

    pub fn eval(&self, x: &DMatrix<f64>, f: &[f64]) -> f64 {
        self.constant
            + self.psd.iter().map(|&(i, j, v)| v * x[(i, j)]).sum::<f64>()
            + self.free.iter().map(|&(k, v)| v * f[k]).sum::<f64>()
    }

    fn check(&self, psd_dim: usize, num_free: usize) -> Result<()> {
        if self
            .psd
            .iter()
            .any(|&(i, j, _)| i >= psd_dim || j >= psd_dim)
        {
            return Err(invalid("PSD index out of range"));
        }
        if self.free.iter().any(|&(k, _)| k >= num_free) {
            return Err(invalid("free-variable index out of range"));
        }
        let finite = self.constant.is_finite()
            && self.psd.iter().all(|t| t.2.is_finite())
            && self.free.iter().all(|t| t.1.is_finite());
        if !finite {
            return Err(invalid("non-finite coefficient"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    /// `g = 0`
    Eq,
    /// `g ≤ 0`
    Le,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub expr: AffineExpr,
    pub kind: ConstraintKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    psd_dim: usize,
    num_free: usize,
    objective: AffineExpr,
    constraints: Vec<Constraint>,
}

impl SdpProblem {
    pub fn new(psd_dim: usize, num_free: usize) -> Self {
        Self {
            psd_dim,
            num_free,
            objective: AffineExpr::new(),
            constraints: Vec::new(),
        }
    }

    pub fn psd_dim(&self) -> usize {
        self.psd_dim
    }

    pub fn num_free(&self) -> usize {
        self.num_free
    }

    pub fn objective(&self) -> &AffineExpr {
        &self.objective
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn set_objective(&mut self, expr: AffineExpr) -> Result<()> {
        expr.check(self.psd_dim, self.num_free)?;
        self.objective = expr;
        Ok(())
    }

    pub fn add_eq(&mut self, expr: AffineExpr) -> Result<()> {
        expr.check(self.psd_dim, self.num_free)?;
        self.constraints.push(Constraint {
            expr,
            kind: ConstraintKind::Eq,
        });
        Ok(())
    }

    pub fn add_le(&mut self, expr: AffineExpr) -> Result<()> {
        expr.check(self.psd_dim, self.num_free)?;
        self.constraints.push(Constraint {
            expr,
            kind: ConstraintKind::Le,
        });
        Ok(())
    }

    /// Largest constraint violation of `(x, f)`: `|g|` for equalities,
    /// `max(g, 0)` for inequalities.
    pub fn max_violation(&self, x: &DMatrix<f64>, f: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| {
                let g = c.expr.eval(x, f);
                match c.kind {
                    ConstraintKind::Eq => g.abs(),
                    ConstraintKind::Le => g.max(0.0),
                }
            })
            .fold(0.0, f64::max)
    }

    /// Dual residual of multipliers `lambda` (one per constraint) and dual
    /// slack `(s_psd, s_free)`: the larger of `‖c + Aᵀλ − s‖∞`, the
    /// negative part of inequality multipliers, the distance of `s_psd` to
    /// the PSD cone (Frobenius) and `‖s_free‖∞`.
    pub fn dual_residual(&self, lambda: &[f64], s_psd: &DMatrix<f64>, s_free: &[f64]) -> f64 {
        self.dual_residual_with(&self.objective, lambda, s_psd, s_free)
    }

    pub(crate) fn dual_residual_with(
        &self,
        objective: &AffineExpr,
        lambda: &[f64],
        s_psd: &DMatrix<f64>,
        s_free: &[f64],
    ) -> f64 {
        let p = self.psd_dim;
        // stationarity in matrix form: the functional Σ v X_ij corresponds
        // to the symmetric matrix with v on the diagonal and v/2 off it
        let mut grad = DMatrix::zeros(p, p);
        let mut grad_free = vec![0.0; self.num_free];
        let add = |expr: &AffineExpr, w: f64, g: &mut DMatrix<f64>, gf: &mut [f64]| {
            for &(i, j, v) in &expr.psd {
                if i == j {
                    g[(i, i)] += w * v;
                } else {
                    g[(i, j)] += 0.5 * w * v;
                    g[(j, i)] += 0.5 * w * v;
                }
            }
            for &(k, v) in &expr.free {
                gf[k] += w * v;
            }
        };
        add(objective, 1.0, &mut grad, &mut grad_free);
        for (c, &l) in self.constraints.iter().zip(lambda) {
            add(&c.expr, l, &mut grad, &mut grad_free);
        }
        let mut r: f64 = 0.0;
        for i in 0..p {
            for j in 0..p {
                r = r.max((grad[(i, j)] - s_psd[(i, j)]).abs());
            }
        }
        for k in 0..self.num_free {
            r = r.max((grad_free[k] - s_free[k]).abs());
        }
        for (c, &l) in self.constraints.iter().zip(lambda) {
            if c.kind == ConstraintKind::Le {
                r = r.max(-l);
            }
        }
        if p > 0 {
            let eig = SymmetricEigen::new(s_psd.clone());
            let neg = eig
                .eigenvalues
                .iter()
                .map(|e| e.min(0.0).powi(2))
                .sum::<f64>()
                .sqrt();
            r = r.max(neg);
        }
        r.max(s_free.iter().fold(0.0, |m, v| m.max(v.abs())))
    }

    /// Plain-text sparse triplet dump, one term per line:
    /// `obj|eq|le <row> psd <i> <j> <v>`, `... free <k> <v>`, `... const <v>`.
    pub fn write_triplets<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "psd_dim {}", self.psd_dim)?;
        writeln!(out, "num_free {}", self.num_free)?;
        let mut emit = |tag: &str, row: usize, e: &AffineExpr| -> std::io::Result<()> {
            for &(i, j, v) in &e.psd {
                writeln!(out, "{tag} {row} psd {i} {j} {v:?}")?;
            }
            for &(k, v) in &e.free {
                writeln!(out, "{tag} {row} free {k} {v:?}")?;
            }
            writeln!(out, "{tag} {row} const {:?}", e.constant)
        };
        emit("obj", 0, &self.objective)?;
        for (r, c) in self.constraints.iter().enumerate() {
            let tag = match c.kind {
                ConstraintKind::Eq => "eq",
                ConstraintKind::Le => "le",
            };
            emit(tag, r, &c.expr)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    MaxIter,
    InfeasibleSuspect,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub psd_matrix: DMatrix<f64>,
    pub free_vars: Vec<f64>,
    pub objective_value: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Constraint multipliers (nonnegative on inequality rows).
    pub multipliers: Vec<f64>,
    /// Dual slack on the PSD block.
    pub dual_psd: DMatrix<f64>,
    /// Dual slack on the free variables (zero at optimality).
    pub dual_free: Vec<f64>,
    pub iterations: usize,
    pub status: SdpStatus,
}

/// Frobenius-nearest PSD matrix: symmetrize, clip negative eigenvalues.
pub fn project_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(invalid("matrix must be square"));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(invalid("non-finite matrix entry"));
    }
    Ok(psd_part(&(0.5 * (m + m.transpose()))))
}

/// Assumes `m` symmetric.
pub(crate) fn psd_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return m.clone();
    }
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.iter().all(|&e| e >= 0.0) {
        return m.clone();
    }
    let mut out = DMatrix::zeros(n, n);
    for (k, &e) in eig.eigenvalues.iter().enumerate() {
        if e > 0.0 {
            let v = eig.eigenvectors.column(k);
            out += e * v * v.transpose();
        }
    }
    0.5 * (&out + out.transpose())
}

#[cfg(test)]
mod tests;
