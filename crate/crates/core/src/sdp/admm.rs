//! ADMM for the PSD-constrained linear program of the parent module.
//!
//! Variables live in `R^N`, `N = p(p+1)/2 + num_free`, with the PSD block
//! stored as a scaled `svec` (off-diagonals times √2) so that Euclidean inner
//! products equal Frobenius ones. With constraint rows `A` normalized to unit
//! norm and the box `lo ≤ Ax ≤ hi`, one iteration is
//!
//! ```text
//! x  = (AᵀA + I)⁻¹ (−c/ρ + Aᵀ(z − u) + (y − w))
//! z⁺ = Π_box(α Ax + (1−α) z + u),      u += α Ax + (1−α) z − z⁺
//! y⁺ = Π_cone(α x + (1−α) y + w),      w += α x + (1−α) y − y⁺
//! ```
//!
//! A single penalty `ρ` for both splittings keeps the matrix independent of
//! `ρ`, so it is factored once per workspace and adaptive penalty updates only
//! rescale the duals.

use std::f64::consts::SQRT_2;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{psd_part, AffineExpr, ConstraintKind, SdpProblem, SdpSolution, SdpStatus};
use crate::error::{invalid, Error, Result};

const RHO_MIN: f64 = 1e-4;
const RHO_MAX: f64 = 1e4;
const ADAPT_EVERY: usize = 50;
const UNBOUNDED_NORM: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct SdpSettings {
    pub tol: f64,
    pub max_iter: usize,
    /// Over-relaxation factor in (0, 2).
    pub alpha: f64,
    pub rho: f64,
    pub check_every: usize,
}

impl Default for SdpSettings {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 20_000,
            alpha: 1.5,
            rho: 1.0,
            check_every: 10,
        }
    }
}

/// Internal iterate, reusable as the starting point of a related solve.
#[derive(Debug, Clone)]
pub struct WarmStart {
    y: DVector<f64>,
    z: DVector<f64>,
    u: DVector<f64>,
    w: DVector<f64>,
    rho: f64,
}

/// Factored constraint system of one problem; objectives may vary.
pub struct SdpWorkspace {
    problem: SdpProblem,
    p: usize,
    nsv: usize,
    n: usize,
    /// normalized sparse rows and the original row norms
    rows: Vec<Vec<(usize, f64)>>,
    norms: Vec<f64>,
    /// index into `problem.constraints` for each kept row
    origin: Vec<usize>,
    lo: DVector<f64>,
    hi: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    /// constraints with no variable terms that are violated by their constant
    trivially_infeasible: bool,
}

fn svec_index(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    j * (j + 1) / 2 + i
}

impl SdpWorkspace {
    /// Factors the constraint system of `problem` (its objective is the
    /// default for [`SdpWorkspace::solve`]).
    pub fn new(problem: &SdpProblem) -> Result<Self> {
        let p = problem.psd_dim;
        let nsv = p * (p + 1) / 2;
        let n = nsv + problem.num_free;
        let mut rows = Vec::new();
        let mut norms = Vec::new();
        let mut origin = Vec::new();
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        let mut trivially_infeasible = false;
        for (r, c) in problem.constraints.iter().enumerate() {
            let dense = Self::to_vector(&c.expr, nsv, n);
            let norm = dense.norm();
            let (l, h) = match c.kind {
                ConstraintKind::Eq => (-c.expr.constant, -c.expr.constant),
                ConstraintKind::Le => (f64::NEG_INFINITY, -c.expr.constant),
            };
            if norm == 0.0 {
                trivially_infeasible |= l > 1e-12 || h < -1e-12;
                continue;
            }
            let row: Vec<(usize, f64)> = dense
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(k, v)| (k, v / norm))
                .collect();
            rows.push(row);
            norms.push(norm);
            origin.push(r);
            lo.push(l / norm);
            hi.push(h / norm);
        }
        let mut m = DMatrix::<f64>::identity(n, n);
        for row in &rows {
            for &(a, va) in row {
                for &(b, vb) in row {
                    m[(a, b)] += va * vb;
                }
            }
        }
        let chol =
            Cholesky::new(m).ok_or_else(|| Error::Solver("KKT factorization failed".into()))?;
        Ok(Self {
            problem: problem.clone(),
            p,
            nsv,
            n,
            rows,
            norms,
            origin,
            lo: DVector::from_vec(lo),
            hi: DVector::from_vec(hi),
            chol,
            trivially_infeasible,
        })
    }

    fn to_vector(e: &AffineExpr, nsv: usize, n: usize) -> DVector<f64> {
        let mut v = DVector::zeros(n);
        for &(i, j, c) in &e.psd {
            v[svec_index(i, j)] += if i == j { c } else { c / SQRT_2 };
        }
        for &(k, c) in &e.free {
            v[nsv + k] += c;
        }
        v
    }

    fn unpack(&self, v: &DVector<f64>) -> DMatrix<f64> {
        let p = self.p;
        let mut x = DMatrix::zeros(p, p);
        for j in 0..p {
            for i in 0..=j {
                let s = v[svec_index(i, j)];
                if i == j {
                    x[(i, i)] = s;
                } else {
                    x[(i, j)] = s / SQRT_2;
                    x[(j, i)] = s / SQRT_2;
                }
            }
        }
        x
    }

    fn pack(&self, x: &DMatrix<f64>, v: &mut DVector<f64>) {
        for j in 0..self.p {
            for i in 0..=j {
                v[svec_index(i, j)] = if i == j {
                    x[(i, i)]
                } else {
                    x[(i, j)] * SQRT_2
                };
            }
        }
    }

    fn project_cone(&self, v: &mut DVector<f64>) {
        if self.p == 0 {
            return;
        }
        let x = psd_part(&self.unpack(v));
        self.pack(&x, v);
    }

    fn apply(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        for (r, row) in self.rows.iter().enumerate() {
            out[r] = row.iter().map(|&(k, v)| v * x[k]).sum();
        }
    }

    fn apply_t(&self, y: &DVector<f64>, out: &mut DVector<f64>) {
        out.fill(0.0);
        for (r, row) in self.rows.iter().enumerate() {
            for &(k, v) in row {
                out[k] += v * y[r];
            }
        }
    }

    /// Largest original-scale violation of the rows at `x`.
    fn violation(&self, ax: &DVector<f64>) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.rows.len() {
            let v = (self.lo[r] - ax[r]).max(ax[r] - self.hi[r]).max(0.0);
            worst = worst.max(v * self.norms[r]);
        }
        worst
    }

    /// Solves with the workspace's own objective.
    pub fn solve_default(
        &self,
        settings: &SdpSettings,
        warm: Option<&WarmStart>,
    ) -> Result<(SdpSolution, WarmStart)> {
        let objective = self.problem.objective.clone();
        self.solve(&objective, settings, warm)
    }

    /// Minimizes `objective` over the workspace's feasible set.
    pub fn solve(
        &self,
        objective: &AffineExpr,
        settings: &SdpSettings,
        warm: Option<&WarmStart>,
    ) -> Result<(SdpSolution, WarmStart)> {
        objective.check(self.p, self.problem.num_free)?;
        if !(settings.tol > 0.0) || !(settings.alpha > 0.0 && settings.alpha < 2.0) {
            return Err(invalid("tol must be positive and alpha in (0, 2)"));
        }
        let (n, m) = (self.n, self.rows.len());
        let c_raw = Self::to_vector(objective, self.nsv, n);
        let c_scale = match c_raw.amax() {
            v if v > 0.0 => 1.0 / v,
            _ => 1.0,
        };
        let c = &c_raw * c_scale;
        let alpha = settings.alpha;

        let (mut y, mut z, mut u, mut w, mut rho) = match warm {
            Some(ws) if ws.y.len() == n && ws.z.len() == m => (
                ws.y.clone(),
                ws.z.clone(),
                ws.u.clone(),
                ws.w.clone(),
                ws.rho,
            ),
            _ => {
                let y = DVector::zeros(n);
                let z = DVector::from_fn(m, |r, _| 0.0f64.clamp(self.lo[r], self.hi[r]));
                (y, z, DVector::zeros(m), DVector::zeros(n), settings.rho)
            }
        };

        let mut x = DVector::zeros(n);
        let mut ax = DVector::zeros(m);
        let mut ay = DVector::zeros(m);
        let mut tmp = DVector::zeros(n);
        let mut diff = DVector::zeros(m);
        let mut status = SdpStatus::MaxIter;
        let mut iterations = settings.max_iter;
        for it in 1..=settings.max_iter {
            diff.copy_from(&z);
            diff -= &u;
            self.apply_t(&diff, &mut tmp);
            let mut rhs = &y - &w;
            rhs += &tmp;
            rhs.axpy(-1.0 / rho, &c, 1.0);
            self.chol.solve_mut(&mut rhs);
            x.copy_from(&rhs);
            self.apply(&x, &mut ax);

            // z-block
            let z_hat = alpha * &ax + (1.0 - alpha) * &z;
            let mut z_new = &z_hat + &u;
            for r in 0..m {
                z_new[r] = z_new[r].clamp(self.lo[r], self.hi[r]);
            }
            u += &z_hat;
            u -= &z_new;
            z = z_new;

            // y-block
            let y_hat = alpha * &x + (1.0 - alpha) * &y;
            let mut y_new = &y_hat + &w;
            self.project_cone(&mut y_new);
            w += &y_hat;
            w -= &y_new;
            y = y_new;

            if y.amax() > UNBOUNDED_NORM {
                status = SdpStatus::Unbounded;
                iterations = it;
                break;
            }
            let check = it % settings.check_every == 0 || it == settings.max_iter;
            let adapt = it % ADAPT_EVERY == 0;
            if !(check || adapt) {
                continue;
            }
            // residuals: consensus, dual stationarity, violation at y
            let r_cons = (&ax - &z).amax().max((&x - &y).amax());
            self.apply_t(&u, &mut tmp);
            let aty_norm = rho * tmp.amax();
            let mut dual = &tmp + &w;
            dual *= rho;
            dual += &c;
            // relative to the unit-scaled objective
            let r_dual = dual.amax();
            self.apply(&y, &mut ay);
            let viol = self.violation(&ay);
            if check && viol <= settings.tol && r_cons <= settings.tol && r_dual <= settings.tol {
                status = SdpStatus::Optimal;
                iterations = it;
                break;
            }
            if adapt {
                let prim_rel = r_cons / ax.amax().max(z.amax()).max(x.amax()).max(1e-10);
                let dual_rel = r_dual / c.amax().max(aty_norm).max(1e-10);
                if prim_rel > 0.0 && dual_rel > 0.0 {
                    let target = (rho * (prim_rel / dual_rel).sqrt()).clamp(RHO_MIN, RHO_MAX);
                    if target > 5.0 * rho || target < 0.2 * rho {
                        let ratio = rho / target;
                        u *= ratio;
                        w *= ratio;
                        rho = target;
                    }
                }
            }
        }

        // recover unscaled quantities
        let psd_matrix = self.unpack(&y);
        let free_vars: Vec<f64> = y
            .rows(self.nsv, self.problem.num_free)
            .iter()
            .copied()
            .collect();
        let mut multipliers = vec![0.0; self.problem.constraints.len()];
        for (r, &orig) in self.origin.iter().enumerate() {
            multipliers[orig] = rho * u[r] / (self.norms[r] * c_scale);
        }
        let s = -(rho / c_scale) * &w;
        // unpacking divides off-diagonals by √2, which is also the
        // svec-to-matrix map for gradients
        let dual_psd = self.unpack(&s);
        let dual_free: Vec<f64> = s
            .rows(self.nsv, self.problem.num_free)
            .iter()
            .copied()
            .collect();
        let primal_residual = self.problem.max_violation(&psd_matrix, &free_vars);
        let dual_residual =
            self.problem
                .dual_residual_with(objective, &multipliers, &dual_psd, &dual_free);
        if status == SdpStatus::MaxIter
            && (self.trivially_infeasible || primal_residual > settings.tol.sqrt())
        {
            status = SdpStatus::InfeasibleSuspect;
        }
        if self.trivially_infeasible {
            status = SdpStatus::InfeasibleSuspect;
        }
        let objective_value = objective.eval(&psd_matrix, &free_vars);
        let warm = WarmStart { y, z, u, w, rho };
        Ok((
            SdpSolution {
                psd_matrix,
                free_vars,
                objective_value,
                primal_residual,
                dual_residual,
                multipliers,
                dual_psd,
                dual_free,
                iterations,
                status,
            },
            warm,
        ))
    }
}

/// Solves `problem` from a cold start.
pub fn solve_sdp(problem: &SdpProblem, tol: f64, max_iter: usize) -> Result<SdpSolution> {
    let ws = SdpWorkspace::new(problem)?;
    let settings = SdpSettings {
        tol,
        max_iter,
        ..SdpSettings::default()
    };
    Ok(ws.solve_default(&settings, None)?.0)
}
