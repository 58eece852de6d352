//! One partition cell: the QCQP for fixed coupling and its SDP relaxation.

use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, sq_norm};
use crate::sdp::{AffineExpr, SdpProblem, SdpSettings, SdpStatus, SdpWorkspace, WarmStart};
use crate::transport::Coupling;

use super::constraint::edge_weight;
use super::refine::barrier_refine;
use super::Lifting;

/// Cell data for fixed coupling `P`:
/// `min Σ_i a_i|z_i|² − 2⟨z_i, b_i⟩ + const` over interpolating `(z, u)`,
/// with `a_i = Σ_j P_ij`, `b_i = Σ_j P_ij y_j`, `const = Σ_ij P_ij |y_j|²`.
#[derive(Debug, Clone)]
pub struct ClusterProblem {
    pub xs: Vec<Vec<f64>>,
    pub a: Vec<f64>,
    pub b: Vec<Vec<f64>>,
    pub constant: f64,
    pub ell: f64,
    pub lip: f64,
    /// All target points (needed by the full lifting only).
    pub ys: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ClusterSolution {
    pub z: Vec<Vec<f64>>,
    pub u: Vec<f64>,
    /// QCQP objective at `(z, u)`.
    pub objective: f64,
    /// Relaxation value and solver status, when an SDP was solved.
    pub sdp_value: Option<f64>,
    pub sdp_status: Option<SdpStatus>,
}

/// Cached SDP factorization and iterate for repeated solves of one cell.
#[derive(Default)]
pub(crate) struct CellState {
    workspace: Option<SdpWorkspace>,
    warm: Option<WarmStart>,
}

impl ClusterProblem {
    /// Restricts `p` to the rows `members`.
    pub fn from_coupling(
        p: &Coupling,
        members: &[usize],
        xs: &[Vec<f64>],
        ys: &[Vec<f64>],
        ell: f64,
        lip: f64,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(invalid("empty cluster"));
        }
        if p.rows() != xs.len() || p.cols() != ys.len() {
            return Err(invalid("coupling shape does not match the point sets"));
        }
        let d = xs[0].len();
        let mut a = Vec::with_capacity(members.len());
        let mut b = Vec::with_capacity(members.len());
        let mut constant = 0.0;
        for &i in members {
            let mut mass = 0.0;
            let mut bar = vec![0.0; d];
            for (j, y) in ys.iter().enumerate() {
                let pij = p.matrix[(i, j)];
                if pij == 0.0 {
                    continue;
                }
                mass += pij;
                for k in 0..d {
                    bar[k] += pij * y[k];
                }
                constant += pij * sq_norm(y);
            }
            a.push(mass);
            b.push(bar);
        }
        Ok(Self {
            xs: members.iter().map(|&i| xs[i].clone()).collect(),
            a,
            b,
            constant,
            ell,
            lip,
            ys: ys.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.xs[0].len()
    }

    fn pref(&self) -> f64 {
        1.0 / (2.0 * (1.0 - self.ell / self.lip))
    }

    /// `Σ_ij P_ij |z_i − y_j|²` restricted to the cell.
    pub fn objective(&self, z: &[Vec<f64>]) -> f64 {
        let mut f = self.constant;
        for i in 0..self.len() {
            f += self.a[i] * sq_norm(&z[i]) - 2.0 * dot(&z[i], &self.b[i]);
        }
        f
    }

    /// The quadratic potential with curvature `(ℓ+L)/2`: strictly feasible
    /// whenever `ℓ < L`.
    pub fn initial(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let kappa = 0.5 * (self.ell + self.lip);
        let z = self
            .xs
            .iter()
            .map(|x| x.iter().map(|v| kappa * v).collect())
            .collect();
        let u = self.xs.iter().map(|x| 0.5 * kappa * sq_norm(x)).collect();
        (z, u)
    }

    /// Coefficients of constraint `(i, j)` written as `g ≤ 0`:
    /// linear in `z_j`, linear in `z_i`, the `|z_i − z_j|²` factor and the
    /// constant.
    fn constraint_terms(&self, i: usize, j: usize) -> (Vec<f64>, Vec<f64>, f64, f64) {
        let c = self.pref();
        let r = self.ell / self.lip;
        let dx: Vec<f64> = self.xs[i]
            .iter()
            .zip(&self.xs[j])
            .map(|(p, q)| p - q)
            .collect();
        let zj: Vec<f64> = dx.iter().map(|v| v * (1.0 + 2.0 * c * r)).collect();
        let zi: Vec<f64> = dx.iter().map(|v| -2.0 * c * r * v).collect();
        (zj, zi, c / self.lip, c * self.ell * sq_norm(&dx))
    }

    /// The SDP relaxation. Free variables are `u` (compact) or `z` then `u`
    /// (full); `u_0` is pinned to zero.
    pub fn sdp(&self, lifting: Lifting) -> SdpProblem {
        match lifting {
            Lifting::Compact => self.sdp_compact(),
            Lifting::Full => self.sdp_full(),
        }
    }

    fn sdp_compact(&self) -> SdpProblem {
        let (n, d) = (self.len(), self.dim());
        let mut prob = SdpProblem::new(d + n, n);
        let zc = |i: usize, k: usize| (d + i, k);
        let gz = |i: usize| d + i;
        let mut obj = AffineExpr::constant(self.constant);
        for i in 0..n {
            obj.add_psd(gz(i), gz(i), self.a[i]);
            for k in 0..d {
                let (r, c) = zc(i, k);
                obj.add_psd(r, c, -2.0 * self.b[i][k]);
            }
        }
        prob.set_objective(obj).expect("indices in range");
        for p in 0..d {
            for q in p..d {
                let mut e = AffineExpr::constant(if p == q { -1.0 } else { 0.0 });
                e.add_psd(p, q, 1.0);
                prob.add_eq(e).expect("indices in range");
            }
        }
        self.add_pin(&mut prob, 0);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let (lin_j, lin_i, quad, constant) = self.constraint_terms(i, j);
                let mut e = AffineExpr::constant(constant);
                e.add_free(i, -1.0).add_free(j, 1.0);
                for k in 0..d {
                    let (r, c) = zc(j, k);
                    e.add_psd(r, c, lin_j[k]);
                    let (r, c) = zc(i, k);
                    e.add_psd(r, c, lin_i[k]);
                }
                e.add_psd(gz(i), gz(i), quad)
                    .add_psd(gz(j), gz(j), quad)
                    .add_psd(gz(i), gz(j), -2.0 * quad);
                prob.add_le(e).expect("indices in range");
            }
        }
        prob
    }

    fn sdp_full(&self) -> SdpProblem {
        let (n, d, m) = (self.len(), self.dim(), self.ys.len());
        let xi = |a: usize| a;
        let zi = |i: usize| n + i;
        let yi = |b: usize| 2 * n + b;
        let zf = |i: usize, k: usize| i * d + k;
        let uf = n * d;
        let mut prob = SdpProblem::new(2 * n + m, n * d + n);
        let mut obj = AffineExpr::constant(self.constant);
        for i in 0..n {
            obj.add_psd(zi(i), zi(i), self.a[i]);
            for k in 0..d {
                obj.add_free(zf(i, k), -2.0 * self.b[i][k]);
            }
        }
        prob.set_objective(obj).expect("indices in range");
        // known Gram blocks
        let known: Vec<(usize, &Vec<f64>)> = (0..n)
            .map(|a| (xi(a), &self.xs[a]))
            .chain((0..m).map(|b| (yi(b), &self.ys[b])))
            .collect();
        for (s, &(p, vp)) in known.iter().enumerate() {
            for &(q, vq) in &known[s..] {
                let mut e = AffineExpr::constant(-dot(vp, vq));
                e.add_psd(p, q, 1.0);
                prob.add_eq(e).expect("indices in range");
            }
        }
        // cross entries are linear in the explicit z vectors
        for i in 0..n {
            for &(p, vp) in &known {
                let mut e = AffineExpr::new();
                e.add_psd(zi(i), p, 1.0);
                for k in 0..d {
                    e.add_free(zf(i, k), -vp[k]);
                }
                prob.add_eq(e).expect("indices in range");
            }
        }
        self.add_pin(&mut prob, uf);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let (lin_j, lin_i, quad, constant) = self.constraint_terms(i, j);
                let mut e = AffineExpr::constant(constant);
                e.add_free(uf + i, -1.0).add_free(uf + j, 1.0);
                for k in 0..d {
                    e.add_free(zf(j, k), lin_j[k]).add_free(zf(i, k), lin_i[k]);
                }
                e.add_psd(zi(i), zi(i), quad)
                    .add_psd(zi(j), zi(j), quad)
                    .add_psd(zi(i), zi(j), -2.0 * quad);
                prob.add_le(e).expect("indices in range");
            }
        }
        prob
    }

    fn add_pin(&self, prob: &mut SdpProblem, u_offset: usize) {
        let mut e = AffineExpr::new();
        e.add_free(u_offset, 1.0);
        prob.add_eq(e).expect("indices in range");
    }

    fn extract(
        &self,
        lifting: Lifting,
        x: &nalgebra::DMatrix<f64>,
        free: &[f64],
    ) -> (Vec<Vec<f64>>, Vec<f64>) {
        let (n, d) = (self.len(), self.dim());
        match lifting {
            Lifting::Compact => {
                let z = (0..n)
                    .map(|i| (0..d).map(|k| x[(d + i, k)]).collect())
                    .collect();
                (z, free[..n].to_vec())
            }
            Lifting::Full => {
                let z = (0..n).map(|i| free[i * d..(i + 1) * d].to_vec()).collect();
                (z, free[n * d..n * d + n].to_vec())
            }
        }
    }

    fn edge_matrix(&self, z: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut w = vec![vec![f64::NEG_INFINITY; n]; n];
        for s in 0..n {
            for t in 0..n {
                if s != t {
                    // edge s → t encodes u_t ≥ u_s + w
                    w[s][t] =
                        edge_weight(&z[t], &z[s], &self.xs[t], &self.xs[s], self.ell, self.lip);
                }
            }
            w[s][s] = 0.0;
        }
        w
    }

    /// Smallest values `u` (shifted to `min u = 0`) making `(z, u)`
    /// interpolating, or `None` if no such `u` exists.
    pub fn potentials_for(&self, z: &[Vec<f64>]) -> Option<Vec<f64>> {
        let n = self.len();
        let mut dist = self.edge_matrix(z);
        let scale = dist
            .iter()
            .flatten()
            .filter(|v| v.is_finite())
            .fold(1.0f64, |m, v| m.max(v.abs()));
        for k in 0..n {
            for s in 0..n {
                let dsk = dist[s][k];
                if dsk == f64::NEG_INFINITY {
                    continue;
                }
                for t in 0..n {
                    let cand = dsk + dist[k][t];
                    if cand > dist[s][t] {
                        dist[s][t] = cand;
                    }
                }
            }
            if (0..n).any(|s| dist[s][s] > 1e-12 * scale) {
                return None;
            }
        }
        let mut u: Vec<f64> = (0..n)
            .map(|t| (0..n).map(|s| dist[s][t]).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let min = u.iter().cloned().fold(f64::INFINITY, f64::min);
        u.iter_mut().for_each(|v| *v -= min);
        Some(u)
    }

    /// Moves `z` toward the initial quadratic potential until a feasible
    /// `u` exists (bisection on the blend factor).
    pub(crate) fn restore(&self, z: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>) {
        if let Some(u) = self.potentials_for(z) {
            return (z.to_vec(), u);
        }
        let (z0, _) = self.initial();
        let blend = |t: f64| -> Vec<Vec<f64>> {
            z.iter()
                .zip(&z0)
                .map(|(a, b)| {
                    a.iter()
                        .zip(b)
                        .map(|(p, q)| (1.0 - t) * p + t * q)
                        .collect()
                })
                .collect()
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.potentials_for(&blend(mid)).is_some() {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let z = blend(hi);
        let u = self
            .potentials_for(&z)
            .expect("blend with the quadratic start is feasible");
        (z, u)
    }

    /// Full pipeline with a fresh SDP workspace.
    pub fn solve_with(
        &self,
        lifting: Lifting,
        settings: &SdpSettings,
        refine: bool,
    ) -> Result<ClusterSolution> {
        let mut state = CellState::default();
        self.solve_cached(&mut state, lifting, settings, refine)
    }

    pub(crate) fn solve_cached(
        &self,
        state: &mut CellState,
        lifting: Lifting,
        settings: &SdpSettings,
        refine: bool,
    ) -> Result<ClusterSolution> {
        if !(self.ell < self.lip) {
            return Err(invalid("cell QCQP needs ell < L; use the affine solver"));
        }
        if self.len() == 1 {
            let z = vec![self.b[0]
                .iter()
                .map(|v| v / self.a[0])
                .collect::<Vec<f64>>()];
            let objective = self.objective(&z);
            return Ok(ClusterSolution {
                z,
                u: vec![0.0],
                objective,
                sdp_value: None,
                sdp_status: None,
            });
        }
        let prob = self.sdp(lifting);
        if state.workspace.is_none() {
            state.workspace = Some(SdpWorkspace::new(&prob)?);
        }
        let ws = state.workspace.as_ref().expect("set above");
        let (sol, warm) = ws.solve(prob.objective(), settings, state.warm.as_ref())?;
        state.warm = Some(warm);
        // The relaxation contains the lift of `initial()`, so it is never
        // infeasible: a suspected infeasibility is slow convergence, and like
        // an iteration cap it is repaired by restoration and refinement.
        match sol.status {
            SdpStatus::Optimal | SdpStatus::MaxIter | SdpStatus::InfeasibleSuspect => {}
            status => return Err(Error::Solver(format!(
                "cell SDP ended with {status:?} after {} iterations (primal {:.3e}, dual {:.3e})",
                sol.iterations, sol.primal_residual, sol.dual_residual
            ))),
        }
        let (z_sdp, _) = self.extract(lifting, &sol.psd_matrix, &sol.free_vars);
        let (mut z, mut u) = self.restore(&z_sdp);
        if refine {
            if let Some((zr, ur)) = barrier_refine(self, &z, &u) {
                if self.objective(&zr) <= self.objective(&z) {
                    z = zr;
                    u = ur;
                }
            }
        }
        let objective = self.objective(&z);
        Ok(ClusterSolution {
            z,
            u,
            objective,
            sdp_value: Some(sol.objective_value),
            sdp_status: Some(sol.status),
        })
    }
}

/// Solves the cell `members` for coupling `p` with the compact lifting,
/// default SDP settings and refinement.
pub fn solve_cluster(
    p: &Coupling,
    members: &[usize],
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    ell: f64,
    lip: f64,
) -> Result<ClusterSolution> {
    let prob = ClusterProblem::from_coupling(p, members, xs, ys, ell, lip)?;
    let settings = SdpSettings {
        tol: 1e-6,
        max_iter: 5_000,
        ..SdpSettings::default()
    };
    prob.solve_with(Lifting::Compact, &settings, true)
}

/// `ℓ = L = slope`: the gradient is `slope·x + c` with `c` the
/// coupling-weighted mean of `y_j − slope·x_i` over the cell.
/// Returns `(u, z)` on `members`, with `min u = 0`.
pub fn solve_affine_case(
    p: &Coupling,
    members: &[usize],
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    slope: f64,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let prob = ClusterProblem::from_coupling(p, members, xs, ys, slope, slope)?;
    Ok(prob.affine())
}

impl ClusterProblem {
    pub(crate) fn affine(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let d = self.dim();
        let slope = self.ell;
        let mass: f64 = self.a.iter().sum();
        let mut c = vec![0.0; d];
        for i in 0..self.len() {
            for k in 0..d {
                c[k] += self.b[i][k] - slope * self.a[i] * self.xs[i][k];
            }
        }
        c.iter_mut().for_each(|v| *v /= mass);
        let z: Vec<Vec<f64>> = self
            .xs
            .iter()
            .map(|x| x.iter().zip(&c).map(|(xk, ck)| slope * xk + ck).collect())
            .collect();
        let mut u: Vec<f64> = self
            .xs
            .iter()
            .map(|x| 0.5 * slope * sq_norm(x) + dot(&c, x))
            .collect();
        let min = u.iter().cloned().fold(f64::INFINITY, f64::min);
        u.iter_mut().for_each(|v| *v -= min);
        (u, z)
    }
}
