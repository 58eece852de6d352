//! Log-barrier Newton polish of a cell QCQP from a feasible point.
//!
//! The cell problem for fixed coupling is convex (a convex quadratic
//! objective, convex quadratic constraints), so path following from a
//! strictly feasible point converges to its minimizer. Every iterate stays
//! strictly feasible.

use nalgebra::{DMatrix, DVector};

use super::cluster::ClusterProblem;

const BLENDS: [f64; 6] = [1e-4, 1e-3, 1e-2, 1e-1, 0.5, 1.0];
const GAP_TOL: f64 = 1e-11;
const T_GROWTH: f64 = 12.0;
const NEWTON_MAX: usize = 60;

struct Layout {
    n: usize,
    d: usize,
    /// `u_0` is pinned; `u_i` for `i ≥ 1` lives at `n d + i − 1`
    pinned_u0: f64,
}

impl Layout {
    fn len(&self) -> usize {
        self.n * self.d + self.n - 1
    }

    fn z(&self, i: usize, k: usize) -> usize {
        i * self.d + k
    }

    fn u(&self, i: usize) -> Option<usize> {
        (i > 0).then(|| self.n * self.d + i - 1)
    }

    fn unpack(&self, v: &DVector<f64>) -> (Vec<Vec<f64>>, Vec<f64>) {
        let z = (0..self.n)
            .map(|i| (0..self.d).map(|k| v[self.z(i, k)]).collect())
            .collect();
        let u = (0..self.n)
            .map(|i| self.u(i).map_or(self.pinned_u0, |p| v[p]))
            .collect();
        (z, u)
    }
}

/// Constraint value `g_ij ≤ 0` and its sparse gradient.
fn constraint(
    prob: &ClusterProblem,
    lay: &Layout,
    v: &DVector<f64>,
    i: usize,
    j: usize,
    grad: &mut Vec<(usize, f64)>,
) -> f64 {
    let d = lay.d;
    let c = 1.0 / (2.0 * (1.0 - prob.ell / prob.lip));
    let r = prob.ell / prob.lip;
    let ui = lay.u(i).map_or(lay.pinned_u0, |p| v[p]);
    let uj = lay.u(j).map_or(lay.pinned_u0, |p| v[p]);
    let mut g = uj - ui;
    grad.clear();
    let mut dz2 = 0.0;
    let mut dx2 = 0.0;
    let mut cross = 0.0;
    for k in 0..d {
        let dx = prob.xs[i][k] - prob.xs[j][k];
        let zi = v[lay.z(i, k)];
        let zj = v[lay.z(j, k)];
        g += zj * dx;
        dz2 += (zi - zj) * (zi - zj);
        dx2 += dx * dx;
        cross += (zi - zj) * dx;
        // ∂/∂z_i: (2c/L)(z_i − z_j) − 2c(ℓ/L)Δ ; ∂/∂z_j: Δ − (2c/L)(z_i − z_j) + 2c(ℓ/L)Δ
        let gi = 2.0 * c / prob.lip * (zi - zj) - 2.0 * c * r * dx;
        grad.push((lay.z(i, k), gi));
        grad.push((lay.z(j, k), dx - gi));
    }
    g += c * (dz2 / prob.lip + prob.ell * dx2 - 2.0 * r * cross);
    if let Some(p) = lay.u(i) {
        grad.push((p, -1.0));
    }
    if let Some(p) = lay.u(j) {
        grad.push((p, 1.0));
    }
    g
}

fn objective(prob: &ClusterProblem, lay: &Layout, v: &DVector<f64>, scale: f64) -> f64 {
    let mut f = 0.0;
    for i in 0..lay.n {
        for k in 0..lay.d {
            let z = v[lay.z(i, k)];
            f += prob.a[i] * z * z - 2.0 * z * prob.b[i][k];
        }
    }
    f * scale
}

/// Cholesky factor of `h`, shifting the diagonal when rounding has made
/// the (mathematically positive definite) barrier Hessian indefinite.
fn damped_cholesky(h: DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let top = h.diagonal().amax();
    let mut shift = 0.0;
    let mut tau = 1e-14 * top.max(1.0);
    for _ in 0..12 {
        let mut m = h.clone();
        for k in 0..m.nrows() {
            m[(k, k)] += shift;
        }
        if let Some(ch) = m.cholesky() {
            return Some(ch);
        }
        shift = tau;
        tau *= 100.0;
    }
    None
}

/// Returns `None` if no strictly feasible start is found.
pub(crate) fn barrier_refine(
    prob: &ClusterProblem,
    z: &[Vec<f64>],
    u: &[f64],
) -> Option<(Vec<Vec<f64>>, Vec<f64>)> {
    let (n, d) = (prob.len(), prob.dim());
    if n < 2 {
        return None;
    }
    // strictly feasible start: convex blend with the quadratic potential,
    // whose constraints all hold with positive slack. The constraints are
    // jointly convex in (z, u), so any positive weight works in exact
    // arithmetic; the weight grows when rounding leaves the blend on the
    // boundary (nearly coincident atoms make the slack tiny).
    let (z0, u0) = prob.initial();
    let shift = u0[0] - u[0];
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let mut grad_buf = Vec::with_capacity(2 * d + 2);
    let mut start = None;
    for blend in BLENDS {
        let mut v = DVector::zeros(n * d + n - 1);
        let mut pinned_u0 = 0.0;
        let lay0 = Layout {
            n,
            d,
            pinned_u0: 0.0,
        };
        for i in 0..n {
            for k in 0..d {
                v[lay0.z(i, k)] = (1.0 - blend) * z[i][k] + blend * z0[i][k];
            }
            let ui = (1.0 - blend) * (u[i] + shift) + blend * u0[i];
            match lay0.u(i) {
                Some(p) => v[p] = ui,
                None => pinned_u0 = ui,
            }
        }
        let lay = Layout { n, d, pinned_u0 };
        if pairs
            .iter()
            .all(|&(i, j)| constraint(prob, &lay, &v, i, j, &mut grad_buf) < 0.0)
        {
            start = Some((v, lay));
            break;
        }
    }
    let (mut v, lay) = start?;
    let dim = lay.len();
    let mass: f64 = prob.a.iter().sum();
    let scale = 1.0 / mass.max(f64::MIN_POSITIVE);
    let hess_quad = 2.0 * (1.0 / (2.0 * (1.0 - prob.ell / prob.lip))) / prob.lip;
    let phi = |v: &DVector<f64>, t: f64, buf: &mut Vec<(usize, f64)>| -> f64 {
        let mut val = t * objective(prob, &lay, v, scale);
        for &(i, j) in &pairs {
            let g = constraint(prob, &lay, v, i, j, buf);
            if g >= 0.0 {
                return f64::INFINITY;
            }
            val -= (-g).ln();
        }
        val
    };
    let m = pairs.len() as f64;
    let mut t = 1.0;
    loop {
        for _ in 0..NEWTON_MAX {
            let mut grad = DVector::<f64>::zeros(dim);
            let mut hess = DMatrix::<f64>::zeros(dim, dim);
            for i in 0..n {
                for k in 0..d {
                    let p = lay.z(i, k);
                    grad[p] += t * scale * (2.0 * prob.a[i] * v[p] - 2.0 * prob.b[i][k]);
                    hess[(p, p)] += t * scale * 2.0 * prob.a[i];
                }
            }
            for &(i, j) in &pairs {
                let g = constraint(prob, &lay, &v, i, j, &mut grad_buf);
                let s = -g;
                for &(p, gp) in &grad_buf {
                    grad[p] += gp / s;
                    for &(q, gq) in &grad_buf {
                        hess[(p, q)] += gp * gq / (s * s);
                    }
                }
                let w = hess_quad / s;
                for k in 0..d {
                    let (pi, pj) = (lay.z(i, k), lay.z(j, k));
                    hess[(pi, pi)] += w;
                    hess[(pj, pj)] += w;
                    hess[(pi, pj)] -= w;
                    hess[(pj, pi)] -= w;
                }
            }
            let step: DVector<f64> = match damped_cholesky(hess) {
                Some(ch) => -ch.solve(&grad),
                None => break,
            };
            let decrement = -grad.dot(&step);
            if !(decrement > 1e-14) {
                break;
            }
            let f0 = phi(&v, t, &mut grad_buf);
            let mut alpha = 1.0;
            let mut moved = false;
            while alpha > 1e-12 {
                let cand = &v + alpha * &step;
                let f1 = phi(&cand, t, &mut grad_buf);
                if f1 <= f0 - 0.25 * alpha * decrement {
                    v = cand;
                    moved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !moved {
                break;
            }
        }
        if m / t < GAP_TOL {
            break;
        }
        t *= T_GROWTH;
    }
    let (z, _) = lay.unpack(&v);
    let u = prob.potentials_for(&z)?;
    Some((z, u))
}
