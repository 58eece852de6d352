//! Univariate SSNB maps via slope-bounded isotonic regression.
//!
//! In 1D the optimal map is the weighted L² projection of the barycentric
//! projection onto maps whose difference quotients lie in `[ell, L]` on each
//! cluster. After the change of variables `v_1 = z_1`, `v_i = z_i - z_{i-1}`
//! the constraints become a box, and accelerated projected gradient applies.

mod map;

use std::ops::Range;

pub use map::{eval_map_1d, fit_ssnb_1d, read_map, ClusterSpan, Map1D};

use crate::error::{invalid, Result};

/// Default KKT tolerance of [`solve_isotonic`].
pub const DEFAULT_TOL: f64 = 1e-9;
/// Default iteration cap (per cluster) of [`solve_isotonic`].
pub const DEFAULT_MAX_ITER: usize = 500_000;

/// `min Σ a_i (z_i - w_i)²` s.t. `ell Δx ≤ Δz ≤ lip Δx` inside each cluster.
#[derive(Debug, Clone)]
pub struct IsotonicProblem {
    x: Vec<f64>,
    w: Vec<f64>,
    a: Vec<f64>,
    ell: f64,
    lip: f64,
    clusters: Vec<Range<usize>>,
}

impl IsotonicProblem {
    /// `clusters` must be disjoint ranges covering `0..n`; `x` must be
    /// nondecreasing inside each range. Equal positions are allowed and are
    /// merged before solving.
    pub fn new(
        x: Vec<f64>,
        w: Vec<f64>,
        a: Vec<f64>,
        ell: f64,
        lip: f64,
        clusters: Vec<Range<usize>>,
    ) -> Result<Self> {
        let n = x.len();
        if n == 0 {
            return Err(invalid("empty isotonic problem"));
        }
        if w.len() != n || a.len() != n {
            return Err(invalid("x, w and a must have equal lengths"));
        }
        if !(ell >= 0.0 && ell <= lip && lip.is_finite()) {
            return Err(invalid(format!(
                "need 0 <= ell <= L < inf, got ell={ell}, L={lip}"
            )));
        }
        if x.iter().chain(&w).chain(&a).any(|v| !v.is_finite()) {
            return Err(invalid("non-finite input"));
        }
        if a.iter().any(|&v| v < 0.0) {
            return Err(invalid("negative weight"));
        }
        let mut covered = vec![false; n];
        for r in &clusters {
            if r.start >= r.end || r.end > n {
                return Err(invalid(format!("bad cluster range {r:?}")));
            }
            for i in r.clone() {
                if std::mem::replace(&mut covered[i], true) {
                    return Err(invalid("overlapping cluster ranges"));
                }
            }
            if x[r.clone()].windows(2).any(|p| p[1] < p[0]) {
                return Err(invalid("positions not sorted within a cluster"));
            }
        }
        if covered.contains(&false) {
            return Err(invalid("cluster ranges do not cover all points"));
        }
        Ok(Self {
            x,
            w,
            a,
            ell,
            lip,
            clusters,
        })
    }

    /// Single cluster over all points.
    pub fn single(x: Vec<f64>, w: Vec<f64>, a: Vec<f64>, ell: f64, lip: f64) -> Result<Self> {
        let n = x.len();
        Self::new(x, w, a, ell, lip, vec![0..n])
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn targets(&self) -> &[f64] {
        &self.w
    }

    pub fn weights(&self) -> &[f64] {
        &self.a
    }

    pub fn clusters(&self) -> &[Range<usize>] {
        &self.clusters
    }

    /// `Σ a_i (z_i - w_i)²`.
    pub fn objective(&self, z: &[f64]) -> f64 {
        z.iter()
            .zip(&self.w)
            .zip(&self.a)
            .map(|((z, w), a)| a * (z - w) * (z - w))
            .sum()
    }

    /// Largest violation of the gap constraints by `z` (0 when feasible).
    pub fn max_violation(&self, z: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for r in &self.clusters {
            for i in r.start..r.end - 1 {
                let dx = self.x[i + 1] - self.x[i];
                let dz = z[i + 1] - z[i];
                worst = worst.max(self.ell * dx - dz).max(dz - self.lip * dx);
            }
        }
        worst
    }
}

/// Solves the problem cluster by cluster; returns `z` aligned with `x`.
pub fn solve_isotonic(problem: &IsotonicProblem, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    if !(tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    let mut z = vec![0.0; problem.x.len()];
    for r in &problem.clusters {
        let block = Block::merged(problem, r.clone());
        let sol = block.solve(tol, max_iter, None);
        for (k, span) in block.groups.iter().enumerate() {
            for i in span.clone() {
                z[i] = sol[k];
            }
        }
    }
    Ok(z)
}

/// One cluster with distinct positions.
struct Block {
    gaps: Vec<f64>,
    w: Vec<f64>,
    a: Vec<f64>,
    ell: f64,
    lip: f64,
    /// original index ranges merged into each distinct position
    groups: Vec<Range<usize>>,
}

impl Block {
    fn merged(p: &IsotonicProblem, r: Range<usize>) -> Self {
        let mut xs: Vec<f64> = Vec::new();
        let mut w = Vec::new();
        let mut a = Vec::new();
        let mut groups: Vec<Range<usize>> = Vec::new();
        let mut i = r.start;
        while i < r.end {
            let mut j = i + 1;
            while j < r.end && p.x[j] == p.x[i] {
                j += 1;
            }
            let mass: f64 = p.a[i..j].iter().sum();
            let target = if mass > 0.0 {
                (i..j).map(|k| p.a[k] * p.w[k]).sum::<f64>() / mass
            } else {
                p.w[i..j].iter().sum::<f64>() / (j - i) as f64
            };
            xs.push(p.x[i]);
            w.push(target);
            a.push(mass);
            groups.push(i..j);
            i = j;
        }
        // rescaling the weights does not move the minimizer but puts the
        // gradient in the same units as z
        let amax = a.iter().cloned().fold(0.0, f64::max);
        if amax > 0.0 {
            a.iter_mut().for_each(|v| *v /= amax);
        } else {
            a.iter_mut().for_each(|v| *v = 1.0);
        }
        let gaps = xs.windows(2).map(|p| p[1] - p[0]).collect();
        Self {
            gaps,
            w,
            a,
            ell: p.ell,
            lip: p.lip,
            groups,
        }
    }

    fn n(&self) -> usize {
        self.w.len()
    }

    fn bounds(&self, k: usize) -> (f64, f64) {
        if k == 0 {
            (f64::NEG_INFINITY, f64::INFINITY)
        } else {
            let g = self.gaps[k - 1];
            (self.ell * g, self.lip * g)
        }
    }

    fn project(&self, v: &mut [f64]) {
        for (k, vk) in v.iter_mut().enumerate().skip(1) {
            let (lo, hi) = self.bounds(k);
            *vk = vk.clamp(lo, hi);
        }
    }

    fn cumsum(v: &[f64], z: &mut [f64]) {
        let mut acc = 0.0;
        for (zk, vk) in z.iter_mut().zip(v) {
            acc += vk;
            *zk = acc;
        }
    }

    /// Objective and gradient w.r.t. `v`: suffix sums of `2 a (z - w)`.
    fn eval(&self, v: &[f64], z: &mut [f64], grad: Option<&mut [f64]>) -> f64 {
        Self::cumsum(v, z);
        let mut f = 0.0;
        for k in 0..self.n() {
            let r = z[k] - self.w[k];
            f += self.a[k] * r * r;
        }
        if let Some(g) = grad {
            let mut acc = 0.0;
            for k in (0..self.n()).rev() {
                acc += 2.0 * self.a[k] * (z[k] - self.w[k]);
                g[k] = acc;
            }
        }
        f
    }

    /// Upper estimate of the gradient Lipschitz constant `2 λmax(AᵀDA)`.
    fn lipschitz(&self) -> f64 {
        let n = self.n();
        // trace bound
        let trace: f64 = self
            .a
            .iter()
            .enumerate()
            .map(|(i, a)| a * (i + 1) as f64)
            .sum();
        let mut u = vec![1.0 / (n as f64).sqrt(); n];
        let mut t = vec![0.0; n];
        let mut lambda = 0.0;
        for _ in 0..60 {
            // t = A u (prefix sums), then D, then Aᵀ (suffix sums)
            Self::cumsum(&u, &mut t);
            let mut acc = 0.0;
            for k in (0..n).rev() {
                acc += self.a[k] * t[k];
                t[k] = acc;
            }
            let norm = t.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            lambda = norm;
            for (uk, tk) in u.iter_mut().zip(&t) {
                *uk = tk / norm;
            }
        }
        2.0 * (1.05 * lambda).min(trace).max(lambda)
    }

    /// Natural KKT residual `‖v - Π(v - ∇f)‖∞`.
    fn kkt(&self, v: &[f64], grad: &[f64]) -> f64 {
        (0..self.n())
            .map(|k| {
                let (lo, hi) = self.bounds(k);
                (v[k] - (v[k] - grad[k]).clamp(lo, hi)).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Accelerated projected gradient with function-value restart. Accepted
    /// iterates have nonincreasing objective; their values are pushed to
    /// `trace` when given.
    fn solve(&self, tol: f64, max_iter: usize, mut trace: Option<&mut Vec<f64>>) -> Vec<f64> {
        let n = self.n();
        let mut v = vec![0.0; n];
        v[0] = self.w[0];
        for (k, vk) in v.iter_mut().enumerate().skip(1) {
            let (lo, hi) = self.bounds(k);
            *vk = 0.5 * (lo + hi);
        }
        if n == 1 {
            return v;
        }
        let step = 1.0 / self.lipschitz();
        let mut z = vec![0.0; n];
        let mut grad = vec![0.0; n];
        let mut f = self.eval(&v, &mut z, None);
        if let Some(t) = trace.as_deref_mut() {
            t.push(f);
        }
        let mut y = v.clone();
        let mut next = vec![0.0; n];
        let mut theta: f64 = 1.0;
        let mut accepted = 0usize;
        for _ in 0..max_iter {
            self.eval(&y, &mut z, Some(&mut grad));
            for k in 0..n {
                next[k] = y[k] - step * grad[k];
            }
            self.project(&mut next);
            let f_next = self.eval(&next, &mut z, None);
            if f_next > f && theta > 1.0 {
                // momentum overshoot: restart from the last accepted point
                theta = 1.0;
                y.copy_from_slice(&v);
                continue;
            }
            let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
            let beta = (theta - 1.0) / theta_next;
            for k in 0..n {
                y[k] = next[k] + beta * (next[k] - v[k]);
            }
            std::mem::swap(&mut v, &mut next);
            f = f_next.min(f);
            theta = theta_next;
            if let Some(t) = trace.as_deref_mut() {
                t.push(f_next);
            }
            accepted += 1;
            if accepted % 16 == 0 {
                self.eval(&v, &mut z, Some(&mut grad));
                if self.kkt(&v, &grad) <= tol {
                    break;
                }
                // once the active gaps are identified the polish is exact
                let mut cand = v.clone();
                if self.polish(&mut cand) <= tol {
                    v = cand;
                    break;
                }
            }
        }
        self.polish(&mut v);
        Self::cumsum(&v, &mut z);
        z
    }

    /// Fixes the gaps that sit on their bounds and solves the remaining
    /// unconstrained least-squares problem exactly: blocks of points chained
    /// by active gaps move rigidly, each by its weighted mean residual. The
    /// result replaces `v` only if it is feasible and no worse in KKT terms.
    /// Returns the KKT residual of the final `v`.
    fn polish(&self, v: &mut [f64]) -> f64 {
        let n = self.n();
        let mut cand = v.to_vec();
        let mut active = vec![false; n];
        for k in 1..n {
            let (lo, hi) = self.bounds(k);
            let scale = 1e-9 * (1.0 + lo.abs().max(hi.abs()));
            if v[k] - lo <= scale {
                cand[k] = lo;
                active[k] = true;
            } else if hi - v[k] <= scale {
                cand[k] = hi;
                active[k] = true;
            }
        }
        let mut z = vec![0.0; n];
        Self::cumsum(&cand, &mut z);
        let mut start = 0;
        while start < n {
            let mut end = start + 1;
            while end < n && active[end] {
                end += 1;
            }
            let mass: f64 = self.a[start..end].iter().sum();
            if mass > 0.0 {
                let shift = (start..end)
                    .map(|i| self.a[i] * (self.w[i] - z[i]))
                    .sum::<f64>()
                    / mass;
                z[start..end].iter_mut().for_each(|zi| *zi += shift);
            }
            start = end;
        }
        cand[0] = z[0];
        for k in 1..n {
            cand[k] = z[k] - z[k - 1];
        }
        let mut grad = vec![0.0; n];
        self.eval(v, &mut z, Some(&mut grad));
        let before = self.kkt(v, &grad);
        for k in 1..n {
            let (lo, hi) = self.bounds(k);
            if !active[k] && (cand[k] < lo || cand[k] > hi) {
                return before;
            }
        }
        self.project(&mut cand);
        self.eval(&cand, &mut z, Some(&mut grad));
        let after = self.kkt(&cand, &grad);
        if after <= before {
            v.copy_from_slice(&cand);
            after
        } else {
            before
        }
    }
}
