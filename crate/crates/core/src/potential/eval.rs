//! Out-of-sample evaluation of a fitted potential.
//!
//! For `x` in cell `k`, the value and gradient `(v, g)` solve
//! `min v s.t. v ≥ q_i(g)` over the atoms `i` of the cell, where `q_i` is the
//! interpolation bound with `(x, v, g)` in the role of the first point. All
//! `q_i` share the Hessian `h I`, `h = 1/(L − ℓ)`:
//!
//! ```text
//! q_i(g) = (h/2)|g|² − h⟨w_i, g⟩ + c_i,   w_i = z_i + ℓ(x − x_i)
//! ```
//!
//! so `min_g max_i q_i` has the concave dual
//! `max_{λ ∈ Δ} Σ λ_i c_i − (h/2)|Σ λ_i w_i|²` with `g = Σ λ_i w_i`.

use crate::error::{Error, Result};
use crate::linalg::{dot, project_simplex, sq_dist, sq_norm};

use super::PotentialData;

const DUAL_TOL: f64 = 1e-9;
const DUAL_MAX_ITER: usize = 10_000;

/// Potential value `v` and gradient `g` at a query point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub v: f64,
    pub g: Vec<f64>,
    pub cluster: usize,
}

/// Evaluates `potential` (value and gradient) at `x`.
pub fn evaluate(potential: &PotentialData, x: &[f64]) -> Result<Evaluation> {
    let d = potential.dim();
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: x.len(),
        });
    }
    let cluster = potential.partition.locate(x)?;
    let members = potential.partition.members(cluster);
    let (ell, lip) = (potential.ell, potential.lip);
    let (xs, zs, us) = (&potential.points, &potential.z, &potential.u);
    let first = members[0];

    if potential.is_affine() {
        // g = ℓx + c, v = (ℓ/2)|x|² + ⟨c, x⟩ − shift, matching u at the atoms
        let c: Vec<f64> = zs[first]
            .iter()
            .zip(&xs[first])
            .map(|(z, p)| z - ell * p)
            .collect();
        let shift = 0.5 * ell * sq_norm(&xs[first]) + dot(&c, &xs[first]) - us[first];
        let g = x.iter().zip(&c).map(|(p, ck)| ell * p + ck).collect();
        let v = 0.5 * ell * sq_norm(x) + dot(&c, x) - shift;
        return Ok(Evaluation { v, g, cluster });
    }

    let h = 1.0 / (lip - ell);
    let pref = 1.0 / (2.0 * (1.0 - ell / lip));
    let n = members.len();
    let w: Vec<Vec<f64>> = members
        .iter()
        .map(|&i| (0..d).map(|k| zs[i][k] + ell * (x[k] - xs[i][k])).collect())
        .collect();
    // c_i collects every term of q_i that does not involve g
    let c: Vec<f64> = members
        .iter()
        .map(|&i| {
            let dx: Vec<f64> = (0..d).map(|k| x[k] - xs[i][k]).collect();
            let zi = &zs[i];
            // −2(ℓ/L)⟨z_i, x_i − x⟩ = 2(ℓ/L)⟨z_i, dx⟩
            us[i]
                + dot(zi, &dx)
                + pref * (sq_norm(zi) / lip + ell * sq_norm(&dx) + 2.0 * (ell / lip) * dot(zi, &dx))
        })
        .collect();
    let q = |g: &[f64], i: usize| 0.5 * h * sq_norm(g) - h * dot(&w[i], g) + c[i];
    let combine = |lambda: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; d];
        for (l, wi) in lambda.iter().zip(&w) {
            if *l != 0.0 {
                for k in 0..d {
                    g[k] += l * wi[k];
                }
            }
        }
        g
    };
    let dual = |lambda: &[f64], g: &[f64]| dot(lambda, &c) - 0.5 * h * sq_norm(g);
    let primal = |g: &[f64]| (0..n).map(|i| q(g, i)).fold(f64::NEG_INFINITY, f64::max);

    // warm start at the vertex of the nearest atom
    let nearest = (0..n)
        .min_by(|&a, &b| sq_dist(x, &xs[members[a]]).total_cmp(&sq_dist(x, &xs[members[b]])))
        .expect("cell is nonempty");
    let mut lambda = vec![0.0; n];
    lambda[nearest] = 1.0;

    // Lipschitz constant of the dual gradient: h λmax(W Wᵀ)
    let trace: f64 = w.iter().map(|wi| sq_norm(wi)).sum();
    let lipschitz = h * power_lambda_max(&w, d).min(trace).max(1e-300) * 1.01;
    let step = 1.0 / lipschitz;

    let mut g = combine(&lambda);
    let mut best = dual(&lambda, &g);
    let mut y = lambda.clone();
    let mut theta: f64 = 1.0;
    let mut grad = vec![0.0; n];
    for it in 0..DUAL_MAX_ITER {
        let gy = combine(&y);
        for i in 0..n {
            grad[i] = c[i] - h * dot(&w[i], &gy);
        }
        let mut next: Vec<f64> = (0..n).map(|i| y[i] + step * grad[i]).collect();
        project_simplex(&mut next);
        let g_next = combine(&next);
        let val = dual(&next, &g_next);
        if val < best && theta > 1.0 {
            theta = 1.0;
            y.clone_from(&lambda);
            continue;
        }
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let beta = (theta - 1.0) / theta_next;
        for i in 0..n {
            y[i] = next[i] + beta * (next[i] - lambda[i]);
        }
        lambda = next;
        g = g_next;
        best = best.max(val);
        theta = theta_next;
        if it % 8 == 0 {
            let gap = primal(&g) - dual(&lambda, &g);
            if gap <= DUAL_TOL * (1.0 + best.abs()) {
                break;
            }
        }
    }
    polish(&mut lambda, &w, &c, h, &combine, &primal);
    let g = combine(&lambda);
    Ok(Evaluation {
        v: primal(&g),
        g,
        cluster,
    })
}

/// Active-set polish: on the support of `λ` all bounds `q_i` are equal at the
/// optimum, which is linear in `λ`. Kept only if it lowers the attained max.
fn polish(
    lambda: &mut Vec<f64>,
    w: &[Vec<f64>],
    c: &[f64],
    h: f64,
    combine: &dyn Fn(&[f64]) -> Vec<f64>,
    primal: &dyn Fn(&[f64]) -> f64,
) {
    let support: Vec<usize> = (0..lambda.len()).filter(|&i| lambda[i] > 1e-10).collect();
    let s = support.len();
    if s == 0 {
        return;
    }
    let base = support[0];
    let mut a = nalgebra::DMatrix::zeros(s, s);
    let mut rhs = nalgebra::DVector::zeros(s);
    for (row, &j) in support.iter().enumerate().skip(1) {
        // h⟨w_j − w_base, Σ λ_k w_k⟩ = c_j − c_base
        let diff: Vec<f64> = w[j].iter().zip(&w[base]).map(|(p, q)| p - q).collect();
        for (col, &k) in support.iter().enumerate() {
            a[(row, col)] = h * dot(&diff, &w[k]);
        }
        rhs[row] = c[j] - c[base];
    }
    for col in 0..s {
        a[(0, col)] = 1.0;
    }
    rhs[0] = 1.0;
    let Some(sol) = a.lu().solve(&rhs) else {
        return;
    };
    if sol.iter().any(|v| !v.is_finite() || *v < -1e-12) {
        return;
    }
    let mut cand = vec![0.0; lambda.len()];
    for (idx, &i) in support.iter().enumerate() {
        cand[i] = sol[idx].max(0.0);
    }
    let total: f64 = cand.iter().sum();
    cand.iter_mut().for_each(|v| *v /= total);
    if primal(&combine(&cand)) <= primal(&combine(lambda)) {
        *lambda = cand;
    }
}

fn power_lambda_max(w: &[Vec<f64>], d: usize) -> f64 {
    // λmax(W Wᵀ) = λmax(Wᵀ W), the d×d Gram matrix
    let mut gram = nalgebra::DMatrix::<f64>::zeros(d, d);
    for wi in w {
        for p in 0..d {
            for q in 0..d {
                gram[(p, q)] += wi[p] * wi[q];
            }
        }
    }
    nalgebra::SymmetricEigen::new(gram)
        .eigenvalues
        .max()
        .max(0.0)
}
