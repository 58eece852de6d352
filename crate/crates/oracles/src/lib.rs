//! Reference solvers used to freeze expected values in tests.
//!
//! Nothing here shares code with the `ssnb` crate: every routine is a direct,
//! slow, textbook method (dense active-set QP, enumeration).

use nalgebra::{DMatrix, DVector};

/// Dense primal active-set method for
/// `min ½ zᵀ H z + gᵀ z  s.t.  C z <= d`, with `H` positive definite.
///
/// `start` must be feasible. Returns the minimizer.
pub fn active_set_qp(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    c: &DMatrix<f64>,
    d: &DVector<f64>,
    start: &DVector<f64>,
) -> DVector<f64> {
    let n = h.nrows();
    let mcon = c.nrows();
    let mut x = start.clone();
    let mut working: Vec<usize> = Vec::new();
    for i in 0..mcon {
        let slack = d[i] - c.row(i).dot(&x.transpose());
        if slack.abs() < 1e-12 && independent(c, &working, i) {
            working.push(i);
        }
    }
    for _ in 0..10_000 {
        let k = working.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(h);
        for (r, &i) in working.iter().enumerate() {
            for j in 0..n {
                kkt[(n + r, j)] = c[(i, j)];
                kkt[(j, n + r)] = c[(i, j)];
            }
        }
        let grad = h * &x + g;
        let mut rhs = DVector::zeros(n + k);
        for j in 0..n {
            rhs[j] = -grad[j];
        }
        let sol = kkt.lu().solve(&rhs).expect("singular KKT system in oracle");
        let p = sol.rows(0, n).into_owned();
        let lambda = sol.rows(n, k).into_owned();
        if p.amax() < 1e-13 * (1.0 + x.amax()) {
            // at the minimizer of the working set: check multipliers
            let mut worst = None;
            let mut worst_val = -1e-12;
            for (r, &l) in lambda.iter().enumerate() {
                if l < worst_val {
                    worst_val = l;
                    worst = Some(r);
                }
            }
            match worst {
                None => return x,
                Some(r) => {
                    working.remove(r);
                    continue;
                }
            }
        }
        let mut alpha = 1.0;
        let mut blocking = None;
        for i in 0..mcon {
            if working.contains(&i) {
                continue;
            }
            let cp = c.row(i).dot(&p.transpose());
            if cp > 1e-15 {
                let slack = d[i] - c.row(i).dot(&x.transpose());
                let step = slack.max(0.0) / cp;
                if step < alpha {
                    alpha = step;
                    blocking = Some(i);
                }
            }
        }
        x += alpha * &p;
        if let Some(i) = blocking {
            working.push(i);
        }
    }
    panic!("active-set oracle did not terminate");
}

fn independent(c: &DMatrix<f64>, working: &[usize], i: usize) -> bool {
    let mut rows: Vec<usize> = working.to_vec();
    rows.push(i);
    let sub = DMatrix::from_fn(rows.len(), c.ncols(), |r, j| c[(rows[r], j)]);
    sub.rank(1e-10) == rows.len()
}

/// Exact solution of the weighted isotonic problem with per-gap slope bounds
/// `ell (x_{i+1}-x_i) <= z_{i+1}-z_i <= lip (x_{i+1}-x_i)` on one block of
/// strictly increasing positions, via [`active_set_qp`].
pub fn bounded_isotonic(x: &[f64], w: &[f64], a: &[f64], ell: f64, lip: f64) -> Vec<f64> {
    let n = x.len();
    let h = DMatrix::from_fn(n, n, |i, j| if i == j { 2.0 * a[i] } else { 0.0 });
    let g = DVector::from_fn(n, |i, _| -2.0 * a[i] * w[i]);
    let mcon = 2 * (n - 1);
    let mut c = DMatrix::zeros(mcon.max(1), n);
    let mut d = DVector::zeros(mcon.max(1));
    for i in 0..n.saturating_sub(1) {
        let gap = x[i + 1] - x[i];
        // -(z_{i+1} - z_i) <= -ell gap
        c[(2 * i, i)] = 1.0;
        c[(2 * i, i + 1)] = -1.0;
        d[2 * i] = -ell * gap;
        // z_{i+1} - z_i <= lip gap
        c[(2 * i + 1, i)] = -1.0;
        c[(2 * i + 1, i + 1)] = 1.0;
        d[2 * i + 1] = lip * gap;
    }
    let mut start = DVector::zeros(n);
    start[0] = w[0];
    for i in 1..n {
        start[i] = start[i - 1] + 0.5 * (ell + lip) * (x[i] - x[i - 1]);
    }
    active_set_qp(&h, &g, &c, &d, &start)
        .iter()
        .copied()
        .collect()
}

/// All permutations of `0..n` (Heap's algorithm).
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(k: usize, a: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(a.clone());
            return;
        }
        rec(k - 1, a, out);
        for i in 0..k - 1 {
            if k % 2 == 0 {
                a.swap(i, k - 1);
            } else {
                a.swap(0, k - 1);
            }
            rec(k - 1, a, out);
        }
    }
    let mut out = Vec::new();
    rec(n, &mut (0..n).collect(), &mut out);
    out
}

/// Weighted squared error `Σ a_i (z_i - w_i)²`.
pub fn weighted_sse(z: &[f64], w: &[f64], a: &[f64]) -> f64 {
    z.iter()
        .zip(w)
        .zip(a)
        .map(|((z, w), a)| a * (z - w).powi(2))
        .sum()
}

/// `min c·(a, b, d)` over 2×2 matrices `[[a, b], [b, d]] ⪰ 0` subject to
/// `g_k·(a, b, d) + h_k ≤ 0`, by a log-barrier path-following Newton method.
/// `start` must be strictly feasible and positive definite.
pub fn psd2_barrier(c: [f64; 3], cons: &[([f64; 3], f64)], start: [f64; 3]) -> ([f64; 3], f64) {
    use nalgebra::{Matrix3, Vector3};
    let cv = Vector3::from(c);
    let feasible = |v: &Vector3<f64>| {
        v[0] > 0.0
            && v[0] * v[2] - v[1] * v[1] > 0.0
            && cons.iter().all(|(g, h)| Vector3::from(*g).dot(v) + h < 0.0)
    };
    let phi = |v: &Vector3<f64>, t: f64| {
        let det = v[0] * v[2] - v[1] * v[1];
        t * cv.dot(v)
            - det.ln()
            - cons
                .iter()
                .map(|(g, h)| (-(Vector3::from(*g).dot(v) + h)).ln())
                .sum::<f64>()
    };
    let mut v = Vector3::from(start);
    assert!(feasible(&v), "oracle start must be strictly feasible");
    let mut t = 1.0;
    let barrier_count = 2.0 + cons.len() as f64;
    while barrier_count / t > 1e-11 {
        for _ in 0..200 {
            let det = v[0] * v[2] - v[1] * v[1];
            let dd = Vector3::new(v[2], -2.0 * v[1], v[0]);
            let d2 = Matrix3::new(0.0, 0.0, 1.0, 0.0, -2.0, 0.0, 1.0, 0.0, 0.0);
            let mut grad = t * cv - dd / det;
            let mut hess = dd * dd.transpose() / (det * det) - d2 / det;
            for (g, h) in cons {
                let gv = Vector3::from(*g);
                let s = -(gv.dot(&v) + h);
                grad += gv / s;
                hess += gv * gv.transpose() / (s * s);
            }
            let step = match hess.cholesky() {
                Some(ch) => -ch.solve(&grad),
                None => -grad,
            };
            let decrement = -grad.dot(&step);
            if decrement < 1e-20 {
                break;
            }
            let mut alpha = 1.0;
            let f0 = phi(&v, t);
            loop {
                let cand = v + alpha * step;
                if feasible(&cand) && phi(&cand, t) <= f0 - 0.25 * alpha * decrement {
                    v = cand;
                    break;
                }
                alpha *= 0.5;
                if alpha < 1e-16 {
                    break;
                }
            }
            if alpha < 1e-16 {
                break;
            }
        }
        t *= 4.0;
    }
    ([v[0], v[1], v[2]], cv.dot(&v))
}
