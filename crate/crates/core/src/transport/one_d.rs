//! Transport on the real line: north-west corner rule, quantile couplings and
//! barycentric projections.

use nalgebra::DMatrix;

use super::{check_marginals, Coupling};
use crate::error::{invalid, Error, Result};
use crate::measures::DiscreteMeasure;

/// Nonzero cells `(i, j, mass)` of the north-west corner coupling, in fill order.
pub fn nw_corner_entries(a: &[f64], b: &[f64]) -> Result<Vec<(usize, usize, f64)>> {
    check_marginals(a, b)?;
    let (n, m) = (a.len(), b.len());
    let mut out = Vec::with_capacity(n + m - 1);
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0], b[0]);
    while i < n && j < m {
        // the last row/column absorbs rounding residue
        let t = if i == n - 1 && j == m - 1 {
            ra.max(rb)
        } else {
            ra.min(rb)
        };
        if t > 0.0 {
            out.push((i, j, t));
        }
        if (ra <= rb && i < n - 1) || j == m - 1 {
            rb -= ra;
            i += 1;
            if i < n {
                ra = a[i];
            }
        } else {
            ra -= rb;
            j += 1;
            if j < m {
                rb = b[j];
            }
        }
    }
    Ok(out)
}

/// Greedy coupling filled from the top-left cell to the bottom-right one.
pub fn nw_corner(a: &[f64], b: &[f64]) -> Result<Coupling> {
    let entries = nw_corner_entries(a, b)?;
    let mut matrix = DMatrix::zeros(a.len(), b.len());
    for (i, j, t) in entries {
        matrix[(i, j)] += t;
    }
    Ok(Coupling {
        matrix,
        a: a.to_vec(),
        b: b.to_vec(),
    })
}

/// Indices sorting `values` ascending; equal values keep their input order.
pub(crate) fn argsort(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&p, &q| values[p].total_cmp(&values[q]));
    idx
}

/// Optimal (comonotone) coupling between two measures on the line, returned
/// in the original atom order of both sides.
pub fn quantile_coupling(xs: &[f64], a: &[f64], ys: &[f64], b: &[f64]) -> Result<Coupling> {
    if xs.len() != a.len() || ys.len() != b.len() {
        return Err(invalid("positions and weights differ in length"));
    }
    let sx = argsort(xs);
    let sy = argsort(ys);
    let a_sorted: Vec<f64> = sx.iter().map(|&i| a[i]).collect();
    let b_sorted: Vec<f64> = sy.iter().map(|&j| b[j]).collect();
    let mut matrix = DMatrix::zeros(xs.len(), ys.len());
    for (i, j, t) in nw_corner_entries(&a_sorted, &b_sorted)? {
        matrix[(sx[i], sy[j])] += t;
    }
    Ok(Coupling {
        matrix,
        a: a.to_vec(),
        b: b.to_vec(),
    })
}

/// `W_2²` between two measures on the line via the quantile coupling.
pub fn w2_squared_1d(xs: &[f64], a: &[f64], ys: &[f64], b: &[f64]) -> Result<f64> {
    if xs.len() != a.len() || ys.len() != b.len() {
        return Err(invalid("positions and weights differ in length"));
    }
    let sx = argsort(xs);
    let sy = argsort(ys);
    let a_sorted: Vec<f64> = sx.iter().map(|&i| a[i]).collect();
    let b_sorted: Vec<f64> = sy.iter().map(|&j| b[j]).collect();
    Ok(nw_corner_entries(&a_sorted, &b_sorted)?
        .into_iter()
        .map(|(i, j, t)| t * (xs[sx[i]] - ys[sy[j]]).powi(2))
        .sum())
}

/// Barycentric projection `w_i = E[Y | X = x_i]` of the optimal coupling
/// between two measures on the line, i.e. `diag(1/a) NW(a, b) y` on sorted
/// supports. Returned in the atom order of `mu`.
pub fn barycentric_projection_1d(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<Vec<f64>> {
    for m in [mu, nu] {
        if m.dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: m.dim(),
            });
        }
    }
    let xs = mu.coords_1d();
    let ys = nu.coords_1d();
    let sx = argsort(&xs);
    let sy = argsort(&ys);
    let a_sorted: Vec<f64> = sx.iter().map(|&i| mu.weights()[i]).collect();
    let b_sorted: Vec<f64> = sy.iter().map(|&j| nu.weights()[j]).collect();
    let mut acc = vec![0.0; xs.len()];
    let mut mass = vec![0.0; xs.len()];
    for (i, j, t) in nw_corner_entries(&a_sorted, &b_sorted)? {
        acc[sx[i]] += t * ys[sy[j]];
        mass[sx[i]] += t;
    }
    Ok(acc
        .iter()
        .zip(&mass)
        .zip(mu.weights())
        .map(|((s, &mm), a)| if mm > 0.0 { s / mm } else { s / a })
        .collect())
}
