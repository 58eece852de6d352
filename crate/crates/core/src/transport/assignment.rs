use crate::error::{invalid, Error, Result};
use crate::linalg::sq_dist;

/// Total squared-distance cost of matching `x_i` with `y_{sigma(i)}`.
pub fn assignment_cost(xs: &[Vec<f64>], ys: &[Vec<f64>], sigma: &[usize]) -> f64 {
    xs.iter().zip(sigma).map(|(x, &j)| sq_dist(x, &ys[j])).sum()
}

/// Permutation `sigma` minimizing `Σ |x_i - y_{sigma(i)}|²` (Hungarian method
/// with potentials, O(n³)).
pub fn optimal_assignment(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<Vec<usize>> {
    let n = xs.len();
    if ys.len() != n {
        return Err(invalid(format!(
            "assignment needs equal cardinalities, got {n} and {}",
            ys.len()
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let d = xs[0].len();
    if let Some(p) = xs.iter().chain(ys).find(|p| p.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: p.len(),
        });
    }
    let cost = |i: usize, j: usize| sq_dist(&xs[i], &ys[j]);

    // 1-based rows/cols, column 0 is a sentinel.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched[j0] = matched[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut sigma = vec![0; n];
    for j in 1..=n {
        sigma[matched[j] - 1] = j - 1;
    }
    Ok(sigma)
}
