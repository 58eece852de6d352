//! The smooth strongly convex interpolation inequality.

use crate::error::{invalid, Result};
use crate::linalg::sq_dist;

/// Residual of the interpolation condition for the ordered pair `(i, j)`:
///
/// ```text
/// u_i − u_j − ⟨z_j, x_i − x_j⟩
///     − 1/(2(1 − ℓ/L)) · ( |z_i − z_j|²/L + ℓ|x_i − x_j|² − 2(ℓ/L)⟨z_j − z_i, x_j − x_i⟩ )
/// ```
///
/// Data `(x_i, u_i, z_i)` extends to an `ℓ`-strongly convex, `L`-smooth
/// function iff the residual is nonnegative for every ordered pair.
#[allow(clippy::too_many_arguments)]
pub fn interpolation_constraint(
    u_i: f64,
    u_j: f64,
    z_i: &[f64],
    z_j: &[f64],
    x_i: &[f64],
    x_j: &[f64],
    ell: f64,
    lip: f64,
) -> Result<f64> {
    if !(ell >= 0.0 && ell < lip && lip.is_finite()) {
        return Err(invalid(format!(
            "interpolation constraint needs 0 <= ell < L < inf, got ell={ell}, L={lip}"
        )));
    }
    Ok(residual(u_i, u_j, z_i, z_j, x_i, x_j, ell, lip))
}

#[allow(clippy::too_many_arguments)]
#[inline]
pub(crate) fn residual(
    u_i: f64,
    u_j: f64,
    z_i: &[f64],
    z_j: &[f64],
    x_i: &[f64],
    x_j: &[f64],
    ell: f64,
    lip: f64,
) -> f64 {
    let pref = 1.0 / (2.0 * (1.0 - ell / lip));
    let mut lin = 0.0;
    let mut cross = 0.0;
    for k in 0..x_i.len() {
        let dx = x_i[k] - x_j[k];
        lin += z_j[k] * dx;
        // ⟨z_j − z_i, x_j − x_i⟩
        cross += (z_j[k] - z_i[k]) * (-dx);
    }
    let quad = sq_dist(z_i, z_j) / lip + ell * sq_dist(x_i, x_j) - 2.0 * (ell / lip) * cross;
    u_i - u_j - lin - pref * quad
}

/// Smallest residual over ordered pairs of `members`.
pub fn min_constraint_residual(
    xs: &[Vec<f64>],
    u: &[f64],
    z: &[Vec<f64>],
    members: &[usize],
    ell: f64,
    lip: f64,
) -> f64 {
    let mut worst = f64::INFINITY;
    for &i in members {
        for &j in members {
            if i != j {
                worst = worst.min(residual(u[i], u[j], &z[i], &z[j], &xs[i], &xs[j], ell, lip));
            }
        }
    }
    worst
}

/// Largest violation of `ℓ|Δx| ≤ |Δz| ≤ L|Δx|` over pairs of `members`.
pub fn max_distortion_violation(
    xs: &[Vec<f64>],
    z: &[Vec<f64>],
    members: &[usize],
    ell: f64,
    lip: f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    for (a, &i) in members.iter().enumerate() {
        for &j in &members[a + 1..] {
            let dx = sq_dist(&xs[i], &xs[j]).sqrt();
            let dz = sq_dist(&z[i], &z[j]).sqrt();
            worst = worst.max(ell * dx - dz).max(dz - lip * dx);
        }
    }
    worst
}

/// Weight of the edge `j → i` in the longest-path formulation: the
/// constraint reads `u_i ≥ u_j + edge_weight(i, j)`.
#[inline]
pub(crate) fn edge_weight(
    z_i: &[f64],
    z_j: &[f64],
    x_i: &[f64],
    x_j: &[f64],
    ell: f64,
    lip: f64,
) -> f64 {
    -residual(0.0, 0.0, z_i, z_j, x_i, x_j, ell, lip)
}
