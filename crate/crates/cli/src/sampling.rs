//! Samplers for the synthetic experiments.

use rand::Rng;
use rand_distr::StandardNormal;

/// Uniform point in the unit ball of `R^d`: a Gaussian direction scaled by
/// a radius with law `U^{1/d}`.
pub fn uniform_ball<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            let r = rng.random::<f64>().powf(1.0 / d as f64);
            return g.into_iter().map(|v| v * r / norm).collect();
        }
    }
}

/// `T(x) = x + 2 sign(x_1) e_1`, which splits the ball into two semi-balls
/// moved apart; every point is displaced by exactly 2.
pub fn semiball_map(x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    y[0] += if x[0] >= 0.0 { 2.0 } else { -2.0 };
    y
}
