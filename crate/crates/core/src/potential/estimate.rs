//! Monte-Carlo Wasserstein estimator and distortion-constant estimates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::linalg::sq_dist;
use crate::measures::DiscreteMeasure;
use crate::transport::optimal_assignment;

use super::{evaluate, fit, PotentialData, SsnbConfig};

/// `( (1/N) Σ |x_j − ∇f(x_j)|² )^{1/2}` over the given samples.
pub fn mc_estimate(potential: &PotentialData, samples: &[Vec<f64>]) -> Result<f64> {
    if samples.is_empty() {
        return Err(invalid("no Monte-Carlo samples"));
    }
    let total = samples
        .par_iter()
        .map(|x| evaluate(potential, x).map(|e| sq_dist(x, &e.g)))
        .collect::<Result<Vec<f64>>>()?
        .iter()
        .sum::<f64>();
    Ok((total / samples.len() as f64).sqrt())
}

/// SSNB estimate of `W₂(μ, ν)`: fit on the empirical measures, then
/// integrate the displacement over `n_samples` fresh draws from `sampler`.
///
/// With more than one partition cell the result approximates an upper bound
/// of `W₂`, since the fitted map is only piecewise a Brenier map.
pub fn estimate_w2<F>(
    mu_hat: &DiscreteMeasure,
    nu_hat: &DiscreteMeasure,
    config: &SsnbConfig,
    mut sampler: F,
    n_samples: usize,
    seed: u64,
) -> Result<f64>
where
    F: FnMut(&mut ChaCha8Rng) -> Vec<f64>,
{
    let potential = fit(mu_hat, nu_hat, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<Vec<f64>> = (0..n_samples).map(|_| sampler(&mut rng)).collect();
    mc_estimate(&potential, &samples)
}

/// Empirical distortion bounds: with `σ` the optimal assignment of `xs` to
/// `ys`, the min and max of `|y_σ(i) − y_σ(j)| / |x_i − x_j|` over `i < j`.
/// Pairs with coincident `x` are skipped.
pub fn estimate_ell_l(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<(f64, f64)> {
    let sigma = optimal_assignment(xs, ys)?;
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    let mut any = false;
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            let dx = sq_dist(&xs[i], &xs[j]).sqrt();
            if dx == 0.0 {
                continue;
            }
            let r = sq_dist(&ys[sigma[i]], &ys[sigma[j]]).sqrt() / dx;
            lo = lo.min(r);
            hi = hi.max(r);
            any = true;
        }
    }
    if !any {
        return Err(invalid("need at least two distinct source points"));
    }
    Ok((lo, hi))
}
