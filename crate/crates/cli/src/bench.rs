//! Convergence of the univariate estimator when `mu = nu = U([0,1])`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use ssnb::isotonic::{fit_ssnb_1d, Map1D};
use ssnb::measures::{DiscreteMeasure, Partition};
use ssnb::transport::w2_squared_1d;

use crate::error::{CliError, CliResult};
use crate::report::{ExperimentReport, ReportRow};

#[derive(Debug, Clone)]
pub struct Bench1dParams {
    pub ns: Vec<usize>,
    pub lips: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub timing: bool,
}

impl Default for Bench1dParams {
    fn default() -> Self {
        Self {
            ns: vec![10, 100, 1000],
            lips: vec![0.5, 1.0, 1.5, 2.0],
            trials: 100,
            seed: 0,
            timing: false,
        }
    }
}

/// `∫_0^1 (T(x) − x)² dx` for the piecewise-linear map `T`, exact: two-point
/// Gauss–Legendre on every linear piece.
pub fn unit_interval_sq_displacement(map: &Map1D) -> f64 {
    let mut breaks: Vec<f64> = vec![0.0, 1.0];
    breaks.extend(map.knots().iter().copied().filter(|k| *k > 0.0 && *k < 1.0));
    let spans = map.spans();
    for w in spans.windows(2) {
        let mid = 0.5 * (w[0].centroid + w[1].centroid);
        if mid > 0.0 && mid < 1.0 {
            breaks.push(mid);
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let node = 0.5 / 3f64.sqrt();
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (c, h) = (0.5 * (a + b), b - a);
        for x in [c - node * h, c + node * h] {
            total += 0.5 * h * (map.eval(x) - x).powi(2);
        }
    }
    total
}

/// Every `(n, L)` pair of the grid with `ell = min(1, L)`. Trial `t` at size
/// `n` draws its samples from seed `seed + t` on stream `n`, so all values
/// of `L` see the same samples.
pub fn run_bench1d(params: &Bench1dParams) -> CliResult<ExperimentReport> {
    if params.ns.iter().any(|&n| n == 0) || params.trials == 0 {
        return Err(CliError::Usage(
            "bench1d needs n ≥ 1 and at least one trial".into(),
        ));
    }
    if params.lips.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return Err(CliError::Usage("bench1d needs finite L > 0".into()));
    }
    let jobs: Vec<(usize, usize)> = params
        .ns
        .iter()
        .flat_map(|&n| (0..params.trials).map(move |t| (n, t)))
        .collect();
    let per_job: Vec<Vec<ReportRow>> = jobs
        .par_iter()
        .map(|&(n, t)| trial(params, n, t))
        .collect::<CliResult<_>>()?;
    let mut rows: Vec<ReportRow> = per_job.into_iter().flatten().collect();
    let lip_rank = |l: f64| params.lips.iter().position(|&x| x == l);
    rows.sort_by_key(|r| (r.n, lip_rank(r.lip), r.seed));
    Ok(ExperimentReport {
        metadata: vec![
            ("experiment".into(), "bench1d".into()),
            ("mu".into(), "U([0;1])".into()),
            ("nu".into(), "U([0;1])".into()),
            ("error".into(), "squared".into()),
            ("trials".into(), params.trials.to_string()),
        ],
        rows,
    })
}

fn trial(params: &Bench1dParams, n: usize, t: usize) -> CliResult<Vec<ReportRow>> {
    let seed = params.seed.wrapping_add(t as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(n as u64);
    let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let ys: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let w = vec![1.0 / n as f64; n];
    let mu = DiscreteMeasure::from_1d(&xs, &w)?;
    let nu = DiscreteMeasure::from_1d(&ys, &w)?;
    let plugin = w2_squared_1d(&xs, &w, &ys, &w)?.max(0.0);
    let whole = Partition::whole(&mu);
    params
        .lips
        .iter()
        .map(|&lip| {
            let start = Instant::now();
            let ell = lip.min(1.0);
            let map = fit_ssnb_1d(&mu, &nu, ell, lip, &whole)?;
            let err = unit_interval_sq_displacement(&map);
            Ok(ReportRow {
                n,
                d: 1,
                lip,
                ell,
                k: 1,
                seed,
                estimator_error: err,
                plugin_error: plugin,
                wall_time: params.timing.then(|| start.elapsed().as_secs_f64()),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn displacement_integral_of_a_translation() {
        // μ = ν shifted by 0.25 with ℓ = L = 1: T(x) = x + 0.25
        let mu = DiscreteMeasure::from_1d(&[0.1, 0.5, 0.9], &[1.0; 3]).unwrap();
        let nu = DiscreteMeasure::from_1d(&[0.35, 0.75, 1.15], &[1.0; 3]).unwrap();
        let map = fit_ssnb_1d(&mu, &nu, 1.0, 1.0, &Partition::whole(&mu)).unwrap();
        assert!((unit_interval_sq_displacement(&map) - 0.0625).abs() < 1e-12);
    }

    #[test]
    fn displacement_integral_matches_fine_riemann_sum() {
        let mu = DiscreteMeasure::from_1d(&[0.1, 0.2, 0.7, 0.8], &[1.0; 4]).unwrap();
        let nu = DiscreteMeasure::from_1d(&[0.0, 0.6, 0.65, 1.3], &[1.0; 4]).unwrap();
        let map = fit_ssnb_1d(&mu, &nu, 0.2, 3.0, &Partition::whole(&mu)).unwrap();
        let m = 200_000;
        let riemann: f64 = (0..m)
            .map(|i| (i as f64 + 0.5) / m as f64)
            .map(|x| (map.eval(x) - x).powi(2))
            .sum::<f64>()
            / m as f64;
        assert!((unit_interval_sq_displacement(&map) - riemann).abs() < 1e-9);
    }

    #[test]
    fn strongly_contracting_maps_keep_a_floor() {
        // slopes ≤ 1/2 leave at least Var(U)/4 = 1/48 of squared error
        let params = Bench1dParams {
            ns: vec![200],
            lips: vec![0.5],
            trials: 3,
            seed: 1,
            timing: false,
        };
        let rep = run_bench1d(&params).unwrap();
        assert!(rep
            .rows
            .iter()
            .all(|r| r.estimator_error >= 1.0 / 48.0 - 1e-12));
        assert_eq!(rep.rows.len(), 3);
    }
}
