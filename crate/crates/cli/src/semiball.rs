//! Two semi-balls pulled apart: `nu = T♯mu` with `T(x) = x + 2 sign(x_1) e_1`
//! and `mu` uniform on the unit ball, so that `W_2(mu, nu) = 2` exactly.

use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use ssnb::measures::{kmeans, DiscreteMeasure};
use ssnb::potential::{evaluate, fit, SsnbConfig};
use ssnb::transport::w2_distance;

use crate::error::{CliError, CliResult};
use crate::report::{ExperimentReport, ReportRow};
use crate::sampling::{semiball_map, uniform_ball};

pub const TRUE_W2: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct SemiballParams {
    pub n: usize,
    pub d: usize,
    pub trials: usize,
    pub mc_samples: usize,
    /// Number of k-means cells; `round(0.4 n)` when unset.
    pub clusters: Option<usize>,
    pub ell: f64,
    pub lip: f64,
    pub outer_tol: f64,
    pub seed: u64,
    pub timing: bool,
}

impl Default for SemiballParams {
    fn default() -> Self {
        Self {
            n: 500,
            d: 2,
            trials: 1,
            mc_samples: 50,
            clusters: None,
            ell: 0.0,
            lip: 1.0,
            outer_tol: 1e-6,
            seed: 0,
            timing: false,
        }
    }
}

impl SemiballParams {
    pub fn cells(&self) -> usize {
        self.clusters
            .unwrap_or(((0.4 * self.n as f64).round() as usize).max(1))
            .min(self.n)
    }
}

/// Displacements `∇f̂(x) − x` at the Monte-Carlo points of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Displacements {
    pub points: Vec<Vec<f64>>,
    pub vectors: Vec<Vec<f64>>,
}

impl Displacements {
    pub fn write_csv<W: Write>(&self, mut out: W) -> CliResult<()> {
        let d = self.points.first().map_or(0, Vec::len);
        let mut head: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
        head.extend((1..=d).map(|k| format!("dx{k}")));
        writeln!(out, "{}", head.join(","))?;
        for (p, v) in self.points.iter().zip(&self.vectors) {
            let row: Vec<String> = p.iter().chain(v).map(|x| format!("{x:?}")).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SemiballOutcome {
    pub report: ExperimentReport,
    /// From the first trial.
    pub displacements: Displacements,
    /// `Ŵ` per trial.
    pub estimates: Vec<f64>,
}

pub fn run_semiball(params: &SemiballParams) -> CliResult<SemiballOutcome> {
    if params.d < 2 {
        return Err(CliError::Usage(format!(
            "semiball needs d ≥ 2, got {}",
            params.d
        )));
    }
    if params.n < 2 || params.trials == 0 || params.mc_samples == 0 {
        return Err(CliError::Usage(
            "semiball needs n ≥ 2, trials ≥ 1 and mc-samples ≥ 1".into(),
        ));
    }
    let results: Vec<(ReportRow, f64, Displacements)> = (0..params.trials)
        .into_par_iter()
        .map(|t| trial(params, t))
        .collect::<CliResult<_>>()?;
    let estimates = results.iter().map(|r| r.1).collect();
    let displacements = results[0].2.clone();
    let rows = results.into_iter().map(|r| r.0).collect();
    let report = ExperimentReport {
        metadata: vec![
            ("experiment".into(), "semiball".into()),
            ("K".into(), format!("0.4n = {}", params.cells())),
            ("N".into(), params.mc_samples.to_string()),
            ("true_W2".into(), format!("{TRUE_W2:?}")),
            ("error".into(), "|W - 2|".into()),
        ],
        rows,
    };
    Ok(SemiballOutcome {
        report,
        displacements,
        estimates,
    })
}

fn trial(params: &SemiballParams, t: usize) -> CliResult<(ReportRow, f64, Displacements)> {
    let start = Instant::now();
    let seed = params.seed.wrapping_add(t as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, d) = (params.n, params.d);
    let xs: Vec<Vec<f64>> = (0..n).map(|_| uniform_ball(&mut rng, d)).collect();
    let ys: Vec<Vec<f64>> = (0..n)
        .map(|_| semiball_map(&uniform_ball(&mut rng, d)))
        .collect();
    let mu = DiscreteMeasure::uniform(xs)?;
    let nu = DiscreteMeasure::uniform(ys)?;
    let k = params.cells();
    let mut config = SsnbConfig::new(params.ell, params.lip, kmeans(&mu, k, seed)?)?;
    config.outer_tol = params.outer_tol;
    let potential = fit(&mu, &nu, &config)?;
    let samples: Vec<Vec<f64>> = (0..params.mc_samples)
        .map(|_| uniform_ball(&mut rng, d))
        .collect();
    let vectors: Vec<Vec<f64>> = samples
        .par_iter()
        .map(|x| evaluate(&potential, x).map(|e| e.g.iter().zip(x).map(|(g, x)| g - x).collect()))
        .collect::<ssnb::Result<_>>()?;
    let mean_sq = vectors
        .iter()
        .map(|v: &Vec<f64>| v.iter().map(|a| a * a).sum::<f64>())
        .sum::<f64>()
        / samples.len() as f64;
    let estimate = mean_sq.sqrt();
    let plugin = w2_distance(&mu, &nu)?;
    let row = ReportRow {
        n,
        d,
        lip: params.lip,
        ell: params.ell,
        k: potential.partition.num_clusters(),
        seed,
        estimator_error: (estimate - TRUE_W2).abs(),
        plugin_error: (plugin - TRUE_W2).abs(),
        wall_time: params.timing.then(|| start.elapsed().as_secs_f64()),
    };
    Ok((
        row,
        estimate,
        Displacements {
            points: samples,
            vectors,
        },
    ))
}
