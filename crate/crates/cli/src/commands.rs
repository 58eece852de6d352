//! Subcommands and their argument parsing.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ssnb::isotonic::{fit_ssnb_1d, read_map, Map1D};
use ssnb::measures::{kmeans, load_measure, load_points, DiscreteMeasure, Partition};
use ssnb::potential::{evaluate, fit, read_potential, PotentialData, SsnbConfig};

use crate::bench::{run_bench1d, Bench1dParams};
use crate::color::{color_transfer, load_rgb, save_rgb, ColorTransferParams};
use crate::error::{CliError, CliResult};
use crate::report::ExperimentReport;
use crate::semiball::{run_semiball, SemiballParams};

#[derive(Debug, Parser)]
#[command(
    name = "ssnb",
    version,
    about = "Smooth strongly-convex nearest-Brenier potentials"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a potential between two measure CSVs.
    Fit(FitArgs),
    /// Evaluate a fitted potential (value and gradient) at query points.
    Eval(EvalArgs),
    /// 1D convergence benchmark with mu = nu = U([0,1]).
    Bench1d(Bench1dArgs),
    /// Monte-Carlo estimate of W2 between two semi-balls pulled apart.
    Semiball(SemiballArgs),
    /// Recolor a PNG with the palette of another.
    ColorTransfer(ColorArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Source measure CSV (`weight,x1,...,xd`).
    #[arg(long)]
    pub mu: PathBuf,
    /// Target measure CSV.
    #[arg(long)]
    pub nu: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub ell: f64,
    #[arg(long = "L", default_value_t = 1.0)]
    pub lip: f64,
    /// k-means cells of the source partition.
    #[arg(long, default_value_t = 1)]
    pub clusters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Relative objective decrease that stops the alternating scheme.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Output file (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// File written by `fit`.
    #[arg(long)]
    pub potential: PathBuf,
    /// Query CSV (`x1,...,xd`; a leading `weight` column is ignored).
    #[arg(long)]
    pub points: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Bench1dArgs {
    #[arg(long = "n", value_delimiter = ',', default_values_t = [10, 100, 1000])]
    pub ns: Vec<usize>,
    /// Smoothness constants; ell = min(1, L) for each.
    #[arg(long = "L", value_delimiter = ',', default_values_t = [0.5, 1.0, 1.5, 2.0])]
    pub lips: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Record wall time per trial (makes the output run-dependent).
    #[arg(long)]
    pub timing: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SemiballArgs {
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
    #[arg(long = "mc-samples", default_value_t = 50)]
    pub mc_samples: usize,
    /// k-means cells (default round(0.4 n)).
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    pub ell: f64,
    #[arg(long = "L", default_value_t = 1.0)]
    pub lip: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub timing: bool,
    /// Report CSV (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV of `∇f(x) − x` at the Monte-Carlo points of the first trial.
    #[arg(long)]
    pub displacements: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ColorArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub ell: f64,
    #[arg(long = "L", default_value_t = 1.0)]
    pub lip: f64,
    /// Cells of the potential's partition of color space.
    #[arg(long, default_value_t = 1)]
    pub clusters: usize,
    #[arg(long, default_value_t = 30)]
    pub palette: usize,
    #[arg(long, default_value_t = 1000)]
    pub recolor: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output PNG.
    #[arg(long)]
    pub out: PathBuf,
}

fn sink(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Fit(a) => cmd_fit(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Bench1d(a) => cmd_bench1d(&a),
        Command::Semiball(a) => cmd_semiball(&a),
        Command::ColorTransfer(a) => cmd_color_transfer(&a),
    }
}

fn partition_for(mu: &DiscreteMeasure, clusters: usize, seed: u64) -> CliResult<Partition> {
    match clusters {
        0 => Err(CliError::Usage("--clusters must be at least 1".into())),
        1 => Ok(Partition::whole(mu)),
        k => Ok(kmeans(mu, k.min(mu.len()), seed)?),
    }
}

/// Univariate inputs go through isotonic regression, others through the
/// alternating QCQP scheme. The objective `W₂²(∇f♯mu, nu)` is written as a
/// `# objective,` line in both formats.
pub fn cmd_fit(a: &FitArgs) -> CliResult<()> {
    let mu = load_measure(&a.mu)?;
    let nu = load_measure(&a.nu)?;
    if mu.dim() != nu.dim() {
        return Err(CliError::Usage(format!(
            "mu has dimension {} but nu has dimension {}",
            mu.dim(),
            nu.dim()
        )));
    }
    let partition = partition_for(&mu, a.clusters, a.seed)?;
    let mut out = sink(a.out.as_deref())?;
    if mu.dim() == 1 {
        let map = fit_ssnb_1d(&mu, &nu, a.ell, a.lip, &partition)?;
        writeln!(out, "# objective,{:?}", map.transport_cost(&nu)?)?;
        map.write_csv(&mut out)?;
    } else {
        let mut config = SsnbConfig::new(a.ell, a.lip, partition)?;
        config.outer_tol = a.tol;
        let potential = fit(&mu, &nu, &config)?;
        log::info!(
            "fit finished with status {:?}, objective {}",
            potential.status,
            potential.objective
        );
        potential.write_csv(&mut out)?;
    }
    out.flush()?;
    Ok(())
}

/// A file written by `fit`: a 1D map or a multivariate potential.
pub enum Fitted {
    Map(Map1D),
    Potential(PotentialData),
}

impl Fitted {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)?;
        let header = text
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty() && !l.starts_with('#'));
        if header.is_some_and(|h| h.replace(' ', "") == "x,z,weight") {
            Ok(Fitted::Map(read_map(text.as_bytes())?))
        } else {
            Ok(Fitted::Potential(read_potential(text.as_bytes())?))
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Fitted::Map(_) => 1,
            Fitted::Potential(p) => p.dim(),
        }
    }

    /// `(v, g, cluster)` at `x`.
    pub fn eval(&self, x: &[f64]) -> CliResult<(f64, Vec<f64>, usize)> {
        match self {
            Fitted::Map(m) => Ok((m.potential(x[0]), vec![m.eval(x[0])], m.locate(x[0]))),
            Fitted::Potential(p) => {
                let e = evaluate(p, x)?;
                Ok((e.v, e.g, e.cluster))
            }
        }
    }
}

pub fn cmd_eval(a: &EvalArgs) -> CliResult<()> {
    let fitted = Fitted::load(&a.potential)?;
    let points = load_points(&a.points)?;
    let d = fitted.dim();
    if let Some(p) = points.iter().find(|p| p.len() != d) {
        return Err(CliError::Usage(format!(
            "query points have dimension {} but the potential has dimension {d}",
            p.len()
        )));
    }
    let mut out = sink(a.out.as_deref())?;
    let mut head = vec!["v".to_string()];
    head.extend((1..=d).map(|k| format!("g{k}")));
    head.push("cluster".into());
    writeln!(out, "{}", head.join(","))?;
    for x in &points {
        let (v, g, k) = fitted.eval(x)?;
        let mut row = vec![format!("{v:?}")];
        row.extend(g.iter().map(|c| format!("{c:?}")));
        row.push(k.to_string());
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

fn print_summary(report: &ExperimentReport) {
    for s in report.summary() {
        println!(
            "n={} d={} L={} ell={} K={}: mean estimator error {:.6e}, plug-in {:.6e} over {} trials",
            s.n, s.d, s.lip, s.ell, s.k, s.mean_estimator_error, s.mean_plugin_error, s.trials
        );
    }
}

pub fn cmd_bench1d(a: &Bench1dArgs) -> CliResult<()> {
    let params = Bench1dParams {
        ns: a.ns.clone(),
        lips: a.lips.clone(),
        trials: a.trials,
        seed: a.seed,
        timing: a.timing,
    };
    let report = run_bench1d(&params)?;
    let mut out = sink(a.out.as_deref())?;
    report.write_csv(&mut out)?;
    out.flush()?;
    drop(out);
    if a.out.is_some() {
        print_summary(&report);
    }
    Ok(())
}

pub fn cmd_semiball(a: &SemiballArgs) -> CliResult<()> {
    let params = SemiballParams {
        n: a.n,
        d: a.d,
        trials: a.trials,
        mc_samples: a.mc_samples,
        clusters: a.clusters,
        ell: a.ell,
        lip: a.lip,
        outer_tol: a.tol,
        seed: a.seed,
        timing: a.timing,
    };
    let outcome = run_semiball(&params)?;
    let mut out = sink(a.out.as_deref())?;
    outcome.report.write_csv(&mut out)?;
    out.flush()?;
    drop(out);
    if let Some(path) = &a.displacements {
        let mut w = BufWriter::new(File::create(path)?);
        outcome.displacements.write_csv(&mut w)?;
        w.flush()?;
    }
    if a.out.is_some() {
        print_summary(&outcome.report);
    }
    Ok(())
}

pub fn cmd_color_transfer(a: &ColorArgs) -> CliResult<()> {
    let source = load_rgb(&a.source)?;
    let target = load_rgb(&a.target)?;
    let params = ColorTransferParams {
        ell: a.ell,
        lip: a.lip,
        clusters: a.clusters,
        palette: a.palette,
        recolor: a.recolor,
        outer_tol: a.tol,
        seed: a.seed,
        ..ColorTransferParams::default()
    };
    let res = color_transfer(&source, &target, &params)?;
    save_rgb(&res.image, &a.out)?;
    println!("ell,L,K,W2");
    println!("{:?},{:?},{},{:?}", a.ell, a.lip, a.clusters, res.w2);
    Ok(())
}
