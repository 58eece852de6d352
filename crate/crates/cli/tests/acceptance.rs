//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Tolerances and runtime limits are pinned below.

use std::time::{Duration, Instant};

use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssnb::isotonic::{fit_ssnb_1d, solve_isotonic, IsotonicProblem};
use ssnb::measures::{kmeans, DiscreteMeasure, Partition};
use ssnb::potential::{evaluate, fit, ClusterProblem, Lifting, PotentialData, SsnbConfig};
use ssnb::sdp::SdpSettings;
use ssnb::transport::{cost_matrix, exact_ot};
use ssnb_cli::bench::{run_bench1d, Bench1dParams};
use ssnb_cli::color::{color_transfer, ColorTransferParams};
use ssnb_cli::semiball::{run_semiball, SemiballParams};
use ssnb_oracles::bounded_isotonic;

const ISOTONIC_TOL: f64 = 1e-6;
const PIPELINE_1D_TOL: f64 = 1e-4;
const BENCH_FLOOR: f64 = 0.01;
const BENCH_SPEEDUP: f64 = 5.0;
const SEMIBALL_TOL: f64 = 0.2;
const SMOKE_RANGE: (f64, f64) = (1.0, 3.0);
const TRANSLATION_TOL: f64 = 1e-6;
const FEASIBILITY_TOL: f64 = 1e-6;
const SUPPORT_TOL: f64 = 1e-6;
const CLOSED_FORM_TOL: f64 = 1e-8;
const SDP_BOUND_TOL: f64 = 1e-6;
const MONOTONE_SLACK: f64 = 1e-8;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(id: &str, name: &str, limit: Option<Duration>, body: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let mut out = body();
    let took = start.elapsed();
    if let Some(limit) = limit {
        if took > limit {
            out.pass = false;
            out.detail
                .push_str(&format!("; exceeded {:.0} s", limit.as_secs_f64()));
        }
    }
    println!(
        "[{}] {id} {name}: {} ({:.1} s)",
        if out.pass { "PASS" } else { "FAIL" },
        out.detail,
        took.as_secs_f64()
    );
    out.pass
}

fn sorted_distinct(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
        v.sort_by(f64::total_cmp);
        if v.windows(2).all(|w| w[1] - w[0] > 1e-6) {
            return v;
        }
    }
}

fn weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

fn cloud(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64, shift: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..d)
                .map(|_| shift + rng.random_range(-scale..scale))
                .collect()
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `u_i − u_j − ⟨z_j, x_i − x_j⟩ − (‖z_i − z_j‖²/L + ℓ‖x_i − x_j‖²
/// − 2(ℓ/L)⟨z_j − z_i, x_j − x_i⟩) / (2(1 − ℓ/L))`, written out directly.
fn residual(p: &PotentialData, i: usize, j: usize) -> f64 {
    let (ell, lip) = (p.ell, p.lip);
    let dx = sub(&p.points[i], &p.points[j]);
    let dz = sub(&p.z[i], &p.z[j]);
    let quad = dot(&dz, &dz) / lip + ell * dot(&dx, &dx) - 2.0 * (ell / lip) * dot(&dz, &dx);
    p.u[i] - p.u[j] - dot(&p.z[j], &dx) - quad / (2.0 * (1.0 - ell / lip))
}

/// Worst constraint residual and worst distortion excess over within-cell pairs.
fn audit(p: &PotentialData) -> (f64, f64) {
    let mut worst_r = f64::INFINITY;
    let mut worst_d: f64 = 0.0;
    for cell in p.partition.clusters() {
        for &i in &cell {
            for &j in &cell {
                if i == j {
                    continue;
                }
                if p.ell < p.lip {
                    worst_r = worst_r.min(residual(p, i, j));
                }
                let dx = norm(&sub(&p.points[i], &p.points[j]));
                let dz = norm(&sub(&p.z[i], &p.z[j]));
                worst_d = worst_d.max(p.ell * dx - dz).max(dz - p.lip * dx);
            }
        }
    }
    (worst_r, worst_d)
}

fn worst_rise(history: &[f64]) -> f64 {
    history
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max)
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(1..=20);
        let x = sorted_distinct(&mut rng, n, -3.0, 3.0);
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
        let a = weights(&mut rng, n);
        let ell = rng.random_range(0.0..2.0);
        let lip = ell + rng.random_range(0.0..2.0);
        let prob = IsotonicProblem::single(x.clone(), w.clone(), a.clone(), ell, lip).unwrap();
        let z = solve_isotonic(&prob, 1e-9, 500_000).unwrap();
        let oracle = bounded_isotonic(&x, &w, &a, ell, lip);
        worst = worst.max((prob.objective(&z) - prob.objective(&oracle)).abs());
    }
    Outcome {
        pass: worst <= ISOTONIC_TOL,
        detail: format!("200 instances, max |Δ objective| = {worst:.2e} (tol {ISOTONIC_TOL:.0e})"),
    }
}

fn criterion_2(histories: &mut Vec<Vec<f64>>) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(1..=15);
        let m = rng.random_range(1..=15);
        let xs = sorted_distinct(&mut rng, n, 0.0, 1.0);
        let ys: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..2.0)).collect();
        let mu = DiscreteMeasure::from_1d(&xs, &weights(&mut rng, n)).unwrap();
        let nu = DiscreteMeasure::from_1d(&ys, &weights(&mut rng, m)).unwrap();
        let ell = rng.random_range(0.0..1.5);
        let lip = ell + rng.random_range(0.05..2.0);
        let whole = Partition::whole(&mu);
        let pot = fit(&mu, &nu, &SsnbConfig::new(ell, lip, whole.clone()).unwrap()).unwrap();
        let map = fit_ssnb_1d(&mu, &nu, ell, lip, &whole).unwrap();
        worst = worst.max((pot.objective - map.transport_cost(&nu).unwrap()).abs());
        histories.push(pot.history);
    }
    Outcome {
        pass: worst <= PIPELINE_1D_TOL,
        detail: format!("50 pairs, max |Δ objective| = {worst:.2e} (tol {PIPELINE_1D_TOL:.0e})"),
    }
}

fn criterion_3() -> Outcome {
    let params = Bench1dParams {
        ns: vec![10, 100, 1000],
        lips: vec![0.5, 1.0, 1.5],
        trials: 20,
        seed: 3,
        timing: false,
    };
    let rep = run_bench1d(&params).unwrap();
    let e = |n: usize, l: f64| rep.mean_error(n, l).unwrap();
    let floor = e(1000, 0.5) > BENCH_FLOOR;
    let speedup = e(10, 1.0) / e(1000, 1.0);
    let monotone = [1.0, 1.5]
        .iter()
        .all(|&l| e(10, l) > e(100, l) && e(100, l) > e(1000, l));
    Outcome {
        pass: floor && speedup >= BENCH_SPEEDUP && monotone,
        detail: format!(
            "L=0.5,n=1000: {:.3e} (> {BENCH_FLOOR}); L=1: n=10 {:.2e} / n=1000 {:.2e} = {speedup:.1}x (≥ {BENCH_SPEEDUP}x); \
             L=1.5: {:.2e} > {:.2e} > {:.2e}; monotone {monotone}",
            e(1000, 0.5),
            e(10, 1.0),
            e(1000, 1.0),
            e(10, 1.5),
            e(100, 1.5),
            e(1000, 1.5)
        ),
    }
}

fn criterion_4() -> Outcome {
    let params = SemiballParams {
        n: 500,
        d: 2,
        trials: 5,
        mc_samples: 50,
        seed: 4,
        ..SemiballParams::default()
    };
    let out = run_semiball(&params).unwrap();
    let mean = out
        .report
        .rows
        .iter()
        .map(|r| r.estimator_error)
        .sum::<f64>()
        / out.report.rows.len() as f64;
    Outcome {
        pass: mean <= SEMIBALL_TOL,
        detail: format!(
            "K={}, estimates {:?}, mean |Ŵ − 2| = {mean:.4} (tol {SEMIBALL_TOL})",
            params.cells(),
            out.estimates
                .iter()
                .map(|e| (e * 1e4).round() / 1e4)
                .collect::<Vec<_>>()
        ),
    }
}

fn smoke_d20() -> Outcome {
    let params = SemiballParams {
        n: 100,
        d: 20,
        trials: 1,
        seed: 20,
        ..SemiballParams::default()
    };
    let est = run_semiball(&params).unwrap().estimates[0];
    Outcome {
        pass: est.is_finite() && est >= SMOKE_RANGE.0 && est <= SMOKE_RANGE.1,
        detail: format!(
            "d=20, n=100, K={}: Ŵ = {est:.4} (range [{}, {}])",
            params.cells(),
            SMOKE_RANGE.0,
            SMOKE_RANGE.1
        ),
    }
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for trial in 0..5 {
        let d = 1 + trial % 4;
        let pts = cloud(&mut rng, 25, d, 1.0, 0.0);
        let t: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mu = DiscreteMeasure::uniform(pts.clone()).unwrap();
        let nu = DiscreteMeasure::uniform(
            pts.iter()
                .map(|x| x.iter().zip(&t).map(|(a, b)| a + b).collect())
                .collect(),
        )
        .unwrap();
        let config = SsnbConfig::new(1.0, 1.0, kmeans(&mu, 3, trial as u64).unwrap()).unwrap();
        let pot = fit(&mu, &nu, &config).unwrap();
        for (z, x) in pot.z.iter().zip(&pot.points) {
            worst = worst.max(norm(&sub(&sub(z, x), &t)));
        }
    }
    Outcome {
        pass: worst <= TRANSLATION_TOL,
        detail: format!("5 instances, max ‖z − x − t‖ = {worst:.2e} (tol {TRANSLATION_TOL:.0e})"),
    }
}

fn criterion_6(histories: &mut Vec<Vec<f64>>) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut worst_r, mut worst_d) = (f64::INFINITY, 0.0f64);
    for trial in 0..50 {
        let n = rng.random_range(2..=30);
        let m = rng.random_range(2..=30);
        let d = rng.random_range(1..=5);
        let k = rng.random_range(1..=3).min(n);
        let mu = DiscreteMeasure::uniform(cloud(&mut rng, n, d, 1.0, 0.0)).unwrap();
        let nu = DiscreteMeasure::uniform(cloud(&mut rng, m, d, 1.5, 0.5)).unwrap();
        let ell = rng.random_range(0.0..1.5);
        let lip = ell + rng.random_range(0.05..2.0);
        let config = SsnbConfig::new(ell, lip, kmeans(&mu, k, trial).unwrap()).unwrap();
        let pot = fit(&mu, &nu, &config).unwrap();
        let (r, dist) = audit(&pot);
        worst_r = worst_r.min(r);
        worst_d = worst_d.max(dist);
        histories.push(pot.history);
    }
    Outcome {
        pass: worst_r >= -FEASIBILITY_TOL && worst_d <= FEASIBILITY_TOL,
        detail: format!(
            "50 instances, min residual {worst_r:.2e}, max distortion excess {worst_d:.2e} (tol {FEASIBILITY_TOL:.0e})"
        ),
    }
}

fn criterion_7(histories: &mut Vec<Vec<f64>>) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_support: f64 = 0.0;
    for trial in 0..10 {
        let d = rng.random_range(1..=4);
        let mu = DiscreteMeasure::uniform(cloud(&mut rng, 12, d, 1.0, 0.0)).unwrap();
        let nu = DiscreteMeasure::uniform(cloud(&mut rng, 10, d, 1.0, 0.7)).unwrap();
        let ell = rng.random_range(0.0..1.0);
        let lip = ell + rng.random_range(0.2..2.0);
        let pot = fit(
            &mu,
            &nu,
            &SsnbConfig::new(ell, lip, kmeans(&mu, 2, trial).unwrap()).unwrap(),
        )
        .unwrap();
        for i in 0..pot.len() {
            let e = evaluate(&pot, &pot.points[i]).unwrap();
            worst_support = worst_support
                .max((e.v - pot.u[i]).abs())
                .max(norm(&sub(&e.g, &pot.z[i])));
        }
        histories.push(pot.history);
    }
    // every atom its own cell
    let mut worst_single: f64 = 0.0;
    for _ in 0..5 {
        let pts = cloud(&mut rng, 6, 3, 1.0, 0.0);
        let mu = DiscreteMeasure::uniform(pts.clone()).unwrap();
        let nu = DiscreteMeasure::uniform(cloud(&mut rng, 6, 3, 1.0, 1.0)).unwrap();
        let ell = rng.random_range(0.0..1.0);
        let part = Partition::from_centroids(pts.clone(), &pts).unwrap();
        let pot = fit(&mu, &nu, &SsnbConfig::new(ell, ell + 1.0, part).unwrap()).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
            let e = evaluate(&pot, &x).unwrap();
            let k = e.cluster;
            let i = pot.partition.members(k)[0];
            let dx = sub(&x, &pot.points[i]);
            let g: Vec<f64> = pot.z[i].iter().zip(&dx).map(|(z, h)| z + ell * h).collect();
            let v = pot.u[i] + dot(&pot.z[i], &dx) + 0.5 * ell * dot(&dx, &dx);
            worst_single = worst_single.max((e.v - v).abs()).max(norm(&sub(&e.g, &g)));
        }
    }
    Outcome {
        pass: worst_support <= SUPPORT_TOL && worst_single <= CLOSED_FORM_TOL,
        detail: format!(
            "support max error {worst_support:.2e} (tol {SUPPORT_TOL:.0e}); single-atom closed form max error \
             {worst_single:.2e} (tol {CLOSED_FORM_TOL:.0e})"
        ),
    }
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst_gap = f64::NEG_INFINITY;
    let mut worst_r = f64::INFINITY;
    for _ in 0..30 {
        let nk = rng.random_range(2..=4);
        let m = rng.random_range(1..=5);
        let xs = cloud(&mut rng, nk, 2, 1.0, 0.0);
        let ys = cloud(&mut rng, m, 2, 1.5, 0.3);
        let (a, b) = (weights(&mut rng, nk), weights(&mut rng, m));
        let p = exact_ot(&a, &b, &cost_matrix(&xs, &ys).unwrap()).unwrap();
        let ell = rng.random_range(0.0..1.0);
        let lip = rng.random_range(1.0f64..3.0).max(ell + 0.05);
        let members: Vec<usize> = (0..nk).collect();
        let prob = ClusterProblem::from_coupling(&p, &members, &xs, &ys, ell, lip).unwrap();
        // z = x, u = ½‖x‖² is feasible when ℓ ≤ 1 ≤ L
        let lifted = prob.objective(&xs);
        let sol = prob
            .solve_with(Lifting::Compact, &SdpSettings::default(), true)
            .unwrap();
        let sdp = sol.sdp_value.unwrap();
        worst_gap = worst_gap.max((sdp - lifted) / lifted.abs().max(1.0));
        let pot = PotentialData {
            points: xs.clone(),
            weights: a.clone(),
            u: sol.u.clone(),
            z: sol.z.clone(),
            ell,
            lip,
            partition: Partition::whole(&DiscreteMeasure::uniform(xs.clone()).unwrap()),
            coupling: None,
            objective: sol.objective,
            history: vec![],
            status: ssnb::potential::FitStatus::Loaded,
            sdp_warnings: vec![],
        };
        worst_r = worst_r.min(audit(&pot).0);
    }
    Outcome {
        pass: worst_gap <= SDP_BOUND_TOL && worst_r >= -FEASIBILITY_TOL,
        detail: format!(
            "30 cells, max (SDP − lifted)/max(1,|lifted|) = {worst_gap:.2e} (≤ {SDP_BOUND_TOL:.0e}); refined min \
             residual {worst_r:.2e} (≥ −{FEASIBILITY_TOL:.0e})"
        ),
    }
}

fn criterion_9(histories: &[Vec<f64>]) -> Outcome {
    let worst = histories
        .iter()
        .map(|h| worst_rise(h))
        .fold(f64::NEG_INFINITY, f64::max);
    let iters: usize = histories.iter().map(Vec::len).sum();
    Outcome {
        pass: worst <= MONOTONE_SLACK,
        detail: format!(
            "{} fits, {iters} outer iterates, largest step increase {worst:.2e} (slack {MONOTONE_SLACK:.0e})",
            histories.len()
        ),
    }
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// A washed-out source and a saturated target: matching them requires the
/// map to expand color space several times over.
fn image_pair() -> (RgbImage, RgbImage) {
    let (w, h) = (64u32, 64u32);
    let src = RgbImage::from_fn(w, h, |x, y| {
        let (s, t) = (x as f64 / (w - 1) as f64, y as f64 / (h - 1) as f64);
        image::Rgb([
            to_byte(0.45 + 0.1 * s),
            to_byte(0.45 + 0.1 * t),
            to_byte(0.5 + 0.05 * (6.0 * s + 3.0 * t).sin()),
        ])
    });
    let tgt = RgbImage::from_fn(w, h, |x, y| {
        let (s, t) = (x as f64 / (w - 1) as f64, y as f64 / (h - 1) as f64);
        image::Rgb([
            to_byte(0.05 + 0.9 * t),
            to_byte(0.1 + 0.8 * s),
            to_byte(0.5 + 0.4 * (5.0 * s * t + 2.0 * s).cos()),
        ])
    });
    (src, tgt)
}

fn criterion_10() -> Outcome {
    let (src, tgt) = image_pair();
    let w: Vec<f64> = [5.0, 2.0, 1.0]
        .iter()
        .map(|&lip| {
            let params = ColorTransferParams {
                ell: 0.0,
                lip,
                seed: 10,
                ..ColorTransferParams::default()
            };
            color_transfer(&src, &tgt, &params).unwrap().w2
        })
        .collect();
    Outcome {
        pass: w[0] < w[1] && w[1] < w[2],
        detail: format!(
            "W(L=5) = {:.4e}, W(L=2) = {:.4e}, W(L=1) = {:.4e}",
            w[0], w[1], w[2]
        ),
    }
}

fn main() {
    // `cargo test` passes harness flags; a name filter skips the run
    if std::env::args().skip(1).any(|a| !a.starts_with('-')) {
        return;
    }
    let min = |m: u64| Some(Duration::from_secs(60 * m));
    let mut histories = Vec::new();
    let results = [
        check(
            "C1",
            "isotonic solver vs dense active-set QP",
            Some(Duration::from_secs(10)),
            criterion_1,
        ),
        check(
            "C2",
            "multivariate fit in 1D vs isotonic pipeline",
            None,
            || criterion_2(&mut histories),
        ),
        check(
            "C3",
            "1D convergence with mu = nu = U([0,1])",
            min(2),
            criterion_3,
        ),
        check(
            "C4",
            "semi-ball W2 estimate, d=2, n=500",
            min(10),
            criterion_4,
        ),
        check("C4b", "semi-ball smoke run, d=20, n=100", None, smoke_d20),
        check(
            "C5",
            "translation recovery with ell = L = 1",
            None,
            criterion_5,
        ),
        check(
            "C6",
            "feasibility and distortion of fitted potentials",
            None,
            || criterion_6(&mut histories),
        ),
        check("C7", "evaluation consistency", None, || {
            criterion_7(&mut histories)
        }),
        check(
            "C8",
            "SDP lower bound and refined feasibility",
            None,
            criterion_8,
        ),
        check("C9", "outer-loop monotonicity", None, || {
            criterion_9(&histories)
        }),
        check(
            "C10",
            "color transfer ordering W(5) < W(2) < W(1)",
            min(15),
            criterion_10,
        ),
    ];
    let failed = results.iter().filter(|p| !**p).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
