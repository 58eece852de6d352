//! Alternate minimization over couplings and cell potentials.

use log::{debug, warn};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::sq_norm;
use crate::measures::{nearest, DiscreteMeasure, Partition};
use crate::sdp::SdpStatus;
use crate::transport::{cost_matrix, exact_ot, quantile_coupling, sinkhorn, Coupling};

use super::cluster::{CellState, ClusterProblem};
use super::{CouplingSolver, FitStatus, PotentialData, SsnbConfig};

const SINKHORN_AUTO_EPS: f64 = 1e-2;
const SINKHORN_MAX_ITER: usize = 10_000;
const SINKHORN_TOL: f64 = 1e-9;

/// Coupling of `Σ a_i δ_{z_i}` with `nu` and its transport cost.
fn couple(
    z: &[Vec<f64>],
    a: &[f64],
    nu: &DiscreteMeasure,
    solver: CouplingSolver,
) -> Result<(Coupling, f64)> {
    let ys = nu.points();
    let b = nu.weights();
    let cost = cost_matrix(z, ys)?;
    let cells = z.len() * ys.len();
    let entropic = match solver {
        CouplingSolver::Auto { max_exact_cells } => {
            (cells > max_exact_cells).then_some(SINKHORN_AUTO_EPS)
        }
        CouplingSolver::Exact => None,
        CouplingSolver::Sinkhorn { eps_rel } => Some(eps_rel),
    };
    let coupling = match entropic {
        Some(rel) => {
            let eps = rel * cost.mean().max(f64::MIN_POSITIVE);
            let res = sinkhorn(a, b, &cost, eps, SINKHORN_MAX_ITER, SINKHORN_TOL)?;
            if !res.converged {
                warn!(
                    "Sinkhorn stopped after {} iterations without reaching tolerance",
                    res.iterations
                );
            }
            res.coupling
        }
        None if nu.dim() == 1 => {
            let zs: Vec<f64> = z.iter().map(|p| p[0]).collect();
            quantile_coupling(&zs, a, &nu.coords_1d(), b)?
        }
        None => exact_ot(a, b, &cost)?,
    };
    let value = coupling.cost(&cost);
    Ok((coupling, value))
}

/// Every atom assigned to its nearest centroid; empty cells dropped.
fn normalize_partition(mu: &DiscreteMeasure, partition: &Partition) -> Partition {
    let assignment: Vec<usize> = mu
        .points()
        .iter()
        .map(|p| nearest(partition.centroids(), p))
        .collect();
    Partition::compact(partition.centroids().to_vec(), assignment)
}

/// Fits an SSNB potential from `mu` to `nu`.
pub fn fit(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    config: &SsnbConfig,
) -> Result<PotentialData> {
    config.validate()?;
    let d = mu.dim();
    for found in [nu.dim(), config.partition.dim()] {
        if found != d {
            return Err(Error::DimensionMismatch { expected: d, found });
        }
    }
    let partition = normalize_partition(mu, &config.partition);
    let cells = partition.clusters();
    let xs = mu.points();
    let a = mu.weights();
    let (ell, lip) = (config.ell, config.lip);

    let kappa = 0.5 * (ell + lip);
    let mut z: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| x.iter().map(|v| kappa * v).collect())
        .collect();
    let mut u: Vec<f64> = xs.iter().map(|x| 0.5 * kappa * sq_norm(x)).collect();
    for m in &cells {
        let min = m.iter().map(|&i| u[i]).fold(f64::INFINITY, f64::min);
        m.iter().for_each(|&i| u[i] -= min);
    }

    let (mut coupling, mut objective) = couple(&z, a, nu, config.coupling)?;
    let mut history = vec![objective];
    let mut status = FitStatus::MaxIter;
    let mut states: Vec<CellState> = cells.iter().map(|_| CellState::default()).collect();
    let mut sdp_warnings = Vec::new();

    for iter in 1..=config.outer_max_iter {
        let results: Vec<Result<Option<(Vec<Vec<f64>>, Vec<f64>, Option<SdpStatus>)>>> = cells
            .par_iter()
            .zip(states.par_iter_mut())
            .map(|(members, state)| {
                let prob =
                    ClusterProblem::from_coupling(&coupling, members, xs, nu.points(), ell, lip)?;
                let current: Vec<Vec<f64>> = members.iter().map(|&i| z[i].clone()).collect();
                let before = prob.objective(&current);
                let (new_z, new_u, sdp_status) = if config.is_affine() {
                    let (u, z) = prob.affine();
                    (z, u, None)
                } else {
                    let sol =
                        prob.solve_cached(state, config.lifting, &config.sdp, config.refine)?;
                    (sol.z, sol.u, sol.sdp_status)
                };
                // keep the previous cell iterate unless the new one is no worse
                let after = prob.objective(&new_z);
                if after <= before + 1e-14 * before.abs().max(1e-300) {
                    Ok(Some((new_z, new_u, sdp_status)))
                } else {
                    debug!("cell update rejected: {after} > {before}");
                    Ok(None)
                }
            })
            .collect();
        let mut candidate_z = z.clone();
        let mut candidate_u = u.clone();
        for (k, res) in results.into_iter().enumerate() {
            if let Some((cz, cu, sdp_status)) = res? {
                for (slot, &i) in cells[k].iter().enumerate() {
                    candidate_z[i] = cz[slot].clone();
                    candidate_u[i] = cu[slot];
                }
                if let Some(s) = sdp_status.filter(|s| *s != SdpStatus::Optimal) {
                    sdp_warnings.push((k, s));
                }
            }
        }
        let (next_coupling, next_objective) = couple(&candidate_z, a, nu, config.coupling)?;
        if next_objective > objective * (1.0 + 1e-12) + 1e-300 {
            warn!("outer iteration {iter} increased the objective ({objective} -> {next_objective}); stopping");
            status = FitStatus::Stalled;
            break;
        }
        let decrease = (objective - next_objective) / objective.max(f64::MIN_POSITIVE);
        z = candidate_z;
        u = candidate_u;
        coupling = next_coupling;
        objective = next_objective;
        history.push(objective);
        debug!("outer iteration {iter}: objective {objective:.6e}");
        if decrease < config.outer_tol {
            status = FitStatus::Converged;
            break;
        }
    }
    if !sdp_warnings.is_empty() {
        warn!(
            "{} cell SDP solves stopped before reaching tolerance",
            sdp_warnings.len()
        );
    }
    Ok(PotentialData {
        points: xs.to_vec(),
        weights: a.to_vec(),
        u,
        z,
        ell,
        lip,
        partition,
        coupling: Some(coupling),
        objective,
        history,
        status,
        sdp_warnings,
    })
}
