//! Multivariate SSNB potentials.
//!
//! [`fit`] alternates between an optimal coupling of the current image
//! `Σ a_i δ_{z_i}` with `ν` and, per partition cell, the convex QCQP over
//! gradients `z_i` and values `u_i` subject to the smooth strongly convex
//! interpolation constraints. Each cell problem is first solved through its
//! Schur-complement SDP relaxation and then polished on the exact QCQP.
//! [`evaluate`] extends a fitted potential to new points.

mod cluster;
mod constraint;
mod estimate;
mod eval;
mod fit;
mod io;
mod refine;

use crate::error::{invalid, Result};
use crate::measures::Partition;
use crate::sdp::{SdpSettings, SdpStatus};
use crate::transport::Coupling;

pub use cluster::{solve_affine_case, solve_cluster, ClusterProblem, ClusterSolution};
pub use constraint::{interpolation_constraint, max_distortion_violation, min_constraint_residual};
pub use estimate::{estimate_ell_l, estimate_w2, mc_estimate};
pub use eval::{evaluate, Evaluation};
pub use fit::fit;
pub use io::read_potential;

/// How the coupling step of the outer loop is solved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CouplingSolver {
    /// Exact OT up to `max_exact_cells` cost entries, Sinkhorn beyond.
    Auto {
        max_exact_cells: usize,
    },
    Exact,
    /// Entropic OT with `ε = eps_rel · mean(C)`.
    Sinkhorn {
        eps_rel: f64,
    },
}

impl Default for CouplingSolver {
    fn default() -> Self {
        CouplingSolver::Auto {
            max_exact_cells: 1_000_000,
        }
    }
}

/// Shape of the SDP relaxation of a cell problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Lifting {
    /// `[[I_d, Zᵀ], [Z, G]] ⪰ 0`, size `d + n_k`.
    #[default]
    Compact,
    /// Gram matrix of `(x_i, z_i, y_j)`, size `2 n_k + m`, with the known
    /// blocks fixed by equalities.
    Full,
}

#[derive(Debug, Clone)]
pub struct SsnbConfig {
    pub ell: f64,
    pub lip: f64,
    pub partition: Partition,
    pub outer_max_iter: usize,
    /// Stop once the relative objective decrease falls below this.
    pub outer_tol: f64,
    pub coupling: CouplingSolver,
    /// Polish SDP solutions on the exact QCQP.
    pub refine: bool,
    pub lifting: Lifting,
    pub sdp: SdpSettings,
}

impl SsnbConfig {
    pub fn new(ell: f64, lip: f64, partition: Partition) -> Result<Self> {
        let config = Self {
            ell,
            lip,
            partition,
            outer_max_iter: 50,
            outer_tol: 1e-6,
            coupling: CouplingSolver::default(),
            refine: true,
            lifting: Lifting::default(),
            sdp: SdpSettings {
                tol: 1e-6,
                max_iter: 5_000,
                ..SdpSettings::default()
            },
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ell >= 0.0 && self.ell <= self.lip && self.lip.is_finite()) {
            return Err(invalid(format!(
                "need 0 <= ell <= L < inf, got ell={}, L={}",
                self.ell, self.lip
            )));
        }
        if self.lip == 0.0 {
            return Err(invalid("L must be positive"));
        }
        if !(self.outer_tol >= 0.0) {
            return Err(invalid("outer_tol must be nonnegative"));
        }
        if let CouplingSolver::Sinkhorn { eps_rel } = self.coupling {
            if !(eps_rel > 0.0) {
                return Err(invalid("Sinkhorn eps_rel must be positive"));
            }
        }
        Ok(())
    }

    /// `ell == L`: gradients are `ell x + c` per cell and the constraint
    /// prefactor is singular, so an exact affine solver is used.
    pub fn is_affine(&self) -> bool {
        self.ell == self.lip
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitStatus {
    Converged,
    MaxIter,
    /// The objective failed to decrease (possible with entropic couplings).
    Stalled,
    /// Loaded from a file; no fitting history.
    Loaded,
}

/// A fitted potential: values `u_i` and gradients `z_i` at the atoms of `mu`.
#[derive(Debug, Clone)]
pub struct PotentialData {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub u: Vec<f64>,
    pub z: Vec<Vec<f64>>,
    pub ell: f64,
    pub lip: f64,
    /// Partition with every atom assigned to its nearest centroid.
    pub partition: Partition,
    pub coupling: Option<Coupling>,
    /// `W₂²(Σ a_i δ_{z_i}, ν)` at the final iterate.
    pub objective: f64,
    /// Objective after initialization and after each accepted outer step.
    pub history: Vec<f64>,
    pub status: FitStatus,
    /// Cell solves whose SDP stopped without reaching tolerance.
    pub sdp_warnings: Vec<(usize, SdpStatus)>,
}

impl PotentialData {
    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_affine(&self) -> bool {
        self.ell == self.lip
    }

    /// Smallest interpolation residual over ordered within-cell pairs
    /// (`+∞` when no cell has two atoms or the potential is affine).
    pub fn min_residual(&self) -> f64 {
        if self.is_affine() {
            return f64::INFINITY;
        }
        self.partition
            .clusters()
            .iter()
            .map(|m| min_constraint_residual(&self.points, &self.u, &self.z, m, self.ell, self.lip))
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest distortion violation over within-cell pairs.
    pub fn max_distortion_violation(&self) -> f64 {
        self.partition
            .clusters()
            .iter()
            .map(|m| max_distortion_violation(&self.points, &self.z, m, self.ell, self.lip))
            .fold(0.0, f64::max)
    }
}
