//! Discrete measures, k-means partitions and measure files.

mod io;
mod kmeans;

pub use io::{load_measure, load_points, save_measure, write_measure};
pub use kmeans::{inertia, kmeans};

use crate::error::{invalid, Error, Result};
use crate::linalg::sq_dist;

/// Tolerance on the total mass of a measure before renormalization is reported.
pub const MASS_TOL: f64 = 1e-12;

/// A weighted point cloud `Σ a_i δ_{x_i}` in `R^d`.
///
/// Weights are strictly positive and sum to one; zero-weight atoms are dropped
/// at construction. The measure is immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    dim: usize,
}

impl DiscreteMeasure {
    /// Builds a measure, dropping zero-weight atoms and renormalizing the
    /// remaining mass to one (with a warning when the input total is off).
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(invalid(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if points.is_empty() {
            return Err(invalid("empty measure"));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(invalid("points must have dimension >= 1"));
        }
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(invalid("non-finite coordinate"));
            }
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid("weights must be finite and nonnegative"));
        }
        let (points, weights): (Vec<_>, Vec<_>) = points
            .into_iter()
            .zip(weights)
            .filter(|(_, w)| *w > 0.0)
            .unzip();
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(invalid("measure has zero total mass"));
        }
        if (total - 1.0).abs() > MASS_TOL {
            log::warn!("weights sum to {total}, renormalizing");
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self {
            points,
            weights,
            dim,
        })
    }

    /// Uniform weights `1/n` on the given points.
    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![1.0 / n.max(1) as f64; n])
    }

    /// Builds a measure on the real line.
    pub fn from_1d(xs: &[f64], weights: &[f64]) -> Result<Self> {
        Self::new(xs.iter().map(|&x| vec![x]).collect(), weights.to_vec())
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// First coordinate of every atom (useful for `d = 1`).
    pub fn coords_1d(&self) -> Vec<f64> {
        self.points.iter().map(|p| p[0]).collect()
    }

    /// Weighted mean of the support.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (p, w) in self.points.iter().zip(&self.weights) {
            for (mk, pk) in m.iter_mut().zip(p) {
                *mk += w * pk;
            }
        }
        m
    }
}

/// A decomposition of `R^d` into nearest-centroid cells.
///
/// `assignment[i]` is the cell of the i-th atom of the measure the partition
/// was built from. Every cell owns at least one atom.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    centroids: Vec<Vec<f64>>,
    assignment: Vec<usize>,
}

impl Partition {
    /// Builds a partition from centroids, assigning each point to its nearest
    /// centroid. Centroids that receive no point are removed.
    pub fn from_centroids(centroids: Vec<Vec<f64>>, points: &[Vec<f64>]) -> Result<Self> {
        if centroids.is_empty() {
            return Err(invalid("partition needs at least one centroid"));
        }
        let dim = centroids[0].len();
        if centroids.iter().any(|c| c.len() != dim) {
            return Err(invalid("centroids have inconsistent dimension"));
        }
        let mut assignment = Vec::with_capacity(points.len());
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.len(),
                });
            }
            assignment.push(nearest(&centroids, p));
        }
        Ok(Self::compact(centroids, assignment))
    }

    /// Single cell covering all of `R^d`, with the centroid at the mean.
    pub fn whole(measure: &DiscreteMeasure) -> Self {
        Self {
            centroids: vec![measure.mean()],
            assignment: vec![0; measure.len()],
        }
    }

    /// Drops centroids without members and renumbers the rest in order.
    pub(crate) fn compact(centroids: Vec<Vec<f64>>, assignment: Vec<usize>) -> Self {
        let k = centroids.len();
        let mut used = vec![false; k];
        for &c in &assignment {
            used[c] = true;
        }
        let mut remap = vec![usize::MAX; k];
        let mut kept = Vec::new();
        for (c, centroid) in centroids.into_iter().enumerate() {
            if used[c] {
                remap[c] = kept.len();
                kept.push(centroid);
            }
        }
        let assignment = assignment.into_iter().map(|c| remap[c]).collect();
        Self {
            centroids: kept,
            assignment,
        }
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Number of cells `K`.
    pub fn num_clusters(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids[0].len()
    }

    /// Indices of the sample atoms that belong to cell `k`.
    pub fn members(&self, k: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == k)
            .map(|(i, _)| i)
            .collect()
    }

    /// Index sets `I_k` for every cell.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_clusters()];
        for (i, &c) in self.assignment.iter().enumerate() {
            out[c].push(i);
        }
        out
    }

    /// Cell containing `x`: nearest centroid, smallest index on ties.
    pub fn locate(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(nearest(&self.centroids, x))
    }
}

pub(crate) fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}
