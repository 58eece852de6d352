use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{nearest, DiscreteMeasure, Partition};
use crate::error::{invalid, Result};
use crate::linalg::sq_dist;

const MAX_LLOYD_ITERS: usize = 100;

/// Weighted k-means inertia `Σ a_i |x_i - c_{k(i)}|²` of a partition.
pub fn inertia(measure: &DiscreteMeasure, partition: &Partition) -> f64 {
    measure
        .points()
        .iter()
        .zip(measure.weights())
        .zip(partition.assignment())
        .map(|((p, w), &k)| w * sq_dist(p, &partition.centroids()[k]))
        .sum()
}

/// Weighted Lloyd iterations from a k-means++ seeding.
///
/// Stops when the assignment no longer changes or after 100 iterations. A
/// cluster that empties during the iterations is reseeded at the atom farthest
/// from its current centroid; clusters still empty at the end (fewer distinct
/// atoms than `k`) are removed.
pub fn kmeans(measure: &DiscreteMeasure, k: usize, seed: u64) -> Result<Partition> {
    lloyd(measure, k, seed, None)
}

fn lloyd(
    measure: &DiscreteMeasure,
    k: usize,
    seed: u64,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<Partition> {
    let n = measure.len();
    if k == 0 || k > n {
        return Err(invalid(format!(
            "k-means needs 1 <= K <= n, got K={k}, n={n}"
        )));
    }
    let points = measure.points();
    let weights = measure.weights();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_plus_plus(points, weights, k, &mut rng);

    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(&centroids, p)).collect();
    for _ in 0..MAX_LLOYD_ITERS {
        update_centroids(points, weights, &assignment, &mut centroids);
        reseed_empty(points, &mut assignment, &mut centroids);
        let next: Vec<usize> = points.iter().map(|p| nearest(&centroids, p)).collect();
        if let Some(t) = trace.as_deref_mut() {
            let cost: f64 = points
                .iter()
                .zip(weights)
                .zip(&next)
                .map(|((p, w), &c)| w * sq_dist(p, &centroids[c]))
                .sum();
            t.push(cost);
        }
        if next == assignment {
            break;
        }
        assignment = next;
    }
    Ok(Partition::compact(centroids, assignment))
}

fn seed_plus_plus(
    points: &[Vec<f64>],
    weights: &[f64],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = Vec::with_capacity(k);
    let first = sample_index(weights, rng);
    centroids.push(points[first].clone());
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let scores: Vec<f64> = d2.iter().zip(weights).map(|(d, w)| d * w).collect();
        let total: f64 = scores.iter().sum();
        let next = if total > 0.0 {
            sample_index(&scores, rng)
        } else {
            rng.random_range(0..n)
        };
        let c = points[next].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn sample_index(scores: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = scores.iter().sum();
    let mut r = rng.random::<f64>() * total;
    for (i, &s) in scores.iter().enumerate() {
        if r < s {
            return i;
        }
        r -= s;
    }
    scores.iter().rposition(|&s| s > 0.0).unwrap_or(0)
}

fn update_centroids(
    points: &[Vec<f64>],
    weights: &[f64],
    assignment: &[usize],
    centroids: &mut [Vec<f64>],
) {
    let dim = points[0].len();
    let k = centroids.len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut mass = vec![0.0; k];
    for ((p, &w), &c) in points.iter().zip(weights).zip(assignment) {
        mass[c] += w;
        for (s, v) in sums[c].iter_mut().zip(p) {
            *s += w * v;
        }
    }
    for c in 0..k {
        if mass[c] > 0.0 {
            centroids[c] = sums[c].iter().map(|s| s / mass[c]).collect();
        }
    }
}

fn reseed_empty(points: &[Vec<f64>], assignment: &mut [usize], centroids: &mut [Vec<f64>]) {
    let k = centroids.len();
    let mut counts = vec![0usize; k];
    for &c in assignment.iter() {
        counts[c] += 1;
    }
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_d = 0.0;
        for (i, p) in points.iter().enumerate() {
            if counts[assignment[i]] < 2 {
                continue;
            }
            let d = sq_dist(p, &centroids[assignment[i]]);
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        if let Some(i) = far {
            counts[assignment[i]] -= 1;
            assignment[i] = c;
            counts[c] = 1;
            centroids[c] = points[i].clone();
        }
    }
}
