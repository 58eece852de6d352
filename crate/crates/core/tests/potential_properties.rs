//! Randomized properties of fitted potentials.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssnb::measures::{kmeans, DiscreteMeasure, Partition};
use ssnb::potential::{evaluate, fit, interpolation_constraint, mc_estimate, SsnbConfig};
use ssnb::transport::w2_distance;

fn cloud(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64, shift: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..d)
                .map(|_| shift + rng.random_range(-scale..scale))
                .collect()
        })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn fits_satisfy_constraints_distortion_and_descent(
        seed in 0u64..10_000,
        n in 2usize..12,
        m in 1usize..12,
        d in 1usize..4,
        k in 1usize..3,
        ell in 0.0f64..1.2,
        gap in 0.05f64..2.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu = DiscreteMeasure::uniform(cloud(&mut rng, n, d, 1.0, 0.0)).unwrap();
        let nu = DiscreteMeasure::uniform(cloud(&mut rng, m, d, 1.5, 0.3)).unwrap();
        let lip = ell + gap;
        let config = SsnbConfig::new(ell, lip, kmeans(&mu, k.min(n), seed).unwrap()).unwrap();
        let pot = fit(&mu, &nu, &config).unwrap();
        for members in pot.partition.clusters() {
            for &i in &members {
                for &j in &members {
                    let r = interpolation_constraint(
                        pot.u[i], pot.u[j], &pot.z[i], &pot.z[j], &pot.points[i], &pot.points[j], ell, lip,
                    ).unwrap();
                    prop_assert!(r >= -1e-6, "pair ({i},{j}) residual {r}");
                    let dx = norm(&diff(&pot.points[i], &pot.points[j]));
                    let dz = norm(&diff(&pot.z[i], &pot.z[j]));
                    prop_assert!(ell * dx - 1e-6 <= dz && dz <= lip * dx + 1e-6);
                }
            }
        }
        for w in pot.history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-8, "objective rose {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn evaluation_bounds_hold_off_support(seed in 0u64..10_000, ell in 0.0f64..0.8, gap in 0.1f64..1.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu = DiscreteMeasure::uniform(cloud(&mut rng, 6, 2, 1.0, 0.0)).unwrap();
        let nu = DiscreteMeasure::uniform(cloud(&mut rng, 5, 2, 1.0, 1.0)).unwrap();
        let lip = ell + gap;
        let pot = fit(&mu, &nu, &SsnbConfig::new(ell, lip, Partition::whole(&mu)).unwrap()).unwrap();
        for x in cloud(&mut rng, 10, 2, 2.0, 0.0) {
            let e = evaluate(&pot, &x).unwrap();
            for i in 0..pot.len() {
                let r = interpolation_constraint(e.v, pot.u[i], &e.g, &pot.z[i], &x, &pot.points[i], ell, lip).unwrap();
                prop_assert!(r >= -1e-8, "{r}");
            }
        }
    }
}

/// With one cell, `∇f̂` is the gradient of a convex function, so the
/// sample-to-image coupling is optimal: the Monte-Carlo value is the exact
/// distance between the sample and its image, and the triangle inequality
/// bounds its deviation from the sample-to-target distance.
#[test]
fn single_cell_estimate_obeys_triangle_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for trial in 0..5 {
        let mu_hat = DiscreteMeasure::uniform(cloud(&mut rng, 10, 2, 1.0, 0.0)).unwrap();
        let nu_hat = DiscreteMeasure::uniform(cloud(&mut rng, 10, 2, 1.0, 0.8)).unwrap();
        let pot = fit(
            &mu_hat,
            &nu_hat,
            &SsnbConfig::new(0.2, 1.6, Partition::whole(&mu_hat)).unwrap(),
        )
        .unwrap();
        let sample = cloud(&mut rng, 40, 2, 1.0, 0.0);
        let est = mc_estimate(&pot, &sample).unwrap();
        let images: Vec<Vec<f64>> = sample
            .iter()
            .map(|x| evaluate(&pot, x).unwrap().g)
            .collect();
        let s = DiscreteMeasure::uniform(sample).unwrap();
        let gs = DiscreteMeasure::uniform(images).unwrap();
        let exact = w2_distance(&s, &gs).unwrap();
        assert!(
            (est - exact).abs() < 1e-6,
            "trial {trial}: estimate {est} vs optimal {exact}"
        );
        let w = w2_distance(&s, &nu_hat).unwrap();
        let bound = w2_distance(&gs, &nu_hat).unwrap();
        assert!(
            (est - w).abs() <= bound + 1e-9,
            "trial {trial}: |{est} - {w}| > {bound}"
        );
    }
}
