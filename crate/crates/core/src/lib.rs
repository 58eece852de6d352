//! Smooth strongly-convex nearest-Brenier (SSNB) potentials between discrete
//! probability measures.
//!
//! Given `mu = Σ a_i δ_{x_i}` and `nu = Σ b_j δ_{y_j}`, an SSNB potential is an
//! `ell`-strongly convex, `L`-smooth function `f` (locally, on the cells of a
//! partition of the ambient space) whose gradient pushes `mu` as close as
//! possible to `nu` in 2-Wasserstein distance. The map `∇f` then has bounded
//! distortion: `ell |x - y| <= |∇f(x) - ∇f(y)| <= L |x - y|`.
//!
//! ## Layout
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`measures`] | discrete measures, k-means partitions, CSV I/O |
//! | [`transport`] | cost matrices, Sinkhorn, network simplex, Hungarian, 1D quantile couplings |
//! | [`isotonic`] | univariate potentials via Lipschitz / strongly-increasing isotonic regression |
//! | [`sdp`] | dense single-block SDP solver (ADMM) |
//! | [`potential`] | multivariate pipeline: alternate minimization, out-of-sample evaluation, Monte-Carlo estimator |
//!
//! ## Quick start
//!
//! ```rust
//! use ssnb::measures::{kmeans, DiscreteMeasure};
//! use ssnb::potential::{fit, evaluate, SsnbConfig};
//!
//! let mu = DiscreteMeasure::uniform(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
//! let nu = DiscreteMeasure::uniform(vec![vec![0.5, 0.0], vec![1.5, 0.0], vec![0.5, 1.0]]).unwrap();
//! let partition = kmeans(&mu, 1, 0).unwrap();
//! let config = SsnbConfig::new(1.0, 1.0, partition).unwrap();
//! let potential = fit(&mu, &nu, &config).unwrap();
//! let e = evaluate(&potential, &[0.2, 0.2]).unwrap();
//! assert!((e.g[0] - 0.7).abs() < 1e-8);
//! ```

pub mod error;
pub mod isotonic;
pub mod measures;
pub mod potential;
pub mod sdp;
pub mod transport;

pub use error::{Error, Result};

pub(crate) mod linalg;
