//! Color transfer: pixels become points of `[0,1]³`, both palettes are
//! summarized by k-means, and the source is recolored through the gradient
//! of an SSNB potential fitted between the summaries.

use std::collections::BTreeMap;
use std::path::Path;

use image::RgbImage;
use log::warn;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use ssnb::measures::{kmeans, DiscreteMeasure, Partition};
use ssnb::potential::{evaluate, fit, PotentialData, SsnbConfig};
use ssnb::transport::{w2_distance, MAX_EXACT_CELLS};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone)]
pub struct ColorTransferParams {
    pub ell: f64,
    pub lip: f64,
    /// Cells of the SSNB partition (1: one global potential).
    pub clusters: usize,
    /// k-means clusters summarizing each color cloud.
    pub palette: usize,
    /// k-means clusters of the source used for recoloring.
    pub recolor: usize,
    /// Pixels per side when measuring the output-to-target distance; the
    /// product of the two sides must stay within the exact solver's cap.
    pub max_w_pixels: usize,
    pub outer_tol: f64,
    pub seed: u64,
}

impl Default for ColorTransferParams {
    fn default() -> Self {
        Self {
            ell: 0.0,
            lip: 1.0,
            clusters: 1,
            palette: 30,
            recolor: 1000,
            max_w_pixels: 1000,
            outer_tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ColorTransferResult {
    pub image: RgbImage,
    /// `W_2` between (subsampled) output and target colors.
    pub w2: f64,
    /// Recoloring centroids and their images under `∇f` before clamping.
    pub centroids: Vec<Vec<f64>>,
    pub mapped: Vec<Vec<f64>>,
    pub potential: PotentialData,
}

fn to_unit(c: [u8; 3]) -> Vec<f64> {
    c.iter().map(|&v| f64::from(v) / 255.0).collect()
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Distinct colors of `img` with their pixel frequencies, and for every
/// pixel the index of its color.
fn color_measure(img: &RgbImage) -> CliResult<(DiscreteMeasure, Vec<usize>)> {
    let mut counts: BTreeMap<[u8; 3], usize> = BTreeMap::new();
    for p in img.pixels() {
        *counts.entry(p.0).or_default() += 1;
    }
    if counts.is_empty() {
        return Err(CliError::Usage("empty image".into()));
    }
    let index: BTreeMap<[u8; 3], usize> = counts.keys().enumerate().map(|(i, c)| (*c, i)).collect();
    let total = (img.width() * img.height()) as f64;
    let points = counts.keys().map(|c| to_unit(*c)).collect();
    let weights = counts.values().map(|&c| c as f64 / total).collect();
    let per_pixel = img.pixels().map(|p| index[&p.0]).collect();
    Ok((DiscreteMeasure::new(points, weights)?, per_pixel))
}

fn clusters_for(
    measure: &DiscreteMeasure,
    k: usize,
    what: &str,
    seed: u64,
) -> CliResult<Partition> {
    let k = if k > measure.len() {
        warn!(
            "{what}: only {} distinct colors, reducing k-means from {k}",
            measure.len()
        );
        measure.len()
    } else {
        k
    };
    Ok(kmeans(measure, k, seed)?)
}

/// Centroids weighted by the mass of their clusters.
fn summarize(
    measure: &DiscreteMeasure,
    k: usize,
    what: &str,
    seed: u64,
) -> CliResult<DiscreteMeasure> {
    let part = clusters_for(measure, k, what, seed)?;
    let mut mass = vec![0.0; part.num_clusters()];
    for (&c, w) in part.assignment().iter().zip(measure.weights()) {
        mass[c] += w;
    }
    Ok(DiscreteMeasure::new(part.centroids().to_vec(), mass)?)
}

/// Empirical color measure of at most `max` pixels drawn without
/// replacement, repeated colors merged into one weighted atom.
fn pixel_sample(img: &RgbImage, max: usize, rng: &mut ChaCha8Rng) -> CliResult<DiscreteMeasure> {
    let pixels: Vec<[u8; 3]> = img.pixels().map(|p| p.0).collect();
    let picked: Vec<usize> = if pixels.len() <= max {
        (0..pixels.len()).collect()
    } else {
        sample(rng, pixels.len(), max).into_vec()
    };
    let total = picked.len() as f64;
    let mut counts: BTreeMap<[u8; 3], usize> = BTreeMap::new();
    for i in picked {
        *counts.entry(pixels[i]).or_default() += 1;
    }
    let points = counts.keys().map(|c| to_unit(*c)).collect();
    let weights = counts.values().map(|&c| c as f64 / total).collect();
    Ok(DiscreteMeasure::new(points, weights)?)
}

pub fn color_transfer(
    source: &RgbImage,
    target: &RgbImage,
    params: &ColorTransferParams,
) -> CliResult<ColorTransferResult> {
    if !(params.ell >= 0.0 && params.ell <= params.lip && params.lip.is_finite()) {
        return Err(CliError::Usage(format!(
            "need 0 ≤ ell ≤ L < ∞, got ell={} L={}",
            params.ell, params.lip
        )));
    }
    if params.max_w_pixels.saturating_mul(params.max_w_pixels) > MAX_EXACT_CELLS {
        return Err(CliError::Usage(format!(
            "at most {} pixels per side can be compared exactly",
            (MAX_EXACT_CELLS as f64).sqrt() as usize
        )));
    }
    if params.palette == 0
        || params.recolor == 0
        || params.clusters == 0
        || params.max_w_pixels == 0
    {
        return Err(CliError::Usage(
            "cluster counts and sample sizes must be positive".into(),
        ));
    }
    let (src_colors, src_index) = color_measure(source)?;
    let (tgt_colors, _) = color_measure(target)?;
    let mu = summarize(&src_colors, params.palette, "source", params.seed)?;
    let nu = summarize(&tgt_colors, params.palette, "target", params.seed)?;

    let partition = if params.clusters == 1 {
        Partition::whole(&mu)
    } else {
        clusters_for(&mu, params.clusters, "partition", params.seed)?
    };
    let mut config = SsnbConfig::new(params.ell, params.lip, partition)?;
    config.outer_tol = params.outer_tol;
    let potential = fit(&mu, &nu, &config)?;

    let recolor = clusters_for(&src_colors, params.recolor, "recolor", params.seed)?;
    let centroids = recolor.centroids().to_vec();
    let mapped: Vec<Vec<f64>> = centroids
        .par_iter()
        .map(|c| evaluate(&potential, c).map(|e| e.g))
        .collect::<ssnb::Result<_>>()?;
    let colors: Vec<[u8; 3]> = mapped
        .iter()
        .map(|g| [to_byte(g[0]), to_byte(g[1]), to_byte(g[2])])
        .collect();

    let mut image = RgbImage::new(source.width(), source.height());
    for (out, &color) in image.pixels_mut().zip(&src_index) {
        out.0 = colors[recolor.assignment()[color]];
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let out_sample = pixel_sample(&image, params.max_w_pixels, &mut rng)?;
    let tgt_sample = pixel_sample(target, params.max_w_pixels, &mut rng)?;
    let w2 = w2_distance(&out_sample, &tgt_sample)?;
    Ok(ColorTransferResult {
        image,
        w2,
        centroids,
        mapped,
        potential,
    })
}

pub fn load_rgb(path: impl AsRef<Path>) -> CliResult<RgbImage> {
    Ok(image::open(path)?.to_rgb8())
}

pub fn save_rgb(img: &RgbImage, path: impl AsRef<Path>) -> CliResult<()> {
    Ok(img.save_with_format(path, image::ImageFormat::Png)?)
}
