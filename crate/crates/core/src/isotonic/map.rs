//! The fitted piecewise-affine map and its CSV form.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{solve_isotonic, IsotonicProblem, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::error::{invalid, Error, Result};
use crate::measures::{DiscreteMeasure, Partition};
use crate::transport::{barycentric_projection_1d, w2_squared_1d};

/// Knot range `start..end` of one cluster and its centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSpan {
    pub start: usize,
    pub end: usize,
    pub centroid: f64,
}

/// Piecewise-affine 1D map, slope-bounded on each cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct Map1D {
    knots: Vec<f64>,
    values: Vec<f64>,
    weights: Vec<f64>,
    ell: f64,
    lip: f64,
    spans: Vec<ClusterSpan>,
}

impl Map1D {
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// μ-mass carried by each knot.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn ell(&self) -> f64 {
        self.ell
    }

    pub fn lip(&self) -> f64 {
        self.lip
    }

    pub fn spans(&self) -> &[ClusterSpan] {
        &self.spans
    }

    /// Evaluates the map; see [`eval_map_1d`].
    pub fn eval(&self, x: f64) -> f64 {
        let span = &self.spans[self.locate(x)];
        let xs = &self.knots[span.start..span.end];
        let zs = &self.values[span.start..span.end];
        let n = xs.len();
        if n == 1 {
            return zs[0] + 0.5 * (self.ell + self.lip) * (x - xs[0]);
        }
        let slope =
            |i: usize| ((zs[i + 1] - zs[i]) / (xs[i + 1] - xs[i])).clamp(self.ell, self.lip);
        if x <= xs[0] {
            return zs[0] + slope(0) * (x - xs[0]);
        }
        if x >= xs[n - 1] {
            return zs[n - 1] + slope(n - 2) * (x - xs[n - 1]);
        }
        // first knot strictly greater than x
        let hi = xs.partition_point(|&k| k <= x);
        let lo = hi - 1;
        let t = (x - xs[lo]) / (xs[hi] - xs[lo]);
        zs[lo] + t * (zs[hi] - zs[lo])
    }

    /// A potential of the map: its antiderivative on the nearest cluster,
    /// shifted so that the smallest value over that cluster's knots is 0.
    pub fn potential(&self, x: f64) -> f64 {
        let span = &self.spans[self.locate(x)];
        let xs = &self.knots[span.start..span.end];
        let zs = &self.values[span.start..span.end];
        let n = xs.len();
        if n == 1 {
            let h = x - xs[0];
            return zs[0] * h + 0.25 * (self.ell + self.lip) * h * h;
        }
        let mut u = vec![0.0; n];
        for i in 1..n {
            u[i] = u[i - 1] + 0.5 * (xs[i] - xs[i - 1]) * (zs[i] + zs[i - 1]);
        }
        let floor = u.iter().cloned().fold(f64::INFINITY, f64::min);
        // on each linear piece, ∫ (z_0 + s t) dt = z_0 h + s h² / 2
        let piece = |i: usize, s: f64| {
            let h = x - xs[i];
            u[i] - floor + zs[i] * h + 0.5 * s * h * h
        };
        let end_slope =
            |i: usize| ((zs[i + 1] - zs[i]) / (xs[i + 1] - xs[i])).clamp(self.ell, self.lip);
        if x <= xs[0] {
            return piece(0, end_slope(0));
        }
        if x >= xs[n - 1] {
            return piece(n - 1, end_slope(n - 2));
        }
        let lo = xs.partition_point(|&k| k <= x) - 1;
        piece(lo, (zs[lo + 1] - zs[lo]) / (xs[lo + 1] - xs[lo]))
    }

    /// Index of the cluster whose centroid is nearest to `x`.
    pub fn locate(&self, x: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, s) in self.spans.iter().enumerate() {
            let d = (x - s.centroid).abs();
            if d < best_d {
                best = k;
                best_d = d;
            }
        }
        best
    }

    /// The image measure `Σ a_i δ_{z_i}`.
    pub fn pushforward(&self) -> Result<DiscreteMeasure> {
        DiscreteMeasure::from_1d(&self.values, &self.weights)
    }

    /// `W₂²(z♯μ, ν)`.
    pub fn transport_cost(&self, nu: &DiscreteMeasure) -> Result<f64> {
        if nu.dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: nu.dim(),
            });
        }
        w2_squared_1d(&self.values, &self.weights, &nu.coords_1d(), nu.weights())
    }

    /// Largest violation of the per-cluster slope bounds.
    pub fn max_distortion_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for s in &self.spans {
            for i in s.start..s.end - 1 {
                let dx = self.knots[i + 1] - self.knots[i];
                let dz = self.values[i + 1] - self.values[i];
                worst = worst.max(self.ell * dx - dz).max(dz - self.lip * dx);
            }
        }
        worst
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut out = BufWriter::new(out);
        writeln!(out, "# ell,{:?}", self.ell)?;
        writeln!(out, "# L,{:?}", self.lip)?;
        for s in &self.spans {
            writeln!(out, "# cluster,{},{},{:?}", s.start, s.end, s.centroid)?;
        }
        writeln!(out, "x,z,weight")?;
        for i in 0..self.knots.len() {
            writeln!(
                out,
                "{:?},{:?},{:?}",
                self.knots[i], self.values[i], self.weights[i]
            )?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(File::create(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_map(File::open(path)?)
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn num(field: &str, line: usize) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| parse_err(line, format!("invalid number `{}`", field.trim())))
}

/// Reads a map written by [`Map1D::write_csv`].
pub fn read_map<R: Read>(src: R) -> Result<Map1D> {
    let mut ell = None;
    let mut lip = None;
    let mut spans = Vec::new();
    let (mut knots, mut values, mut weights) = (Vec::new(), Vec::new(), Vec::new());
    let mut seen_header = false;
    for (idx, line) in BufReader::new(src).lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if let Some(meta) = text.strip_prefix('#') {
            let fields: Vec<&str> = meta.split(',').map(str::trim).collect();
            match fields.as_slice() {
                ["ell", v] => ell = Some(num(v, lineno)?),
                ["L", v] => lip = Some(num(v, lineno)?),
                ["cluster", s, e, c] => spans.push(ClusterSpan {
                    start: s
                        .parse()
                        .map_err(|_| parse_err(lineno, "bad cluster start"))?,
                    end: e
                        .parse()
                        .map_err(|_| parse_err(lineno, "bad cluster end"))?,
                    centroid: num(c, lineno)?,
                }),
                _ => {}
            }
            continue;
        }
        if !seen_header {
            if text.replace(' ', "") != "x,z,weight" {
                return Err(parse_err(lineno, "expected header `x,z,weight`"));
            }
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = text.split(',').collect();
        if fields.len() != 3 {
            return Err(parse_err(
                lineno,
                format!("expected 3 fields, found {}", fields.len()),
            ));
        }
        knots.push(num(fields[0], lineno)?);
        values.push(num(fields[1], lineno)?);
        weights.push(num(fields[2], lineno)?);
    }
    let ell = ell.ok_or_else(|| parse_err(1, "missing `# ell,` line"))?;
    let lip = lip.ok_or_else(|| parse_err(1, "missing `# L,` line"))?;
    let n = knots.len();
    if n == 0 || spans.is_empty() {
        return Err(parse_err(1, "map has no knots or no clusters"));
    }
    let mut next = 0;
    for s in &spans {
        if s.start != next || s.end <= s.start || s.end > n {
            return Err(invalid("cluster ranges must tile the knot list"));
        }
        next = s.end;
    }
    if next != n {
        return Err(invalid("cluster ranges must tile the knot list"));
    }
    Ok(Map1D {
        knots,
        values,
        weights,
        ell,
        lip,
        spans,
    })
}

/// Evaluates the fitted map at `x`: linear interpolation between the knots
/// of the nearest cluster, linear extension beyond them with the boundary
/// slope clamped to `[ell, L]` (`(ell+L)/2` for a single-knot cluster).
pub fn eval_map_1d(map: &Map1D, x: f64) -> f64 {
    map.eval(x)
}

/// Fits the univariate SSNB map from `mu` to `nu` on `partition`.
pub fn fit_ssnb_1d(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    ell: f64,
    lip: f64,
    partition: &Partition,
) -> Result<Map1D> {
    for d in [mu.dim(), nu.dim(), partition.dim()] {
        if d != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: d,
            });
        }
    }
    let targets = barycentric_projection_1d(mu, nu)?;
    let xs = mu.coords_1d();
    let k = partition.num_clusters();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, p) in mu.points().iter().enumerate() {
        members[partition.locate(p)?].push(i);
    }
    let mut order = Vec::with_capacity(xs.len());
    let mut ranges = Vec::new();
    let mut centroids = Vec::new();
    for (c, mut idx) in members.into_iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        idx.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
        ranges.push(order.len()..order.len() + idx.len());
        centroids.push(partition.centroids()[c][0]);
        order.extend(idx);
    }
    let px: Vec<f64> = order.iter().map(|&i| xs[i]).collect();
    let pw: Vec<f64> = order.iter().map(|&i| targets[i]).collect();
    let pa: Vec<f64> = order.iter().map(|&i| mu.weights()[i]).collect();
    let problem = IsotonicProblem::new(px.clone(), pw, pa.clone(), ell, lip, ranges.clone())?;
    let z = solve_isotonic(&problem, DEFAULT_TOL, DEFAULT_MAX_ITER)?;

    // collapse duplicate positions into knots
    let (mut knots, mut values, mut weights, mut spans) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (r, centroid) in ranges.into_iter().zip(centroids) {
        let start = knots.len();
        for i in r {
            if knots.len() > start && *knots.last().unwrap() == px[i] {
                *weights.last_mut().unwrap() += pa[i];
            } else {
                knots.push(px[i]);
                values.push(z[i]);
                weights.push(pa[i]);
            }
        }
        spans.push(ClusterSpan {
            start,
            end: knots.len(),
            centroid,
        });
    }
    Ok(Map1D {
        knots,
        values,
        weights,
        ell,
        lip,
        spans,
    })
}
