//! Potential files: `#`-prefixed metadata, then one row per atom.
//!
//! ```text
//! # ell,0.5
//! # L,2.0
//! # K,2
//! # centroid,0,<c_1>,...,<c_d>
//! # objective,<W₂²>
//! i,cluster,weight,u,x1,...,xd,z1,...,zd
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::measures::Partition;

use super::{FitStatus, PotentialData};

impl PotentialData {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut out = BufWriter::new(out);
        let d = self.dim();
        writeln!(out, "# ell,{:?}", self.ell)?;
        writeln!(out, "# L,{:?}", self.lip)?;
        writeln!(out, "# K,{}", self.partition.num_clusters())?;
        for (k, c) in self.partition.centroids().iter().enumerate() {
            let coords: Vec<String> = c.iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "# centroid,{k},{}", coords.join(","))?;
        }
        writeln!(out, "# objective,{:?}", self.objective)?;
        let mut header = vec![
            "i".to_string(),
            "cluster".into(),
            "weight".into(),
            "u".into(),
        ];
        header.extend((1..=d).map(|k| format!("x{k}")));
        header.extend((1..=d).map(|k| format!("z{k}")));
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.len() {
            let mut row = vec![
                i.to_string(),
                self.partition.assignment()[i].to_string(),
                format!("{:?}", self.weights[i]),
                format!("{:?}", self.u[i]),
            ];
            row.extend(self.points[i].iter().map(|v| format!("{v:?}")));
            row.extend(self.z[i].iter().map(|v| format!("{v:?}")));
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(File::create(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_potential(File::open(path)?)
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn num(s: &str, line: usize) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| parse_err(line, format!("invalid number `{}`", s.trim())))
}

fn index(s: &str, line: usize) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| parse_err(line, format!("invalid index `{}`", s.trim())))
}

/// Reads a potential written by [`PotentialData::write_csv`].
pub fn read_potential<R: Read>(src: R) -> Result<PotentialData> {
    let (mut ell, mut lip, mut k, mut objective) = (None, None, None, f64::NAN);
    let mut centroids: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut dim = None;
    let (mut points, mut z, mut u, mut weights, mut assignment) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (idx, line) in BufReader::new(src).lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if let Some(meta) = text.strip_prefix('#') {
            let fields: Vec<&str> = meta.split(',').map(str::trim).collect();
            match fields[0] {
                "ell" if fields.len() == 2 => ell = Some(num(fields[1], lineno)?),
                "L" if fields.len() == 2 => lip = Some(num(fields[1], lineno)?),
                "K" if fields.len() == 2 => k = Some(index(fields[1], lineno)?),
                "objective" if fields.len() == 2 => objective = num(fields[1], lineno)?,
                "centroid" if fields.len() >= 3 => {
                    let c = fields[2..]
                        .iter()
                        .map(|f| num(f, lineno))
                        .collect::<Result<Vec<_>>>()?;
                    centroids.push((index(fields[1], lineno)?, c));
                }
                _ => {}
            }
            continue;
        }
        let fields: Vec<&str> = text.split(',').map(str::trim).collect();
        let Some(d) = dim else {
            if fields.len() < 6
                || fields[..4] != ["i", "cluster", "weight", "u"]
                || (fields.len() - 4) % 2 != 0
            {
                return Err(parse_err(
                    lineno,
                    "expected header `i,cluster,weight,u,x1..xd,z1..zd`",
                ));
            }
            dim = Some((fields.len() - 4) / 2);
            continue;
        };
        if fields.len() != 4 + 2 * d {
            return Err(parse_err(
                lineno,
                format!("expected {} fields, found {}", 4 + 2 * d, fields.len()),
            ));
        }
        if index(fields[0], lineno)? != points.len() {
            return Err(parse_err(
                lineno,
                "rows must be numbered consecutively from 0",
            ));
        }
        assignment.push(index(fields[1], lineno)?);
        weights.push(num(fields[2], lineno)?);
        u.push(num(fields[3], lineno)?);
        points.push(
            fields[4..4 + d]
                .iter()
                .map(|f| num(f, lineno))
                .collect::<Result<Vec<_>>>()?,
        );
        z.push(
            fields[4 + d..]
                .iter()
                .map(|f| num(f, lineno))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let ell = ell.ok_or_else(|| parse_err(1, "missing `# ell,` line"))?;
    let lip = lip.ok_or_else(|| parse_err(1, "missing `# L,` line"))?;
    let d = dim.ok_or_else(|| parse_err(1, "missing header row"))?;
    if points.is_empty() {
        return Err(parse_err(1, "no atoms"));
    }
    centroids.sort_by_key(|c| c.0);
    let k = k.unwrap_or(centroids.len());
    if centroids.len() != k || centroids.iter().enumerate().any(|(i, c)| c.0 != i) {
        return Err(invalid("centroid lines must be numbered 0..K"));
    }
    if centroids.iter().any(|c| c.1.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: centroids
                .iter()
                .map(|c| c.1.len())
                .find(|&l| l != d)
                .unwrap_or(d),
        });
    }
    if assignment.iter().any(|&c| c >= k) {
        return Err(invalid("cluster index out of range"));
    }
    if !(ell >= 0.0 && ell <= lip) {
        return Err(invalid(format!(
            "need 0 <= ell <= L, got ell={ell}, L={lip}"
        )));
    }
    let partition = Partition::compact(centroids.into_iter().map(|c| c.1).collect(), assignment);
    Ok(PotentialData {
        points,
        weights,
        u,
        z,
        ell,
        lip,
        partition,
        coupling: None,
        objective,
        history: Vec::new(),
        status: FitStatus::Loaded,
        sdp_warnings: Vec::new(),
    })
}
