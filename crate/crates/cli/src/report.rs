//! Per-trial experiment tables.

use std::io::Write;

use crate::error::CliResult;

/// One trial of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub n: usize,
    pub d: usize,
    pub lip: f64,
    pub ell: f64,
    pub k: usize,
    pub seed: u64,
    pub estimator_error: f64,
    pub plugin_error: f64,
    /// Only filled when timing is requested, so that reports are
    /// byte-for-byte reproducible by default.
    pub wall_time: Option<f64>,
}

/// Mean errors of one configuration over its trials.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigSummary {
    pub n: usize,
    pub d: usize,
    pub lip: f64,
    pub ell: f64,
    pub k: usize,
    pub trials: usize,
    pub mean_estimator_error: f64,
    pub mean_plugin_error: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentReport {
    /// `# key,value` lines written above the table.
    pub metadata: Vec<(String, String)>,
    pub rows: Vec<ReportRow>,
}

pub const HEADER: &str = "n,d,L,ell,K,seed,estimator_error,plugin_error,wall_time_s";

impl ExperimentReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> CliResult<()> {
        for (k, v) in &self.metadata {
            writeln!(out, "# {k},{v}")?;
        }
        writeln!(out, "{HEADER}")?;
        for r in &self.rows {
            let time = r.wall_time.map(|t| format!("{t:.3}")).unwrap_or_default();
            writeln!(
                out,
                "{},{},{:?},{:?},{},{},{:?},{:?},{}",
                r.n, r.d, r.lip, r.ell, r.k, r.seed, r.estimator_error, r.plugin_error, time
            )?;
        }
        Ok(())
    }

    /// Means per configuration, in order of first appearance.
    pub fn summary(&self) -> Vec<ConfigSummary> {
        let mut out: Vec<ConfigSummary> = Vec::new();
        for r in &self.rows {
            let pos = out.iter().position(|s| {
                (s.n, s.d, s.k) == (r.n, r.d, r.k) && s.lip == r.lip && s.ell == r.ell
            });
            let s = match pos {
                Some(p) => &mut out[p],
                None => {
                    out.push(ConfigSummary {
                        n: r.n,
                        d: r.d,
                        lip: r.lip,
                        ell: r.ell,
                        k: r.k,
                        trials: 0,
                        mean_estimator_error: 0.0,
                        mean_plugin_error: 0.0,
                    });
                    out.last_mut().expect("just pushed")
                }
            };
            s.trials += 1;
            s.mean_estimator_error += r.estimator_error;
            s.mean_plugin_error += r.plugin_error;
        }
        for s in &mut out {
            s.mean_estimator_error /= s.trials as f64;
            s.mean_plugin_error /= s.trials as f64;
        }
        out
    }

    /// Mean estimator error of the configuration `(n, L)`.
    pub fn mean_error(&self, n: usize, lip: f64) -> Option<f64> {
        self.summary()
            .into_iter()
            .find(|s| s.n == n && s.lip == lip)
            .map(|s| s.mean_estimator_error)
    }
}
