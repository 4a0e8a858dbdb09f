//! Median/IQR aggregation, CSV output and run manifests.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::units::mw_to_dbm;

use super::config::ExperimentConfig;
use super::sim::TrialMetrics;

/// Median and interquartile range of one quantity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub iqr: f64,
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Median and IQR, ignoring NaN entries; `None` if nothing is left.
pub fn summarize(values: impl IntoIterator<Item = f64>) -> Option<Summary> {
    let mut v: Vec<f64> = values.into_iter().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(Summary {
        median: quantile(&v, 0.5),
        iqr: quantile(&v, 0.75) - quantile(&v, 0.25),
    })
}

/// One sweep point of one series.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub series: String,
    pub sweep_variable: f64,
    pub trials: usize,
    pub rsi_dbm: Summary,
    /// RSI with the noise realization removed.
    pub reconstruction_dbm: Summary,
    pub truncation_dbm: Option<Summary>,
    pub bire_dbm: Option<Summary>,
    pub nire_dbm: Option<Summary>,
    pub noise_dbm: Summary,
    pub cancellation_db: Summary,
    pub criterion_value: Summary,
}

impl ResultRow {
    /// Aggregate per-trial metrics; dB quantities are summarized in dB.
    pub fn from_trials(series: &str, sweep_variable: f64, trials: &[TrialMetrics]) -> Self {
        let db = |f: &dyn Fn(&TrialMetrics) -> f64| summarize(trials.iter().map(|t| mw_to_dbm(f(t))));
        let opt_db = |f: &dyn Fn(&TrialMetrics) -> Option<f64>| summarize(trials.iter().filter_map(|t| f(t).map(mw_to_dbm)));
        let nan = Summary {
            median: f64::NAN,
            iqr: f64::NAN,
        };
        Self {
            series: series.to_string(),
            sweep_variable,
            trials: trials.len(),
            rsi_dbm: db(&|t| t.rsi).unwrap_or(nan),
            reconstruction_dbm: db(&|t| t.reconstruction).unwrap_or(nan),
            truncation_dbm: opt_db(&|t| t.truncation),
            bire_dbm: opt_db(&|t| t.bire),
            nire_dbm: opt_db(&|t| t.nire),
            noise_dbm: db(&|t| t.noise).unwrap_or(nan),
            cancellation_db: summarize(trials.iter().map(|t| t.cancellation_db())).unwrap_or(nan),
            criterion_value: summarize(trials.iter().map(|t| t.criterion)).unwrap_or(nan),
        }
    }
}

/// Aggregated sweep results, one row per (series, sweep point).
#[derive(Clone, Debug, PartialEq)]
pub struct ResultTable {
    pub experiment: String,
    pub sweep_name: String,
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub const CSV_HEADER: [&'static str; 21] = [
        "series",
        "sweep_variable",
        "trials",
        "rsi_dbm_median",
        "rsi_dbm_iqr",
        "reconstruction_dbm_median",
        "reconstruction_dbm_iqr",
        "truncation_dbm_median",
        "truncation_dbm_iqr",
        "bire_dbm_median",
        "bire_dbm_iqr",
        "nire_dbm_median",
        "nire_dbm_iqr",
        "noise_dbm_median",
        "noise_dbm_iqr",
        "cancellation_db_median",
        "cancellation_db_iqr",
        "criterion_value_median",
        "criterion_value_iqr",
        "sweep_name",
        "experiment",
    ];

    pub fn new(experiment: &str, sweep_name: &str) -> Self {
        Self {
            experiment: experiment.to_string(),
            sweep_name: sweep_name.to_string(),
            rows: Vec::new(),
        }
    }

    /// Rows of one series in sweep order.
    pub fn series(&self, name: &str) -> Vec<&ResultRow> {
        self.rows.iter().filter(|r| r.series == name).collect()
    }

    pub fn series_names(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for r in &self.rows {
            if !names.contains(&r.series) {
                names.push(r.series.clone());
            }
        }
        names
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(Self::CSV_HEADER)?;
        let num = |v: f64| format!("{v:.6}");
        let pair = |s: &Summary| [num(s.median), num(s.iqr)];
        let opt = |s: &Option<Summary>| s.as_ref().map(pair).unwrap_or([String::new(), String::new()]);
        for r in &self.rows {
            let mut rec = vec![r.series.clone(), format!("{}", r.sweep_variable), r.trials.to_string()];
            rec.extend(pair(&r.rsi_dbm));
            rec.extend(pair(&r.reconstruction_dbm));
            rec.extend(opt(&r.truncation_dbm));
            rec.extend(opt(&r.bire_dbm));
            rec.extend(opt(&r.nire_dbm));
            rec.extend(pair(&r.noise_dbm));
            rec.extend(pair(&r.cancellation_db));
            rec.extend([format!("{:.6e}", r.criterion_value.median), format!("{:.6e}", r.criterion_value.iqr)]);
            rec.push(self.sweep_name.clone());
            rec.push(self.experiment.clone());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Provenance record written next to every output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub version: String,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(config: &ExperimentConfig, outputs: Vec<String>) -> Result<Self> {
        Ok(Self {
            experiment: config.experiment.name().to_string(),
            config_hash: config.hash()?,
            master_seed: config.master_seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            outputs,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| crate::Error::Config(e.to_string()))?;
        std::fs::write(dir.join("manifest.toml"), text)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_examples() {
        let s = summarize([3.0, 1.0, 2.0, 4.0]).unwrap();
        assert_eq!(s.median, 2.5);
        assert_eq!(s.iqr, 3.25 - 1.75);
        let s = summarize([5.0, f64::NAN]).unwrap();
        assert_eq!(s, Summary { median: 5.0, iqr: 0.0 });
        assert!(summarize([f64::NAN]).is_none());
    }

    #[test]
    fn summary_is_order_insensitive() {
        let a = [1.0, 9.0, 3.0, 7.0, 5.0, 2.0];
        let mut b = a;
        b.reverse();
        assert_eq!(summarize(a), summarize(b));
    }
}
