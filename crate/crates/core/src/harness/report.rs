//! JSON and CSV output.

use std::io::Write;

use serde::Serialize;

use super::es::SensitivityReport;
use crate::error::{invalid, Result};

/// Column order of the CSV output.
pub const CSV_HEADER: [&str; 13] = [
    "eta",
    "n",
    "d",
    "k",
    "estimator",
    "adversary",
    "q",
    "es_estimate",
    "ci_low",
    "ci_high",
    "lower_bound_only",
    "trials",
    "seed",
];

#[derive(Serialize)]
struct CsvRow<'a> {
    eta: f64,
    n: usize,
    d: usize,
    k: usize,
    estimator: &'a str,
    adversary: &'a str,
    q: u32,
    es_estimate: f64,
    ci_low: f64,
    ci_high: f64,
    lower_bound_only: bool,
    trials: u64,
    seed: u64,
}

impl<'a> From<&'a SensitivityReport> for CsvRow<'a> {
    fn from(r: &'a SensitivityReport) -> Self {
        Self {
            eta: r.eta,
            n: r.n,
            d: r.d,
            k: r.k,
            estimator: &r.estimator,
            adversary: &r.adversary,
            q: r.q,
            es_estimate: r.es_estimate,
            ci_low: r.ci_low,
            ci_high: r.ci_high,
            lower_bound_only: r.lower_bound_only,
            trials: r.trials,
            seed: r.seed,
        }
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| invalid(format!("JSON encoding failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// Writes a header and one row per report.
pub fn write_csv<W: Write>(reports: &[SensitivityReport], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    let fail = |e: csv::Error| invalid(format!("CSV output failed: {e}"));
    w.write_record(CSV_HEADER).map_err(fail)?;
    for r in reports {
        w.serialize(CsvRow::from(r)).map_err(fail)?;
    }
    w.flush().map_err(|e| invalid(format!("CSV output failed: {e}")))?;
    Ok(())
}

pub fn to_csv(reports: &[SensitivityReport]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(reports, &mut buf)?;
    Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
}
