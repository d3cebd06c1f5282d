//! Log-log rate fits over a grid of one configuration variable.

use serde::Serialize;

use super::es::{EsConfig, Model, SensitivityReport, SweepVariable, SCHEMA};
use crate::error::{invalid, Result, SensError};

/// Minimum number of grid points that survive CI filtering.
pub const MIN_POINTS: usize = 4;
/// A point is used only when its CI half-width is below this fraction of the estimate.
pub const MAX_RELATIVE_HALF_WIDTH: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingFit {
    pub schema: String,
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub estimates: Vec<f64>,
    pub used: Vec<bool>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub reports: Vec<SensitivityReport>,
}

/// Least-squares line through `(x, y)`: `(slope, intercept, r^2)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    (slope, intercept, r_squared)
}

fn integral(v: f64, what: SweepVariable) -> Result<usize> {
    if v < 1.0 || v.fract() != 0.0 {
        return Err(invalid(format!("sweep over {what} needs positive integers, got {v}")));
    }
    Ok(v as usize)
}

/// The configuration at one grid point.
pub fn grid_config(base: &EsConfig, variable: SweepVariable, value: f64) -> Result<EsConfig> {
    let mut cfg = base.clone();
    match variable {
        SweepVariable::Eta => cfg.eta = value,
        SweepVariable::N => cfg.n = integral(value, variable)?,
        SweepVariable::D => {
            let d = integral(value, variable)?;
            let Model::Gaussian { mu } = &base.model else {
                return Err(invalid("sweep over d needs a Gaussian model"));
            };
            if mu.iter().any(|m| *m != mu[0]) {
                return Err(invalid("sweep over d needs a mean with equal coordinates"));
            }
            cfg.model = Model::gaussian(vec![mu[0]; d])?;
        }
    }
    Ok(cfg)
}

/// Runs the experiment at every grid value and fits `log ES` against `log value`.
pub fn scaling_sweep(base: &EsConfig, variable: SweepVariable, values: &[f64]) -> Result<ScalingFit> {
    if values.len() < MIN_POINTS {
        return Err(SensError::InsufficientPoints { usable: values.len(), required: MIN_POINTS });
    }
    if values.iter().any(|v| !v.is_finite() || *v <= 0.0) || values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("sweep grid must be positive and strictly increasing"));
    }
    let reports = values
        .iter()
        .map(|&v| grid_config(base, variable, v)?.run())
        .collect::<Result<Vec<_>>>()?;
    let used: Vec<bool> = reports
        .iter()
        .map(|r| r.es_estimate > 0.0 && r.ci_half_width() < MAX_RELATIVE_HALF_WIDTH * r.es_estimate)
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = values
        .iter()
        .zip(&reports)
        .zip(&used)
        .filter(|(_, &u)| u)
        .map(|((v, r), _)| (v.ln(), r.es_estimate.ln()))
        .unzip();
    if xs.len() < MIN_POINTS {
        return Err(SensError::InsufficientPoints { usable: xs.len(), required: MIN_POINTS });
    }
    let (slope, intercept, r_squared) = fit_line(&xs, &ys);
    Ok(ScalingFit {
        schema: SCHEMA.into(),
        variable,
        values: values.to_vec(),
        estimates: reports.iter().map(|r| r.es_estimate).collect(),
        used,
        slope,
        intercept,
        r_squared,
        reports,
    })
}
