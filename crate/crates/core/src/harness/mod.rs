//! Experiments: sensitivity estimation, scaling sweeps, the obstruction
//! experiments and the verification suite, with their output formats.

mod config;
mod es;
mod obstruction;
mod report;
mod scaling;
mod verify;

pub use config::{config_to_args, parse_config};
pub use es::{estimate_es, AdversarySpec, EsConfig, Model, SensitivityReport, SweepVariable, ADVERSARY_NAMES, SCHEMA};
pub use obstruction::{
    coupling_obstruction_high, mean_obstruction_low, variance_obstruction, HighObstructionReport, LowObstructionReport, Prior,
    VarianceObstructionReport,
};
pub use report::{to_csv, to_json, write_csv, CSV_HEADER};
pub use scaling::{fit_line, grid_config, scaling_sweep, ScalingFit, MAX_RELATIVE_HALF_WIDTH, MIN_POINTS};
pub use verify::{verify_suite, VerifyReport, DEFAULT_TRIALS_SCALE};
