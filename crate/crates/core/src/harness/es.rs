//! Monte Carlo estimation of distributional empirical sensitivity.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::adversaries::{
    block_layout, block_resample, distance, hamming_ball_sup, local_shift_adversary, median_worst_case,
    resampling_adversary, tv_coupling_adversary, AdversaryOutcome,
};
use crate::analysis::Moments;
use crate::data::{CorruptionBudget, Dataset, GaussianModel};
use crate::error::{invalid, Result, SensError};
use crate::estimators::{estimator_by_name, Estimator, RegistryOptions};
use crate::rng::RngStream;

/// Version tag carried by every JSON document.
pub const SCHEMA: &str = "senslab/v1";

/// Normal quantile for two-sided 95% intervals.
const Z95: f64 = 1.96;

pub const ADVERSARY_NAMES: &[&str] = &[
    "resample",
    "local-shift",
    "tv-coupling",
    "block-resample",
    "median-exact",
    "hamming-ball",
];

#[derive(Clone, Debug, PartialEq)]
pub enum AdversarySpec {
    /// Replace a random `k`-subset by fresh draws.
    Resample,
    /// Add `delta` to a random `k`-subset of scalar samples.
    LocalShift { delta: f64 },
    /// Maximal coupling with the model shifted by `eta`; trials where more
    /// than `k` coordinates disagree contribute zero.
    TvCoupling,
    /// Refresh one block of `k` consecutive rows; a uniformly random block per
    /// trial when `block` is unset.
    BlockResample { block: Option<usize> },
    /// Exact worst case for the median.
    MedianExact,
    /// Exhaustive Hamming-ball search on binary data.
    HammingBall,
}

impl AdversarySpec {
    /// Resolves a registry name. `delta` parameterizes `local-shift`.
    pub fn by_name(name: &str, delta: Option<f64>) -> Result<Self> {
        Ok(match name {
            "resample" => Self::Resample,
            "local-shift" => Self::LocalShift {
                delta: delta.ok_or_else(|| invalid("adversary `local-shift` needs a shift delta"))?,
            },
            "tv-coupling" => Self::TvCoupling,
            "block-resample" => Self::BlockResample { block: None },
            "median-exact" => Self::MedianExact,
            "hamming-ball" => Self::HammingBall,
            _ => return Err(SensError::UnknownAdversary(name.into())),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Resample => "resample",
            Self::LocalShift { .. } => "local-shift",
            Self::TvCoupling => "tv-coupling",
            Self::BlockResample { .. } => "block-resample",
            Self::MedianExact => "median-exact",
            Self::HammingBall => "hamming-ball",
        }
    }

    /// Whether per-trial certificates equal the pointwise sensitivity.
    pub fn is_exact(&self) -> bool {
        matches!(self, Self::MedianExact | Self::HammingBall)
    }
}

impl fmt::Display for AdversarySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Clean-data distribution.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Model {
    Gaussian { mu: Vec<f64> },
    Bernoulli { p: f64 },
}

impl Model {
    pub fn gaussian(mu: Vec<f64>) -> Result<Self> {
        GaussianModel::new(mu.clone())?;
        Ok(Self::Gaussian { mu })
    }

    pub fn bernoulli(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid(format!("p must lie in [0, 1], got {p}")));
        }
        Ok(Self::Bernoulli { p })
    }

    pub fn d(&self) -> usize {
        match self {
            Self::Gaussian { mu } => mu.len(),
            Self::Bernoulli { .. } => 1,
        }
    }

    fn gaussian_model(&self) -> Option<GaussianModel> {
        match self {
            Self::Gaussian { mu } => GaussianModel::new(mu.clone()).ok(),
            Self::Bernoulli { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SensitivityReport {
    pub schema: String,
    pub estimator: String,
    pub adversary: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block: Option<usize>,
    pub model: Model,
    pub n: usize,
    pub d: usize,
    pub eta: f64,
    pub k: usize,
    pub q: u32,
    pub trials: u64,
    pub seed: u64,
    pub es_estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Sample mean of the `q`-th powers of the certificates, with its standard error.
    pub moment: f64,
    pub moment_stderr: f64,
    pub lower_bound_only: bool,
    /// Trials whose corrupted dataset stayed within the budget.
    pub feasible_trials: u64,
    /// Per-trial certificates in trial order.
    #[serde(skip)]
    pub certificates: Vec<f64>,
}

impl SensitivityReport {
    pub fn ci_half_width(&self) -> f64 {
        0.5 * (self.ci_high - self.ci_low)
    }
}

/// `(mean +- 1.96 se)^(1/q)` on the `q`-th powers, lower end clamped at zero.
pub(crate) fn lq_summary(certificates: &[f64], q: u32) -> (f64, f64, f64, f64, f64) {
    let powered: Vec<f64> = certificates.iter().map(|c| c.powi(q as i32)).collect();
    let m = Moments::of(&powered);
    let se = m.stderr();
    let root = |v: f64| v.max(0.0).powf(1.0 / q as f64);
    let es = root(m.mean);
    let lo = root(m.mean - Z95 * se).min(es);
    let hi = root(m.mean + Z95 * se).max(es);
    (es, lo, hi, m.mean, se)
}

fn check_q(q: u32) -> Result<()> {
    if q != 1 && q != 2 {
        return Err(invalid(format!("q must be 1 or 2, got {q}")));
    }
    Ok(())
}

fn unbounded(f: &dyn Estimator, adversary: &AdversarySpec) -> SensError {
    SensError::UnboundedSensitivity {
        estimator: f.name(),
        adversary: adversary.name().into(),
    }
}

/// Rejects combinations the adversaries cannot run, and reports the mean under
/// unrestricted replacement as unbounded instead of estimating it.
fn check_combination(f: &dyn Estimator, adversary: &AdversarySpec, model: &Model, budget: &CorruptionBudget) -> Result<()> {
    let d = model.d();
    if let Some(m) = f.props().input_dim {
        if m != d {
            return Err(invalid(format!("estimator `{}` takes {m}-dimensional samples, model has d = {d}", f.name())));
        }
    }
    let gaussian = matches!(model, Model::Gaussian { .. });
    let unsupported = || SensError::Unsupported {
        estimator: f.name(),
        adversary: adversary.name().into(),
    };
    match adversary {
        AdversarySpec::MedianExact | AdversarySpec::HammingBall if gaussian && f.props().linear && budget.k >= 1 => {
            Err(unbounded(f, adversary))
        }
        AdversarySpec::MedianExact if !gaussian || f.name() != "median" => Err(unsupported()),
        AdversarySpec::HammingBall if gaussian => Err(invalid("adversary `hamming-ball` needs a Bernoulli model")),
        AdversarySpec::Resample | AdversarySpec::BlockResample { .. } | AdversarySpec::LocalShift { .. } | AdversarySpec::TvCoupling
            if !gaussian =>
        {
            Err(invalid(format!("adversary `{adversary}` needs a Gaussian model")))
        }
        AdversarySpec::LocalShift { .. } | AdversarySpec::TvCoupling | AdversarySpec::MedianExact if d != 1 => {
            Err(invalid(format!("adversary `{adversary}` acts on scalar samples, got d = {d}")))
        }
        AdversarySpec::LocalShift { .. } => budget.require_corruption(),
        AdversarySpec::BlockResample { block } => {
            if budget.k == 0 {
                return Ok(());
            }
            let m = block_layout(budget.n, budget.k)?.len();
            match block {
                Some(b) if *b >= m => Err(invalid(format!("block {b} out of range for M = {m}"))),
                _ => Ok(()),
            }
        }
        _ => Ok(()),
    }
}

struct TrialOutcome {
    certificate: f64,
    feasible: bool,
}

fn displacement(f: &dyn Estimator, clean: &Dataset, outcome: &AdversaryOutcome) -> f64 {
    distance(&f.evaluate(&outcome.corrupted), &f.evaluate(clean))
}

fn run_trial(
    f: &dyn Estimator,
    adversary: &AdversarySpec,
    model: &Model,
    gaussian: Option<&GaussianModel>,
    budget: &CorruptionBudget,
    seed: u64,
    t: u64,
) -> Result<TrialOutcome> {
    let stream = RngStream::new(seed, t);
    let clean_stream = stream.substream(0);
    let adv_stream = stream.substream(1);
    let n = budget.n;
    let from = |outcome: AdversaryOutcome, clean: &Dataset| TrialOutcome {
        certificate: displacement(f, clean, &outcome),
        feasible: outcome.feasible,
    };
    if let Model::Bernoulli { p } = model {
        let mut rng = clean_stream.rng();
        let bits: Vec<u8> = (0..n).map(|_| u8::from(rng.bernoulli(*p))).collect();
        let out = hamming_ball_sup(f, &bits, budget)?;
        return Ok(TrialOutcome {
            certificate: out.certificate.unwrap_or(0.0),
            feasible: out.feasible,
        });
    }
    let g = gaussian.expect("Gaussian model");
    if let AdversarySpec::TvCoupling = adversary {
        let (clean, out) = tv_coupling_adversary(g.mu()[0], budget.eta, n, adv_stream)?;
        let feasible = out.feasible;
        let certificate = if feasible { displacement(f, &clean, &out) } else { 0.0 };
        return Ok(TrialOutcome { certificate, feasible });
    }
    let clean = g.sample(n, &mut clean_stream.rng())?;
    Ok(match adversary {
        AdversarySpec::Resample => from(resampling_adversary(&clean, budget, g, adv_stream)?, &clean),
        AdversarySpec::LocalShift { delta } => from(local_shift_adversary(&clean, budget, *delta, adv_stream)?, &clean),
        AdversarySpec::BlockResample { block } => {
            if budget.k == 0 {
                return Ok(TrialOutcome { certificate: 0.0, feasible: true });
            }
            let m = block_layout(n, budget.k)?.len();
            let b = block.unwrap_or_else(|| stream.substream(2).rng().below(m));
            from(block_resample(&clean, budget, b, g, adv_stream)?, &clean)
        }
        AdversarySpec::MedianExact => {
            let out = median_worst_case(&clean, budget)?;
            TrialOutcome {
                certificate: out.certificate.unwrap_or(0.0),
                feasible: out.feasible,
            }
        }
        AdversarySpec::TvCoupling | AdversarySpec::HammingBall => unreachable!("handled above"),
    })
}

/// `ES_{eta,q}` of `f` under `model`, from `trials` independent trials.
///
/// Trial `t` draws its clean data from `RngStream::new(seed, t)`, so reports
/// are identical for any thread count. Unless the adversary is exact, each
/// certificate is a displacement the adversary achieved, hence the estimate is
/// a lower bound.
#[allow(clippy::too_many_arguments)]
pub fn estimate_es(
    f: &dyn Estimator,
    adversary: &AdversarySpec,
    model: &Model,
    eta: f64,
    n: usize,
    q: u32,
    trials: u64,
    seed: u64,
) -> Result<SensitivityReport> {
    check_q(q)?;
    if trials < 100 {
        return Err(invalid(format!("need at least 100 trials, got {trials}")));
    }
    let budget = CorruptionBudget::new(eta, n)?;
    check_combination(f, adversary, model, &budget)?;
    let gaussian = model.gaussian_model();
    let outcomes: Vec<Result<TrialOutcome>> = (0..trials)
        .into_par_iter()
        .map(|t| run_trial(f, adversary, model, gaussian.as_ref(), &budget, seed, t))
        .collect();
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let feasible_trials = outcomes.iter().filter(|o| o.feasible).count() as u64;
    let certificates: Vec<f64> = outcomes.into_iter().map(|o| o.certificate).collect();
    let (es_estimate, ci_low, ci_high, moment, moment_stderr) = lq_summary(&certificates, q);
    let (delta, block) = match adversary {
        AdversarySpec::LocalShift { delta } => (Some(*delta), None),
        AdversarySpec::BlockResample { block } => (None, *block),
        _ => (None, None),
    };
    Ok(SensitivityReport {
        schema: SCHEMA.into(),
        estimator: f.name(),
        adversary: adversary.name().into(),
        delta,
        block,
        model: model.clone(),
        n,
        d: model.d(),
        eta,
        k: budget.k,
        q,
        trials,
        seed,
        es_estimate,
        ci_low,
        ci_high,
        moment,
        moment_stderr,
        lower_bound_only: !adversary.is_exact(),
        feasible_trials,
        certificates,
    })
}

/// A named experiment: registry estimator, adversary, model and budget.
#[derive(Clone, Debug)]
pub struct EsConfig {
    pub estimator: String,
    pub adversary: AdversarySpec,
    pub model: Model,
    pub eta: f64,
    pub n: usize,
    pub q: u32,
    pub trials: u64,
    pub seed: u64,
    pub registry: RegistryOptions,
}

impl EsConfig {
    pub fn new(estimator: &str, adversary: AdversarySpec, model: Model, eta: f64, n: usize) -> Self {
        Self {
            estimator: estimator.into(),
            adversary,
            model,
            eta,
            n,
            q: 2,
            trials: 10_000,
            seed: 0,
            registry: RegistryOptions::default(),
        }
    }

    pub fn run(&self) -> Result<SensitivityReport> {
        let f = estimator_by_name(&self.estimator, &self.registry)?;
        estimate_es(f.as_ref(), &self.adversary, &self.model, self.eta, self.n, self.q, self.trials, self.seed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepVariable {
    Eta,
    N,
    D,
}

impl FromStr for SweepVariable {
    type Err = SensError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eta" => Ok(Self::Eta),
            "n" => Ok(Self::N),
            "d" => Ok(Self::D),
            _ => Err(invalid(format!("sweep variable must be eta, n or d, got `{s}`"))),
        }
    }
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Eta => "eta",
            Self::N => "n",
            Self::D => "d",
        })
    }
}
