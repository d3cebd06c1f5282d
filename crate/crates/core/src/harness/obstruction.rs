//! The three obstruction experiments: a random local shift in the low
//! corruption regime, a maximal coupling in the high regime, and block
//! resampling that turns clean variance into sensitivity.

use rayon::prelude::*;
use serde::Serialize;

use super::es::SCHEMA;
use crate::adversaries::{block_layout, block_resample, local_shift_adversary, tv_coupling_adversary};
use crate::analysis::{chi2_localshift_bound, tv_gaussian_shift, IneqCheckResult, Moments};
use crate::data::{CorruptionBudget, GaussianModel};
use crate::error::{invalid, Result};
use crate::estimators::{compensated_sum, Estimator};
use crate::rng::RngStream;

/// Uniform prior on `[lo, hi]` for the unknown mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Prior {
    pub lo: f64,
    pub hi: f64,
}

impl Prior {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(invalid(format!("prior needs finite lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    /// `[eps, 1 - eps]` with `eps = 0.1`.
    pub fn interior() -> Self {
        Self { lo: 0.1, hi: 0.9 }
    }

    fn draw(&self, stream: RngStream) -> f64 {
        self.lo + (self.hi - self.lo) * stream.rng().uniform()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LowObstructionReport {
    pub schema: String,
    pub estimator: String,
    pub n: usize,
    pub eta: f64,
    pub k: usize,
    pub delta: f64,
    pub prior: Prior,
    pub trials: u64,
    pub seed: u64,
    pub avg_displacement: f64,
    pub stderr: f64,
    /// `eta * delta`, the forced mean response.
    pub predicted: f64,
    pub chi2_budget: f64,
    /// Whether `k <= sqrt(n)`.
    pub regime_ok: bool,
    pub warnings: Vec<String>,
}

/// Random local shift by `delta` of `k = floor(eta n)` scalar samples, with
/// the mean drawn from `prior` per trial. Reports the signed average change of
/// `h`.
pub fn mean_obstruction_low(
    h: &dyn Estimator,
    eta: f64,
    delta: f64,
    n: usize,
    prior: Prior,
    trials: u64,
    seed: u64,
) -> Result<LowObstructionReport> {
    let budget = CorruptionBudget::new(eta, n)?;
    budget.require_corruption()?;
    require_trials(trials)?;
    let chi2_budget = chi2_localshift_bound(budget.k, n, delta)?;
    let regime_ok = (budget.k as f64) <= (n as f64).sqrt();
    let mut warnings = Vec::new();
    if !regime_ok {
        warnings.push(format!("k = {} exceeds sqrt(n) = {:.3}; outside the low-corruption regime", budget.k, (n as f64).sqrt()));
    }
    let shifts = (0..trials)
        .into_par_iter()
        .map(|t| {
            let s = RngStream::new(seed, t);
            let mu = prior.draw(s.substream(2));
            let x = GaussianModel::scalar(mu)?.sample(n, &mut s.substream(0).rng())?;
            let y = local_shift_adversary(&x, &budget, delta, s.substream(1))?;
            Ok(h.evaluate(&y.corrupted)[0] - h.evaluate(&x)[0])
        })
        .collect::<Vec<Result<f64>>>()
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    let m = Moments::of(&shifts);
    Ok(LowObstructionReport {
        schema: SCHEMA.into(),
        estimator: h.name(),
        n,
        eta,
        k: budget.k,
        delta,
        prior,
        trials,
        seed,
        avg_displacement: m.mean,
        stderr: m.stderr(),
        predicted: eta * delta,
        chi2_budget,
        regime_ok,
        warnings,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HighObstructionReport {
    pub schema: String,
    pub estimator: String,
    pub n: usize,
    pub eta: f64,
    pub k: usize,
    pub prior: Prior,
    pub trials: u64,
    pub seed: u64,
    /// Average of `(h(X') - h(X)) 1{D <= k}`.
    pub avg_displacement_on_feasible: f64,
    pub stderr: f64,
    /// Fraction of trials with `D > k`.
    pub infeasible_rate: f64,
    pub mean_disagreements: f64,
    pub disagreements_stderr: f64,
    /// `n (2 Phi(eta / 2) - 1)`.
    pub expected_disagreements: f64,
    /// Mean response of a translation-equivariant estimator: `eta`.
    pub predicted: f64,
    /// `eta / 3 - infeasible_rate`.
    pub endpoint_bound: f64,
    pub endpoint_bound_holds: bool,
}

/// Couples `N(mu, 1)^n` with `N(mu + eta, 1)^n` maximally, with `mu` from the
/// prior, and averages the change of `h` over trials where the two datasets
/// differ in at most `k` rows.
pub fn coupling_obstruction_high(h: &dyn Estimator, eta: f64, n: usize, prior: Prior, trials: u64, seed: u64) -> Result<HighObstructionReport> {
    if !(eta > 0.0 && eta <= 0.1) {
        return Err(invalid(format!("coupling obstruction needs 0 < eta <= 0.1, got {eta}")));
    }
    require_trials(trials)?;
    let budget = CorruptionBudget::new(eta, n)?;
    let rows = (0..trials)
        .into_par_iter()
        .map(|t| {
            let s = RngStream::new(seed, t);
            let mu = prior.draw(s.substream(2));
            let (clean, out) = tv_coupling_adversary(mu, eta, n, s.substream(1))?;
            let shift = if out.feasible { h.evaluate(&out.corrupted)[0] - h.evaluate(&clean)[0] } else { 0.0 };
            Ok((shift, out.achieved_hamming as f64, out.feasible))
        })
        .collect::<Vec<Result<(f64, f64, bool)>>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let shifts = Moments::of(&rows.iter().map(|r| r.0).collect::<Vec<_>>());
    let disagreements = Moments::of(&rows.iter().map(|r| r.1).collect::<Vec<_>>());
    let infeasible_rate = rows.iter().filter(|r| !r.2).count() as f64 / trials as f64;
    let endpoint_bound = eta / 3.0 - infeasible_rate;
    Ok(HighObstructionReport {
        schema: SCHEMA.into(),
        estimator: h.name(),
        n,
        eta,
        k: budget.k,
        prior,
        trials,
        seed,
        avg_displacement_on_feasible: shifts.mean,
        stderr: shifts.stderr(),
        infeasible_rate,
        mean_disagreements: disagreements.mean,
        disagreements_stderr: disagreements.stderr(),
        expected_disagreements: n as f64 * tv_gaussian_shift(eta),
        predicted: eta,
        endpoint_bound,
        endpoint_bound_holds: shifts.mean >= endpoint_bound,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VarianceObstructionReport {
    pub schema: String,
    pub estimator: String,
    pub n: usize,
    pub d: usize,
    pub eta: f64,
    pub k: usize,
    pub blocks: usize,
    pub trials: u64,
    pub seed: u64,
    /// `E|f(X) - E f(X)|^2`.
    pub var_clean: f64,
    pub var_clean_stderr: f64,
    /// `E|f(X) - f(X^(i))|^2` per block.
    pub block_gaps: Vec<f64>,
    pub max_block_gap: f64,
    pub max_block: usize,
    /// `(2 / M) var_clean <= max_block_gap`.
    pub efron_stein: IneqCheckResult,
    /// `sqrt(max_block_gap)`, a lower bound on `ES_2`.
    pub implied_es_lb: f64,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Clean variance of `f` against the change caused by refreshing each block
/// of `k` consecutive rows.
pub fn variance_obstruction(f: &dyn Estimator, model: &GaussianModel, eta: f64, n: usize, trials: u64, seed: u64) -> Result<VarianceObstructionReport> {
    let budget = CorruptionBudget::new(eta, n)?;
    budget.require_corruption()?;
    require_trials(trials)?;
    let m = block_layout(n, budget.k)?.len();
    let rows = (0..trials)
        .into_par_iter()
        .map(|t| {
            let s = RngStream::new(seed, t);
            let x = model.sample(n, &mut s.substream(0).rng())?;
            let fx = f.evaluate(&x);
            let gaps = (0..m)
                .map(|b| {
                    let y = block_resample(&x, &budget, b, model, s.substream(1 + b as u64))?;
                    Ok(dist2(&f.evaluate(&y.corrupted), &fx))
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((fx, gaps))
        })
        .collect::<Vec<Result<(Vec<f64>, Vec<f64>)>>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let tf = trials as f64;
    let dim = rows[0].0.len();
    let centre: Vec<f64> = (0..dim).map(|j| compensated_sum(rows.iter().map(|r| r.0[j])) / tf).collect();
    let spread: Vec<f64> = rows.iter().map(|r| dist2(&r.0, &centre) * tf / (tf - 1.0)).collect();
    let spread_m = Moments::of(&spread);
    let block_gaps: Vec<f64> = (0..m).map(|b| compensated_sum(rows.iter().map(|r| r.1[b])) / tf).collect();
    let (max_block, max_block_gap) = block_gaps
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (b, g)| if g > best.1 { (b, g) } else { best });
    let scale = 2.0 / m as f64;
    let diffs: Vec<f64> = rows.iter().zip(&spread).map(|(r, s)| scale * s - r.1[max_block]).collect();
    let efron_stein = IneqCheckResult::less_eq(
        format!("block Efron-Stein {} n={n} k={}", f.name(), budget.k),
        scale * spread_m.mean,
        max_block_gap,
        Some(Moments::of(&diffs).stderr()),
        Some(trials),
    );
    Ok(VarianceObstructionReport {
        schema: SCHEMA.into(),
        estimator: f.name(),
        n,
        d: model.d(),
        eta,
        k: budget.k,
        blocks: m,
        trials,
        seed,
        var_clean: spread_m.mean,
        var_clean_stderr: spread_m.stderr(),
        block_gaps,
        max_block_gap,
        max_block,
        efron_stein,
        implied_es_lb: max_block_gap.max(0.0).sqrt(),
    })
}

fn require_trials(trials: u64) -> Result<()> {
    if trials < 2 {
        return Err(invalid("need at least 2 trials"));
    }
    Ok(())
}
