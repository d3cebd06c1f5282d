//! Closed-form divergences and tail bounds, plus Monte Carlo checkers for the
//! inequalities the lower-bound experiments lean on.
//!
//! Every checker returns an [`IneqCheckResult`]. Monte Carlo checkers carry a
//! standard error and pass when the relation holds within four of them.

use std::f64::consts::SQRT_2;

use serde::Serialize;

use crate::data::{Dataset, GaussianModel};
use crate::error::{invalid, Result, SensError};
use crate::estimators::{compensated_sum, dot, Estimator};
use crate::rng::{par_trials, RngStream};

/// Largest exponent accepted before a closed form reports overflow.
pub const EXP_LIMIT: f64 = 700.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `lhs <= rhs + slack`.
    LessEq,
    /// `|lhs - rhs| <= slack`.
    Equal,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IneqCheckResult {
    pub label: String,
    pub relation: Relation,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub holds: bool,
    pub mc_stderr: Option<f64>,
    pub trials: Option<u64>,
}

/// Relative allowance for floating-point rounding in every comparison.
pub const ROUNDING: f64 = 8.0 * f64::EPSILON;

impl IneqCheckResult {
    fn build(label: impl Into<String>, relation: Relation, lhs: f64, rhs: f64, mc_stderr: Option<f64>, trials: Option<u64>, tolerance: f64) -> Self {
        let mut r = Self {
            label: label.into(),
            relation,
            lhs,
            rhs,
            slack: 4.0 * mc_stderr.unwrap_or(0.0) + tolerance + ROUNDING * lhs.abs().max(rhs.abs()),
            holds: false,
            mc_stderr,
            trials,
        };
        r.settle();
        r
    }

    /// `lhs <= rhs`, with four standard errors of slack when Monte Carlo is involved.
    pub fn less_eq(label: impl Into<String>, lhs: f64, rhs: f64, mc_stderr: Option<f64>, trials: Option<u64>) -> Self {
        Self::build(label, Relation::LessEq, lhs, rhs, mc_stderr, trials, 0.0)
    }

    /// `lhs == rhs` up to four standard errors plus `tolerance`.
    pub fn equal(label: impl Into<String>, lhs: f64, rhs: f64, mc_stderr: Option<f64>, trials: Option<u64>, tolerance: f64) -> Self {
        Self::build(label, Relation::Equal, lhs, rhs, mc_stderr, trials, tolerance)
    }

    /// Widens the slack by a known bias bound.
    pub fn with_extra_slack(mut self, extra: f64) -> Self {
        self.slack += extra.abs();
        self.settle();
        self
    }

    /// Re-reads the same measurement as an equality.
    pub fn as_equality(mut self) -> Self {
        self.relation = Relation::Equal;
        self.settle();
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    fn settle(&mut self) {
        let finite = self.lhs.is_finite() && self.rhs.is_finite();
        self.holds = finite
            && match self.relation {
                Relation::LessEq => self.lhs <= self.rhs + self.slack,
                Relation::Equal => (self.lhs - self.rhs).abs() <= self.slack,
            };
    }
}

/// Sample mean, unbiased variance and fourth central moment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub fourth: f64,
}

impl Moments {
    pub fn of(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Self { count, mean: f64::NAN, variance: f64::NAN, fourth: f64::NAN };
        }
        let mean = compensated_sum(values.iter().copied()) / count as f64;
        let ss = compensated_sum(values.iter().map(|v| (v - mean).powi(2)));
        let variance = if count > 1 { ss / (count - 1) as f64 } else { 0.0 };
        let fourth = compensated_sum(values.iter().map(|v| (v - mean).powi(4))) / count as f64;
        Self { count, mean, variance, fourth }
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        (self.variance / self.count as f64).sqrt()
    }

    /// Standard error of the sample variance.
    pub fn variance_stderr(&self) -> f64 {
        ((self.fourth - self.variance * self.variance).max(0.0) / self.count as f64).sqrt()
    }
}

/// `e^x - 1 - x`, accurate near zero.
pub fn expm1_minus_id(x: f64) -> f64 {
    if x.abs() < 1e-2 {
        let mut term = x * x / 2.0;
        let mut sum = term;
        for j in 3..10 {
            term *= x / j as f64;
            sum += term;
        }
        sum
    } else {
        x.exp_m1() - x
    }
}

fn checked_expm1(exponent: f64, what: &str) -> Result<f64> {
    if exponent.is_nan() {
        return Err(SensError::NonFinite);
    }
    if exponent > EXP_LIMIT {
        return Err(SensError::Overflow(format!("{what}: exponent {exponent} exceeds {EXP_LIMIT}")));
    }
    Ok(exponent.exp_m1())
}

/// `ln C(n, k)`.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    if k == 0 || k == n {
        return 0.0;
    }
    libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
}

/// `TV(N(0, 1), N(eta, 1)) = 2 Phi(eta / 2) - 1`. Symmetric in the sign of `eta`.
pub fn tv_gaussian_shift(eta: f64) -> f64 {
    libm::erf(eta.abs() / (2.0 * SQRT_2))
}

/// `chi^2(N(mu + delta, 1)^n || N(mu, 1)^n) = exp(n delta^2) - 1`.
pub fn chi2_gaussian_products(delta: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(invalid("n must be positive"));
    }
    checked_expm1(n as f64 * delta * delta, "chi-square of Gaussian products")
}

/// `exp((k^2 / n)(e^{delta^2} - 1 - delta^2)) - 1`, the chi-square budget of a
/// random `k`-subset shift by `delta` against the averaged product law.
pub fn chi2_localshift_bound(k: usize, n: usize, delta: f64) -> Result<f64> {
    if k == 0 || k > n {
        return Err(invalid(format!("need 1 <= k <= n, got k = {k}, n = {n}")));
    }
    if !delta.is_finite() || delta < 0.0 {
        return Err(invalid(format!("delta must be finite and >= 0, got {delta}")));
    }
    let scale = (k * k) as f64 / n as f64;
    checked_expm1(scale * expm1_minus_id(delta * delta), "local-shift chi-square bound")
}

/// Monte Carlo `E_P[(dQ/dP - 1)^2]` for `P = N(0, 1)^n`, `Q = N(delta, 1)^n`,
/// compared as an equality with [`chi2_gaussian_products`].
///
/// The likelihood ratio depends on the data only through `sum X_i ~ N(0, n)`,
/// which is drawn directly.
pub fn chi2_products_mc_check(delta: f64, n: usize, trials: u64, stream: RngStream) -> Result<IneqCheckResult> {
    let exact = chi2_gaussian_products(delta, n)?;
    require_trials(trials, 2)?;
    let nf = n as f64;
    let values = par_trials(trials, stream, |_, rng| {
        let s = nf.sqrt() * rng.standard_normal();
        let lr = (delta * s - 0.5 * nf * delta * delta).exp();
        (lr - 1.0).powi(2)
    });
    let m = Moments::of(&values);
    Ok(IneqCheckResult::equal(
        format!("chi2 Gaussian products n={n} delta={delta}"),
        m.mean,
        exact,
        Some(m.stderr()),
        Some(trials),
        0.0,
    ))
}

/// Log of `e_k(w) / C(n, k)` for `w_i = exp(log_w[i])`.
fn ln_mean_symmetric(log_w: &[f64], k: usize) -> f64 {
    let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut e = vec![0.0; k + 1];
    e[0] = 1.0;
    for (i, lw) in log_w.iter().enumerate() {
        let v = (lw - top).exp();
        for j in (1..=k.min(i + 1)).rev() {
            e[j] += v * e[j - 1];
        }
    }
    e[k].ln() + k as f64 * top - ln_binomial(log_w.len() as u64, k as u64)
}

/// Monte Carlo `chi^2(Q || N(eta delta, 1)^n)` where `Q` shifts a uniformly
/// random `k`-subset of `N(0, 1)^n` by `delta` and `eta = k / n`, checked
/// against [`chi2_localshift_bound`].
///
/// Draws come from `Q` and average the exact mixture likelihood ratio, whose
/// subset average is an elementary symmetric polynomial.
pub fn chi2_localshift_mc_check(k: usize, n: usize, delta: f64, trials: u64, stream: RngStream) -> Result<IneqCheckResult> {
    let bound = chi2_localshift_bound(k, n, delta)?;
    require_trials(trials, 2)?;
    let eta = k as f64 / n as f64;
    let values = par_trials(trials, stream, |_, rng| {
        let mut x: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
        for i in rng.subset(n, k) {
            x[i] += delta;
        }
        let log_w: Vec<f64> = x.iter().map(|xi| delta * xi - 0.5 * delta * delta).collect();
        let sum: f64 = x.iter().sum();
        let ln_lr = ln_mean_symmetric(&log_w, k) - eta * delta * sum + 0.5 * n as f64 * (eta * delta).powi(2);
        ln_lr.exp_m1()
    });
    let m = Moments::of(&values);
    Ok(IneqCheckResult::less_eq(
        format!("chi2 local shift k={k} n={n} delta={delta}"),
        m.mean,
        bound,
        Some(m.stderr()),
        Some(trials),
    ))
}

fn require_trials(trials: u64, min: u64) -> Result<()> {
    if trials < min {
        return Err(invalid(format!("need at least {min} trials, got {trials}")));
    }
    Ok(())
}

/// `E_{X ~ N(0, I)}[LR_a(X) LR_b(X)] = exp(<a, b>)` for the likelihood ratios
/// of `N(a, I)` and `N(b, I)` against `N(0, I)`.
pub fn gaussian_lr_identity_check(a: &[f64], b: &[f64], trials: u64, stream: RngStream) -> Result<IneqCheckResult> {
    if a.is_empty() || a.len() != b.len() {
        return Err(invalid("shift vectors must share a positive dimension"));
    }
    require_trials(trials, 10_000)?;
    let half = 0.5 * (dot(a, a) + dot(b, b));
    let values = par_trials(trials, stream, |_, rng| {
        let exponent: f64 = a.iter().zip(b).map(|(ai, bi)| (ai + bi) * rng.standard_normal()).sum();
        (exponent - half).exp()
    });
    let m = Moments::of(&values);
    Ok(IneqCheckResult::equal(
        format!("Gaussian LR identity <a,b>={}", dot(a, b)),
        m.mean,
        dot(a, b).exp(),
        Some(m.stderr()),
        Some(trials),
        0.0,
    ))
}

/// `E[exp(lambda (H - k^2/n))] <= exp((k^2/n)(e^lambda - 1 - lambda))` where `H`
/// is the overlap of two independent uniform `k`-subsets of `[n]`.
pub fn hypergeom_mgf_check(n: usize, k: usize, lambda: f64, trials: u64, stream: RngStream) -> Result<IneqCheckResult> {
    if k == 0 || k > n {
        return Err(invalid(format!("need 1 <= k <= n, got k = {k}, n = {n}")));
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(invalid(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    require_trials(trials, 2)?;
    let centre = (k * k) as f64 / n as f64;
    let rhs_exp = centre * expm1_minus_id(lambda);
    if rhs_exp > EXP_LIMIT {
        return Err(SensError::Overflow(format!("hypergeometric MGF bound exponent {rhs_exp}")));
    }
    let values = par_trials(trials, stream, |_, rng| {
        let mut marked = vec![false; n];
        for i in rng.subset(n, k) {
            marked[i] = true;
        }
        let h = rng.subset(n, k).into_iter().filter(|&i| marked[i]).count();
        (lambda * (h as f64 - centre)).exp()
    });
    let m = Moments::of(&values);
    Ok(IneqCheckResult::less_eq(
        format!("hypergeometric MGF n={n} k={k} lambda={lambda}"),
        m.mean,
        rhs_exp.exp(),
        Some(m.stderr()),
        Some(trials),
    ))
}

fn check_binomial_params(n: u64, p: f64) -> Result<()> {
    if n == 0 {
        return Err(invalid("n must be positive"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!("p must lie in (0, 1), got {p}")));
    }
    Ok(())
}

fn check_threshold(t: f64) -> Result<()> {
    if !t.is_finite() || t <= 0.0 {
        return Err(invalid(format!("threshold must be finite and positive, got {t}")));
    }
    Ok(())
}

/// `P(Bin(n, p) >= t) <= min(1, (e n p / t)^t)`.
pub fn chernoff_tail_bound(n: u64, p: f64, t: f64) -> Result<f64> {
    check_binomial_params(n, p)?;
    check_threshold(t)?;
    let lambda = n as f64 * p;
    if t <= lambda {
        return Ok(1.0);
    }
    Ok((t * (1.0 + lambda.ln() - t.ln())).exp().min(1.0))
}

/// The sharper form `(e^delta / (1 + delta)^(1 + delta))^lambda` with
/// `1 + delta = t / lambda`.
pub fn chernoff_tail_bound_sharp(n: u64, p: f64, t: f64) -> Result<f64> {
    check_binomial_params(n, p)?;
    check_threshold(t)?;
    let lambda = n as f64 * p;
    if t <= lambda {
        return Ok(1.0);
    }
    Ok((t - lambda - t * (t / lambda).ln()).exp())
}

/// `P(Bin(n, p) = j)`, with `0^0 = 1`.
pub fn binomial_pmf(n: u64, p: f64, j: u64) -> f64 {
    if j > n {
        return 0.0;
    }
    let term = |count: u64, q: f64| if count == 0 { 0.0 } else { count as f64 * q.ln() };
    (ln_binomial(n, j) + term(j, p) + term(n - j, 1.0 - p)).exp()
}

/// Exact `P(Bin(n, p) >= j0)` by summation.
pub fn binomial_upper_tail(n: u64, p: f64, j0: u64) -> Result<f64> {
    check_binomial_params(n, p)?;
    Ok(compensated_sum((j0..=n).rev().map(|j| binomial_pmf(n, p, j))).min(1.0))
}

/// `P(Bin(n, r/n) = r) = C(n, r)(r/n)^r (1 - r/n)^(n-r)`.
pub fn binomial_point_mass(n: u64, r: u64) -> Result<f64> {
    if n == 0 || r > n {
        return Err(invalid(format!("need 0 <= r <= n with n >= 1, got r = {r}, n = {n}")));
    }
    if r == 0 || r == n {
        return Ok(1.0);
    }
    let q = r as f64 / n as f64;
    Ok((ln_binomial(n, r) + r as f64 * q.ln() + (n - r) as f64 * (-q).ln_1p()).exp())
}

/// A measured infimum and where it is attained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeasuredInfimum {
    pub value: f64,
    pub n: u64,
    pub r: u64,
}

/// `min sqrt(r + 1) P(Bin(n, r/n) = r)` over `1 <= n <= n_max`, `0 <= r <= n`.
pub fn point_mass_constant(n_max: u64) -> Result<MeasuredInfimum> {
    let mut best = MeasuredInfimum { value: f64::INFINITY, n: 0, r: 0 };
    for n in 1..=n_max {
        for r in 0..=n {
            let v = binomial_point_mass(n, r)? * ((r + 1) as f64).sqrt();
            if v < best.value {
                best = MeasuredInfimum { value: v, n, r };
            }
        }
    }
    Ok(best)
}

/// Squared Euclidean distance.
fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `Var f(X) <= (1/2) sum_i E|f(X) - f(X^(i))|^2`, where `X^(i)` redraws row `i`.
pub fn efron_stein_check(f: &dyn Estimator, model: &GaussianModel, n: usize, trials: u64, stream: RngStream) -> Result<IneqCheckResult> {
    require_trials(trials, 1000)?;
    if n == 0 {
        return Err(invalid("n must be positive"));
    }
    let d = model.d();
    let per_trial = par_trials(trials, stream, |_, rng| {
        let mut x = model.sample(n, rng).expect("n >= 1");
        let fx = f.evaluate(&x);
        let mut saved = vec![0.0; d];
        let mut total = 0.0;
        for i in 0..n {
            saved.copy_from_slice(x.row(i));
            model.fill_row(rng, x.row_mut(i));
            total += dist2(&fx, &f.evaluate(&x));
            x.row_mut(i).copy_from_slice(&saved);
        }
        (fx, 0.5 * total)
    });
    let t = trials as f64;
    let dim = per_trial[0].0.len();
    let centre: Vec<f64> = (0..dim)
        .map(|j| compensated_sum(per_trial.iter().map(|(fx, _)| fx[j])) / t)
        .collect();
    let spread: Vec<f64> = per_trial.iter().map(|(fx, _)| dist2(fx, &centre) * t / (t - 1.0)).collect();
    let halves: Vec<f64> = per_trial.iter().map(|(_, h)| *h).collect();
    let diffs: Vec<f64> = spread.iter().zip(&halves).map(|(a, b)| a - b).collect();
    Ok(IneqCheckResult::less_eq(
        format!("Efron-Stein {} n={n}", f.name()),
        compensated_sum(spread.iter().copied()) / t,
        Moments::of(&halves).mean,
        Some(Moments::of(&diffs).stderr()),
        Some(trials),
    ))
}

fn scalar_model(mu0: f64) -> Result<GaussianModel> {
    GaussianModel::scalar(mu0)
}

fn shifted(x: &Dataset, c: f64) -> Dataset {
    x.translated(&[c]).expect("finite shift of a scalar dataset")
}

/// Hammersley-Chapman-Robbins: `(E_Q T - E_P T)^2 / chi^2(Q || P) <= Var_P T`
/// with `P = N(mu0, 1)^n`, `Q = N(mu0 + h, 1)^n`.
///
/// Both expectations read the same draws (`X` under `P`, `X + h` under `Q`).
pub fn hcr_check(statistic: &dyn Estimator, mu0: f64, h: f64, n: usize, trials: u64, stream: RngStream) -> Result<IneqCheckResult> {
    if h == 0.0 || !h.is_finite() {
        return Err(invalid(format!("shift h must be finite and nonzero, got {h}")));
    }
    let chi2 = chi2_gaussian_products(h, n)?;
    require_trials(trials, 2)?;
    let model = scalar_model(mu0)?;
    let pairs = par_trials(trials, stream, |_, rng| {
        let x = model.sample(n, rng).expect("n >= 1");
        let t0 = statistic.evaluate(&x)[0];
        let t1 = statistic.evaluate(&shifted(&x, h))[0];
        (t0, t1 - t0)
    });
    let (base, gaps): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let var = Moments::of(&base);
    let gap = Moments::of(&gaps);
    let lhs = gap.mean * gap.mean / chi2;
    let se_lhs = 2.0 * gap.mean.abs() * gap.stderr() / chi2;
    Ok(IneqCheckResult::less_eq(
        format!("HCR {} n={n} h={h:.6}", statistic.name()),
        lhs,
        var.variance,
        Some(se_lhs.hypot(var.variance_stderr())),
        Some(trials),
    ))
}

/// Finite-difference step of [`cramer_rao_check`].
pub fn cramer_rao_step(n: usize) -> f64 {
    0.5 / (n as f64).sqrt()
}

/// Cramer-Rao: `(m_T'(mu0))^2 / n <= Var_{mu0} T` with the slope of the mean
/// response taken by a central difference of step `0.5 / sqrt(n)`.
///
/// The slack adds a Richardson estimate of the finite-difference bias to the
/// Monte Carlo error.
pub fn cramer_rao_check(statistic: &dyn Estimator, mu0: f64, n: usize, trials: u64, stream: RngStream) -> Result<IneqCheckResult> {
    require_trials(trials, 1000)?;
    if n == 0 {
        return Err(invalid("n must be positive"));
    }
    let model = scalar_model(mu0)?;
    let s = cramer_rao_step(n);
    let rows = par_trials(trials, stream, |_, rng| {
        let x = model.sample(n, rng).expect("n >= 1");
        let at = |c: f64| statistic.evaluate(&shifted(&x, c))[0];
        let t0 = statistic.evaluate(&x)[0];
        let wide = (at(s) - at(-s)) / (2.0 * s);
        let narrow = (at(s / 2.0) - at(-s / 2.0)) / s;
        [t0, wide, narrow]
    });
    let column = |j: usize| Moments::of(&rows.iter().map(|r| r[j]).collect::<Vec<_>>());
    let (var, wide, narrow) = (column(0), column(1), column(2));
    let nf = n as f64;
    let slope = wide.mean;
    let lhs = slope * slope / nf;
    let bias = 2.0 * slope.abs() * (4.0 / 3.0) * (wide.mean - narrow.mean).abs() / nf;
    let se_lhs = 2.0 * slope.abs() * wide.stderr() / nf;
    Ok(IneqCheckResult::less_eq(
        format!("Cramer-Rao {} n={n}", statistic.name()),
        lhs,
        var.variance,
        Some(se_lhs.hypot(var.variance_stderr())),
        Some(trials),
    )
    .with_extra_slack(bias))
}

/// Moments of the `i`-th spacing of `n` sorted uniforms against the
/// `Beta(1, n)` law, plus the telescoping identity `sum of spacings = 1`.
pub fn uniform_spacing_check(n: usize, i: usize, trials: u64, stream: RngStream) -> Result<Vec<IneqCheckResult>> {
    if n == 0 || i == 0 || i > n + 1 {
        return Err(invalid(format!("need n >= 1 and 1 <= i <= n + 1, got n = {n}, i = {i}")));
    }
    require_trials(trials, 2)?;
    let draws = par_trials(trials, stream, |_, rng| {
        let mut u: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
        u.sort_by(f64::total_cmp);
        let mut prev = 0.0;
        let mut spacings = Vec::with_capacity(n + 1);
        for v in u.into_iter().chain(std::iter::once(1.0)) {
            spacings.push(v - prev);
            prev = v;
        }
        let total: f64 = spacings.iter().sum();
        (spacings[i - 1], (total - 1.0).abs())
    });
    let (ds, errs): (Vec<f64>, Vec<f64>) = draws.into_iter().unzip();
    let m = Moments::of(&ds);
    let nf = n as f64;
    let worst = errs.iter().copied().fold(0.0, f64::max);
    Ok(vec![
        IneqCheckResult::equal(format!("spacing mean n={n} i={i}"), m.mean, 1.0 / (nf + 1.0), Some(m.stderr()), Some(trials), 0.0),
        IneqCheckResult::equal(
            format!("spacing variance n={n} i={i}"),
            m.variance,
            nf / ((nf + 1.0).powi(2) * (nf + 2.0)),
            Some(m.variance_stderr()),
            Some(trials),
            0.0,
        ),
        IneqCheckResult::less_eq(format!("spacing sum error n={n}"), worst, 4.0 * f64::EPSILON * (nf + 1.0), None, Some(trials)),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{Constant, FnEstimator, Mean, Median};
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    /// Composite Simpson rule.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, steps: usize) -> f64 {
        let h = (b - a) / steps as f64;
        let inner: f64 = (1..steps).map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
        (f(a) + f(b) + inner) * h / 3.0
    }

    fn phi(x: f64) -> f64 {
        (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }

    /// Exact overlap law of two uniform k-subsets of [n].
    fn hypergeometric_pmf(n: usize, k: usize) -> Vec<f64> {
        let c = |a: usize, b: usize| -> f64 {
            if b > a {
                return 0.0;
            }
            (0..b).fold(1.0, |acc, i| acc * (a - i) as f64 / (i + 1) as f64)
        };
        (0..=k).map(|h| c(k, h) * c(n - k, k - h) / c(n, k)).collect()
    }

    fn exact_localshift_chi2(k: usize, n: usize, delta: f64) -> f64 {
        let centre = (k * k) as f64 / n as f64;
        hypergeometric_pmf(n, k)
            .iter()
            .enumerate()
            .map(|(h, p)| p * (delta * delta * (h as f64 - centre)).exp())
            .sum::<f64>()
            - 1.0
    }

    #[test]
    fn tv_examples() {
        assert_eq!(tv_gaussian_shift(0.0), 0.0);
        let oracle = simpson(|x| 0.5 * (phi(x) - phi(x - 0.1)).abs(), -12.0, 12.1, 24_200);
        assert!(close(tv_gaussian_shift(0.1), oracle, 1e-9));
        assert!(close(tv_gaussian_shift(0.1), 0.039878, 1e-6));
    }

    #[test]
    fn tv_grid_properties() {
        // Strictly increasing while 1 - TV is representable, then saturating.
        let grid: Vec<f64> = (1..=400).map(|i| i as f64 * 0.05).collect();
        let tv: Vec<f64> = grid.iter().map(|&e| tv_gaussian_shift(e)).collect();
        assert!(tv[..160].windows(2).all(|w| w[0] < w[1]));
        assert!(tv.windows(2).all(|w| w[0] <= w[1]));
        assert!(grid.iter().zip(&tv).all(|(e, t)| t < e));
        assert!(tv_gaussian_shift(20.0) > 1.0 - 1e-15);
        assert!(tv_gaussian_shift(1e-8) > 0.0);
    }

    #[test]
    fn chi2_products_examples() {
        assert_eq!(chi2_gaussian_products(0.0, 10).unwrap(), 0.0);
        for n in [1usize, 4, 25, 400] {
            let v = chi2_gaussian_products(1.0 / (n as f64).sqrt(), n).unwrap();
            assert!(close(v, std::f64::consts::E - 1.0, 1e-12));
        }
        assert!(matches!(chi2_gaussian_products(1.0, 701), Err(SensError::Overflow(_))));
    }

    #[test]
    fn chi2_products_mc_within_five_percent() {
        let r = chi2_products_mc_check(0.2, 25, 1_000_000, RngStream::new(10, 0)).unwrap();
        assert!(((r.lhs - r.rhs) / r.rhs).abs() < 0.05, "{r:?}");
        assert!(r.holds, "{r:?}");
    }

    #[test]
    fn localshift_bound_examples() {
        assert_eq!(chi2_localshift_bound(3, 10, 0.0).unwrap(), 0.0);
        let oracle = (std::f64::consts::E - 2.0).exp() - 1.0;
        let v = chi2_localshift_bound(10, 100, 1.0).unwrap();
        assert!(close(v, oracle, 1e-14));
        assert!(close(v, 1.050_906_372_692_501, 1e-14));
        assert!(close(v, 1.050912, 1e-5));
        assert!(chi2_localshift_bound(0, 10, 1.0).is_err());
        assert!(chi2_localshift_bound(11, 10, 1.0).is_err());
        let small = chi2_localshift_bound(20, 400, 0.5).unwrap();
        assert!(close(small, 0.034611, 1e-5));
    }

    #[test]
    fn localshift_exact_chi2_is_below_bound() {
        for (k, n, delta) in [(3, 50, 0.5), (5, 100, 0.8), (10, 100, 1.0), (20, 400, 0.5), (7, 7, 0.3)] {
            let exact = exact_localshift_chi2(k, n, delta);
            assert!(exact <= chi2_localshift_bound(k, n, delta).unwrap() + 1e-14);
        }
    }

    #[test]
    fn localshift_mc_matches_exact_and_respects_bound() {
        for (i, (k, n, delta)) in [(3usize, 50usize, 0.5), (5, 100, 0.8)].into_iter().enumerate() {
            let r = chi2_localshift_mc_check(k, n, delta, 100_000, RngStream::new(11, i as u64)).unwrap();
            assert!(r.holds, "{r:?}");
            let exact = exact_localshift_chi2(k, n, delta);
            let se = r.mc_stderr.unwrap();
            assert!(close(r.lhs, exact, 4.0 * se), "{} vs {exact} (se {se})", r.lhs);
        }
    }

    #[test]
    fn symmetric_polynomial_matches_brute_force() {
        let w = [0.3f64, -1.2, 0.7, 2.0, 0.1];
        for k in 1..=5 {
            let mut total = 0.0;
            for mask in 0u32..32 {
                if mask.count_ones() as usize == k {
                    total += (0..5).filter(|i| mask >> i & 1 == 1).map(|i| w[i]).sum::<f64>().exp();
                }
            }
            let c = ln_binomial(5, k as u64).exp();
            assert!(close(ln_mean_symmetric(&w, k), (total / c).ln(), 1e-13));
        }
    }

    proptest! {
        #[test]
        fn localshift_bound_monotone(k in 1usize..30, extra in 0usize..30, delta in 0.0f64..1.5, bump in 0.0f64..0.5) {
            let n = 60;
            let k2 = (k + extra).min(n);
            let base = chi2_localshift_bound(k, n, delta).unwrap();
            prop_assert!(chi2_localshift_bound(k2, n, delta).unwrap() >= base);
            prop_assert!(chi2_localshift_bound(k, n, delta + bump).unwrap() >= base);
        }

        #[test]
        fn tv_below_eta(eta in 1e-6f64..30.0) {
            prop_assert!(tv_gaussian_shift(eta) < eta);
            prop_assert!(tv_gaussian_shift(eta) < 1.0 || eta > 16.0);
        }
    }

    #[test]
    fn lr_identity_examples() {
        let e1 = [1.0, 0.0];
        let cases = [([1.0, 0.0], [0.0, 1.0], 1.0), (e1, e1, std::f64::consts::E), (e1, [-1.0, 0.0], (-1.0f64).exp())];
        for (i, (a, b, expected)) in cases.into_iter().enumerate() {
            let r = gaussian_lr_identity_check(&a, &b, 100_000, RngStream::new(12, i as u64)).unwrap();
            assert!(close(r.rhs, expected, 1e-15));
            assert!(r.holds, "{r:?}");
        }
        assert!(gaussian_lr_identity_check(&e1, &e1, 9_999, RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn hypergeom_examples() {
        let zero = hypergeom_mgf_check(100, 10, 0.0, 1000, RngStream::new(13, 0)).unwrap();
        assert_eq!((zero.lhs, zero.rhs), (1.0, 1.0));
        assert!(zero.holds);

        let r = hypergeom_mgf_check(100, 10, 1.0, 100_000, RngStream::new(13, 1)).unwrap();
        assert!(close(r.rhs, 2.050_906_372_692_501, 1e-14));
        assert!(close(r.rhs, 2.050912, 1e-5));
        assert!(r.holds);
        let exact: f64 = hypergeometric_pmf(100, 10)
            .iter()
            .enumerate()
            .map(|(h, p)| p * (h as f64 - 1.0).exp())
            .sum();
        assert!(close(r.lhs, exact, 4.0 * r.mc_stderr.unwrap()), "{} vs {exact}", r.lhs);

        let full = hypergeom_mgf_check(12, 12, 0.7, 500, RngStream::new(13, 2)).unwrap();
        assert!(close(full.lhs, 1.0, 1e-12) && full.holds);
    }

    /// `P(Bin(n, p) >= j0)` by the pmf recurrence.
    fn tail_by_recurrence(n: u64, p: f64, j0: u64) -> f64 {
        let mut pmf = (1.0 - p).powi(n as i32);
        let mut tail = if j0 == 0 { pmf } else { 0.0 };
        for j in 1..=n {
            pmf *= (n - j + 1) as f64 / j as f64 * p / (1.0 - p);
            if j >= j0 {
                tail += pmf;
            }
        }
        tail
    }

    #[test]
    fn chernoff_examples() {
        assert_eq!(chernoff_tail_bound(100, 0.1, 5.0).unwrap(), 1.0);
        assert_eq!(chernoff_tail_bound(100, 0.1, 10.0).unwrap(), 1.0);
        let b = chernoff_tail_bound(100, 0.01, 10.0).unwrap();
        assert!(close(b, 10f64.exp() / 1e10, 1e-18));
        let exact = binomial_upper_tail(100, 0.01, 10).unwrap();
        assert!(close(exact, tail_by_recurrence(100, 0.01, 10), 1e-20));
        assert!(exact <= b);

        let sharp = chernoff_tail_bound_sharp(2000, 0.039878, 200.0).unwrap();
        assert!(close(sharp.ln(), -63.625, 1e-2));
        let exact = binomial_upper_tail(2000, 0.039878, 200).unwrap();
        assert!(exact <= sharp && exact > 0.0);
        assert!(sharp <= chernoff_tail_bound(2000, 0.039878, 200.0).unwrap());
    }

    fn gcd(a: u128, b: u128) -> u128 {
        if b == 0 { a } else { gcd(b, a % b) }
    }

    #[test]
    fn point_mass_examples() {
        assert_eq!(binomial_point_mass(7, 0).unwrap(), 1.0);
        assert!(close(binomial_point_mass(4, 2).unwrap(), 0.375, 1e-15));
        assert!(close(binomial_point_mass(9, 3).unwrap(), 5376.0 / 19683.0, 1e-15));
        assert!(binomial_point_mass(3, 4).is_err());
    }

    #[test]
    fn point_mass_matches_rationals() {
        for n in 1u128..=20 {
            for r in 0..=n {
                let c = (0..r).fold(1u128, |acc, i| acc * (n - i) / (i + 1));
                let num = c * r.pow(r as u32) * (n - r).pow((n - r) as u32);
                let den = n.pow(n as u32);
                let g = gcd(num, den);
                let exact = (num / g) as f64 / (den / g) as f64;
                let v = binomial_point_mass(n as u64, r as u64).unwrap();
                assert!(close(v, exact, 1e-13 * exact), "n={n} r={r}");
            }
        }
    }

    #[test]
    fn point_mass_constant_on_grid() {
        let inf = point_mass_constant(200).unwrap();
        assert!(inf.value >= 0.24, "{inf:?}");
    }

    #[test]
    fn efron_stein_examples() {
        let model = GaussianModel::scalar(0.0).unwrap();
        let mean = efron_stein_check(&Mean, &model, 25, 20_000, RngStream::new(14, 0)).unwrap();
        assert!(mean.holds);
        assert!(close(mean.lhs, 0.04, 0.002) && close(mean.rhs, 0.04, 0.002), "{mean:?}");
        assert!(mean.clone().as_equality().holds);

        let median = efron_stein_check(&Median, &model, 101, 2000, RngStream::new(14, 1)).unwrap();
        assert!(median.holds, "{median:?}");

        let constant = efron_stein_check(&Constant(vec![3.0]), &model, 10, 1000, RngStream::new(14, 2)).unwrap();
        assert_eq!((constant.lhs, constant.rhs), (0.0, 0.0));
        assert!(constant.holds);
    }

    #[test]
    fn hcr_examples() {
        let n = 25;
        let h = 1.0 / (n as f64).sqrt();
        let mean = hcr_check(&Mean, 0.3, h, n, 20_000, RngStream::new(15, 0)).unwrap();
        let analytic = 0.04 / (std::f64::consts::E - 1.0);
        assert!(close(mean.lhs, analytic, 1e-12), "{}", mean.lhs);
        assert!(close(mean.lhs, 0.023279, 1e-6));
        assert!(close(mean.rhs, 0.04, 0.002));
        assert!(mean.holds);

        let constant = hcr_check(&Constant(vec![1.0]), 0.0, h, n, 100, RngStream::new(15, 1)).unwrap();
        assert_eq!((constant.lhs, constant.rhs), (0.0, 0.0));
        assert!(constant.holds);

        let median = hcr_check(&Median, 0.0, 0.1, 101, 5000, RngStream::new(15, 2)).unwrap();
        assert!(median.holds, "{median:?}");
        assert!(hcr_check(&Mean, 0.0, 0.0, 10, 100, RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn cramer_rao_examples() {
        let n = 25;
        let mean = cramer_rao_check(&Mean, 0.0, n, 20_000, RngStream::new(16, 0)).unwrap();
        assert!(close(mean.lhs, 0.04, 1e-12));
        assert!(mean.clone().as_equality().holds, "{mean:?}");

        let double = FnEstimator::new("twice-mean", |x: &Dataset| vec![2.0 * Mean.evaluate(x)[0]]);
        let r = cramer_rao_check(&double, 0.0, n, 20_000, RngStream::new(16, 1)).unwrap();
        assert!(close(r.lhs, 0.16, 1e-12));
        assert!(r.as_equality().holds);

        let constant = cramer_rao_check(&Constant(vec![0.5]), 0.0, n, 1000, RngStream::new(16, 2)).unwrap();
        assert_eq!(constant.lhs, 0.0);
        assert!(constant.holds);

        let median = cramer_rao_check(&Median, 0.0, 51, 5000, RngStream::new(16, 3)).unwrap();
        assert!(median.holds, "{median:?}");
    }

    #[test]
    fn spacing_examples() {
        let one = uniform_spacing_check(1, 1, 20_000, RngStream::new(17, 0)).unwrap();
        assert_eq!(one[0].rhs, 0.5);
        assert!(one.iter().all(|r| r.holds), "{one:?}");

        let nine = uniform_spacing_check(9, 5, 50_000, RngStream::new(17, 1)).unwrap();
        assert!(close(nine[0].rhs, 0.1, 1e-15));
        assert!(close(nine[1].rhs, 9.0 / 1100.0, 1e-15));
        assert!(nine.iter().all(|r| r.holds), "{nine:?}");
        assert!(uniform_spacing_check(3, 5, 10, RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn result_relations() {
        let r = IneqCheckResult::less_eq("x", 1.0, 0.9, Some(0.03), Some(10));
        assert!(r.holds);
        assert!(close(r.slack, 0.12, 1e-14));
        let e = IneqCheckResult::equal("y", 1.0, 1.2, None, None, 0.1);
        assert!(!e.holds);
        assert!(!IneqCheckResult::less_eq("z", f64::NAN, 1.0, None, None).holds);
    }
}
