//! The checker grid behind `senslab verify`.

use std::f64::consts::E;
use std::fmt::Write as _;

use serde::Serialize;

use super::es::SCHEMA;
use crate::analysis::*;
use crate::bernoulli::beta_binomial_layer_law;
use crate::data::{Dataset, GaussianModel};
use crate::error::Result;
use crate::estimators::{Constant, Estimator, FnEstimator, Mean, Median};
use crate::rng::RngStream;

/// Trials per Monte Carlo checker unless overridden.
pub const DEFAULT_TRIALS_SCALE: u64 = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub schema: String,
    pub trials_scale: u64,
    pub seed: u64,
    pub rows: Vec<IneqCheckResult>,
    pub failures: usize,
}

impl VerifyReport {
    pub fn from_rows(rows: Vec<IneqCheckResult>, trials_scale: u64, seed: u64) -> Self {
        let failures = rows.iter().filter(|r| !r.holds).count();
        Self {
            schema: SCHEMA.into(),
            trials_scale,
            seed,
            rows,
            failures,
        }
    }

    pub fn all_pass(&self) -> bool {
        self.failures == 0
    }

    /// Process exit status: nonzero iff some row fails.
    pub fn exit_code(&self) -> i32 {
        i32::from(!self.all_pass())
    }

    /// Fixed-width pass/fail table.
    pub fn table(&self) -> String {
        let width = self.rows.iter().map(|r| r.label.len()).max().unwrap_or(5).max(5);
        let mut out = format!("{:<width$}  {:>6}  {:>14}  {:>14}  {:>11}  result\n", "check", "rel", "lhs", "rhs", "slack");
        for r in &self.rows {
            let rel = match r.relation {
                Relation::LessEq => "<=",
                Relation::Equal => "==",
            };
            let _ = writeln!(
                out,
                "{:<width$}  {:>6}  {:>14.8e}  {:>14.8e}  {:>11.3e}  {}",
                r.label,
                rel,
                r.lhs,
                r.rhs,
                r.slack,
                if r.holds { "PASS" } else { "FAIL" }
            );
        }
        let _ = writeln!(out, "{} checks, {} failed", self.rows.len(), self.failures);
        out
    }
}

fn closed(label: &str, lhs: f64, rhs: f64) -> IneqCheckResult {
    IneqCheckResult::equal(label, lhs, rhs, None, None, 1e-12)
}

/// Runs every checker over its documented grid. Monte Carlo checkers use
/// `trials_scale` trials (the Gaussian-product chi-square uses ten times as
/// many); every checker reads its own substream of `seed`.
pub fn verify_suite(trials_scale: u64, seed: u64) -> Result<VerifyReport> {
    let t = trials_scale.max(10_000);
    let root = RngStream::new(seed, 0);
    let mut tag = 0u64;
    let mut next = || {
        tag += 1;
        root.substream(tag)
    };
    let mut rows = Vec::new();

    // Total variation of a Gaussian shift.
    let etas = [1e-4, 0.01, 0.05, 0.1, 0.5, 1.0, 2.0, 5.0];
    for &eta in &etas {
        rows.push(IneqCheckResult::less_eq(format!("TV(N(0,1), N({eta},1)) < eta"), tv_gaussian_shift(eta), eta, None, None));
    }
    rows.push(IneqCheckResult::less_eq(
        "TV strictly increasing on grid (max successive ratio)",
        etas.windows(2).map(|w| tv_gaussian_shift(w[0]) / tv_gaussian_shift(w[1])).fold(0.0, f64::max),
        1.0 - f64::EPSILON,
        None,
        None,
    ));
    rows.push(closed("TV(N(0,1), N(0,1))", tv_gaussian_shift(0.0), 0.0));

    // Chi-square of Gaussian products.
    rows.push(closed("chi2 products delta=0", chi2_gaussian_products(0.0, 25)?, 0.0));
    for n in [1usize, 25, 400] {
        rows.push(closed(&format!("chi2 products n={n} delta=1/sqrt(n) = e-1"), chi2_gaussian_products(1.0 / (n as f64).sqrt(), n)?, E - 1.0));
    }
    rows.push(chi2_products_mc_check(0.2, 25, 10 * t, next())?);

    // Local-shift chi-square budget.
    rows.push(closed("chi2 local shift delta=0", chi2_localshift_bound(5, 100, 0.0)?, 0.0));
    rows.push(closed("chi2 local shift k=20 n=400 delta=0.5", chi2_localshift_bound(20, 400, 0.5)?, (0.25f64.exp() - 1.25).exp_m1()));
    for (k, n, delta) in [(3usize, 50usize, 0.5), (5, 100, 0.8)] {
        rows.push(chi2_localshift_mc_check(k, n, delta, t, next())?);
    }

    // Likelihood-ratio identity.
    let e1 = [1.0, 0.0, 0.0];
    for (a, b) in [(e1, [0.0, 1.0, 0.0]), (e1, e1), (e1, [-1.0, 0.0, 0.0])] {
        rows.push(gaussian_lr_identity_check(&a, &b, t, next())?);
    }

    // Hypergeometric MGF.
    for (n, k, lambda) in [(100usize, 10usize, 0.0), (100, 10, 1.0), (40, 40, 0.7), (50, 5, 2.0)] {
        rows.push(hypergeom_mgf_check(n, k, lambda, t, next())?);
    }

    // Chernoff against exact binomial tails.
    for (n, p, t0) in [(100u64, 0.01, 10u64), (2000, tv_gaussian_shift(0.1), 200), (500, 0.1, 80), (50, 0.3, 30)] {
        let exact = binomial_upper_tail(n, p, t0)?;
        rows.push(IneqCheckResult::less_eq(format!("Chernoff n={n} p={p:.6} t={t0}"), exact, chernoff_tail_bound(n, p, t0 as f64)?, None, None));
        rows.push(IneqCheckResult::less_eq(format!("Chernoff sharp n={n} p={p:.6} t={t0}"), exact, chernoff_tail_bound_sharp(n, p, t0 as f64)?, None, None));
    }
    rows.push(closed("Chernoff vacuous below the mean", chernoff_tail_bound(100, 0.1, 5.0)?, 1.0));

    // Binomial point mass.
    rows.push(closed("P(Bin(4, 1/2) = 2)", binomial_point_mass(4, 2)?, 0.375));
    rows.push(closed("P(Bin(9, 1/3) = 3)", binomial_point_mass(9, 3)?, 5376.0 / 19683.0));
    rows.push(closed("P(Bin(7, 0) = 0)", binomial_point_mass(7, 0)?, 1.0));
    let inf = point_mass_constant(200)?;
    rows.push(IneqCheckResult::less_eq(
        format!("point mass constant (measured {:.6} at n={} r={}) >= 0.24", inf.value, inf.n, inf.r),
        0.24,
        inf.value,
        None,
        None,
    ));

    // Efron-Stein.
    let scalar = GaussianModel::scalar(0.0)?;
    rows.push(efron_stein_check(&Mean, &scalar, 25, t, next())?.as_equality().with_label("Efron-Stein mean n=25 (equality)"));
    rows.push(efron_stein_check(&Median, &scalar, 101, t, next())?);
    rows.push(efron_stein_check(&Mean, &GaussianModel::centered(4)?, 10, t / 10, next())?.as_equality().with_label("Efron-Stein mean d=4 n=10 (equality)"));
    rows.push(efron_stein_check(&Constant(vec![2.0]), &scalar, 10, 1000, next())?.as_equality());

    // Hammersley-Chapman-Robbins.
    rows.push(hcr_check(&Mean, 0.0, 0.2, 25, t, next())?);
    rows.push(hcr_check(&Median, 0.0, 1.0 / 101f64.sqrt(), 101, t, next())?);
    rows.push(hcr_check(&Constant(vec![0.3]), 0.0, 0.2, 25, 1000, next())?);

    // Cramer-Rao.
    let twice = FnEstimator::new("twice-mean", |x: &Dataset| vec![2.0 * Mean.evaluate(x)[0]]);
    rows.push(cramer_rao_check(&Mean, 0.0, 25, t, next())?.as_equality().with_label("Cramer-Rao mean n=25 (equality)"));
    rows.push(cramer_rao_check(&twice, 0.0, 25, t, next())?.as_equality().with_label("Cramer-Rao twice-mean n=25 (equality)"));
    rows.push(cramer_rao_check(&Median, 0.0, 51, t, next())?);
    rows.push(cramer_rao_check(&Constant(vec![1.0]), 0.0, 25, 1000, next())?);

    // Uniform spacings.
    for (n, i) in [(1usize, 1usize), (9, 5), (9, 10), (30, 1)] {
        rows.extend(uniform_spacing_check(n, i, t, next())?);
    }

    // Beta-binomial layer law.
    for n in [1usize, 3, 10, 50] {
        let law = beta_binomial_layer_law(n)?;
        let target = 1.0 / (n + 1) as f64;
        let worst = law.iter().map(|v| (v - target).abs()).fold(0.0, f64::max);
        rows.push(IneqCheckResult::less_eq(format!("beta-binomial n={n} max |P(T=t) - 1/(n+1)|"), worst, 1e-12, None, None));
        rows.push(closed(&format!("beta-binomial n={n} total mass"), law.iter().sum(), 1.0));
    }

    Ok(VerifyReport::from_rows(rows, trials_scale, seed))
}
