//! Contamination mechanisms. Each returns the corrupted dataset with a
//! certificate whose Hamming distance is recomputed from the data.

use std::ops::Range;

use crate::analysis::tv_gaussian_shift;
use crate::data::{compute_k, hamming_distance, CorruptionBudget, Dataset, GaussianModel};
use crate::error::{invalid, Result, SensError};
use crate::estimators::{select_nth, Estimator};
use crate::rng::{RngStream, StreamRng};

#[derive(Clone, Debug, PartialEq)]
pub struct AdversaryOutcome {
    pub corrupted: Dataset,
    pub achieved_hamming: usize,
    pub feasible: bool,
    /// Exact or achieved displacement, when the adversary knows it.
    pub certificate: Option<f64>,
}

impl AdversaryOutcome {
    /// Builds an outcome, recounting the Hamming distance from the data.
    pub fn certify(original: &Dataset, corrupted: Dataset, k: usize, certificate: Option<f64>) -> Result<Self> {
        let achieved_hamming = hamming_distance(original, &corrupted)?;
        Ok(Self {
            corrupted,
            achieved_hamming,
            feasible: achieved_hamming <= k,
            certificate,
        })
    }
}

fn check_budget(x: &Dataset, budget: &CorruptionBudget) -> Result<()> {
    if budget.n != x.n() {
        return Err(invalid(format!("budget is for n = {}, dataset has n = {}", budget.n, x.n())));
    }
    if budget.k > x.n() {
        return Err(invalid("budget exceeds the number of rows"));
    }
    Ok(())
}

fn check_model(x: &Dataset, model: &GaussianModel) -> Result<()> {
    if model.d() != x.d() {
        return Err(SensError::ShapeMismatch {
            expected: (x.n(), x.d()),
            found: (x.n(), model.d()),
        });
    }
    Ok(())
}

/// Replaces a uniformly random `k`-subset of rows by fresh draws from `model`.
pub fn resampling_adversary(
    x: &Dataset,
    budget: &CorruptionBudget,
    model: &GaussianModel,
    stream: RngStream,
) -> Result<AdversaryOutcome> {
    check_budget(x, budget)?;
    check_model(x, model)?;
    let mut rng = stream.rng();
    let mut y = x.clone();
    for i in rng.subset(x.n(), budget.k) {
        model.fill_row(&mut rng, y.row_mut(i));
    }
    AdversaryOutcome::certify(x, y, budget.k, None)
}

/// Adds `delta` to a uniformly random `k`-subset of the scalar samples.
pub fn local_shift_adversary(
    x: &Dataset,
    budget: &CorruptionBudget,
    delta: f64,
    stream: RngStream,
) -> Result<AdversaryOutcome> {
    check_budget(x, budget)?;
    if x.d() != 1 {
        return Err(invalid(format!("local shift acts on scalar samples, got d = {}", x.d())));
    }
    budget.require_corruption()?;
    if !delta.is_finite() {
        return Err(SensError::NonFinite);
    }
    let mut rng = stream.rng();
    let mut y = x.clone();
    for i in rng.subset(x.n(), budget.k) {
        y.row_mut(i)[0] += delta;
    }
    AdversaryOutcome::certify(x, y, budget.k, None)
}

/// Maximal coupling of `N(mu, 1)` and `N(mu + shift, 1)` for a single coordinate.
///
/// With probability `1 - TV` both values are one draw from the normalized
/// overlap `min(p, q)`; otherwise the first comes from `(p - q)_+` and the
/// second, independently, from `(q - p)_+`.
#[derive(Clone, Copy, Debug)]
pub struct GaussianMaximalCoupling {
    mu: f64,
    shift: f64,
    tv: f64,
}

impl GaussianMaximalCoupling {
    pub fn new(mu: f64, shift: f64) -> Result<Self> {
        if !(mu.is_finite() && shift.is_finite()) || shift < 0.0 {
            return Err(invalid(format!("coupling needs finite mu and shift >= 0, got {mu}, {shift}")));
        }
        Ok(Self {
            mu,
            shift,
            tv: tv_gaussian_shift(shift),
        })
    }

    pub fn tv(&self) -> f64 {
        self.tv
    }

    /// Point where the two densities cross.
    pub fn crossing(&self) -> f64 {
        self.mu + self.shift / 2.0
    }

    /// `q(x) / p(x)`.
    fn density_ratio(&self, x: f64) -> f64 {
        (self.shift * (x - self.mu) - 0.5 * self.shift * self.shift).exp()
    }

    /// A draw from `min(p, q) / (1 - TV)`: an even mixture of `p` restricted to
    /// `[c, inf)` and `q` restricted to `(-inf, c)`.
    fn sample_overlap(&self, rng: &mut StreamRng) -> f64 {
        let c = self.crossing();
        let upper = rng.bernoulli(0.5);
        loop {
            let z = rng.standard_normal();
            if upper {
                let x = self.mu + z;
                if x >= c {
                    return x;
                }
            } else {
                let x = self.mu + self.shift + z;
                if x < c {
                    return x;
                }
            }
        }
    }

    /// A draw from `(p - q)_+ / TV` by rejection from `p` with acceptance
    /// probability `(1 - q/p)_+`.
    fn sample_lower_residual(&self, rng: &mut StreamRng) -> f64 {
        let c = self.crossing();
        loop {
            let x = self.mu + rng.standard_normal();
            if x < c && rng.uniform() < 1.0 - self.density_ratio(x) {
                return x;
            }
        }
    }

    /// One coupled pair `(X, X')`.
    pub fn sample(&self, rng: &mut StreamRng) -> (f64, f64) {
        if self.tv == 0.0 || !rng.bernoulli(self.tv) {
            let v = self.sample_overlap(rng);
            return (v, v);
        }
        // (q - p)_+ is the reflection of (p - q)_+ about the crossing point.
        let x = self.sample_lower_residual(rng);
        let y = 2.0 * self.crossing() - self.sample_lower_residual(rng);
        (x, y)
    }
}

/// Coordinatewise maximal coupling of `N(mu, 1)^n` and `N(mu + eta, 1)^n`.
///
/// Returns the clean dataset and the outcome holding the shifted one; the
/// disagreement count is `Bin(n, TV)`.
pub fn tv_coupling_adversary(
    mu: f64,
    eta: f64,
    n: usize,
    stream: RngStream,
) -> Result<(Dataset, AdversaryOutcome)> {
    let k = compute_k(eta, n)?;
    let coupling = GaussianMaximalCoupling::new(mu, eta)?;
    let mut rng = stream.rng();
    let (xs, ys): (Vec<f64>, Vec<f64>) = (0..n).map(|_| coupling.sample(&mut rng)).unzip();
    let clean = Dataset::from_column(&xs)?;
    let shifted = Dataset::from_column(&ys)?;
    let outcome = AdversaryOutcome::certify(&clean, shifted, k, None)?;
    Ok((clean, outcome))
}

/// Consecutive blocks of `k` rows with a short tail: `M = ceil(n / k)` blocks,
/// the last holding `n - (M - 1) k` rows.
pub fn block_layout(n: usize, k: usize) -> Result<Vec<Range<usize>>> {
    if k == 0 {
        return Err(invalid("block resampling needs k >= 1"));
    }
    Ok((0..n.div_ceil(k)).map(|b| b * k..((b + 1) * k).min(n)).collect())
}

/// Replaces block `block_index` of [`block_layout`] by fresh draws.
pub fn block_resample(
    x: &Dataset,
    budget: &CorruptionBudget,
    block_index: usize,
    model: &GaussianModel,
    stream: RngStream,
) -> Result<AdversaryOutcome> {
    check_budget(x, budget)?;
    check_model(x, model)?;
    let blocks = block_layout(x.n(), budget.k)?;
    let block = blocks.get(block_index).cloned().ok_or_else(|| {
        invalid(format!("block index {block_index} out of range for M = {}", blocks.len()))
    })?;
    let mut rng = stream.rng();
    let mut y = x.clone();
    for i in block {
        model.fill_row(&mut rng, y.row_mut(i));
    }
    AdversaryOutcome::certify(x, y, budget.k, None)
}

/// The three order statistics `x_(m-k)`, `x_(m)`, `x_(m+k)` of `n = 2m - 1`
/// values, by selection.
pub fn median_window(values: &[f64], k: usize) -> (f64, f64, f64) {
    let mut v = values.to_vec();
    let mid = values.len() / 2;
    let med = select_nth(&mut v, mid);
    if k == 0 {
        return (med, med, med);
    }
    let (lower, upper) = v.split_at_mut(mid);
    let upper = &mut upper[1..];
    let hi = select_nth(upper, k - 1);
    let lo = select_nth(lower, mid - k);
    (lo, med, hi)
}

/// Exact adaptive sensitivity of the median at a scalar dataset of odd size,
/// with the dataset attaining it.
///
/// The certificate is `max(x_(m+k) - x_(m), x_(m) - x_(m-k))`. To reach the
/// upper end the `k` smallest entries move to `x_(n) + 1`; to reach the lower
/// end the `k` largest move to `x_(1) - 1`.
pub fn median_worst_case(x: &Dataset, budget: &CorruptionBudget) -> Result<AdversaryOutcome> {
    check_budget(x, budget)?;
    if x.d() != 1 {
        return Err(invalid(format!("median adversary acts on scalar samples, got d = {}", x.d())));
    }
    let n = x.n();
    if n.is_multiple_of(2) {
        return Err(invalid(format!("exact median sensitivity needs odd n, got {n}")));
    }
    let m = n.div_ceil(2);
    let k = budget.k;
    if k >= m {
        return Err(invalid(format!("exact median sensitivity needs k <= m - 1 = {}, got {k}", m - 1)));
    }
    if k == 0 {
        return AdversaryOutcome::certify(x, x.clone(), 0, Some(0.0));
    }
    let values = x.as_slice();
    let (lo, med, hi) = median_window(values, k);
    let up = hi - med;
    let down = med - lo;

    let mut y = x.clone();
    if up >= down {
        let sentinel = values.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0;
        let threshold = select_nth(&mut values.to_vec(), k - 1);
        replace_extreme(&mut y, values, k, sentinel, |v| v < threshold, |v| v == threshold);
    } else {
        let sentinel = values.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
        let threshold = select_nth(&mut values.to_vec(), n - k);
        replace_extreme(&mut y, values, k, sentinel, |v| v > threshold, |v| v == threshold);
    }
    AdversaryOutcome::certify(x, y, k, Some(up.max(down)))
}

/// Overwrites exactly `k` rows: all strictly beyond the threshold, then ties.
fn replace_extreme(
    y: &mut Dataset,
    values: &[f64],
    k: usize,
    sentinel: f64,
    beyond: impl Fn(f64) -> bool,
    tie: impl Fn(f64) -> bool,
) {
    let mut left = k;
    for pass in [&beyond as &dyn Fn(f64) -> bool, &tie] {
        for (i, &v) in values.iter().enumerate() {
            if left > 0 && pass(v) && y.row(i)[0] == v {
                y.row_mut(i)[0] = sentinel;
                left -= 1;
            }
        }
    }
    debug_assert_eq!(left, 0);
}

/// Upper limit on Hamming-ball size for exhaustive search.
pub const BALL_LIMIT: u64 = 1_000_000;
pub const BALL_MAX_N: usize = 24;

pub(crate) fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// Number of points in the radius-`k` Hamming ball in `{0,1}^n`.
pub fn hamming_ball_size(n: usize, k: usize) -> u64 {
    (0..=k.min(n)).map(|j| binomial(n as u64, j as u64)).sum()
}

pub(crate) fn check_ball_guard(n: usize, k: usize) -> Result<()> {
    if n > BALL_MAX_N {
        return Err(SensError::EnumerationGuard(format!("n = {n} exceeds {BALL_MAX_N}")));
    }
    let size = hamming_ball_size(n, k);
    if size > BALL_LIMIT {
        return Err(SensError::EnumerationGuard(format!(
            "Hamming ball of radius {k} in dimension {n} has {size} points, limit {BALL_LIMIT}"
        )));
    }
    Ok(())
}

/// Exact `sup |f(y) - f(x)|` over the radius-`k` Hamming ball around a binary
/// vector, with an argmax.
pub fn hamming_ball_sup(f: &dyn Estimator, x: &[u8], budget: &CorruptionBudget) -> Result<AdversaryOutcome> {
    let original = Dataset::from_bits(x)?;
    check_budget(&original, budget)?;
    check_ball_guard(x.len(), budget.k)?;
    let base = f.evaluate(&original);
    let mut scratch = original.clone();
    let mut best = (0.0f64, original.clone());
    search_ball(f, &base, &mut scratch, 0, budget.k, &mut best);
    let (sup, arg) = best;
    AdversaryOutcome::certify(&original, arg, budget.k, Some(sup))
}

fn search_ball(
    f: &dyn Estimator,
    base: &[f64],
    scratch: &mut Dataset,
    start: usize,
    flips_left: usize,
    best: &mut (f64, Dataset),
) {
    if flips_left == 0 {
        return;
    }
    for i in start..scratch.n() {
        let cell = &mut scratch.row_mut(i)[0];
        *cell = 1.0 - *cell;
        let gap = distance(base, &f.evaluate(scratch));
        if gap > best.0 {
            *best = (gap, scratch.clone());
        }
        search_ball(f, base, scratch, i + 1, flips_left - 1, best);
        let cell = &mut scratch.row_mut(i)[0];
        *cell = 1.0 - *cell;
    }
}

/// Euclidean distance between estimator outputs.
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
