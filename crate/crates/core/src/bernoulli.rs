//! Hypercube layers: uniform layer draws, the flip transport between layers,
//! the beta-binomial weight law, and exact expected sensitivity of estimators
//! on Bernoulli data by enumeration.

use rayon::prelude::*;
use serde::Serialize;

use crate::adversaries::{binomial, hamming_ball_sup};
use crate::analysis::{ln_binomial, Moments};
use crate::data::CorruptionBudget;
use crate::error::{invalid, Result, SensError};
use crate::estimators::{compensated_sum, Estimator};
use crate::rng::{par_trials, RngStream};

/// Largest `n` accepted by the exhaustive routines.
pub const ENUMERATION_MAX_N: usize = 20;

/// `Layer(t)`: the binary `n`-vectors of Hamming weight `t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct LayerSpec {
    pub n: usize,
    pub t: usize,
}

impl LayerSpec {
    pub fn new(n: usize, t: usize) -> Result<Self> {
        if n == 0 || t > n {
            return Err(invalid(format!("layer needs n >= 1 and 0 <= t <= n, got n = {n}, t = {t}")));
        }
        Ok(Self { n, t })
    }

    pub fn size(&self) -> u64 {
        binomial(self.n as u64, self.t as u64)
    }
}

pub fn weight(x: &[u8]) -> usize {
    x.iter().filter(|&&b| b == 1).count()
}

fn check_bits(x: &[u8]) -> Result<()> {
    if x.is_empty() || x.iter().any(|&b| b > 1) {
        return Err(invalid("expected a nonempty 0/1 vector"));
    }
    Ok(())
}

/// Uniform element of the layer: a random `t`-subset of positions set to 1.
pub fn uniform_layer_sample(spec: LayerSpec, stream: RngStream) -> Vec<u8> {
    let mut x = vec![0u8; spec.n];
    for i in stream.rng().subset(spec.n, spec.t) {
        x[i] = 1;
    }
    x
}

/// Flips a uniformly random `ell`-subset of the zero coordinates of `x` to 1.
pub fn layer_transport(x: &[u8], ell: usize, stream: RngStream) -> Result<Vec<u8>> {
    check_bits(x)?;
    let zeros: Vec<usize> = (0..x.len()).filter(|&i| x[i] == 0).collect();
    if ell > zeros.len() {
        return Err(invalid(format!("cannot flip {ell} coordinates, only {} zeros", zeros.len())));
    }
    let mut y = x.to_vec();
    for j in stream.rng().subset(zeros.len(), ell) {
        y[zeros[j]] = 1;
    }
    Ok(y)
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// An exact law on `{0,1}^n`: `P(mask) = weights[mask] / total`, with bit `i`
/// of `mask` the `i`-th coordinate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BitLaw {
    pub n: usize,
    pub weights: Vec<u128>,
    pub total: u128,
}

impl BitLaw {
    fn check_n(n: usize) -> Result<()> {
        if n == 0 || n > ENUMERATION_MAX_N {
            return Err(SensError::EnumerationGuard(format!("exact laws need 1 <= n <= {ENUMERATION_MAX_N}, got {n}")));
        }
        Ok(())
    }

    pub fn point(x: &[u8]) -> Result<Self> {
        check_bits(x)?;
        Self::check_n(x.len())?;
        let mut weights = vec![0; 1 << x.len()];
        weights[to_mask(x)] = 1;
        Ok(Self { n: x.len(), weights, total: 1 })
    }

    pub fn uniform_layer(spec: LayerSpec) -> Result<Self> {
        Self::check_n(spec.n)?;
        let weights: Vec<u128> = (0..1usize << spec.n)
            .map(|m| u128::from(m.count_ones() as usize == spec.t))
            .collect();
        Ok(Self { n: spec.n, weights, total: spec.size() as u128 })
    }

    pub fn probability(&self, x: &[u8]) -> f64 {
        self.weights[to_mask(x)] as f64 / self.total as f64
    }

    /// Exact law of [`layer_transport`] applied to a draw from `self`.
    pub fn transport(&self, ell: usize) -> Result<Self> {
        let fanout = |mask: usize| binomial((self.n - mask.count_ones() as usize) as u64, ell as u64) as u128;
        let mut scale = 1u128;
        for (mask, &w) in self.weights.iter().enumerate() {
            if w == 0 {
                continue;
            }
            let f = fanout(mask);
            if f == 0 {
                return Err(invalid(format!("cannot flip {ell} coordinates of a weight-{} vector", mask.count_ones())));
            }
            scale = scale / gcd(scale, f) * f;
        }
        let mut weights = vec![0u128; self.weights.len()];
        for (mask, &w) in self.weights.iter().enumerate() {
            if w == 0 {
                continue;
            }
            let share = w * (scale / fanout(mask));
            let zeros: Vec<usize> = (0..self.n).filter(|i| mask >> i & 1 == 0).collect();
            for_each_subset(zeros.len(), ell, |subset| {
                let child = subset.iter().fold(mask, |m, &j| m | 1 << zeros[j]);
                weights[child] += share;
            });
        }
        let mut law = Self { n: self.n, weights, total: self.total * scale };
        law.reduce();
        Ok(law)
    }

    fn reduce(&mut self) {
        let g = self.weights.iter().fold(self.total, |g, &w| gcd(g, w));
        if g > 1 {
            self.weights.iter_mut().for_each(|w| *w /= g);
            self.total /= g;
        }
    }

    /// Exact equality of the two laws.
    pub fn same_law(&self, other: &Self) -> bool {
        self.n == other.n
            && self.weights.iter().zip(&other.weights).all(|(a, b)| a * other.total == b * self.total)
    }
}

fn to_mask(x: &[u8]) -> usize {
    x.iter().enumerate().fold(0, |m, (i, &b)| m | (b as usize) << i)
}

/// Visits every `k`-subset of `0..n` in lexicographic order.
fn for_each_subset(n: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    if k > n {
        return;
    }
    loop {
        visit(&idx);
        let Some(pos) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return;
        };
        idx[pos] += 1;
        for j in pos + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Law of `|X|` when `P ~ Unif[0, 1]` and `X ~ Bern(P)^n`:
/// `P(T = t) = C(n, t) B(t + 1, n - t + 1)`, which is `1 / (n + 1)` for every `t`.
pub fn beta_binomial_layer_law(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(invalid("n must be positive"));
    }
    let log_norm = libm::lgamma(n as f64 + 2.0);
    Ok((0..=n)
        .map(|t| {
            let beta = libm::lgamma(t as f64 + 1.0) + libm::lgamma((n - t) as f64 + 1.0) - log_norm;
            (ln_binomial(n as u64, t as u64) + beta).exp()
        })
        .collect())
}

/// `ln(p^w (1-p)^(n-w))` with `0^0 = 1`.
fn ln_weight(p: f64, n: usize, w: usize) -> f64 {
    let term = |count: usize, q: f64| if count == 0 { 0.0 } else { count as f64 * q.ln() };
    term(w, p) + term(n - w, 1.0 - p)
}

fn check_p(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid(format!("p must lie in [0, 1], got {p}")));
    }
    Ok(())
}

fn bits_of(mask: usize, n: usize) -> Vec<u8> {
    (0..n).map(|i| (mask >> i & 1) as u8).collect()
}

/// Exact `E_{X ~ Bern(p)^n}[S(X)]`, where `S(x)` is the largest change of `f`
/// over the Hamming ball of radius `k` around `x`.
///
/// All `2^n` datasets are enumerated in parallel over fixed index ranges;
/// partial sums are combined in index order.
pub fn bernoulli_expected_sensitivity(f: &dyn Estimator, n: usize, p: f64, budget: &CorruptionBudget) -> Result<f64> {
    if n == 0 || n > ENUMERATION_MAX_N {
        return Err(SensError::EnumerationGuard(format!("enumeration needs 1 <= n <= {ENUMERATION_MAX_N}, got {n}")));
    }
    check_p(p)?;
    if budget.n != n {
        return Err(invalid(format!("budget is for n = {}, enumeration uses n = {n}", budget.n)));
    }
    if budget.k == 0 {
        return Ok(0.0);
    }
    crate::adversaries::check_ball_guard(n, budget.k)?;
    const CHUNK: usize = 1 << 10;
    let space = 1usize << n;
    let parts: Vec<Result<(f64, f64)>> = (0..space.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut num = Vec::with_capacity(CHUNK);
            let mut den = Vec::with_capacity(CHUNK);
            for mask in c * CHUNK..((c + 1) * CHUNK).min(space) {
                let w = ln_weight(p, n, mask.count_ones() as usize).exp();
                if w == 0.0 {
                    continue;
                }
                let sup = hamming_ball_sup(f, &bits_of(mask, n), budget)?.certificate.unwrap_or(0.0);
                num.push(w * sup);
                den.push(w);
            }
            Ok((compensated_sum(num), compensated_sum(den)))
        })
        .collect();
    let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
    let num = compensated_sum(parts.iter().map(|p| p.0));
    let den = compensated_sum(parts.iter().map(|p| p.1));
    Ok(num / den)
}

/// Monte Carlo estimate of the same expectation, with its standard error.
pub fn bernoulli_mc_sensitivity(
    f: &dyn Estimator,
    n: usize,
    p: f64,
    budget: &CorruptionBudget,
    trials: u64,
    stream: RngStream,
) -> Result<(f64, f64)> {
    check_p(p)?;
    if trials < 2 {
        return Err(invalid("need at least 2 trials"));
    }
    crate::adversaries::check_ball_guard(n, budget.k)?;
    let sups = par_trials(trials, stream, |_, rng| {
        let x: Vec<u8> = (0..n).map(|_| u8::from(rng.bernoulli(p))).collect();
        hamming_ball_sup(f, &x, budget).map(|o| o.certificate.unwrap_or(0.0))
    });
    let sups = sups.into_iter().collect::<Result<Vec<_>>>()?;
    let m = Moments::of(&sups);
    Ok((m.mean, m.stderr()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{clip_estimator, BernoulliPlugin, ClipInterval, FnEstimator};
    use crate::data::Dataset;
    use std::sync::Arc;

    fn budget(n: usize, k: usize) -> CorruptionBudget {
        CorruptionBudget::from_k(n, k).unwrap()
    }

    #[test]
    fn layer_extremes() {
        assert_eq!(uniform_layer_sample(LayerSpec::new(6, 0).unwrap(), RngStream::new(1, 0)), vec![0; 6]);
        assert_eq!(uniform_layer_sample(LayerSpec::new(6, 6).unwrap(), RngStream::new(1, 0)), vec![1; 6]);
        assert!(LayerSpec::new(3, 4).is_err());
    }

    #[test]
    fn layer_frequencies() {
        let spec = LayerSpec::new(4, 2).unwrap();
        let trials = 60_000u64;
        let mut counts = [0u64; 16];
        for t in 0..trials {
            let x = uniform_layer_sample(spec, RngStream::new(2, t));
            assert_eq!(weight(&x), 2);
            counts[to_mask(&x)] += 1;
        }
        let p = 1.0 / 6.0;
        let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
        let layer: Vec<usize> = (0..16).filter(|m: &usize| m.count_ones() == 2).collect();
        assert_eq!(layer.len(), 6);
        for m in layer {
            assert!((counts[m] as f64 - trials as f64 * p).abs() < 4.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn transport_examples() {
        let x = [1u8, 0, 0, 1, 0];
        assert_eq!(layer_transport(&x, 0, RngStream::new(3, 0)).unwrap(), x.to_vec());
        for s in 0..50 {
            let y = layer_transport(&x, 2, RngStream::new(3, s)).unwrap();
            assert_eq!(weight(&y), 4);
            let d = x.iter().zip(&y).filter(|(a, b)| a != b).count();
            assert_eq!(d, 2);
            assert!(x.iter().zip(&y).all(|(a, b)| a <= b));
        }
        assert!(layer_transport(&x, 4, RngStream::new(3, 0)).is_err());
    }

    #[test]
    fn transport_law_is_uniform_on_target_layer() {
        let law = BitLaw::uniform_layer(LayerSpec::new(5, 1).unwrap()).unwrap().transport(2).unwrap();
        for mask in 0..32usize {
            let x = bits_of(mask, 5);
            let expected = if mask.count_ones() == 3 { 1.0 / 10.0 } else { 0.0 };
            assert_eq!(law.probability(&x), expected);
        }
        assert!(law.same_law(&BitLaw::uniform_layer(LayerSpec::new(5, 3).unwrap()).unwrap()));
    }

    /// Counts (x, subset) pairs directly.
    #[test]
    fn transport_law_matches_pair_count() {
        let mut counts = [0u32; 32];
        for x in (0..32usize).filter(|m| m.count_ones() == 1) {
            for s in (0..32usize).filter(|m| m.count_ones() == 2 && m & x == 0) {
                counts[x | s] += 1;
            }
        }
        let total: u32 = counts.iter().sum();
        assert_eq!(total, 5 * 6);
        for (mask, &c) in counts.iter().enumerate() {
            assert_eq!(c, if mask.count_ones() == 3 { 3 } else { 0 });
        }
    }

    #[test]
    fn transport_composes() {
        for (t, l1, l2) in [(0, 1, 2), (1, 2, 1), (2, 1, 1), (0, 2, 3)] {
            let start = BitLaw::uniform_layer(LayerSpec::new(5, t).unwrap()).unwrap();
            let two = start.transport(l1).unwrap().transport(l2).unwrap();
            let one = start.transport(l1 + l2).unwrap();
            assert!(two.same_law(&one), "t={t} l1={l1} l2={l2}");
        }
        let point = BitLaw::point(&[0, 1, 0, 0, 1]).unwrap();
        assert!(point.transport(1).unwrap().transport(1).unwrap().same_law(&point.transport(2).unwrap()));
    }

    #[test]
    fn transport_sampler_matches_law() {
        let x = [0u8, 1, 0, 0, 0];
        let law = BitLaw::point(&x).unwrap().transport(2).unwrap();
        let trials = 30_000u64;
        let mut counts = [0u64; 32];
        for s in 0..trials {
            counts[to_mask(&layer_transport(&x, 2, RngStream::new(4, s)).unwrap())] += 1;
        }
        for (mask, &count) in counts.iter().enumerate() {
            let p = law.probability(&bits_of(mask, 5));
            let sigma = (trials as f64 * p * (1.0 - p)).sqrt().max(1.0);
            assert!((count as f64 - trials as f64 * p).abs() < 4.0 * sigma);
        }
    }

    #[test]
    fn beta_binomial_examples() {
        assert!(beta_binomial_layer_law(3).unwrap().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        assert!(beta_binomial_layer_law(1).unwrap().iter().all(|&v| (v - 0.5).abs() < 1e-15));
        for n in [2usize, 7, 20, 60, 200] {
            let law = beta_binomial_layer_law(n).unwrap();
            assert!((law.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(law.iter().all(|&v| (v - 1.0 / (n + 1) as f64).abs() < 1e-12));
        }
    }

    #[test]
    fn beta_binomial_quadrature() {
        // Gauss-Legendre on 40 nodes is exact for these degree-10 integrands.
        let n = 10u64;
        let (nodes, weights) = gauss_legendre(40);
        for t in 0..=n {
            let c = binomial(n, t) as f64;
            let integral: f64 = nodes
                .iter()
                .zip(&weights)
                .map(|(x, w)| {
                    let p = 0.5 * (x + 1.0);
                    0.5 * w * c * p.powi(t as i32) * (1.0 - p).powi((n - t) as i32)
                })
                .sum();
            assert!((integral - 1.0 / 11.0).abs() < 1e-10);
            assert!((integral - beta_binomial_layer_law(10).unwrap()[t as usize]).abs() < 1e-10);
        }
    }

    /// Nodes and weights by Newton iteration on Legendre polynomials.
    fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
        let mut nodes = Vec::with_capacity(m);
        let mut weights = Vec::with_capacity(m);
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for j in 2..=m {
                    let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
                let step = p1 / dp;
                x -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            nodes.push(x);
            weights.push(2.0 / ((1.0 - x * x) * dp * dp));
        }
        (nodes, weights)
    }

    #[test]
    fn plugin_expected_sensitivity_is_k_over_n() {
        for p in [0.1, 0.3, 0.5, 0.9] {
            let v = bernoulli_expected_sensitivity(&BernoulliPlugin, 12, p, &budget(12, 1)).unwrap();
            assert!((v - 1.0 / 12.0).abs() < 1e-12, "p={p}: {v}");
        }
        assert_eq!(bernoulli_expected_sensitivity(&BernoulliPlugin, 12, 0.4, &budget(12, 0)).unwrap(), 0.0);
        for (n, k) in [(6, 2), (8, 3), (10, 4)] {
            let v = bernoulli_expected_sensitivity(&BernoulliPlugin, n, 0.35, &budget(n, k)).unwrap();
            let ratio = k as f64 / n as f64;
            assert!((v - ratio).abs() < 1e-12);
            assert!(v >= ratio / 2.0);
        }
    }

    #[test]
    fn plugin_sensitivity_monotone_in_k() {
        let values: Vec<f64> = (0..=4)
            .map(|k| bernoulli_expected_sensitivity(&BernoulliPlugin, 10, 0.5, &budget(10, k)).unwrap())
            .collect();
        assert!(values.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn extreme_p_uses_zero_power_convention() {
        let v = bernoulli_expected_sensitivity(&BernoulliPlugin, 8, 0.0, &budget(8, 2)).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
        let clipped = clip_estimator(Arc::new(BernoulliPlugin), ClipInterval::new(0.0, 0.5).unwrap()).unwrap();
        let edge = bernoulli_expected_sensitivity(clipped.as_ref(), 8, 1.0, &budget(8, 2)).unwrap();
        assert_eq!(edge, 0.0);
    }

    #[test]
    fn enumeration_matches_direct_sum() {
        // A nonlinear statistic against a hand-rolled sum over all inputs.
        let sq = FnEstimator::new("square", |x: &Dataset| {
            let m = x.as_slice().iter().sum::<f64>() / x.n() as f64;
            vec![m * m]
        });
        let (n, k, p) = (7usize, 2usize, 0.3f64);
        let mut direct = 0.0;
        for mask in 0..1usize << n {
            let w = mask.count_ones() as i32;
            let weight = p.powi(w) * (1.0 - p).powi(n as i32 - w);
            let base = (w as f64 / n as f64).powi(2);
            let best = (w - k as i32..=w + k as i32)
                .filter(|&v| (0..=n as i32).contains(&v))
                .map(|v| ((v as f64 / n as f64).powi(2) - base).abs())
                .fold(0.0, f64::max);
            direct += weight * best;
        }
        let v = bernoulli_expected_sensitivity(&sq, n, p, &budget(n, k)).unwrap();
        assert!((v - direct).abs() < 1e-13);
    }

    #[test]
    fn mc_agrees_with_enumeration() {
        let exact = bernoulli_expected_sensitivity(&BernoulliPlugin, 10, 0.5, &budget(10, 2)).unwrap();
        let (mc, se) = bernoulli_mc_sensitivity(&BernoulliPlugin, 10, 0.5, &budget(10, 2), 500, RngStream::new(5, 0)).unwrap();
        assert!((mc - exact).abs() <= 4.0 * se + 1e-12);
    }

    #[test]
    fn guard() {
        assert!(matches!(
            bernoulli_expected_sensitivity(&BernoulliPlugin, 21, 0.5, &budget(21, 1)),
            Err(SensError::EnumerationGuard(_))
        ));
    }
}
