//! Concrete estimators and the clip / projection combinators.
//!
//! An [`Estimator`] is a deterministic map from a [`Dataset`] to a vector.
//! Scalar estimators over `R^n` (or over binary vectors) take one-column
//! datasets.

use std::fmt;
use std::sync::Arc;

use crate::data::Dataset;
use crate::error::{invalid, Result, SensError};
use crate::rng::RngStream;

/// Static facts about an estimator the harness may rely on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EstimatorProps {
    /// `f(x + c) = f(x) + c` for every constant shift `c`.
    pub translation_equivariant: bool,
    /// `f` is linear in the data.
    pub linear: bool,
    /// Required sample dimension, if any.
    pub input_dim: Option<usize>,
}

pub trait Estimator: Send + Sync {
    fn name(&self) -> String;

    fn evaluate(&self, x: &Dataset) -> Vec<f64>;

    fn output_dim(&self, input_dim: usize) -> usize {
        input_dim
    }

    fn props(&self) -> EstimatorProps {
        EstimatorProps::default()
    }
}

pub type SharedEstimator = Arc<dyn Estimator>;

impl fmt::Debug for dyn Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Estimator({})", self.name())
    }
}

/// Neumaier compensated sum.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Coordinatewise arithmetic mean.
pub fn empirical_mean(x: &Dataset) -> Vec<f64> {
    let n = x.n() as f64;
    (0..x.d())
        .map(|j| compensated_sum(x.rows().map(|r| r[j])) / n)
        .collect()
}

/// Index (zero-based) of the median order statistic: `x_(m)` for `n = 2m - 1`,
/// the lower median `x_(n/2)` for even `n`.
pub fn median_rank(n: usize) -> usize {
    (n - 1) / 2
}

/// The `rank`-th smallest element (zero-based), by selection. Reorders `values`.
pub fn select_nth(values: &mut [f64], rank: usize) -> f64 {
    *values.select_nth_unstable_by(rank, f64::total_cmp).1
}

/// Per coordinate, the order statistic at [`median_rank`].
pub fn coordinatewise_median(x: &Dataset) -> Vec<f64> {
    let rank = median_rank(x.n());
    let mut scratch = Vec::with_capacity(x.n());
    (0..x.d())
        .map(|j| {
            scratch.clear();
            scratch.extend(x.rows().map(|r| r[j]));
            select_nth(&mut scratch, rank)
        })
        .collect()
}

/// `|x| / n` for a binary vector.
pub fn bernoulli_plugin(x: &[u8]) -> Result<f64> {
    if x.is_empty() {
        return Err(invalid("binary vector must be nonempty"));
    }
    if x.iter().any(|&b| b > 1) {
        return Err(invalid("binary vector entries must be 0 or 1"));
    }
    let ones = x.iter().filter(|&&b| b == 1).count();
    Ok(ones as f64 / x.len() as f64)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Mean;

impl Estimator for Mean {
    fn name(&self) -> String {
        "mean".into()
    }

    fn evaluate(&self, x: &Dataset) -> Vec<f64> {
        empirical_mean(x)
    }

    fn props(&self) -> EstimatorProps {
        EstimatorProps {
            translation_equivariant: true,
            linear: true,
            input_dim: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Median;

impl Estimator for Median {
    fn name(&self) -> String {
        "median".into()
    }

    fn evaluate(&self, x: &Dataset) -> Vec<f64> {
        coordinatewise_median(x)
    }

    fn props(&self) -> EstimatorProps {
        EstimatorProps {
            translation_equivariant: true,
            linear: false,
            input_dim: None,
        }
    }
}

/// Plug-in estimate of a Bernoulli parameter on a one-column 0/1 dataset.
#[derive(Clone, Copy, Debug, Default)]
pub struct BernoulliPlugin;

impl Estimator for BernoulliPlugin {
    fn name(&self) -> String {
        "bernoulli-plugin".into()
    }

    fn evaluate(&self, x: &Dataset) -> Vec<f64> {
        let ones = x.as_slice().iter().filter(|&&v| v == 1.0).count();
        vec![ones as f64 / x.n() as f64]
    }

    fn output_dim(&self, _input_dim: usize) -> usize {
        1
    }

    fn props(&self) -> EstimatorProps {
        EstimatorProps {
            input_dim: Some(1),
            ..EstimatorProps::default()
        }
    }
}

/// Ignores the data.
#[derive(Clone, Debug)]
pub struct Constant(pub Vec<f64>);

impl Estimator for Constant {
    fn name(&self) -> String {
        "constant".into()
    }

    fn evaluate(&self, _x: &Dataset) -> Vec<f64> {
        self.0.clone()
    }

    fn output_dim(&self, _input_dim: usize) -> usize {
        self.0.len()
    }
}

/// A user-supplied estimator.
pub struct FnEstimator<F> {
    name: String,
    f: F,
    props: EstimatorProps,
}

impl<F> FnEstimator<F>
where
    F: Fn(&Dataset) -> Vec<f64> + Send + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self {
            name: name.into(),
            f,
            props: EstimatorProps::default(),
        }
    }

    pub fn with_props(mut self, props: EstimatorProps) -> Self {
        self.props = props;
        self
    }
}

impl<F> Estimator for FnEstimator<F>
where
    F: Fn(&Dataset) -> Vec<f64> + Send + Sync,
{
    fn name(&self) -> String {
        self.name.clone()
    }

    fn evaluate(&self, x: &Dataset) -> Vec<f64> {
        (self.f)(x)
    }

    fn output_dim(&self, _input_dim: usize) -> usize {
        1
    }

    fn props(&self) -> EstimatorProps {
        self.props
    }
}

/// Closed interval `[lo, hi]` with `lo < hi`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClipInterval {
    lo: f64,
    hi: f64,
}

impl ClipInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(SensError::NonFinite);
        }
        if lo >= hi {
            return Err(invalid(format!("clip interval needs lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn unit() -> Self {
        Self { lo: 0.0, hi: 1.0 }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    /// Euclidean projection onto the interval.
    pub fn clip(&self, v: f64) -> f64 {
        self.hi.min(self.lo.max(v))
    }
}

pub struct Clipped {
    inner: SharedEstimator,
    interval: ClipInterval,
}

impl Estimator for Clipped {
    fn name(&self) -> String {
        format!("clipped-{}", self.inner.name())
    }

    fn evaluate(&self, x: &Dataset) -> Vec<f64> {
        self.inner
            .evaluate(x)
            .into_iter()
            .map(|v| self.interval.clip(v))
            .collect()
    }

    fn output_dim(&self, input_dim: usize) -> usize {
        self.inner.output_dim(input_dim)
    }

    fn props(&self) -> EstimatorProps {
        EstimatorProps {
            input_dim: self.inner.props().input_dim,
            ..EstimatorProps::default()
        }
    }
}

/// `clip_K o f`. The inner estimator must be scalar on scalar data; on wider
/// outputs the projection is applied per coordinate (projection onto `K^d`).
pub fn clip_estimator(f: SharedEstimator, interval: ClipInterval) -> Result<SharedEstimator> {
    if f.output_dim(1) != 1 {
        return Err(invalid(format!(
            "clip needs a scalar estimator, `{}` has output dimension {}",
            f.name(),
            f.output_dim(1)
        )));
    }
    Ok(Arc::new(Clipped { inner: f, interval }))
}

/// Scalar estimator `g(t) = E_Z <u, f(t_1 u + V_1, ..., t_n u + V_n)>` with
/// `V_i = lambda + (I - u u^T) Z_i`.
///
/// The expectation is replaced by an average over `mc_inner` noise draws. Draw
/// `j` for sample size `n` always reads the same substream, so `g` is a
/// deterministic function of `t`.
pub struct Projected {
    inner: SharedEstimator,
    u: Vec<f64>,
    lambda: Vec<f64>,
    mc_inner: usize,
    noise: RngStream,
}

impl Projected {
    pub fn mc_inner(&self) -> usize {
        self.mc_inner
    }

    pub fn direction(&self) -> &[f64] {
        &self.u
    }

    /// The lifted `d`-dimensional dataset for inner draw `draw`.
    pub fn lift(&self, t: &[f64], draw: usize) -> Dataset {
        let dim = self.u.len();
        let n = t.len();
        let mut rng = self.noise.substream(n as u64).substream(draw as u64).rng();
        let mut values = Vec::with_capacity(n * dim);
        let mut z = vec![0.0; dim];
        for &ti in t {
            z.iter_mut().for_each(|v| *v = rng.standard_normal());
            let uz = dot(&self.u, &z);
            values.extend(
                (0..dim).map(|j| ti * self.u[j] + self.lambda[j] + z[j] - uz * self.u[j]),
            );
        }
        Dataset::new(n, dim, values).expect("lifted samples are finite")
    }
}

impl Estimator for Projected {
    fn name(&self) -> String {
        format!("projected:{}", self.inner.name())
    }

    fn evaluate(&self, x: &Dataset) -> Vec<f64> {
        let t = x.column(0);
        let total = compensated_sum(
            (0..self.mc_inner).map(|j| dot(&self.u, &self.inner.evaluate(&self.lift(&t, j)))),
        );
        vec![total / self.mc_inner as f64]
    }

    fn output_dim(&self, _input_dim: usize) -> usize {
        1
    }

    fn props(&self) -> EstimatorProps {
        let inner = self.inner.props();
        EstimatorProps {
            translation_equivariant: inner.translation_equivariant,
            linear: inner.linear,
            input_dim: Some(1),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Default inner draw count: one for linear estimators (the noise term is
/// annihilated by `u`), 256 otherwise.
pub fn default_mc_inner(f: &dyn Estimator) -> usize {
    if f.props().linear {
        1
    } else {
        256
    }
}

pub fn project_scalar(
    f: SharedEstimator,
    u: Vec<f64>,
    lambda: Vec<f64>,
    mc_inner: Option<usize>,
    noise: RngStream,
) -> Result<SharedEstimator> {
    if u.len() != lambda.len() || u.is_empty() {
        return Err(invalid("direction and offset must have equal nonzero dimension"));
    }
    if u.iter().chain(&lambda).any(|v| !v.is_finite()) {
        return Err(SensError::NonFinite);
    }
    let norm = dot(&u, &u).sqrt();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(invalid(format!("direction must be a unit vector, |u| = {norm}")));
    }
    let ip = dot(&u, &lambda);
    if ip.abs() > 1e-10 {
        return Err(invalid(format!("offset must be orthogonal to the direction, <u, lambda> = {ip}")));
    }
    if f.output_dim(u.len()) != u.len() {
        return Err(invalid("projected estimator must map R^d samples to R^d"));
    }
    let mc_inner = mc_inner.unwrap_or_else(|| default_mc_inner(f.as_ref()));
    if mc_inner == 0 {
        return Err(invalid("mc_inner must be positive"));
    }
    Ok(Arc::new(Projected {
        inner: f,
        u,
        lambda,
        mc_inner,
        noise,
    }))
}

/// Uniform draw from the unit sphere in `R^d`.
pub fn random_unit_vector(d: usize, stream: RngStream) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(invalid("dimension must be positive"));
    }
    let mut rng = stream.rng();
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-12 {
            return Ok(v.into_iter().map(|x| x / norm).collect());
        }
    }
}

/// Options consumed when resolving registry names.
#[derive(Clone, Debug)]
pub struct RegistryOptions {
    /// Interval used by the `clipped-*` entries.
    pub clip: ClipInterval,
    /// Dimension `d` of the space a `projected:*` estimator lifts into.
    pub lift_dim: usize,
    /// Direction of a `projected:*` estimator; `e_1` when absent.
    pub direction: Option<Vec<f64>>,
    /// Offset of a `projected:*` estimator; zero when absent.
    pub offset: Option<Vec<f64>>,
    pub mc_inner: Option<usize>,
    pub seed: u64,
}

impl Default for RegistryOptions {
    fn default() -> Self {
        Self {
            clip: ClipInterval::unit(),
            lift_dim: 2,
            direction: None,
            offset: None,
            mc_inner: None,
            seed: 0,
        }
    }
}

pub const ESTIMATOR_NAMES: &[&str] = &[
    "mean",
    "median",
    "clipped-mean",
    "clipped-median",
    "projected:<inner>",
    "bernoulli-plugin",
];

/// Resolves an estimator by registry name.
pub fn estimator_by_name(name: &str, opts: &RegistryOptions) -> Result<SharedEstimator> {
    match name {
        "mean" => Ok(Arc::new(Mean)),
        "median" => Ok(Arc::new(Median)),
        "clipped-mean" => clip_estimator(Arc::new(Mean), opts.clip),
        "clipped-median" => clip_estimator(Arc::new(Median), opts.clip),
        "bernoulli-plugin" => Ok(Arc::new(BernoulliPlugin)),
        _ => match name.strip_prefix("projected:") {
            Some(inner) if !inner.starts_with("projected:") => {
                let inner = estimator_by_name(inner, opts)?;
                let d = opts.lift_dim;
                let u = opts.direction.clone().unwrap_or_else(|| {
                    let mut e = vec![0.0; d];
                    e[0] = 1.0;
                    e
                });
                let lambda = opts.offset.clone().unwrap_or_else(|| vec![0.0; u.len()]);
                project_scalar(inner, u, lambda, opts.mc_inner, RngStream::new(opts.seed, u64::MAX))
            }
            _ => Err(SensError::UnknownEstimator(name.into())),
        },
    }
}
