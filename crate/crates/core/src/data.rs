//! Datasets, corruption budgets and the Gaussian location model.

use serde::Serialize;

use crate::error::{invalid, Result, SensError};
use crate::rng::{RngStream, StreamRng};

/// An `n x d` array of finite samples, stored row-major. Row `i` is sample `X_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl Dataset {
    pub fn new(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(invalid(format!("dataset needs n >= 1 and d >= 1, got {n} x {d}")));
        }
        if values.len() != n * d {
            return Err(invalid(format!(
                "dataset of shape {n} x {d} needs {} values, got {}",
                n * d,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SensError::NonFinite);
        }
        Ok(Self { n, d, values })
    }

    /// A one-dimensional dataset.
    pub fn from_column(column: &[f64]) -> Result<Self> {
        Self::new(column.len(), 1, column.to_vec())
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(invalid("rows have unequal lengths"));
        }
        Self::new(rows.len(), d, rows.concat())
    }

    /// A one-dimensional dataset of 0/1 entries.
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(invalid("binary vector entries must be 0 or 1"));
        }
        Self::new(bits.len(), 1, bits.iter().map(|&b| f64::from(b)).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n, self.d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.d)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn set_row(&mut self, i: usize, row: &[f64]) -> Result<()> {
        if i >= self.n {
            return Err(invalid(format!("row {i} out of range for n = {}", self.n)));
        }
        if row.len() != self.d {
            return Err(SensError::ShapeMismatch {
                expected: (1, self.d),
                found: (1, row.len()),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(SensError::NonFinite);
        }
        self.row_mut(i).copy_from_slice(row);
        Ok(())
    }

    /// Adds `c` to every row.
    pub fn translated(&self, c: &[f64]) -> Result<Self> {
        if c.len() != self.d {
            return Err(SensError::ShapeMismatch {
                expected: (1, self.d),
                found: (1, c.len()),
            });
        }
        let values = self
            .values
            .chunks_exact(self.d)
            .flat_map(|r| r.iter().zip(c).map(|(a, b)| a + b))
            .collect();
        Self::new(self.n, self.d, values)
    }
}

/// Number of corruptible rows, `floor(eta * n)`.
///
/// The product is floored exactly, except that a product within a few ulps of
/// an integer is snapped to it: `0.29 * 100` is stored as `28.999999999999996`
/// but denotes 29 rows.
pub fn compute_k(eta: f64, n: usize) -> Result<usize> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(SensError::InvalidEta(eta));
    }
    if n == 0 {
        return Err(invalid("n must be positive"));
    }
    let p = eta * n as f64;
    let r = p.round();
    let k = if (p - r).abs() <= 4.0 * f64::EPSILON * p.max(1.0) {
        r
    } else {
        p.floor()
    };
    Ok(k as usize)
}

/// The pair `(eta, k)` governing how many rows an adversary may replace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CorruptionBudget {
    pub eta: f64,
    pub n: usize,
    pub k: usize,
}

impl CorruptionBudget {
    pub fn new(eta: f64, n: usize) -> Result<Self> {
        let k = compute_k(eta, n)?;
        Ok(Self { eta, n, k })
    }

    /// Budget fixed by its row count; `eta` is recorded as `k / n`.
    pub fn from_k(n: usize, k: usize) -> Result<Self> {
        if n == 0 || k > n {
            return Err(invalid(format!("need 0 <= k <= n with n >= 1, got k = {k}, n = {n}")));
        }
        Ok(Self {
            eta: k as f64 / n as f64,
            n,
            k,
        })
    }

    /// Errors unless at least one row may be corrupted.
    pub fn require_corruption(&self) -> Result<()> {
        if self.k == 0 {
            return Err(invalid(format!(
                "eta = {} with n = {} allows no corrupted row",
                self.eta, self.n
            )));
        }
        Ok(())
    }
}

/// Number of rows at which two equally shaped datasets differ.
///
/// Rows are compared by exact stored value.
pub fn hamming_distance(x: &Dataset, y: &Dataset) -> Result<usize> {
    if x.shape() != y.shape() {
        return Err(SensError::ShapeMismatch {
            expected: x.shape(),
            found: y.shape(),
        });
    }
    Ok(x.rows().zip(y.rows()).filter(|(a, b)| a != b).count())
}

/// `N(mu, I_d)`; the covariance is always the identity.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GaussianModel {
    mu: Vec<f64>,
}

impl GaussianModel {
    pub fn new(mu: Vec<f64>) -> Result<Self> {
        if mu.is_empty() {
            return Err(invalid("mean vector must be nonempty"));
        }
        if mu.iter().any(|m| !m.is_finite()) {
            return Err(SensError::NonFinite);
        }
        Ok(Self { mu })
    }

    pub fn centered(d: usize) -> Result<Self> {
        Self::new(vec![0.0; d])
    }

    pub fn scalar(mu: f64) -> Result<Self> {
        Self::new(vec![mu])
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn d(&self) -> usize {
        self.mu.len()
    }

    /// Fills `row` with one draw.
    pub fn fill_row(&self, rng: &mut StreamRng, row: &mut [f64]) {
        for (v, m) in row.iter_mut().zip(&self.mu) {
            *v = m + rng.standard_normal();
        }
    }
}

/// `n` i.i.d. rows from `model`, deterministic in `stream`.
pub fn sample_gaussian(model: &GaussianModel, n: usize, stream: RngStream) -> Result<Dataset> {
    model.sample(n, &mut stream.rng())
}

impl GaussianModel {
    /// `n` i.i.d. rows drawn from an open generator.
    pub fn sample(&self, n: usize, rng: &mut StreamRng) -> Result<Dataset> {
        if n == 0 {
            return Err(invalid("n must be positive"));
        }
        let d = self.d();
        let mut values = vec![0.0; n * d];
        for row in values.chunks_exact_mut(d) {
            self.fill_row(rng, row);
        }
        Dataset::new(n, d, values)
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn compute_k_examples() {
        assert_eq!(compute_k(0.1, 100).unwrap(), 10);
        assert_eq!(compute_k(0.29, 7).unwrap(), 2);
        assert_eq!(compute_k(1.0 / 50.0, 50).unwrap(), 1);
        assert_eq!(compute_k(0.29, 100).unwrap(), 29);
        assert_eq!(compute_k(0.02, 4000).unwrap(), 80);
        assert_eq!(compute_k(0.05, 10001).unwrap(), 500);
    }

    #[test]
    fn compute_k_rejects_bad_eta() {
        for eta in [0.0, 1.0, -0.2, 1.5, f64::NAN] {
            assert!(matches!(compute_k(eta, 10), Err(SensError::InvalidEta(_))));
        }
    }

    proptest! {
        #[test]
        fn compute_k_brackets_eta_n(eta in 1e-6f64..0.999_999, n in 1usize..100_000) {
            let k = compute_k(eta, n).unwrap() as f64;
            let p = eta * n as f64;
            // Snapping may lift k by one only when p sits within ulps below it.
            prop_assert!(k <= p + 1e-9 * p.max(1.0));
            prop_assert!(p < k + 1.0);
        }

        #[test]
        fn hamming_is_a_metric(
            base in prop::collection::vec(-3.0f64..3.0, 8),
            flips in prop::collection::vec((0usize..8, 0usize..8, 0usize..8), 1..4),
        ) {
            let x = Dataset::from_column(&base).unwrap();
            for (a, b, c) in flips {
                let mut y = x.clone();
                y.row_mut(a)[0] += 1.0;
                let mut z = y.clone();
                z.row_mut(b)[0] -= 2.0;
                z.row_mut(c)[0] += 0.5;
                let dxy = hamming_distance(&x, &y).unwrap();
                let dyz = hamming_distance(&y, &z).unwrap();
                let dxz = hamming_distance(&x, &z).unwrap();
                prop_assert_eq!(dxy, hamming_distance(&y, &x).unwrap());
                prop_assert!(dxz <= dxy + dyz);
                prop_assert_eq!(hamming_distance(&z, &z).unwrap(), 0);
                prop_assert_eq!(dxy == 0, x == y);
            }
        }
    }

    #[test]
    fn hamming_examples() {
        let x = Dataset::from_rows(&(0..10).map(|i| vec![i as f64, 1.0]).collect::<Vec<_>>()).unwrap();
        assert_eq!(hamming_distance(&x, &x).unwrap(), 0);
        let mut y = x.clone();
        y.row_mut(2)[1] = 5.0;
        y.row_mut(7)[0] = -1.0;
        assert_eq!(hamming_distance(&x, &y).unwrap(), 2);

        let a = Dataset::from_column(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let b = a.translated(&[0.25]).unwrap();
        assert_eq!(hamming_distance(&a, &b).unwrap(), 5);

        let c = Dataset::from_column(&[1.0, 2.0]).unwrap();
        assert!(matches!(hamming_distance(&a, &c), Err(SensError::ShapeMismatch { .. })));
    }

    #[test]
    fn dataset_rejects_non_finite() {
        assert_eq!(Dataset::from_column(&[1.0, f64::NAN]), Err(SensError::NonFinite));
        assert!(Dataset::new(0, 1, vec![]).is_err());
        assert!(Dataset::from_bits(&[0, 2]).is_err());
    }

    #[test]
    fn gaussian_sampler_mean_d1() {
        let n = 100_000;
        let x = sample_gaussian(&GaussianModel::centered(1).unwrap(), n, RngStream::new(1, 0)).unwrap();
        let mean = x.as_slice().iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn gaussian_sampler_moments_d4() {
        let n = 100_000;
        let model = GaussianModel::new(vec![3.0; 4]).unwrap();
        let x = sample_gaussian(&model, n, RngStream::new(2, 5)).unwrap();
        for j in 0..4 {
            let col = x.column(j);
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!((mean - 3.0).abs() < 5.0 / (n as f64).sqrt());
            assert!((var - 1.0).abs() < 0.05);
            assert!((var - 1.0).abs() < 5.0 * (2.0 / n as f64).sqrt());
        }
    }

    #[test]
    fn gaussian_sampler_is_deterministic() {
        let model = GaussianModel::new(vec![0.5, -1.0]).unwrap();
        let a = sample_gaussian(&model, 50, RngStream::new(9, 4)).unwrap();
        let b = sample_gaussian(&model, 50, RngStream::new(9, 4)).unwrap();
        assert_eq!(
            a.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn normal_cdf_reference_values() {
        // Tabulated values of the standard normal CDF.
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-14);
        assert!((normal_cdf(-1.96) - 0.024_997_895_148_220_43).abs() < 1e-14);
        assert!((normal_cdf(0.05) - 0.519_938_805_838_372_3).abs() < 1e-14);
    }
}
