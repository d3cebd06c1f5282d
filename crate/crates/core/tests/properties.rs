use std::sync::Arc;

use proptest::prelude::*;
use senslab::adversaries::*;
use senslab::bernoulli::*;
use senslab::data::*;
use senslab::estimators::*;
use senslab::harness::*;
use senslab::RngStream;

fn gaussian_data(n: usize, d: usize, seed: u64) -> Dataset {
    sample_gaussian(&GaussianModel::centered(d).unwrap(), n, RngStream::new(seed, 0)).unwrap()
}

fn bits(mask: u32, n: usize) -> Vec<u8> {
    (0..n).map(|i| (mask >> i & 1) as u8).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn outcomes_report_recomputed_distance(seed in any::<u64>(), n in 2usize..60, d in 1usize..4, frac in 0.01f64..0.49) {
        let x = gaussian_data(n, d, seed);
        let budget = CorruptionBudget::new(frac, n).unwrap();
        let model = GaussianModel::centered(d).unwrap();
        let mut outcomes = vec![resampling_adversary(&x, &budget, &model, RngStream::new(seed, 1)).unwrap()];
        if budget.k >= 1 {
            outcomes.push(block_resample(&x, &budget, 0, &model, RngStream::new(seed, 2)).unwrap());
            if d == 1 {
                outcomes.push(local_shift_adversary(&x, &budget, 0.5, RngStream::new(seed, 3)).unwrap());
            }
        }
        if d == 1 && n % 2 == 1 && budget.k < n.div_ceil(2) {
            outcomes.push(median_worst_case(&x, &budget).unwrap());
        }
        for o in outcomes {
            let h = hamming_distance(&x, &o.corrupted).unwrap();
            prop_assert_eq!(h, o.achieved_hamming);
            prop_assert_eq!(o.feasible, h <= budget.k);
            prop_assert!(o.feasible);
        }
    }

    #[test]
    fn median_certificate_nondecreasing_in_k(seed in any::<u64>(), m in 2usize..40) {
        let n = 2 * m - 1;
        let x = gaussian_data(n, 1, seed);
        let mut last = 0.0;
        for k in 0..m {
            let c = median_worst_case(&x, &CorruptionBudget::from_k(n, k).unwrap()).unwrap().certificate.unwrap();
            prop_assert!(c >= last);
            last = c;
        }
    }

    #[test]
    fn clipping_never_increases_pointwise_sensitivity(n in 1usize..=14, raw_mask in any::<u32>(), k in 1usize..3, lo in 0.0f64..0.5, width in 0.05f64..0.5) {
        let x = bits(raw_mask & ((1u32 << n) - 1), n);
        let budget = CorruptionBudget::from_k(n, k.min(n)).unwrap();
        let clipped = clip_estimator(Arc::new(Mean), ClipInterval::new(lo, lo + width).unwrap()).unwrap();
        let raw = hamming_ball_sup(&Mean, &x, &budget).unwrap().certificate.unwrap();
        let cut = hamming_ball_sup(clipped.as_ref(), &x, &budget).unwrap().certificate.unwrap();
        prop_assert!(cut <= raw + 1e-15);
    }

    #[test]
    fn projected_mean_ignores_inner_noise(seed in any::<u64>(), n in 1usize..30, d in 2usize..6) {
        let u = random_unit_vector(d, RngStream::new(seed, 9)).unwrap();
        let t: Vec<f64> = gaussian_data(n, 1, seed).column(0);
        let x = Dataset::from_column(&t).unwrap();
        let a = project_scalar(Arc::new(Mean), u.clone(), vec![0.0; d], Some(1), RngStream::new(seed, 10)).unwrap();
        let b = project_scalar(Arc::new(Mean), u, vec![0.0; d], Some(7), RngStream::new(seed ^ 1, 11)).unwrap();
        let mean = t.iter().sum::<f64>() / n as f64;
        prop_assert!((a.evaluate(&x)[0] - mean).abs() <= 1e-12);
        prop_assert!((b.evaluate(&x)[0] - mean).abs() <= 1e-12);
    }

    #[test]
    fn layer_transport_flips_exactly_ell_zeros(n in 1usize..40, t in 0usize..40, ell in 0usize..40, seed in any::<u64>()) {
        prop_assume!(t <= n && ell <= n - t);
        let x = uniform_layer_sample(LayerSpec::new(n, t).unwrap(), RngStream::new(seed, 0));
        let y = layer_transport(&x, ell, RngStream::new(seed, 1)).unwrap();
        prop_assert_eq!(weight(&y), t + ell);
        prop_assert!(x.iter().zip(&y).all(|(a, b)| a <= b));
    }

    #[test]
    fn beta_binomial_law_is_uniform(n in 1usize..200) {
        let law = beta_binomial_layer_law(n).unwrap();
        prop_assert_eq!(law.len(), n + 1);
        prop_assert!((law.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(law.iter().all(|v| (v - 1.0 / (n + 1) as f64).abs() <= 1e-12));
    }

    #[test]
    fn plugin_sensitivity_is_k_over_n(n in 2usize..=14, k in 1usize..4, p in 0.05f64..0.95) {
        prop_assume!(2 * k <= n);
        let v = bernoulli_expected_sensitivity(&BernoulliPlugin, n, p, &CorruptionBudget::from_k(n, k).unwrap()).unwrap();
        prop_assert!((v - k as f64 / n as f64).abs() <= 1e-12);
        prop_assert!(v >= k as f64 / (2 * n) as f64);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn l2_dominates_l1_on_shared_streams(seed in any::<u64>(), eta in 0.02f64..0.3) {
        let model = Model::gaussian(vec![0.0; 3]).unwrap();
        let l1 = estimate_es(&Mean, &AdversarySpec::Resample, &model, eta, 200, 1, 200, seed).unwrap();
        let l2 = estimate_es(&Mean, &AdversarySpec::Resample, &model, eta, 200, 2, 200, seed).unwrap();
        prop_assert!(l2.es_estimate >= l1.es_estimate * (1.0 - 1e-14));
    }

    #[test]
    fn exact_adversary_es_monotone_in_eta(seed in any::<u64>(), e1 in 0.01f64..0.2, bump in 0.0f64..0.25) {
        let model = Model::gaussian(vec![0.0]).unwrap();
        let lo = estimate_es(&Median, &AdversarySpec::MedianExact, &model, e1, 201, 2, 100, seed).unwrap();
        let hi = estimate_es(&Median, &AdversarySpec::MedianExact, &model, e1 + bump, 201, 2, 100, seed).unwrap();
        prop_assert!(hi.es_estimate >= lo.es_estimate);
    }
}

#[test]
fn block_certificate_matches_resampling_closed_form() {
    let (n, d, eta) = (400, 16, 0.1);
    let r = variance_obstruction(&Mean, &GaussianModel::centered(d).unwrap(), eta, n, 4000, 5).unwrap();
    let k = compute_k(eta, n).unwrap();
    let closed = ((2 * k * d) as f64).sqrt() / n as f64;
    assert!((r.implied_es_lb - closed).abs() <= 0.03 * closed, "{} vs {closed}", r.implied_es_lb);
}

#[test]
fn mean_is_unbounded_under_adaptive_replacement() {
    let x = gaussian_data(50, 1, 3);
    let base = Mean.evaluate(&x)[0];
    let mut last = 0.0;
    for m in [1e2, 1e4, 1e8, 1e16] {
        let mut y = x.clone();
        y.set_row(0, &[m]).unwrap();
        let gap = (Mean.evaluate(&y)[0] - base).abs();
        assert!(gap > last && gap >= m / 50.0 * 0.99);
        last = gap;
    }
    let model = Model::gaussian(vec![0.0]).unwrap();
    let err = estimate_es(&Mean, &AdversarySpec::MedianExact, &model, 0.1, 51, 2, 100, 0).unwrap_err();
    assert!(matches!(err, senslab::SensError::UnboundedSensitivity { .. }), "{err}");
}
