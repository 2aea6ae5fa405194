//! Distribution closeness tests.
//!
//! The norm-adaptive test compares its statistic to the asymptotic
//! threshold `ε + σ̂·z_{1-α}/√m`, testing at the least-favorable boundary
//! of the composite null `NAMMD ≤ ε`. The squared-MMD baseline does the
//! same with its own closeness level and unnormalized standard deviation.
//! A count-based total-variation test with a resampled threshold is
//! provided as the discrete-domain baseline.

use crate::error::{Error, Result};
use crate::estimators::{
    mmd_variance, multinomial_counts, sigma_estimator, tv_distance, DiscretePair, Reductions,
};
use crate::kernels::{KernelSpec, Sample};
use statrs::distribution::{ContinuousCDF, Normal};

/// Result of a single hypothesis test.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub threshold: f64,
    pub p_value: Option<f64>,
    pub reject: bool,
    pub alpha: f64,
    pub epsilon: f64,
    pub m: usize,
    pub method: String,
    pub seed: Option<u64>,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal parameters are valid")
}

/// `(1-α)`-quantile of the standard normal distribution.
pub fn normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    std_normal().cdf(z)
}

fn validate_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0,1), got {alpha}")));
    }
    Ok(())
}

fn asymptotic_p_value(stat: f64, epsilon: f64, sigma: f64, m: usize) -> f64 {
    let z = if sigma > 0.0 {
        (m as f64).sqrt() * (stat - epsilon) / sigma
    } else if stat > epsilon {
        f64::INFINITY
    } else if stat < epsilon {
        f64::NEG_INFINITY
    } else {
        0.0
    };
    1.0 - normal_cdf(z)
}

/// Norm-adaptive closeness test of `H0: NAMMD ≤ ε` at level `α`.
///
/// `ε = 0` is rejected here: the normal limit underlying the threshold
/// degenerates at zero, where the permutation two-sample test applies
/// instead (see [`crate::tst`]).
pub fn nammd_dct(
    x: &Sample,
    y: &Sample,
    spec: &KernelSpec,
    epsilon: f64,
    alpha: f64,
) -> Result<TestOutcome> {
    if !(epsilon.is_finite() && epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid(format!(
            "closeness level must lie in (0,1), got {epsilon}; use the permutation two-sample test for epsilon = 0"
        )));
    }
    validate_alpha(alpha)?;
    let r = Reductions::from_samples(spec, x, y)?;
    // At the boundary the statistic minus epsilon equals the U-statistic of
    // the combined kernel (1+ε)(κxx+κyy) - κxy - κyx over the norm
    // estimate, so the variance components are taken for that kernel: the
    // denominator's own fluctuation is correlated with the numerator and
    // ignoring it understates the spread for ε away from zero.
    let (z1, z2) = r.with_within_scaled(1.0 + epsilon).variance_components()?;
    let m = x.len();
    let statistic = r.nammd();
    let sigma = sigma_estimator(z1, z2, r.norm(), m);
    let threshold = epsilon + sigma * normal_quantile(1.0 - alpha) / (m as f64).sqrt();
    Ok(TestOutcome {
        statistic,
        threshold,
        p_value: Some(asymptotic_p_value(statistic, epsilon, sigma, m)),
        reject: statistic > threshold,
        alpha,
        epsilon,
        m,
        method: "nammd_dct".into(),
        seed: None,
    })
}

/// Squared-MMD closeness test of `H0: MMD² ≤ ε^M` at level `α`.
pub fn mmd_dct(
    x: &Sample,
    y: &Sample,
    spec: &KernelSpec,
    epsilon_m: f64,
    alpha: f64,
) -> Result<TestOutcome> {
    if !(epsilon_m.is_finite() && epsilon_m >= 0.0) {
        return Err(Error::invalid(format!(
            "closeness level must be nonnegative, got {epsilon_m}"
        )));
    }
    validate_alpha(alpha)?;
    let r = Reductions::from_samples(spec, x, y)?;
    let (z1, z2) = r.variance_components()?;
    let m = x.len();
    let statistic = r.mmd2();
    let sigma_m = mmd_variance(z1, z2, m).sqrt();
    let threshold = epsilon_m + sigma_m * normal_quantile(1.0 - alpha) / (m as f64).sqrt();
    Ok(TestOutcome {
        statistic,
        threshold,
        p_value: Some(asymptotic_p_value(statistic, epsilon_m, sigma_m, m)),
        reject: statistic > threshold,
        alpha,
        epsilon: epsilon_m,
        m,
        method: "mmd_dct".into(),
        seed: None,
    })
}

/// Empirical closeness levels of a reference pair: the norm-adaptive and
/// squared-MMD statistics, for use as `ε` in reference-pair testing.
pub fn reference_epsilon(x1: &Sample, y1: &Sample, spec: &KernelSpec) -> Result<(f64, f64)> {
    let r = Reductions::from_samples(spec, x1, y1)?;
    Ok((r.nammd(), r.mmd2()))
}

/// Count-based closeness statistic
/// `Σ ((X_i - Y_i)² - X_i - Y_i) / f̂_i` with
/// `f̂_i = max{|X'_i - Y'_i|, X'_i + Y'_i, 1}` from the reference halves.
pub fn canonne_statistic(
    cx: &[u64],
    cy: &[u64],
    cx_ref: &[u64],
    cy_ref: &[u64],
) -> Result<f64> {
    let n = cx.len();
    if cy.len() != n || cx_ref.len() != n || cy_ref.len() != n {
        return Err(Error::SizeMismatch {
            left: n,
            right: cy.len().max(cx_ref.len()).max(cy_ref.len()),
        });
    }
    let mut total = 0.0;
    for i in 0..n {
        let x = cx[i] as f64;
        let y = cy[i] as f64;
        let xr = cx_ref[i] as f64;
        let yr = cy_ref[i] as f64;
        let scale = (xr - yr).abs().max(xr + yr).max(1.0);
        total += ((x - y) * (x - y) - x - y) / scale;
    }
    Ok(total)
}

/// Smallest value `τ` among `values` whose empirical CDF reaches `1-α`;
/// ties resolve to the larger candidate, which is the conservative side.
pub(crate) fn empirical_upper_quantile(values: &[f64], alpha: f64) -> f64 {
    debug_assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("statistics are finite"));
    let b = sorted.len();
    let k = ((1.0 - alpha) * b as f64).ceil() as usize;
    sorted[k.clamp(1, b) - 1]
}

/// Total-variation closeness test with a resampled threshold.
///
/// `null_pair` carries the boundary distributions (TV equal to the
/// closeness level being tested); `test_pair` is the pair actually being
/// sampled. The four count vectors (test and reference halves for each
/// side) are drawn fresh, and the threshold is the `(1-α)`-quantile of
/// `b` statistics recomputed from samples of the null pair, with sample
/// sizes equal to the testing sample size.
pub fn canonne_dct(
    null_pair: &DiscretePair,
    test_pair: &DiscretePair,
    m: usize,
    alpha: f64,
    b: usize,
    rng: &mut impl rand::Rng,
) -> Result<TestOutcome> {
    if b < 100 {
        return Err(Error::config(format!(
            "resampling iteration count must be at least 100, got {b}"
        )));
    }
    validate_alpha(alpha)?;
    if null_pair.support_len() != test_pair.support_len() {
        return Err(Error::SizeMismatch {
            left: null_pair.support_len(),
            right: test_pair.support_len(),
        });
    }
    if m == 0 {
        return Err(Error::invalid("sample size must be positive"));
    }

    fn draw<R: rand::Rng>(probs: &[f64], m: usize, rng: &mut R) -> Result<Vec<u64>> {
        multinomial_counts(probs, m as u64, rng)
    }

    let cx = draw(test_pair.p(), m, rng)?;
    let cy = draw(test_pair.q(), m, rng)?;
    let cx_ref = draw(test_pair.p(), m, rng)?;
    let cy_ref = draw(test_pair.q(), m, rng)?;
    let statistic = canonne_statistic(&cx, &cy, &cx_ref, &cy_ref)?;

    let mut null_stats = Vec::with_capacity(b);
    for _ in 0..b {
        let nx = draw(null_pair.p(), m, rng)?;
        let ny = draw(null_pair.q(), m, rng)?;
        let nx_ref = draw(null_pair.p(), m, rng)?;
        let ny_ref = draw(null_pair.q(), m, rng)?;
        null_stats.push(canonne_statistic(&nx, &ny, &nx_ref, &ny_ref)?);
    }
    let threshold = empirical_upper_quantile(&null_stats, alpha);
    let exceed = null_stats.iter().filter(|&&t| t >= statistic).count();
    let p_value = (1 + exceed) as f64 / (b + 1) as f64;

    Ok(TestOutcome {
        statistic,
        threshold,
        p_value: Some(p_value),
        reject: statistic > threshold,
        alpha,
        epsilon: tv_distance(null_pair.p(), null_pair.q())?,
        m,
        method: "canonne_dct".into(),
        seed: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{KernelSpec, Sample};
    use rand::SeedableRng;

    fn fixed_samples() -> (Sample, Sample) {
        let x = Sample::from_rows(vec![
            vec![0.1, 0.4],
            vec![-0.3, 0.2],
            vec![0.7, -0.9],
            vec![1.2, 0.1],
            vec![-0.8, -0.2],
        ])
        .unwrap();
        let y = Sample::from_rows(vec![
            vec![0.6, 0.0],
            vec![-0.1, 1.1],
            vec![0.3, -0.5],
            vec![0.9, 0.8],
            vec![-1.0, 0.4],
        ])
        .unwrap();
        (x, y)
    }

    #[test]
    fn identical_samples_do_not_reject() {
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let (x, _) = fixed_samples();
        let out = nammd_dct(&x, &x, &spec, 0.5, 0.05).unwrap();
        assert_eq!(out.statistic, 0.0);
        assert!(!out.reject);
        assert!(out.p_value.unwrap() > 0.95);

        let out = mmd_dct(&x, &x, &spec, 0.1, 0.05).unwrap();
        assert!(!out.reject);
    }

    #[test]
    fn epsilon_zero_is_routed_away() {
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let (x, y) = fixed_samples();
        assert!(nammd_dct(&x, &y, &spec, 0.0, 0.05).is_err());
        assert!(nammd_dct(&x, &y, &spec, 1.0, 0.05).is_err());
        assert!(nammd_dct(&x, &y, &spec, 0.5, 0.0).is_err());
    }

    #[test]
    fn threshold_monotone_in_epsilon_and_alpha() {
        use rand::prelude::*;
        // A pair large enough that the variance estimate stays positive,
        // so the alpha dependence is strict.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        let mk = |rng: &mut rand_chacha::ChaCha8Rng, shift: f64| {
            Sample::from_rows(
                (0..24)
                    .map(|_| vec![rng.random_range(-1.0..1.0) + shift])
                    .collect(),
            )
            .unwrap()
        };
        let x = mk(&mut rng, 0.0);
        let y = mk(&mut rng, 1.5);
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let t1 = nammd_dct(&x, &y, &spec, 0.2, 0.05).unwrap().threshold;
        let t2 = nammd_dct(&x, &y, &spec, 0.4, 0.05).unwrap().threshold;
        let t3 = nammd_dct(&x, &y, &spec, 0.2, 0.20).unwrap().threshold;
        assert!(t2 > t1, "threshold must increase with epsilon");
        assert!(t3 < t1, "threshold must decrease with alpha");
    }

    #[test]
    fn reference_epsilon_identical_pair() {
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let (x, _) = fixed_samples();
        let (en, em) = reference_epsilon(&x, &x, &spec).unwrap();
        assert_eq!(en, 0.0);
        assert_eq!(em, 0.0);
    }

    #[test]
    fn canonne_statistic_hand_values() {
        // cx = cy = refs = (1,1): each bin gives (0 - 2)/max{0,2,1} = -1.
        let v = canonne_statistic(&[1, 1], &[1, 1], &[1, 1], &[1, 1]).unwrap();
        assert_eq!(v, -2.0);

        // Disjoint counts: each bin gives (9-3)/3 = 2.
        let v = canonne_statistic(&[3, 0], &[0, 3], &[3, 0], &[0, 3]).unwrap();
        assert_eq!(v, 4.0);

        assert!(canonne_statistic(&[1], &[1, 2], &[1], &[1]).is_err());
    }

    #[test]
    fn canonne_statistic_matches_per_bin_loop() {
        use rand::Rng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.random_range(1..20);
            let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<u64> {
                (0..n).map(|_| rng.random_range(0..30)).collect()
            };
            let (cx, cy, cxr, cyr) = (draw(&mut rng), draw(&mut rng), draw(&mut rng), draw(&mut rng));
            let mut expected = 0.0;
            for i in 0..n {
                let f = ((cxr[i] as f64 - cyr[i] as f64).abs())
                    .max(cxr[i] as f64 + cyr[i] as f64)
                    .max(1.0);
                let x = cx[i] as f64;
                let y = cy[i] as f64;
                expected += ((x - y).powi(2) - x - y) / f;
            }
            let got = canonne_statistic(&cx, &cy, &cxr, &cyr).unwrap();
            assert!((got - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn empirical_quantile_convention() {
        // With B = 10 and alpha = 0.05, the threshold is the smallest value
        // whose cumulative fraction reaches 0.95, i.e. the 10th order
        // statistic of ceil(9.5) = 10.
        let vals: Vec<f64> = (1..=10).map(|v| v as f64).collect();
        assert_eq!(empirical_upper_quantile(&vals, 0.05), 10.0);
        assert_eq!(empirical_upper_quantile(&vals, 0.5), 5.0);
        assert_eq!(empirical_upper_quantile(&vals, 0.101), 9.0);
    }

    #[test]
    fn canonne_dct_deterministic_under_seed() {
        let pair = DiscretePair::new(
            vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]],
            vec![0.25; 4],
            vec![0.4, 0.3, 0.2, 0.1],
        )
        .unwrap();
        let run = |seed: u64| {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            canonne_dct(&pair, &pair, 100, 0.05, 120, &mut rng).unwrap()
        };
        let a = run(42);
        let b = run(42);
        assert_eq!(a, b);
        assert!(canonne_dct(
            &pair,
            &pair,
            100,
            0.05,
            50,
            &mut rand_chacha::ChaCha8Rng::seed_from_u64(0)
        )
        .is_err());
    }
}
