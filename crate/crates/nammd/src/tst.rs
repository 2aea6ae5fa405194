//! Permutation two-sample tests (the closeness level zero case).
//!
//! The pooled Gram matrix is computed once and every permuted split is
//! evaluated by indexing into it; this is algebraically identical to
//! recomputing the Gram blocks per split (covered by a recomputation
//! oracle in the tests). The multi-kernel soft-maximum statistic
//! re-evaluates its normalizer on every split as well, so the permutation
//! test remains exact whether or not the normalizer happens to be
//! permutation invariant.

use crate::dct::{empirical_upper_quantile, TestOutcome};
use crate::error::{Error, Result};
use crate::kernels::{gram_matrix, KernelSpec, Matrix, Sample};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rayon::prelude::*;

/// Monte Carlo permutation schedule: iteration count and RNG seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PermutationPlan {
    pub b: usize,
    pub rng_seed: u64,
}

impl PermutationPlan {
    pub fn new(b: usize, rng_seed: u64) -> Result<Self> {
        if b < 1 {
            return Err(Error::config("permutation count must be at least 1"));
        }
        Ok(PermutationPlan { b, rng_seed })
    }
}

/// Which statistic the permutation test recomputes per split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TstStatistic {
    Nammd,
    Mmd2,
    Fuse,
}

impl std::fmt::Display for TstStatistic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TstStatistic::Nammd => write!(f, "nammd"),
            TstStatistic::Mmd2 => write!(f, "mmd2"),
            TstStatistic::Fuse => write!(f, "fuse"),
        }
    }
}

/// A weighted family of kernels with the soft-maximum temperature.
#[derive(Debug, Clone)]
pub struct KernelBank {
    kernels: Vec<KernelSpec>,
    weights: Vec<f64>,
    lambda: f64,
}

impl KernelBank {
    pub fn new(kernels: Vec<KernelSpec>, weights: Vec<f64>, lambda: f64) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::config("kernel bank must be nonempty"));
        }
        if weights.len() != kernels.len() {
            return Err(Error::SizeMismatch {
                left: kernels.len(),
                right: weights.len(),
            });
        }
        if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
            return Err(Error::invalid("prior weights must be nonnegative"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("prior weights must sum to 1, got {sum}")));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::invalid("temperature must be positive"));
        }
        Ok(KernelBank {
            kernels,
            weights,
            lambda,
        })
    }

    pub fn uniform(kernels: Vec<KernelSpec>, lambda: f64) -> Result<Self> {
        let n = kernels.len();
        if n == 0 {
            return Err(Error::config("kernel bank must be nonempty"));
        }
        let weights = vec![1.0 / n as f64; n];
        Self::new(kernels, weights, lambda)
    }

    pub fn kernels(&self) -> &[KernelSpec] {
        &self.kernels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// Kernel argument of the permutation test: one kernel for the plain
/// statistics, a bank for the soft-maximum statistic.
#[derive(Debug, Clone)]
pub enum TestKernel {
    Single(KernelSpec),
    Bank(KernelBank),
}

/// Sums over one split of a pooled Gram matrix. Positions `0..m` of the
/// index slice form X, positions `m..2m` form Y.
struct SplitSums {
    sum_xx: f64,
    sum_yy: f64,
    sum_xy: f64,
    sq_xx: f64,
    sq_yy: f64,
}

fn split_sums(gram: &Matrix, idx: &[usize], m: usize) -> SplitSums {
    let mut s = SplitSums {
        sum_xx: 0.0,
        sum_yy: 0.0,
        sum_xy: 0.0,
        sq_xx: 0.0,
        sq_yy: 0.0,
    };
    for i in 0..m {
        let (xi, yi) = (idx[i], idx[m + i]);
        for j in (i + 1)..m {
            let a = gram.get(xi, idx[j]);
            let b = gram.get(yi, idx[m + j]);
            s.sum_xx += 2.0 * a;
            s.sum_yy += 2.0 * b;
            s.sq_xx += 2.0 * a * a;
            s.sq_yy += 2.0 * b * b;
        }
        for j in 0..m {
            if i != j {
                s.sum_xy += gram.get(xi, idx[m + j]);
            }
        }
    }
    s
}

fn split_nammd(gram: &Matrix, upper_bound: f64, idx: &[usize], m: usize) -> f64 {
    let s = split_sums(gram, idx, m);
    let mm1 = m as f64 * (m as f64 - 1.0);
    let mmd2 = (s.sum_xx + s.sum_yy - 2.0 * s.sum_xy) / mm1;
    let norm = 4.0 * upper_bound - (s.sum_xx + s.sum_yy) / mm1;
    mmd2 / norm
}

fn split_mmd2(gram: &Matrix, idx: &[usize], m: usize) -> f64 {
    let s = split_sums(gram, idx, m);
    let mm1 = m as f64 * (m as f64 - 1.0);
    (s.sum_xx + s.sum_yy - 2.0 * s.sum_xy) / mm1
}

/// Normalized ratio for one kernel on one split: the norm-adaptive
/// statistic over the root of the within-sample squared-kernel mean.
fn split_fuse_component(gram: &Matrix, upper_bound: f64, idx: &[usize], m: usize) -> f64 {
    let s = split_sums(gram, idx, m);
    let mm1 = m as f64 * (m as f64 - 1.0);
    let mmd2 = (s.sum_xx + s.sum_yy - 2.0 * s.sum_xy) / mm1;
    let norm = 4.0 * upper_bound - (s.sum_xx + s.sum_yy) / mm1;
    let n_hat = (s.sq_xx + s.sq_yy) / mm1;
    let value = (mmd2 / norm) / n_hat.sqrt();
    if value.is_finite() {
        value
    } else {
        0.0
    }
}

fn log_mean_exp(weights: &[f64], values: &[f64], lambda: f64) -> f64 {
    let peak = values
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
        * lambda;
    let sum: f64 = weights
        .iter()
        .zip(values)
        .map(|(w, v)| w * (lambda * v - peak).exp())
        .sum();
    (peak + sum.ln()) / lambda
}

struct PooledKernels {
    grams: Vec<Matrix>,
    bounds: Vec<f64>,
    weights: Vec<f64>,
    lambda: f64,
    which: TstStatistic,
    m: usize,
}

impl PooledKernels {
    fn build(pooled: &Sample, kernel: &TestKernel, which: TstStatistic, m: usize) -> Result<Self> {
        match (kernel, which) {
            (TestKernel::Single(spec), TstStatistic::Nammd | TstStatistic::Mmd2) => {
                Ok(PooledKernels {
                    grams: vec![gram_matrix(spec, pooled)?],
                    bounds: vec![spec.upper_bound()],
                    weights: vec![1.0],
                    lambda: 1.0,
                    which,
                    m,
                })
            }
            (TestKernel::Bank(bank), TstStatistic::Fuse) => {
                let grams = bank
                    .kernels()
                    .iter()
                    .map(|spec| gram_matrix(spec, pooled))
                    .collect::<Result<Vec<_>>>()?;
                Ok(PooledKernels {
                    bounds: bank.kernels().iter().map(|s| s.upper_bound()).collect(),
                    weights: bank.weights().to_vec(),
                    lambda: bank.lambda(),
                    grams,
                    which,
                    m,
                })
            }
            (TestKernel::Single(_), TstStatistic::Fuse) => Err(Error::config(
                "the soft-maximum statistic needs a kernel bank",
            )),
            (TestKernel::Bank(_), _) => Err(Error::config(
                "plain statistics take a single kernel, not a bank",
            )),
        }
    }

    fn statistic(&self, idx: &[usize]) -> f64 {
        match self.which {
            TstStatistic::Nammd => split_nammd(&self.grams[0], self.bounds[0], idx, self.m),
            TstStatistic::Mmd2 => split_mmd2(&self.grams[0], idx, self.m),
            TstStatistic::Fuse => {
                let components: Vec<f64> = self
                    .grams
                    .iter()
                    .zip(&self.bounds)
                    .map(|(g, &k)| split_fuse_component(g, k, idx, self.m))
                    .collect();
                log_mean_exp(&self.weights, &components, self.lambda)
            }
        }
    }
}

fn validate_permutation(perm: &[usize], len: usize) -> Result<()> {
    if perm.len() != len {
        return Err(Error::invalid(format!(
            "permutation has length {}, expected {len}",
            perm.len()
        )));
    }
    let mut seen = vec![false; len];
    for &p in perm {
        if p >= len || seen[p] {
            return Err(Error::invalid("indices must form a bijection"));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Statistic of one permuted split of a pooled sample of size `2m`
/// (first `m` permuted positions form X, the rest Y).
pub fn permuted_statistic(
    pooled: &Sample,
    perm: &[usize],
    kernel: &TestKernel,
    which: TstStatistic,
) -> Result<f64> {
    if pooled.len() % 2 != 0 {
        return Err(Error::invalid("pooled sample must have even size"));
    }
    validate_permutation(perm, pooled.len())?;
    let m = pooled.len() / 2;
    let pk = PooledKernels::build(pooled, kernel, which, m)?;
    Ok(pk.statistic(perm))
}

/// Permutation two-sample test.
///
/// Draws `plan.b` permutations with replacement from the symmetric group
/// on the pooled indices, takes the empirical `(1-α)`-quantile of the
/// permuted statistics as the threshold, and reports the finite-sample
/// corrected p-value `(1 + #{T_b ≥ T_obs}) / (B + 1)`. The rejection flag
/// follows the threshold rule. Deterministic given the plan seed.
pub fn permutation_test(
    x: &Sample,
    y: &Sample,
    kernel: &TestKernel,
    which: TstStatistic,
    alpha: f64,
    plan: &PermutationPlan,
) -> Result<TestOutcome> {
    if !(alpha.is_finite() && alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if plan.b < 1 {
        return Err(Error::config("permutation count must be at least 1"));
    }
    if x.len() != y.len() {
        return Err(Error::SizeMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let m = x.len();
    let pooled = x.pooled(y)?;
    let pk = PooledKernels::build(&pooled, kernel, which, m)?;

    let identity: Vec<usize> = (0..2 * m).collect();
    let observed = pk.statistic(&identity);

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(plan.rng_seed);
    let perms: Vec<Vec<usize>> = (0..plan.b)
        .map(|_| {
            let mut p = identity.clone();
            p.shuffle(&mut rng);
            p
        })
        .collect();
    let stats: Vec<f64> = perms.par_iter().map(|p| pk.statistic(p)).collect();

    let threshold = empirical_upper_quantile(&stats, alpha);
    let exceed = stats.iter().filter(|&&t| t >= observed).count();
    let p_value = (1 + exceed) as f64 / (plan.b + 1) as f64;

    Ok(TestOutcome {
        statistic: observed,
        threshold,
        p_value: Some(p_value),
        reject: observed > threshold,
        alpha,
        epsilon: 0.0,
        m,
        method: format!("{which}_tst"),
        seed: Some(plan.rng_seed),
    })
}

/// Soft-maximum statistic over a kernel bank on the unpermuted split:
/// `(1/λ)·log E_{κ~π}[exp(λ·NAMMD̂_κ/√N̂_κ)]`, evaluated with
/// log-sum-exp stabilization.
pub fn fuse_statistic(x: &Sample, y: &Sample, bank: &KernelBank) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::SizeMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let m = x.len();
    let pooled = x.pooled(y)?;
    let pk = PooledKernels::build(&pooled, &TestKernel::Bank(bank.clone()), TstStatistic::Fuse, m)?;
    let identity: Vec<usize> = (0..2 * m).collect();
    Ok(pk.statistic(&identity))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{mmd2_u_statistic, nammd_u_statistic, Reductions};
    use crate::kernels::gram_blocks;
    use rand::prelude::*;

    fn toy(seed: u64, m: usize) -> (Sample, Sample) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mk = |rng: &mut rand_chacha::ChaCha8Rng, shift: f64| {
            Sample::from_rows(
                (0..m)
                    .map(|_| vec![rng.random_range(-1.0..1.0) + shift, rng.random_range(-1.0..1.0)])
                    .collect(),
            )
            .unwrap()
        };
        let x = mk(&mut rng, 0.0);
        let y = mk(&mut rng, 1.0);
        (x, y)
    }

    #[test]
    fn identity_permutation_recovers_unpermuted_statistic() {
        let spec = KernelSpec::gaussian(0.8).unwrap();
        let (x, y) = toy(1, 5);
        let pooled = x.pooled(&y).unwrap();
        let identity: Vec<usize> = (0..10).collect();
        let got = permuted_statistic(
            &pooled,
            &identity,
            &TestKernel::Single(spec.clone()),
            TstStatistic::Nammd,
        )
        .unwrap();
        let g = gram_blocks(&spec, &x, &y).unwrap();
        assert!((got - nammd_u_statistic(&g)).abs() < 1e-12);
    }

    #[test]
    fn wholesale_swap_leaves_statistic_unchanged() {
        let spec = KernelSpec::gaussian(0.8).unwrap();
        let (x, y) = toy(2, 6);
        let pooled = x.pooled(&y).unwrap();
        let identity: Vec<usize> = (0..12).collect();
        let swapped: Vec<usize> = (6..12).chain(0..6).collect();
        for which in [TstStatistic::Nammd, TstStatistic::Mmd2] {
            let a = permuted_statistic(&pooled, &identity, &TestKernel::Single(spec.clone()), which)
                .unwrap();
            let b = permuted_statistic(&pooled, &swapped, &TestKernel::Single(spec.clone()), which)
                .unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn permuted_statistic_matches_recomputation_oracle() {
        let spec = KernelSpec::laplace(1.1).unwrap();
        let (x, y) = toy(3, 3);
        let pooled = x.pooled(&y).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let mut perm: Vec<usize> = (0..6).collect();
            perm.shuffle(&mut rng);
            let fast = permuted_statistic(
                &pooled,
                &perm,
                &TestKernel::Single(spec.clone()),
                TstStatistic::Nammd,
            )
            .unwrap();
            // Recompute from scratch on the split samples.
            let xs = pooled.select(&perm[..3]).unwrap();
            let ys = pooled.select(&perm[3..]).unwrap();
            let slow = nammd_u_statistic(&gram_blocks(&spec, &xs, &ys).unwrap());
            assert!((fast - slow).abs() < 1e-12, "fast {fast} vs slow {slow}");

            let fast =
                permuted_statistic(&pooled, &perm, &TestKernel::Single(spec.clone()), TstStatistic::Mmd2)
                    .unwrap();
            let slow = mmd2_u_statistic(&gram_blocks(&spec, &xs, &ys).unwrap());
            assert!((fast - slow).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_permutations_are_rejected() {
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let (x, y) = toy(4, 3);
        let pooled = x.pooled(&y).unwrap();
        let kernel = TestKernel::Single(spec);
        assert!(permuted_statistic(&pooled, &[0, 1, 2], &kernel, TstStatistic::Nammd).is_err());
        assert!(
            permuted_statistic(&pooled, &[0, 0, 1, 2, 3, 4], &kernel, TstStatistic::Nammd).is_err()
        );
        assert!(
            permuted_statistic(&pooled, &[0, 1, 2, 3, 4, 9], &kernel, TstStatistic::Nammd).is_err()
        );
    }

    #[test]
    fn point_mass_never_rejects() {
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let x = Sample::from_rows(vec![vec![2.0]; 5]).unwrap();
        let plan = PermutationPlan::new(50, 7).unwrap();
        let out = permutation_test(
            &x,
            &x,
            &TestKernel::Single(spec),
            TstStatistic::Nammd,
            0.05,
            &plan,
        )
        .unwrap();
        assert_eq!(out.statistic, 0.0);
        assert_eq!(out.threshold, 0.0);
        assert!(!out.reject);
    }

    #[test]
    fn permutation_test_is_deterministic() {
        let spec = KernelSpec::gaussian(0.9).unwrap();
        let (x, y) = toy(5, 8);
        let plan = PermutationPlan::new(100, 99).unwrap();
        let kernel = TestKernel::Single(spec);
        let a = permutation_test(&x, &y, &kernel, TstStatistic::Nammd, 0.05, &plan).unwrap();
        let b = permutation_test(&x, &y, &kernel, TstStatistic::Nammd, 0.05, &plan).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn statistic_coupling_on_shared_permutations() {
        // For each split, the ratio statistic must equal mmd2/norm computed
        // from the same Gram entries.
        let spec = KernelSpec::gaussian(0.7).unwrap();
        let (x, y) = toy(6, 4);
        let pooled = x.pooled(&y).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for _ in 0..10 {
            let mut perm: Vec<usize> = (0..8).collect();
            perm.shuffle(&mut rng);
            let xs = pooled.select(&perm[..4]).unwrap();
            let ys = pooled.select(&perm[4..]).unwrap();
            let r = Reductions::from_samples(&spec, &xs, &ys).unwrap();
            let nammd =
                permuted_statistic(&pooled, &perm, &TestKernel::Single(spec.clone()), TstStatistic::Nammd)
                    .unwrap();
            assert!((nammd - r.mmd2() / r.norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn fuse_single_kernel_bank_degenerates() {
        let spec = KernelSpec::gaussian(0.8).unwrap();
        let (x, y) = toy(7, 5);
        let bank = KernelBank::uniform(vec![spec.clone()], 1.0).unwrap();
        let fused = fuse_statistic(&x, &y, &bank).unwrap();

        let g = gram_blocks(&spec, &x, &y).unwrap();
        let m = 5.0f64;
        let mut sq = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    sq += g.kxx().get(i, j).powi(2) + g.kyy().get(i, j).powi(2);
                }
            }
        }
        let n_hat = sq / (m * (m - 1.0));
        let expected = nammd_u_statistic(&g) / n_hat.sqrt();
        assert!((fused - expected).abs() < 1e-12);
    }

    #[test]
    fn fuse_large_lambda_approaches_maximum() {
        let (x, y) = toy(8, 6);
        let kernels = vec![
            KernelSpec::gaussian(0.3).unwrap(),
            KernelSpec::gaussian(1.0).unwrap(),
            KernelSpec::gaussian(3.0).unwrap(),
        ];
        let per_kernel: Vec<f64> = kernels
            .iter()
            .map(|k| {
                let bank = KernelBank::uniform(vec![k.clone()], 1.0).unwrap();
                fuse_statistic(&x, &y, &bank).unwrap()
            })
            .collect();
        let max = per_kernel.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let bank = KernelBank::uniform(kernels, 1e6).unwrap();
        let fused = fuse_statistic(&x, &y, &bank).unwrap();
        assert!((fused - max).abs() < 1e-3, "fused {fused} vs max {max}");
    }

    #[test]
    fn fuse_two_kernel_hand_evaluation() {
        let (x, y) = toy(9, 5);
        let k1 = KernelSpec::gaussian(0.5).unwrap();
        let k2 = KernelSpec::laplace(1.0).unwrap();
        let r1 = fuse_statistic(&x, &y, &KernelBank::uniform(vec![k1.clone()], 1.0).unwrap()).unwrap();
        let r2 = fuse_statistic(&x, &y, &KernelBank::uniform(vec![k2.clone()], 1.0).unwrap()).unwrap();
        let expected = (0.5 * r1.exp() + 0.5 * r2.exp()).ln();
        let bank = KernelBank::uniform(vec![k1, k2], 1.0).unwrap();
        let fused = fuse_statistic(&x, &y, &bank).unwrap();
        assert!((fused - expected).abs() < 1e-12);
    }

    #[test]
    fn bank_validation() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        assert!(KernelBank::uniform(vec![], 1.0).is_err());
        assert!(KernelBank::new(vec![k.clone()], vec![0.9], 1.0).is_err());
        assert!(KernelBank::new(vec![k.clone()], vec![1.0], 0.0).is_err());
        assert!(KernelBank::new(vec![k], vec![1.0], 1.0).is_ok());
    }

    #[test]
    fn kernel_statistic_pairing_is_enforced() {
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let (x, y) = toy(10, 4);
        let plan = PermutationPlan::new(10, 1).unwrap();
        let bank = KernelBank::uniform(vec![spec.clone()], 1.0).unwrap();
        assert!(permutation_test(
            &x,
            &y,
            &TestKernel::Single(spec),
            TstStatistic::Fuse,
            0.05,
            &plan
        )
        .is_err());
        assert!(permutation_test(
            &x,
            &y,
            &TestKernel::Bank(bank),
            TstStatistic::Nammd,
            0.05,
            &plan
        )
        .is_err());
    }
}
