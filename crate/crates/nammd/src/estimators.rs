//! Core statistics: the squared-MMD and norm U-statistics, the
//! norm-adaptive ratio, variance components, and exact closed-form
//! evaluators for discrete distributions and 1-D Gaussians.
//!
//! Conventions used throughout:
//!
//! * "MMD" always means the squared quantity; only `mmd2` is exposed.
//! * `H[i,j] = κ(x_i,x_j) + κ(y_i,y_j) - κ(x_i,y_j) - κ(y_i,x_j)`.
//! * The norm statistic averages `4K - κ(x_i,x_j) - κ(y_i,y_j)` over
//!   ordered pairs `i ≠ j`; it always lies in `[2K, 4K]`.
//! * The norm-adaptive statistic is the ratio of the two sums and is
//!   guaranteed to lie in `[-1, 1]`.

use crate::error::{Error, Result};
use crate::kernels::{eval_unchecked, GramBlock, KernelSpec, Matrix, Sample};
use rayon::prelude::*;

/// Point estimates and variance components for one sample pair.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EstimatorReport {
    pub mmd2_hat: f64,
    pub norm_hat: f64,
    pub nammd_hat: f64,
    pub zeta1: f64,
    pub zeta2: f64,
    pub sigma_hat: f64,
    pub m: usize,
}

/// Scalar reductions of a Gram block; everything downstream (statistics,
/// variance components) is a function of these.
#[derive(Debug, Clone)]
pub(crate) struct Reductions {
    pub m: usize,
    pub upper_bound: f64,
    /// Off-diagonal sum of the within-X matrix.
    pub sum_xx: f64,
    pub sum_yy: f64,
    /// Full sum of the cross matrix.
    pub sum_xy: f64,
    /// Off-diagonal sum of the cross matrix, accumulated in the same
    /// order as the within sums so identical samples cancel exactly.
    pub sum_xy_off: f64,
    /// Squared Frobenius norm of the zero-diagonal within matrices.
    pub frob_xx: f64,
    pub frob_yy: f64,
    pub frob_xy: f64,
    /// Row sums of the zero-diagonal within matrices.
    pub rows_xx: Vec<f64>,
    pub rows_yy: Vec<f64>,
    pub rows_xy: Vec<f64>,
    pub cols_xy: Vec<f64>,
}

impl Reductions {
    pub fn from_gram(g: &GramBlock) -> Self {
        let m = g.m();
        let (kxx, kyy, kxy) = (g.kxx(), g.kyy(), g.kxy());
        let mut r = Reductions {
            m,
            upper_bound: g.upper_bound(),
            sum_xx: 0.0,
            sum_yy: 0.0,
            sum_xy: 0.0,
            sum_xy_off: 0.0,
            frob_xx: 0.0,
            frob_yy: 0.0,
            frob_xy: 0.0,
            rows_xx: vec![0.0; m],
            rows_yy: vec![0.0; m],
            rows_xy: vec![0.0; m],
            cols_xy: vec![0.0; m],
        };
        for i in 0..m {
            for j in 0..m {
                let c = kxy.get(i, j);
                r.sum_xy += c;
                r.frob_xy += c * c;
                r.rows_xy[i] += c;
                r.cols_xy[j] += c;
                if i == j {
                    continue;
                }
                r.sum_xy_off += c;
                let a = kxx.get(i, j);
                let b = kyy.get(i, j);
                r.sum_xx += a;
                r.sum_yy += b;
                r.frob_xx += a * a;
                r.frob_yy += b * b;
                r.rows_xx[i] += a;
                r.rows_yy[i] += b;
            }
        }
        r
    }

    /// Streaming computation with O(m) memory: kernel entries are evaluated
    /// on the fly and never materialized. Work is split over fixed row
    /// chunks and folded in chunk order, so the result does not depend on
    /// the number of threads.
    pub fn from_samples(spec: &KernelSpec, x: &Sample, y: &Sample) -> Result<Self> {
        if x.dim() != y.dim() {
            return Err(Error::DimensionMismatch {
                left: x.dim(),
                right: y.dim(),
            });
        }
        if x.len() != y.len() {
            return Err(Error::SizeMismatch {
                left: x.len(),
                right: y.len(),
            });
        }
        let m = x.len();
        const CHUNK: usize = 64;
        let starts: Vec<usize> = (0..m).step_by(CHUNK).collect();

        struct Partial {
            sum_xx: f64,
            sum_yy: f64,
            sum_xy: f64,
            sum_xy_off: f64,
            frob_xx: f64,
            frob_yy: f64,
            frob_xy: f64,
            rows_xx: Vec<f64>,
            rows_yy: Vec<f64>,
            rows_xy: Vec<f64>,
            cols_xy: Vec<f64>,
            start: usize,
        }

        let partials: Vec<Partial> = starts
            .into_par_iter()
            .map(|start| {
                let end = (start + CHUNK).min(m);
                let rows = end - start;
                let mut p = Partial {
                    sum_xx: 0.0,
                    sum_yy: 0.0,
                    sum_xy: 0.0,
                    sum_xy_off: 0.0,
                    frob_xx: 0.0,
                    frob_yy: 0.0,
                    frob_xy: 0.0,
                    rows_xx: vec![0.0; rows],
                    rows_yy: vec![0.0; rows],
                    rows_xy: vec![0.0; rows],
                    cols_xy: vec![0.0; m],
                    start,
                };
                for i in start..end {
                    let xi = x.row(i);
                    let yi = y.row(i);
                    let li = i - start;
                    for j in 0..m {
                        let c = eval_unchecked(spec, xi, y.row(j));
                        p.sum_xy += c;
                        p.frob_xy += c * c;
                        p.rows_xy[li] += c;
                        p.cols_xy[j] += c;
                        if i == j {
                            continue;
                        }
                        p.sum_xy_off += c;
                        let a = eval_unchecked(spec, xi, x.row(j));
                        let b = eval_unchecked(spec, yi, y.row(j));
                        p.sum_xx += a;
                        p.sum_yy += b;
                        p.frob_xx += a * a;
                        p.frob_yy += b * b;
                        p.rows_xx[li] += a;
                        p.rows_yy[li] += b;
                    }
                }
                p
            })
            .collect();

        let mut r = Reductions {
            m,
            upper_bound: spec.upper_bound(),
            sum_xx: 0.0,
            sum_yy: 0.0,
            sum_xy: 0.0,
            sum_xy_off: 0.0,
            frob_xx: 0.0,
            frob_yy: 0.0,
            frob_xy: 0.0,
            rows_xx: vec![0.0; m],
            rows_yy: vec![0.0; m],
            rows_xy: vec![0.0; m],
            cols_xy: vec![0.0; m],
        };
        for p in partials {
            r.sum_xx += p.sum_xx;
            r.sum_yy += p.sum_yy;
            r.sum_xy += p.sum_xy;
            r.sum_xy_off += p.sum_xy_off;
            r.frob_xx += p.frob_xx;
            r.frob_yy += p.frob_yy;
            r.frob_xy += p.frob_xy;
            for (li, i) in (p.start..p.start + p.rows_xx.len()).enumerate() {
                r.rows_xx[i] = p.rows_xx[li];
                r.rows_yy[i] = p.rows_yy[li];
                r.rows_xy[i] = p.rows_xy[li];
            }
            for j in 0..m {
                r.cols_xy[j] += p.cols_xy[j];
            }
        }
        Ok(r)
    }

    pub fn mmd2(&self) -> f64 {
        let m = self.m as f64;
        (self.sum_xx + self.sum_yy - 2.0 * self.sum_xy_off) / (m * (m - 1.0))
    }

    pub fn norm(&self) -> f64 {
        let m = self.m as f64;
        4.0 * self.upper_bound - (self.sum_xx + self.sum_yy) / (m * (m - 1.0))
    }

    pub fn nammd(&self) -> f64 {
        self.mmd2() / self.norm()
    }

    /// Within-sample embedding norm and full-mean cross estimates.
    pub fn embeddings(&self) -> (f64, f64, f64) {
        let m = self.m as f64;
        (
            self.sum_xx / (m * (m - 1.0)),
            self.sum_yy / (m * (m - 1.0)),
            self.sum_xy / (m * m),
        )
    }

    /// Reductions with the within-sample sums scaled by `factor` and the
    /// cross sums untouched. Feeding these to [`variance_components`]
    /// yields the components of the combined kernel
    /// `factor·(κ(x_i,x_j)+κ(y_i,y_j)) - κ(x_i,y_j) - κ(y_i,x_j)`,
    /// which is what the closeness test's boundary statistic needs: its
    /// numerator and denominator share the within-sample sums, and the
    /// ratio's fluctuation at the boundary `ε` is that of the combined
    /// kernel with `factor = 1 + ε`.
    pub fn with_within_scaled(&self, factor: f64) -> Reductions {
        Reductions {
            m: self.m,
            upper_bound: self.upper_bound,
            sum_xx: factor * self.sum_xx,
            sum_yy: factor * self.sum_yy,
            sum_xy: self.sum_xy,
            sum_xy_off: self.sum_xy_off,
            frob_xx: factor * factor * self.frob_xx,
            frob_yy: factor * factor * self.frob_yy,
            frob_xy: self.frob_xy,
            rows_xx: self.rows_xx.iter().map(|v| factor * v).collect(),
            rows_yy: self.rows_yy.iter().map(|v| factor * v).collect(),
            rows_xy: self.rows_xy.clone(),
            cols_xy: self.cols_xy.clone(),
        }
    }

    pub fn variance_components(&self) -> Result<(f64, f64)> {
        let m = self.m;
        if m < 4 {
            return Err(Error::invalid(format!(
                "variance components need m >= 4, got {m}"
            )));
        }
        let mf = m as f64;
        let m3 = mf * (mf - 1.0) * (mf - 2.0);
        let m4 = m3 * (mf - 3.0);
        let mm1 = mf * (mf - 1.0);

        let rr_xx: f64 = self.rows_xx.iter().map(|v| v * v).sum();
        let rr_yy: f64 = self.rows_yy.iter().map(|v| v * v).sum();
        let rr_xy: f64 = self.rows_xy.iter().map(|v| v * v).sum();
        let cc_xy: f64 = self.cols_xy.iter().map(|v| v * v).sum();

        // Sums over four distinct within-sample indices.
        let h4_xx = self.sum_xx * self.sum_xx - 4.0 * rr_xx + 2.0 * self.frob_xx;
        let h4_yy = self.sum_yy * self.sum_yy - 4.0 * rr_yy + 2.0 * self.frob_yy;
        // Cross pairs sharing neither row nor column index.
        let cross4 = self.sum_xy * self.sum_xy - cc_xy - rr_xy + self.frob_xy;

        let mix_x: f64 = self
            .rows_xx
            .iter()
            .zip(&self.rows_xy)
            .map(|(a, b)| a * b)
            .sum();
        let mix_y: f64 = self
            .rows_yy
            .iter()
            .zip(&self.cols_xy)
            .map(|(a, b)| a * b)
            .sum();

        let zeta1 = (rr_xx - self.frob_xx) / m3 - h4_xx / m4
            + (rr_yy - self.frob_yy) / m3
            - h4_yy / m4
            + (rr_xy - self.frob_xy) / (mf * mm1)
            + (cc_xy - self.frob_xy) / (mf * mm1)
            - 2.0 * cross4 / (mm1 * mm1)
            - 2.0 * mix_x / (mf * mm1)
            + 2.0 * (self.sum_xx * self.sum_xy - 2.0 * mix_x) / (mf * m3)
            - 2.0 * mix_y / (mf * mm1)
            + 2.0 * (self.sum_yy * self.sum_xy - 2.0 * mix_y) / (mf * m3);

        let zeta2 = self.frob_xx / mm1 - h4_xx / m4 + self.frob_yy / mm1 - h4_yy / m4
            + 2.0 * self.frob_xy / (mf * mf)
            - 2.0 * cross4 / (mm1 * mm1)
            - 4.0 * mix_x / (mf * mm1)
            + 4.0 * (self.sum_xx * self.sum_xy - 2.0 * mix_x) / (mf * m3)
            - 4.0 * mix_y / (mf * mm1)
            + 4.0 * (self.sum_yy * self.sum_xy - 2.0 * mix_y) / (mf * m3);

        Ok((zeta1, zeta2))
    }
}

/// Unbiased U-statistic of the squared MMD.
pub fn mmd2_u_statistic(g: &GramBlock) -> f64 {
    Reductions::from_gram(g).mmd2()
}

/// U-statistic of `4K - ‖μ_P‖² - ‖μ_Q‖²`; always in `[2K, 4K]`.
pub fn norm_u_statistic(g: &GramBlock) -> f64 {
    Reductions::from_gram(g).norm()
}

/// The norm-adaptive ratio statistic, guaranteed to lie in `[-1, 1]`.
pub fn nammd_u_statistic(g: &GramBlock) -> f64 {
    Reductions::from_gram(g).nammd()
}

/// The two variance components of the squared-MMD U-statistic.
///
/// Requires `m >= 4` (the estimators involve sums over four distinct
/// indices).
pub fn variance_components(g: &GramBlock) -> Result<(f64, f64)> {
    Reductions::from_gram(g).variance_components()
}

/// Asymptotic variance of `√m` times the squared-MMD estimator,
/// `((4m-8)ζ₁ + 2ζ₂)/(m-1)`, floored at zero.
pub fn mmd_variance(zeta1: f64, zeta2: f64, m: usize) -> f64 {
    let mf = m as f64;
    (((4.0 * mf - 8.0) * zeta1 + 2.0 * zeta2) / (mf - 1.0)).max(0.0)
}

/// Standard-deviation estimator of the norm-adaptive statistic:
/// `sqrt(max(0, ((4m-8)ζ₁+2ζ₂)/(m-1))) / norm_hat`, clamped to `[0, 2]`.
///
/// The floor absorbs negative radicands from finite-sample noise in the
/// ζ estimates; the cap matches the analytic bound on the estimator.
pub fn sigma_estimator(zeta1: f64, zeta2: f64, norm_hat: f64, m: usize) -> f64 {
    (mmd_variance(zeta1, zeta2, m).sqrt() / norm_hat).clamp(0.0, 2.0)
}

/// All point estimates for one Gram block (`m >= 4`).
pub fn estimator_report(g: &GramBlock) -> Result<EstimatorReport> {
    report_from_reductions(&Reductions::from_gram(g))
}

/// Same as [`estimator_report`], but evaluates kernel entries on the fly
/// with O(m) memory; intended for large sample sizes where the three
/// dense matrices would not fit comfortably.
pub fn estimator_report_streaming(
    spec: &KernelSpec,
    x: &Sample,
    y: &Sample,
) -> Result<EstimatorReport> {
    report_from_reductions(&Reductions::from_samples(spec, x, y)?)
}

fn report_from_reductions(r: &Reductions) -> Result<EstimatorReport> {
    let (zeta1, zeta2) = r.variance_components()?;
    let norm_hat = r.norm();
    Ok(EstimatorReport {
        mmd2_hat: r.mmd2(),
        norm_hat,
        nammd_hat: r.nammd(),
        zeta1,
        zeta2,
        sigma_hat: sigma_estimator(zeta1, zeta2, norm_hat, r.m),
        m: r.m,
    })
}

/// Monte Carlo estimates of the two embedding norms and their inner
/// product, plus the squared-MMD U-statistic, with O(m) memory.
pub fn embedding_estimates_streaming(
    spec: &KernelSpec,
    x: &Sample,
    y: &Sample,
) -> Result<(f64, f64, f64, f64)> {
    let r = Reductions::from_samples(spec, x, y)?;
    let (norm_p, norm_q, cross) = r.embeddings();
    Ok((norm_p, norm_q, cross, r.mmd2()))
}

// ---------------------------------------------------------------------------
// Discrete distributions
// ---------------------------------------------------------------------------

/// Two discrete distributions over a shared finite support.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePair {
    support: Vec<f64>,
    n: usize,
    d: usize,
    p: Vec<f64>,
    q: Vec<f64>,
}

const PROB_SUM_TOL: f64 = 1e-12;

fn validate_probs(v: &[f64]) -> Result<()> {
    if v.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return Err(Error::invalid("probabilities must be finite and nonnegative"));
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        return Err(Error::invalid(format!(
            "probabilities must sum to 1 (got {sum})"
        )));
    }
    Ok(())
}

impl DiscretePair {
    pub fn new(support: Vec<Vec<f64>>, p: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        let n = support.len();
        if n == 0 {
            return Err(Error::invalid("support must be nonempty"));
        }
        let d = support[0].len();
        if d == 0 {
            return Err(Error::invalid("support points need at least one coordinate"));
        }
        let mut flat = Vec::with_capacity(n * d);
        for point in &support {
            if point.len() != d {
                return Err(Error::DimensionMismatch {
                    left: d,
                    right: point.len(),
                });
            }
            if point.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("non-finite support point"));
            }
            flat.extend_from_slice(point);
        }
        if p.len() != n || q.len() != n {
            return Err(Error::SizeMismatch {
                left: n,
                right: p.len().max(q.len()),
            });
        }
        validate_probs(&p)?;
        validate_probs(&q)?;
        Ok(DiscretePair {
            support: flat,
            n,
            d,
            p,
            q,
        })
    }

    pub fn support_len(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.support[i * self.d..(i + 1) * self.d]
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    /// Kernel matrix over the support points.
    pub fn support_gram(&self, spec: &KernelSpec) -> Result<Matrix> {
        let mut gram = Matrix::zeros(self.n, self.n);
        for i in 0..self.n {
            gram.set(i, i, spec.upper_bound());
            for j in (i + 1)..self.n {
                let v = crate::kernels::eval_kernel(spec, self.point(i), self.point(j))?;
                gram.set(i, j, v);
                gram.set(j, i, v);
            }
        }
        Ok(gram)
    }
}

fn check_discrete_inputs(pair: &DiscretePair, gram: &Matrix) -> Result<()> {
    if gram.n_rows() != pair.support_len() || gram.n_cols() != pair.support_len() {
        return Err(Error::SizeMismatch {
            left: pair.support_len(),
            right: gram.n_rows(),
        });
    }
    if !gram.is_symmetric(1e-9) {
        return Err(Error::invalid("support gram matrix must be symmetric"));
    }
    Ok(())
}

/// Exact embedding moments of a discrete pair:
/// `(Σ p_i p_j κ_ij, Σ q_i q_j κ_ij, Σ p_i q_j κ_ij)`.
pub fn exact_discrete_embeddings(pair: &DiscretePair, gram: &Matrix) -> Result<(f64, f64, f64)> {
    check_discrete_inputs(pair, gram)?;
    let n = pair.support_len();
    let (mut pp, mut qq, mut pq) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let k = gram.get(i, j);
            pp += pair.p[i] * pair.p[j] * k;
            qq += pair.q[i] * pair.q[j] * k;
            pq += pair.p[i] * pair.q[j] * k;
        }
    }
    Ok((pp, qq, pq))
}

/// Exact population squared MMD of a discrete pair under a fixed support
/// Gram matrix.
pub fn exact_discrete_mmd2(pair: &DiscretePair, gram: &Matrix) -> Result<f64> {
    let (pp, qq, pq) = exact_discrete_embeddings(pair, gram)?;
    Ok(pp + qq - 2.0 * pq)
}

/// Exact population norm-adaptive distance. `upper_bound` is the kernel
/// supremum `K`; the Gram entries are not required to lie in `[0, K]`, so
/// fixed test vectors with unbounded kernels can be evaluated.
pub fn exact_discrete_nammd(pair: &DiscretePair, gram: &Matrix, upper_bound: f64) -> Result<f64> {
    let (pp, qq, pq) = exact_discrete_embeddings(pair, gram)?;
    Ok((pp + qq - 2.0 * pq) / (4.0 * upper_bound - pp - qq))
}

/// Total variation distance `½ Σ |p_i - q_i|` between probability vectors.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::SizeMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    validate_probs(p)?;
    validate_probs(q)?;
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

// ---------------------------------------------------------------------------
// Closed-form Gaussian moments
// ---------------------------------------------------------------------------

/// Closed-form embedding moments for 1-D Gaussians under a Gaussian kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMoments {
    pub norm_p: f64,
    pub norm_q: f64,
    pub cross: f64,
    pub mmd2: f64,
}

/// Exact moments for `P = N(mu_p, var_p)`, `Q = N(mu_q, var_q)` with
/// `|mu_p - mu_q| = mean_gap`, under the kernel `exp(-z²/(2γ²))`:
///
/// * `‖μ_P‖² = E[κ(x, x')] = 1/√(1 + 4a·var_p)` with `a = 1/(2γ²)`,
/// * `⟨μ_P, μ_Q⟩ = exp(-a·gap²/(1 + 2a(var_p+var_q))) / √(1 + 2a(var_p+var_q))`,
/// * `mmd2 = ‖μ_P‖² + ‖μ_Q‖² - 2⟨μ_P, μ_Q⟩`.
pub fn gaussian_moment_oracle(
    var_p: f64,
    var_q: f64,
    mean_gap: f64,
    gamma: f64,
) -> Result<GaussianMoments> {
    if !(var_p.is_finite() && var_p > 0.0) || !(var_q.is_finite() && var_q > 0.0) {
        return Err(Error::invalid("variances must be positive"));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::invalid("bandwidth must be positive"));
    }
    if !mean_gap.is_finite() {
        return Err(Error::invalid("mean gap must be finite"));
    }
    let a = 1.0 / (2.0 * gamma * gamma);
    let norm_p = 1.0 / (1.0 + 4.0 * a * var_p).sqrt();
    let norm_q = 1.0 / (1.0 + 4.0 * a * var_q).sqrt();
    let s = 1.0 + 2.0 * a * (var_p + var_q);
    let cross = (-a * mean_gap * mean_gap / s).exp() / s.sqrt();
    Ok(GaussianMoments {
        norm_p,
        norm_q,
        cross,
        mmd2: norm_p + norm_q - 2.0 * cross,
    })
}

// ---------------------------------------------------------------------------
// Monte Carlo helpers shared by the tests and the harness
// ---------------------------------------------------------------------------

/// Draws `m` i.i.d. points from a discrete distribution over `pair`'s
/// support using the given probability side.
pub fn sample_discrete(
    pair: &DiscretePair,
    side_q: bool,
    m: usize,
    rng: &mut impl rand::Rng,
) -> Result<Sample> {
    use rand::distr::Distribution;
    let probs = if side_q { pair.q() } else { pair.p() };
    let dist = rand::distr::weighted::WeightedIndex::new(probs)
        .map_err(|e| Error::invalid(format!("cannot sample from probabilities: {e}")))?;
    let mut data = Vec::with_capacity(m * pair.dim());
    for _ in 0..m {
        let idx = dist.sample(rng);
        data.extend_from_slice(pair.point(idx));
    }
    Sample::from_flat(data, m, pair.dim())
}

/// Multinomial counts of `m` draws from a probability vector, sampled
/// exactly via the conditional-binomial decomposition.
pub fn multinomial_counts(probs: &[f64], m: u64, rng: &mut impl rand::Rng) -> Result<Vec<u64>> {
    use rand::distr::Distribution;
    validate_probs(probs)?;
    let mut counts = vec![0u64; probs.len()];
    let mut remaining = m;
    let mut mass_left = 1.0f64;
    for (i, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == probs.len() || mass_left <= p {
            counts[i] = remaining;
            break;
        }
        let cond = (p / mass_left).clamp(0.0, 1.0);
        let draw = rand_distr::Binomial::new(remaining, cond)
            .map_err(|e| Error::invalid(format!("binomial parameters invalid: {e}")))?
            .sample(rng);
        counts[i] = draw;
        remaining -= draw;
        mass_left -= p;
    }
    Ok(counts)
}
