//! Kernel-parameter selection by gradient ascent on the test-power
//! t-statistic `MMD̂² / sqrt(((4m-8)ζ₁ + 2ζ₂)/(m-1))`.
//!
//! The ratio statistic and the squared-MMD statistic share this
//! t-statistic exactly (the norm factor cancels), so one objective serves
//! both tests. Optimization runs on log-parameters (`log γ`, and the log
//! metric diagonal for the Mahalanobis family), which keeps every iterate
//! in the valid parameter region. The variance under the root is
//! regularized as `max(v, 0) + 1e-8` to avoid blow-up near equal
//! distributions.

use crate::error::{Error, Result};
use crate::estimators::Reductions;
use crate::kernels::{eval_unchecked, median_heuristic, KernelFamily, KernelSpec, Sample};
use rand::seq::SliceRandom;

/// Variance regularizer inside the square root of the t-statistic.
pub const VARIANCE_FLOOR: f64 = 1e-8;

/// Gradient backend for the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    Analytic,
    CentralDifference,
}

/// Adam-ascent settings.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OptimizerConfig {
    pub step_size: f64,
    pub iterations: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub epsilon_stabilizer: f64,
    pub gradient_mode: GradientMode,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            step_size: 0.05,
            iterations: 2000,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            epsilon_stabilizer: 1e-8,
            gradient_mode: GradientMode::Analytic,
        }
    }
}

impl OptimizerConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::config("step size must be positive"));
        }
        for beta in [self.adam_beta1, self.adam_beta2] {
            if !(beta > 0.0 && beta < 1.0) {
                return Err(Error::config("adam betas must lie in (0,1)"));
            }
        }
        if !(self.epsilon_stabilizer.is_finite() && self.epsilon_stabilizer > 0.0) {
            return Err(Error::config("stabilizer must be positive"));
        }
        Ok(())
    }
}

/// First/second-moment state of the Adam update.
pub(crate) struct Adam {
    m1: Vec<f64>,
    m2: Vec<f64>,
    step: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    lr: f64,
}

impl Adam {
    pub(crate) fn new(dim: usize, cfg: &OptimizerConfig) -> Self {
        Adam {
            m1: vec![0.0; dim],
            m2: vec![0.0; dim],
            step: 0,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: cfg.epsilon_stabilizer,
            lr: cfg.step_size,
        }
    }

    /// One update; `sign = +1` ascends, `-1` descends.
    pub(crate) fn step(&mut self, params: &mut [f64], grad: &[f64], sign: f64) {
        self.step += 1;
        let b1t = 1.0 - self.beta1.powi(self.step as i32);
        let b2t = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m1[i] = self.beta1 * self.m1[i] + (1.0 - self.beta1) * grad[i];
            self.m2[i] = self.beta2 * self.m2[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m1[i] / b1t;
            let v_hat = self.m2[i] / b2t;
            params[i] += sign * self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// t-statistic value with a degeneracy flag (non-finite variance input).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerStatistic {
    pub value: f64,
    pub degenerate: bool,
}

fn t_from_reductions(r: &Reductions) -> Result<PowerStatistic> {
    let (z1, z2) = r.variance_components()?;
    let m = r.m as f64;
    let v = ((4.0 * m - 8.0) * z1 + 2.0 * z2) / (m - 1.0);
    let mmd2 = r.mmd2();
    // A nonpositive variance estimate carries no scale information; the
    // statistic is reported as zero rather than blown up by the floor.
    if !v.is_finite() || !mmd2.is_finite() || v <= 0.0 {
        return Ok(PowerStatistic {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(PowerStatistic {
        value: mmd2 / (v + VARIANCE_FLOOR).sqrt(),
        degenerate: false,
    })
}

/// Empirical t-statistic for test-power estimation (`m >= 4`).
pub fn power_t_statistic(x: &Sample, y: &Sample, spec: &KernelSpec) -> Result<PowerStatistic> {
    t_from_reductions(&Reductions::from_samples(spec, x, y)?)
}

// ---------------------------------------------------------------------------
// Log-parameter vectors
// ---------------------------------------------------------------------------

fn params_from_spec(spec: &KernelSpec) -> Result<Vec<f64>> {
    let mut params = vec![spec.bandwidth().ln()];
    if spec.family() == KernelFamily::Mahalanobis {
        let metric = spec.metric().expect("mahalanobis spec carries a metric");
        for i in 0..metric.n_rows() {
            for j in 0..metric.n_cols() {
                if i != j && metric.get(i, j) != 0.0 {
                    return Err(Error::config(
                        "kernel selection supports diagonal Mahalanobis metrics only",
                    ));
                }
            }
            params.push(metric.get(i, i).ln());
        }
    }
    Ok(params)
}

fn spec_from_params(family: KernelFamily, dim: usize, params: &[f64]) -> Result<KernelSpec> {
    let gamma = params[0].exp();
    match family {
        KernelFamily::Gaussian => KernelSpec::gaussian(gamma),
        KernelFamily::Laplace => KernelSpec::laplace(gamma),
        KernelFamily::Mahalanobis => {
            if params.len() != dim + 1 {
                return Err(Error::config(format!(
                    "expected {} parameters for a {dim}-dimensional metric, got {}",
                    dim + 1,
                    params.len()
                )));
            }
            let diag: Vec<f64> = params[1..].iter().map(|p| p.exp()).collect();
            KernelSpec::mahalanobis_diag(gamma, &diag)
        }
    }
}

// ---------------------------------------------------------------------------
// Analytic gradient
// ---------------------------------------------------------------------------

/// Derivatives of every scalar reduction with respect to one log-parameter.
struct ReductionsGrad {
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
}

impl ReductionsGrad {
    fn zero(m: usize) -> Self {
        ReductionsGrad {
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
        }
    }
}

/// Per-pair derivative weights: `dκ/dθ_p = κ · w_p`.
fn pair_weights(spec: &KernelSpec, u: &[f64], v: &[f64], out: &mut [f64]) {
    let gamma = spec.bandwidth();
    match spec.family() {
        KernelFamily::Gaussian => {
            let r2: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
            out[0] = r2 / (gamma * gamma);
        }
        KernelFamily::Laplace => {
            let r1: f64 = u.iter().zip(v).map(|(a, b)| (a - b).abs()).sum();
            out[0] = r1 / gamma;
        }
        KernelFamily::Mahalanobis => {
            let metric = spec.metric().expect("mahalanobis spec carries a metric");
            let g2 = gamma * gamma;
            let mut q = 0.0;
            for l in 0..u.len() {
                let delta2 = (u[l] - v[l]) * (u[l] - v[l]);
                let ml = metric.get(l, l);
                q += ml * delta2;
                out[l + 1] = -ml * delta2 / (2.0 * g2);
            }
            out[0] = q / g2;
        }
    }
}

fn reductions_with_grads(
    spec: &KernelSpec,
    x: &Sample,
    y: &Sample,
) -> Result<(Reductions, Vec<ReductionsGrad>)> {
    let m = x.len();
    let n_params = match spec.family() {
        KernelFamily::Mahalanobis => x.dim() + 1,
        _ => 1,
    };
    let mut r = Reductions::from_samples(spec, x, y)?;
    // Recompute sequentially to fill the derivative accumulators; the value
    // pass above also validates the inputs.
    r = Reductions {
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
        ..r
    };
    let mut grads: Vec<ReductionsGrad> = (0..n_params).map(|_| ReductionsGrad::zero(m)).collect();
    let mut w = vec![0.0; n_params];

    for i in 0..m {
        let xi = x.row(i);
        let yi = y.row(i);
        for j in 0..m {
            let yj = y.row(j);
            let c = eval_unchecked(spec, xi, yj);
            pair_weights(spec, xi, yj, &mut w);
            r.sum_xy += c;
            r.frob_xy += c * c;
            r.rows_xy[i] += c;
            r.cols_xy[j] += c;
            for (p, g) in grads.iter_mut().enumerate() {
                let dc = c * w[p];
                g.sum_xy += dc;
                g.frob_xy += 2.0 * c * dc;
                g.rows_xy[i] += dc;
                g.cols_xy[j] += dc;
                if i != j {
                    g.sum_xy_off += dc;
                }
            }
            if i == j {
                continue;
            }
            r.sum_xy_off += c;
            let xj = x.row(j);
            let a = eval_unchecked(spec, xi, xj);
            pair_weights(spec, xi, xj, &mut w);
            r.sum_xx += a;
            r.frob_xx += a * a;
            r.rows_xx[i] += a;
            for (p, g) in grads.iter_mut().enumerate() {
                let da = a * w[p];
                g.sum_xx += da;
                g.frob_xx += 2.0 * a * da;
                g.rows_xx[i] += da;
            }
            let b = eval_unchecked(spec, yi, yj);
            pair_weights(spec, yi, yj, &mut w);
            r.sum_yy += b;
            r.frob_yy += b * b;
            r.rows_yy[i] += b;
            for (p, g) in grads.iter_mut().enumerate() {
                let db = b * w[p];
                g.sum_yy += db;
                g.frob_yy += 2.0 * b * db;
                g.rows_yy[i] += db;
            }
        }
    }
    Ok((r, grads))
}

/// Value and gradient of the t-statistic with respect to the kernel's
/// log-parameters.
fn t_with_grad_analytic(x: &Sample, y: &Sample, spec: &KernelSpec) -> Result<(f64, Vec<f64>)> {
    let (r, grads) = reductions_with_grads(spec, x, y)?;
    let (z1, z2) = r.variance_components()?;
    let m = r.m as f64;
    let mm1 = m * (m - 1.0);
    let m3 = mm1 * (m - 2.0);
    let m4 = m3 * (m - 3.0);

    let mmd2 = r.mmd2();
    let v = ((4.0 * m - 8.0) * z1 + 2.0 * z2) / (m - 1.0);
    if !v.is_finite() || !mmd2.is_finite() || v <= 0.0 {
        return Ok((0.0, vec![0.0; grads.len()]));
    }
    let v_reg = v + VARIANCE_FLOOR;
    let root = v_reg.sqrt();
    let value = mmd2 / root;

    let grad = grads
        .iter()
        .map(|g| {
            let d_mmd2 = (g.sum_xx + g.sum_yy - 2.0 * g.sum_xy_off) / mm1;

            let d_rr_xx: f64 = 2.0 * r.rows_xx.iter().zip(&g.rows_xx).map(|(a, b)| a * b).sum::<f64>();
            let d_rr_yy: f64 = 2.0 * r.rows_yy.iter().zip(&g.rows_yy).map(|(a, b)| a * b).sum::<f64>();
            let d_rr_xy: f64 = 2.0 * r.rows_xy.iter().zip(&g.rows_xy).map(|(a, b)| a * b).sum::<f64>();
            let d_cc_xy: f64 = 2.0 * r.cols_xy.iter().zip(&g.cols_xy).map(|(a, b)| a * b).sum::<f64>();

            let d_h4_xx = 2.0 * r.sum_xx * g.sum_xx - 4.0 * d_rr_xx + 2.0 * g.frob_xx;
            let d_h4_yy = 2.0 * r.sum_yy * g.sum_yy - 4.0 * d_rr_yy + 2.0 * g.frob_yy;
            let d_cross4 = 2.0 * r.sum_xy * g.sum_xy - d_cc_xy - d_rr_xy + g.frob_xy;

            let d_mix_x: f64 = r
                .rows_xx
                .iter()
                .zip(&r.rows_xy)
                .zip(g.rows_xx.iter().zip(&g.rows_xy))
                .map(|((rx, rc), (dx, dc))| dx * rc + rx * dc)
                .sum();
            let d_mix_y: f64 = r
                .rows_yy
                .iter()
                .zip(&r.cols_xy)
                .zip(g.rows_yy.iter().zip(&g.cols_xy))
                .map(|((ry, cc), (dy, dc))| dy * cc + ry * dc)
                .sum();

            let d_z1 = (d_rr_xx - g.frob_xx) / m3 - d_h4_xx / m4 + (d_rr_yy - g.frob_yy) / m3
                - d_h4_yy / m4
                + (d_rr_xy - g.frob_xy) / (m * mm1)
                + (d_cc_xy - g.frob_xy) / (m * mm1)
                - 2.0 * d_cross4 / (mm1 * mm1)
                - 2.0 * d_mix_x / (m * mm1)
                + 2.0 * (g.sum_xx * r.sum_xy + r.sum_xx * g.sum_xy - 2.0 * d_mix_x) / (m * m3)
                - 2.0 * d_mix_y / (m * mm1)
                + 2.0 * (g.sum_yy * r.sum_xy + r.sum_yy * g.sum_xy - 2.0 * d_mix_y) / (m * m3);

            let d_z2 = g.frob_xx / mm1 - d_h4_xx / m4 + g.frob_yy / mm1 - d_h4_yy / m4
                + 2.0 * g.frob_xy / (m * m)
                - 2.0 * d_cross4 / (mm1 * mm1)
                - 4.0 * d_mix_x / (m * mm1)
                + 4.0 * (g.sum_xx * r.sum_xy + r.sum_xx * g.sum_xy - 2.0 * d_mix_x) / (m * m3)
                - 4.0 * d_mix_y / (m * mm1)
                + 4.0 * (g.sum_yy * r.sum_xy + r.sum_yy * g.sum_xy - 2.0 * d_mix_y) / (m * m3);

            let d_v = ((4.0 * m - 8.0) * d_z1 + 2.0 * d_z2) / (m - 1.0);
            d_mmd2 / root - mmd2 * d_v / (2.0 * v_reg * root)
        })
        .collect();
    Ok((value, grad))
}

fn t_value_at(family: KernelFamily, dim: usize, params: &[f64], x: &Sample, y: &Sample) -> Result<f64> {
    let spec = spec_from_params(family, dim, params)?;
    Ok(power_t_statistic(x, y, &spec)?.value)
}

fn t_with_grad_central(
    x: &Sample,
    y: &Sample,
    spec: &KernelSpec,
    step: f64,
) -> Result<(f64, Vec<f64>)> {
    let family = spec.family();
    let dim = x.dim();
    let params = params_from_spec(spec)?;
    let value = t_value_at(family, dim, &params, x, y)?;
    let mut grad = vec![0.0; params.len()];
    for p in 0..params.len() {
        let mut plus = params.clone();
        plus[p] += step;
        let mut minus = params.clone();
        minus[p] -= step;
        grad[p] = (t_value_at(family, dim, &plus, x, y)? - t_value_at(family, dim, &minus, x, y)?)
            / (2.0 * step);
    }
    Ok((value, grad))
}

/// Step used by the central-difference backend (on log-parameters).
pub const CENTRAL_DIFF_STEP: f64 = 1e-5;

/// Value and gradient of the t-statistic with respect to the kernel's
/// log-parameters (`log γ`, then the log metric diagonal when present).
pub fn t_statistic_gradient(
    x: &Sample,
    y: &Sample,
    spec: &KernelSpec,
    mode: GradientMode,
) -> Result<(f64, Vec<f64>)> {
    match mode {
        GradientMode::Analytic => t_with_grad_analytic(x, y, spec),
        GradientMode::CentralDifference => t_with_grad_central(x, y, spec, CENTRAL_DIFF_STEP),
    }
}

/// Result of a kernel-selection run.
#[derive(Debug, Clone)]
pub struct SelectionOutcome {
    pub spec: KernelSpec,
    pub initial_stat: f64,
    pub final_stat: f64,
    /// Set when the objective became non-finite and the best-so-far
    /// parameters were returned early.
    pub diverged: bool,
}

/// Selects kernel parameters for a family by `config.iterations` Adam
/// steps on the log-parameters, ascending the t-statistic on a held-out
/// training split (half of each sample, chosen by `rng`).
///
/// Initialization is the median heuristic on the training split (unit
/// metric diagonal for the Mahalanobis family). Deterministic given the
/// state of `rng`.
pub fn select_kernel(
    x: &Sample,
    y: &Sample,
    family: KernelFamily,
    config: &OptimizerConfig,
    rng: &mut impl rand::Rng,
) -> Result<SelectionOutcome> {
    config.validate()?;
    if x.len() != y.len() {
        return Err(Error::SizeMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 8 {
        return Err(Error::invalid(
            "kernel selection needs m >= 8 (half of each sample is held out, and the \
             variance components need at least 4 points per side)",
        ));
    }
    let half = x.len() / 2;
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.shuffle(rng);
    let x_train = x.select(&idx[..half])?;
    idx.shuffle(rng);
    let y_train = y.select(&idx[..half])?;

    let gamma0 = median_heuristic(&x_train, &y_train)?;
    let init = match family {
        KernelFamily::Gaussian => KernelSpec::gaussian(gamma0)?,
        KernelFamily::Laplace => KernelSpec::laplace(gamma0)?,
        KernelFamily::Mahalanobis => KernelSpec::mahalanobis_diag(gamma0, &vec![1.0; x.dim()])?,
    };

    let mut params = params_from_spec(&init)?;
    let initial_stat = t_value_at(family, x.dim(), &params, &x_train, &y_train)?;
    let mut best_params = params.clone();
    let mut best_stat = initial_stat;
    let mut diverged = false;

    let mut adam = Adam::new(params.len(), config);
    for _ in 0..config.iterations {
        let spec = spec_from_params(family, x.dim(), &params)?;
        let (value, grad) = match config.gradient_mode {
            GradientMode::Analytic => t_with_grad_analytic(&x_train, &y_train, &spec)?,
            GradientMode::CentralDifference => {
                t_with_grad_central(&x_train, &y_train, &spec, CENTRAL_DIFF_STEP)?
            }
        };
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            diverged = true;
            break;
        }
        if value > best_stat {
            best_stat = value;
            best_params = params.clone();
        }
        adam.step(&mut params, &grad, 1.0);
    }
    if !diverged && config.iterations > 0 {
        let final_value = t_value_at(family, x.dim(), &params, &x_train, &y_train)?;
        if final_value.is_finite() && final_value > best_stat {
            best_stat = final_value;
            best_params = params;
        }
    }

    Ok(SelectionOutcome {
        spec: spec_from_params(family, x.dim(), &best_params)?,
        initial_stat,
        final_stat: best_stat,
        diverged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_distr::Distribution;

    fn gaussian_samples(seed: u64, m: usize, std_x: f64, std_y: f64, gap: f64) -> (Sample, Sample) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let nx = rand_distr::Normal::new(0.0, std_x).unwrap();
        let ny = rand_distr::Normal::new(gap, std_y).unwrap();
        let x = Sample::from_rows((0..m).map(|_| vec![nx.sample(&mut rng)]).collect()).unwrap();
        let y = Sample::from_rows((0..m).map(|_| vec![ny.sample(&mut rng)]).collect()).unwrap();
        (x, y)
    }

    #[test]
    fn identical_samples_give_zero_statistic() {
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let (x, _) = gaussian_samples(1, 10, 1.0, 1.0, 0.0);
        let t = power_t_statistic(&x, &x, &spec).unwrap();
        assert_eq!(t.value, 0.0);
    }

    #[test]
    fn nammd_form_equals_mmd_form() {
        // The ratio statistic over its standard deviation equals the
        // squared-MMD statistic over the unnormalized root, because the
        // norm factor cancels.
        let spec = KernelSpec::gaussian(0.8).unwrap();
        let (x, y) = gaussian_samples(2, 12, 1.0, 1.5, 0.7);
        let r = Reductions::from_samples(&spec, &x, &y).unwrap();
        let (z1, z2) = r.variance_components().unwrap();
        let m = r.m as f64;
        let v = ((4.0 * m - 8.0) * z1 + 2.0 * z2) / (m - 1.0);
        let root = (v.max(0.0) + VARIANCE_FLOOR).sqrt();
        let nammd_form = r.nammd() / (root / r.norm());
        let mmd_form = power_t_statistic(&x, &y, &spec).unwrap().value;
        assert!((nammd_form - mmd_form).abs() < 1e-10 * mmd_form.abs().max(1.0));
    }

    #[test]
    fn analytic_gradient_matches_central_difference() {
        let (x, y) = gaussian_samples(3, 16, 1.0, 2.0, 0.5);
        let specs = [
            KernelSpec::gaussian(0.9).unwrap(),
            KernelSpec::laplace(1.4).unwrap(),
            KernelSpec::mahalanobis_diag(0.7, &[1.3]).unwrap(),
        ];
        for spec in &specs {
            let (va, ga) = t_statistic_gradient(&x, &y, spec, GradientMode::Analytic).unwrap();
            let (vc, gc) =
                t_statistic_gradient(&x, &y, spec, GradientMode::CentralDifference).unwrap();
            assert!((va - vc).abs() < 1e-10);
            for (a, c) in ga.iter().zip(&gc) {
                let scale = a.abs().max(c.abs()).max(1e-8);
                assert!(
                    (a - c).abs() / scale < 1e-4,
                    "family {:?}: analytic {a} vs central {c}",
                    spec.family()
                );
            }
        }
    }

    #[test]
    fn zero_iterations_return_initialization() {
        let (x, y) = gaussian_samples(4, 20, 1.0, 1.0, 1.0);
        let cfg = OptimizerConfig {
            iterations: 0,
            ..OptimizerConfig::default()
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let out = select_kernel(&x, &y, KernelFamily::Gaussian, &cfg, &mut rng).unwrap();
        assert_eq!(out.initial_stat, out.final_stat);
        assert!(!out.diverged);
        assert!(out.spec.bandwidth() > 0.0);
    }

    #[test]
    fn plateau_statistic_is_exactly_zero() {
        // Identical samples cancel exactly in the squared-MMD sum.
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let (x, _) = gaussian_samples(5, 16, 1.0, 1.0, 0.0);
        let t = power_t_statistic(&x, &x, &spec).unwrap();
        assert_eq!(t.value, 0.0);

        // Selection on a no-signal pair completes, never regresses the
        // objective, and keeps the bandwidth valid.
        let cfg = OptimizerConfig {
            iterations: 25,
            ..OptimizerConfig::default()
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let out = select_kernel(&x, &x, KernelFamily::Gaussian, &cfg, &mut rng).unwrap();
        assert!(out.final_stat >= out.initial_stat);
        assert!(out.spec.bandwidth() > 0.0);
    }

    #[test]
    fn ascent_improves_from_oversized_bandwidth() {
        // Well-separated 1-D Gaussians; a bandwidth 100x the median is far
        // from the optimum, so ascent must improve the objective.
        let (x, y) = gaussian_samples(6, 60, 1.0, 1.0, 4.0);
        let median = median_heuristic(&x, &y).unwrap();
        let start = KernelSpec::gaussian(100.0 * median).unwrap();
        let t0 = power_t_statistic(&x, &y, &start).unwrap().value;

        let mut params = params_from_spec(&start).unwrap();
        let cfg = OptimizerConfig {
            step_size: 0.1,
            iterations: 300,
            ..OptimizerConfig::default()
        };
        let mut adam = Adam::new(1, &cfg);
        for _ in 0..cfg.iterations {
            let spec = spec_from_params(KernelFamily::Gaussian, 1, &params).unwrap();
            let (_, grad) = t_with_grad_analytic(&x, &y, &spec).unwrap();
            adam.step(&mut params, &grad, 1.0);
        }
        let tuned = spec_from_params(KernelFamily::Gaussian, 1, &params).unwrap();
        let t1 = power_t_statistic(&x, &y, &tuned).unwrap().value;
        assert!(t1 > t0, "ascent failed: {t0} -> {t1}");

        // A log-spaced grid confirms an interior optimum beats the start.
        let grid_best = (-30..30)
            .map(|e| {
                let gamma = median * (10.0f64).powf(e as f64 / 10.0);
                let spec = KernelSpec::gaussian(gamma).unwrap();
                power_t_statistic(&x, &y, &spec).unwrap().value
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(grid_best > t0);
        assert!(t1 > 0.5 * grid_best);
    }

    #[test]
    fn selection_is_deterministic_and_improving() {
        let (x, y) = gaussian_samples(7, 40, 0.6, 1.4, 1.0);
        let cfg = OptimizerConfig {
            iterations: 60,
            ..OptimizerConfig::default()
        };
        let run = |seed: u64| {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            select_kernel(&x, &y, KernelFamily::Gaussian, &cfg, &mut rng).unwrap()
        };
        let a = run(11);
        let b = run(11);
        assert_eq!(a.spec, b.spec);
        assert!(a.final_stat >= a.initial_stat);
        assert!(a.spec.bandwidth() > 0.0);
    }
}
