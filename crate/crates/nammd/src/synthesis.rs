//! Synthetic distributions and datasets for the experiments:
//! total-variation-controlled discrete pairs, sample pairs learned to a
//! target norm-adaptive distance, Gaussian-mixture generators, Dirac
//! pairs, and constant-MMD Gaussian sweeps.

use crate::error::{Error, Result};
use crate::estimators::{exact_discrete_embeddings, gaussian_moment_oracle, DiscretePair};
use crate::kernels::{eval_unchecked, KernelFamily, KernelSpec, Sample};
use crate::selection::{Adam, OptimizerConfig};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Uniform distribution paired with a distribution at exactly the
/// requested total-variation distance from it.
///
/// Mass `eps_prime` is moved off a random subset of `ceil(eps_prime * n)`
/// donor atoms (each losing at most `1/n`) onto the remaining atoms
/// uniformly. Both directions of the L1 difference then contribute
/// exactly `eps_prime`, so the TV distance is exact. The largest TV
/// reachable from the uniform distribution is `(n-1)/n`; targets above
/// that are infeasible for any construction.
pub fn uniform_with_tv(
    support: Vec<Vec<f64>>,
    eps_prime: f64,
    rng: &mut impl Rng,
) -> Result<DiscretePair> {
    let n = support.len();
    if n < 2 {
        return Err(Error::invalid("support needs at least 2 atoms"));
    }
    if !(eps_prime.is_finite() && eps_prime > 0.0 && eps_prime < 1.0) {
        return Err(Error::invalid(format!(
            "total-variation target must lie in (0,1), got {eps_prime}"
        )));
    }
    let max_tv = (n as f64 - 1.0) / n as f64;
    if eps_prime > max_tv {
        return Err(Error::Infeasible(format!(
            "TV {eps_prime} exceeds the maximum {max_tv} reachable from the uniform distribution on {n} atoms"
        )));
    }
    let k = (eps_prime * n as f64).ceil() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);

    let uniform = 1.0 / n as f64;
    let p = vec![uniform; n];
    let mut q = vec![uniform; n];
    let give = eps_prime / k as f64;
    let take = eps_prime / (n - k) as f64;
    for &i in &order[..k] {
        q[i] -= give;
    }
    for &i in &order[k..] {
        q[i] += take;
    }
    DiscretePair::new(support, p, q)
}

// ---------------------------------------------------------------------------
// Learning sample pairs with a target norm-adaptive distance
// ---------------------------------------------------------------------------

/// Convergence tolerance on the achieved distance.
pub const TARGET_TOLERANCE: f64 = 1e-3;

/// Result of a target-distance learning run.
#[derive(Debug, Clone)]
pub struct LearnOutcome {
    pub x: Sample,
    pub y: Sample,
    pub achieved: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl LearnOutcome {
    /// The uniform empirical pair over the learned point sets, as one
    /// discrete pair on the joint support.
    pub fn discrete_pair(&self) -> Result<DiscretePair> {
        uniform_pair_over(&self.x, &self.y)
    }
}

/// Uniform discrete distributions over two point sets, on their joint
/// support.
pub fn uniform_pair_over(x: &Sample, y: &Sample) -> Result<DiscretePair> {
    let m = x.len();
    let n = y.len();
    let support: Vec<Vec<f64>> = x
        .rows()
        .chain(y.rows())
        .map(|r| r.to_vec())
        .collect();
    let mut p = vec![0.0; m + n];
    let mut q = vec![0.0; m + n];
    for v in p.iter_mut().take(m) {
        *v = 1.0 / m as f64;
    }
    for v in q.iter_mut().skip(m) {
        *v = 1.0 / n as f64;
    }
    DiscretePair::new(support, p, q)
}

/// Population norm-adaptive distance of the uniform distributions over
/// two equally sized point sets (V-statistic form, diagonal included).
pub fn nammd_of_point_sets(spec: &KernelSpec, z: &Sample, zp: &Sample) -> f64 {
    let m = z.len() as f64;
    let k = spec.upper_bound();
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for i in 0..z.len() {
        for j in 0..z.len() {
            sxx += if i == j { k } else { eval_unchecked(spec, z.row(i), z.row(j)) };
            syy += if i == j { k } else { eval_unchecked(spec, zp.row(i), zp.row(j)) };
            sxy += eval_unchecked(spec, z.row(i), zp.row(j));
        }
    }
    let mmd2 = (sxx + syy - 2.0 * sxy) / (m * m);
    let norm = 4.0 * k - (sxx + syy) / (m * m);
    mmd2 / norm
}

/// Gradient of [`nammd_of_point_sets`] with respect to every coordinate,
/// analytic through the Gaussian Gram entries.
fn nammd_grad_gaussian(spec: &KernelSpec, z: &Sample, zp: &Sample) -> (f64, Vec<f64>, Vec<f64>) {
    let m = z.len();
    let d = z.dim();
    let mf = m as f64;
    let k = spec.upper_bound();
    let inv_g2 = 1.0 / (spec.bandwidth() * spec.bandwidth());

    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    // d(sum)/d(coordinate), flattened like the samples.
    let mut dsxx = vec![0.0; m * d];
    let mut dsyy = vec![0.0; m * d];
    let mut dsxy_z = vec![0.0; m * d];
    let mut dsxy_zp = vec![0.0; m * d];

    for i in 0..m {
        let zi = z.row(i);
        let zpi = zp.row(i);
        for j in 0..m {
            let zj = z.row(j);
            let zpj = zp.row(j);
            if i == j {
                sxx += k;
                syy += k;
            } else {
                let a = eval_unchecked(spec, zi, zj);
                sxx += a;
                // Both orderings of the pair contribute, hence the 2.
                for c in 0..d {
                    dsxx[i * d + c] += -2.0 * a * (zi[c] - zj[c]) * inv_g2;
                }
                let b = eval_unchecked(spec, zpi, zpj);
                syy += b;
                for c in 0..d {
                    dsyy[i * d + c] += -2.0 * b * (zpi[c] - zpj[c]) * inv_g2;
                }
            }
            let cxy = eval_unchecked(spec, zi, zpj);
            sxy += cxy;
            for c in 0..d {
                let delta = (zi[c] - zpj[c]) * inv_g2;
                dsxy_z[i * d + c] += -cxy * delta;
                dsxy_zp[j * d + c] += cxy * delta;
            }
        }
    }

    let m2 = mf * mf;
    let a_val = (sxx + syy - 2.0 * sxy) / m2;
    let b_val = 4.0 * k - (sxx + syy) / m2;
    let value = a_val / b_val;

    let mut grad_z = vec![0.0; m * d];
    let mut grad_zp = vec![0.0; m * d];
    for idx in 0..m * d {
        let da = (dsxx[idx] - 2.0 * dsxy_z[idx]) / m2;
        let db = -dsxx[idx] / m2;
        grad_z[idx] = (da * b_val - a_val * db) / (b_val * b_val);
        let da = (dsyy[idx] - 2.0 * dsxy_zp[idx]) / m2;
        let db = -dsyy[idx] / m2;
        grad_zp[idx] = (da * b_val - a_val * db) / (b_val * b_val);
    }
    (value, grad_z, grad_zp)
}

fn nammd_grad_central(
    spec: &KernelSpec,
    z: &Sample,
    zp: &Sample,
    h: f64,
) -> (f64, Vec<f64>, Vec<f64>) {
    let m = z.len();
    let d = z.dim();
    let value = nammd_of_point_sets(spec, z, zp);
    let perturbed = |flat: &[f64], other: &Sample, swap: bool, idx: usize, delta: f64| -> f64 {
        let mut data = flat.to_vec();
        data[idx] += delta;
        let s = Sample::from_flat(data, m, d).expect("perturbed sample stays valid");
        if swap {
            nammd_of_point_sets(spec, other, &s)
        } else {
            nammd_of_point_sets(spec, &s, other)
        }
    };
    let mut grad_z = vec![0.0; m * d];
    let mut grad_zp = vec![0.0; m * d];
    for idx in 0..m * d {
        grad_z[idx] = (perturbed(z.as_flat(), zp, false, idx, h)
            - perturbed(z.as_flat(), zp, false, idx, -h))
            / (2.0 * h);
        grad_zp[idx] = (perturbed(zp.as_flat(), z, true, idx, h)
            - perturbed(zp.as_flat(), z, true, idx, -h))
            / (2.0 * h);
    }
    (value, grad_z, grad_zp)
}

/// Learns two point sets whose uniform empirical distributions sit at the
/// target norm-adaptive distance, by Adam descent on the squared gap
/// `(NAMMD - ε)²`.
///
/// Stops as soon as `|NAMMD - ε| <= 1e-3` or after `config.iterations`
/// steps; the returned flag reports which happened. The step size is
/// scaled down near the target so the trajectory cannot jump across the
/// tolerance band. Non-finite objectives abort with the best iterate
/// found so far.
pub fn learn_target_nammd(
    z_init: &Sample,
    zp_init: &Sample,
    spec: &KernelSpec,
    epsilon: f64,
    config: &OptimizerConfig,
) -> Result<LearnOutcome> {
    if !(epsilon.is_finite() && epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid(format!(
            "target distance must lie in (0,1), got {epsilon}"
        )));
    }
    config.validate()?;
    if z_init.len() != zp_init.len() {
        return Err(Error::SizeMismatch {
            left: z_init.len(),
            right: zp_init.len(),
        });
    }
    if z_init.dim() != zp_init.dim() {
        return Err(Error::DimensionMismatch {
            left: z_init.dim(),
            right: zp_init.dim(),
        });
    }

    let m = z_init.len();
    let d = z_init.dim();
    let mut z = z_init.as_flat().to_vec();
    let mut zp = zp_init.as_flat().to_vec();

    let mut best = (z.clone(), zp.clone());
    let mut best_gap = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    let mut adam = Adam::new(2 * m * d, config);
    let mut params: Vec<f64> = z.iter().chain(zp.iter()).cloned().collect();

    for iter in 0..=config.iterations {
        z.copy_from_slice(&params[..m * d]);
        zp.copy_from_slice(&params[m * d..]);
        let zs = Sample::from_flat(z.clone(), m, d)?;
        let zps = Sample::from_flat(zp.clone(), m, d)?;

        let (value, grad_z, grad_zp) = match spec.family() {
            KernelFamily::Gaussian => nammd_grad_gaussian(spec, &zs, &zps),
            _ => nammd_grad_central(spec, &zs, &zps, 1e-6),
        };
        iterations = iter;
        if !value.is_finite() {
            break;
        }
        let gap = value - epsilon;
        if gap.abs() < best_gap {
            best_gap = gap.abs();
            best = (z.clone(), zp.clone());
        }
        if gap.abs() <= TARGET_TOLERANCE {
            converged = true;
            break;
        }
        if iter == config.iterations {
            break;
        }

        // Descend the squared gap; the applied step shrinks near the target
        // so the trajectory cannot jump across the tolerance band.
        let objective_grad: Vec<f64> = grad_z
            .iter()
            .chain(grad_zp.iter())
            .map(|g| 2.0 * gap * g)
            .collect();
        if objective_grad.iter().any(|g| !g.is_finite()) {
            break;
        }
        let scale = (gap.abs() / 0.02).clamp(0.05, 1.0);
        let mut stepped = params.clone();
        adam.step(&mut stepped, &objective_grad, -1.0);
        for (current, next) in params.iter_mut().zip(&stepped) {
            *current += (next - *current) * scale;
        }
    }

    let (bz, bzp) = best;
    let x = Sample::from_flat(bz, m, d)?;
    let y = Sample::from_flat(bzp, m, d)?;
    let achieved = nammd_of_point_sets(spec, &x, &y);
    Ok(LearnOutcome {
        x,
        y,
        achieved,
        converged,
        iterations,
    })
}

// ---------------------------------------------------------------------------
// Gaussian-mixture generators
// ---------------------------------------------------------------------------

/// Null or alternative sampling mode for the mixture generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    Null,
    Alt,
}

/// 2-D grid-of-Gaussians configuration.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BlobConfig {
    pub grid_side: usize,
    pub cell_spacing: f64,
    /// Row-major 2x2 covariances for the null and alternative mixtures.
    pub null_cov: [f64; 4],
    pub alt_cov: [f64; 4],
}

impl Default for BlobConfig {
    fn default() -> Self {
        BlobConfig {
            grid_side: 3,
            cell_spacing: 5.0,
            null_cov: [1.0, 0.0, 0.0, 1.0],
            // Eigenvalues 2 and 1/2 along the diagonals of the cell.
            alt_cov: [1.25, 0.75, 0.75, 1.25],
        }
    }
}

fn cholesky2(cov: &[f64; 4]) -> Result<[f64; 3]> {
    let (a, b, c) = (cov[0], cov[1], cov[3]);
    if (cov[1] - cov[2]).abs() > 1e-12 {
        return Err(Error::invalid("covariance must be symmetric"));
    }
    if a <= 0.0 {
        return Err(Error::invalid("covariance must be positive definite"));
    }
    let l11 = a.sqrt();
    let l21 = b / l11;
    let rest = c - l21 * l21;
    if rest <= 0.0 {
        return Err(Error::invalid("covariance must be positive definite"));
    }
    Ok([l11, l21, rest.sqrt()])
}

fn sample_blob(
    cfg: &BlobConfig,
    chol: &[f64; 3],
    m: usize,
    rng: &mut impl Rng,
) -> Result<Sample> {
    let side = cfg.grid_side;
    let mut data = Vec::with_capacity(m * 2);
    for _ in 0..m {
        let cell = rng.random_range(0..side * side);
        let cx = (cell % side) as f64 * cfg.cell_spacing;
        let cy = (cell / side) as f64 * cfg.cell_spacing;
        let u: f64 = StandardNormal.sample(rng);
        let v: f64 = StandardNormal.sample(rng);
        data.push(cx + chol[0] * u);
        data.push(cy + chol[1] * u + chol[2] * v);
    }
    Sample::from_flat(data, m, 2)
}

/// Grid-of-Gaussians sample pair in two dimensions. Under the null mode
/// both samples come from the null mixture; under the alternative the
/// second sample uses the alternative covariance.
pub fn blob_pair(
    cfg: &BlobConfig,
    m: usize,
    mode: PairMode,
    rng: &mut impl Rng,
) -> Result<(Sample, Sample)> {
    if cfg.grid_side < 1 {
        return Err(Error::invalid("grid side must be at least 1"));
    }
    if m < 2 {
        return Err(Error::invalid("sample size must be at least 2"));
    }
    let chol_null = cholesky2(&cfg.null_cov)?;
    let chol_alt = cholesky2(&cfg.alt_cov)?;
    let x = sample_blob(cfg, &chol_null, m, rng)?;
    let y = match mode {
        PairMode::Null => sample_blob(cfg, &chol_null, m, rng)?,
        PairMode::Alt => sample_blob(cfg, &chol_alt, m, rng)?,
    };
    Ok((x, y))
}

/// Higher-dimensional two-component Gaussian mixture configuration.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HdgmConfig {
    pub dim: usize,
    /// Magnitude of the component offset placed on the first two
    /// coordinates (components sit at +/- this offset).
    pub component_offset: f64,
    /// Mean shift applied to the first two coordinates under the
    /// alternative.
    pub alt_shift: f64,
}

impl Default for HdgmConfig {
    fn default() -> Self {
        HdgmConfig {
            dim: 10,
            component_offset: 2.5,
            alt_shift: 1.0,
        }
    }
}

fn sample_hdgm(cfg: &HdgmConfig, shift: f64, m: usize, rng: &mut impl Rng) -> Result<Sample> {
    let d = cfg.dim;
    let mut data = Vec::with_capacity(m * d);
    for _ in 0..m {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        for c in 0..d {
            let mean = if c < 2 {
                sign * cfg.component_offset + if c == 0 { shift } else { -shift }
            } else {
                0.0
            };
            let noise: f64 = StandardNormal.sample(rng);
            data.push(mean + noise);
        }
    }
    Sample::from_flat(data, m, d)
}

/// Two-component Gaussian mixture pair in `cfg.dim` dimensions, with the
/// alternative shifting the component means in two coordinates.
pub fn hdgm_pair(
    cfg: &HdgmConfig,
    m: usize,
    mode: PairMode,
    rng: &mut impl Rng,
) -> Result<(Sample, Sample)> {
    if cfg.dim < 2 {
        return Err(Error::invalid("mixture dimension must be at least 2"));
    }
    if m < 2 {
        return Err(Error::invalid("sample size must be at least 2"));
    }
    let x = sample_hdgm(cfg, 0.0, m, rng)?;
    let y = match mode {
        PairMode::Null => sample_hdgm(cfg, 0.0, m, rng)?,
        PairMode::Alt => sample_hdgm(cfg, cfg.alt_shift, m, rng)?,
    };
    Ok((x, y))
}

/// Two one-hot distributions on the support `{z0, zi}`.
pub fn dirac_pair(z0: Vec<f64>, zi: Vec<f64>) -> Result<DiscretePair> {
    DiscretePair::new(vec![z0, zi], vec![1.0, 0.0], vec![0.0, 1.0])
}

/// Mean gap at which two 1-D Gaussians with shared variance `s²` hit the
/// requested squared-MMD value under the Gaussian kernel, found by
/// bisection on the closed-form moments.
pub fn constant_mmd_gaussian_sweep(s2: f64, target_mmd2: f64, gamma: f64) -> Result<f64> {
    if !(target_mmd2 >= 0.0 && target_mmd2.is_finite()) {
        return Err(Error::invalid("target must be nonnegative"));
    }
    if target_mmd2 == 0.0 {
        return Ok(0.0);
    }
    let mmd_at = |gap: f64| -> Result<f64> {
        Ok(gaussian_moment_oracle(s2, s2, gap, gamma)?.mmd2)
    };
    let supremum = 2.0 * gaussian_moment_oracle(s2, s2, 0.0, gamma)?.norm_p;
    if target_mmd2 >= supremum {
        return Err(Error::Infeasible(format!(
            "squared MMD {target_mmd2} is not reachable at variance {s2} (supremum {supremum})"
        )));
    }
    let mut hi = 1.0;
    while mmd_at(hi)? < target_mmd2 {
        hi *= 2.0;
        if hi > 1e8 {
            return Err(Error::Infeasible("bisection bracket exploded".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mmd_at(mid)? < target_mmd2 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

// ---------------------------------------------------------------------------
// Closed-form reference/test pair family on two-atom supports
// ---------------------------------------------------------------------------

/// A reference pair and a test pair with exactly controlled distances:
/// the test pair sits `delta` above the reference in the norm-adaptive
/// distance, has the larger embedding-norm sum, and still has the larger
/// squared MMD.
#[derive(Debug, Clone)]
pub struct ReferenceTestPairs {
    pub reference: DiscretePair,
    pub test: DiscretePair,
    pub spec: KernelSpec,
    /// Exact distances of the reference pair (the closeness levels).
    pub eps_nammd: f64,
    pub eps_mmd2: f64,
    /// Exact distances of the test pair.
    pub test_nammd: f64,
    pub test_mmd2: f64,
}

/// Balanced four-atom construction under a Gaussian kernel.
///
/// Each side is uniform over two atoms. The within-pair kernel value `a`
/// (same for both sides) fixes the embedding norms at `(1+a)/2` and thus
/// the denominator at `3-a` exactly; the mean cross value then places
/// the distance at `epsilon` exactly:
/// `NAMMD = ((1+a) - (w_hi + w_lo)) / (3 - a)`.
///
/// The cross asymmetry `delta_w = w_hi - w_lo` does not move the
/// distance but sets the statistic's asymptotic standard deviation to
/// `delta_w` (one side of the projection is a symmetric two-point
/// variable, the other is constant), so the sampling behavior is tunable
/// independently of the targets. Atom masses are all 1/2, so sampled
/// counts stay balanced.
fn four_atom_pair(
    epsilon: f64,
    a: f64,
    delta_w_max: f64,
    gamma: f64,
) -> Result<(DiscretePair, KernelSpec)> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid("closeness level must lie in (0,1)"));
    }
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::Infeasible("within-pair kernel value must lie in (0,1)".into()));
    }
    let w_sum = (1.0 + a) - epsilon * (3.0 - a);
    if w_sum <= 0.0 {
        return Err(Error::Infeasible(format!(
            "distance {epsilon} is not reachable at within-pair kernel value {a}"
        )));
    }
    let d_p = gamma * (2.0 * (1.0 / a).ln()).sqrt();

    // Shrink the asymmetry until the four kernel values are realizable as
    // Euclidean distances in three dimensions.
    let mut delta_w = delta_w_max.min(0.8 * w_sum);
    for _ in 0..60 {
        let w_hi = 0.5 * (w_sum + delta_w);
        let w_lo = 0.5 * (w_sum - delta_w);
        if w_hi < 1.0 && w_lo > 0.0 {
            let t_hi = gamma * (2.0 * (1.0 / w_hi).ln()).sqrt();
            let t_lo = gamma * (2.0 * (1.0 / w_lo).ln()).sqrt();
            let x = (d_p * d_p - (t_lo * t_lo - t_hi * t_hi)) / (2.0 * d_p);
            let y_sq = t_hi * t_hi - 0.25 * d_p * d_p - x * x;
            if y_sq >= 0.0 {
                let y = y_sq.sqrt();
                let spec = KernelSpec::gaussian(gamma)?;
                let pair = DiscretePair::new(
                    vec![
                        vec![0.0, 0.0, 0.0],
                        vec![d_p, 0.0, 0.0],
                        vec![x, y, 0.5 * d_p],
                        vec![x, y, -0.5 * d_p],
                    ],
                    vec![0.5, 0.5, 0.0, 0.0],
                    vec![0.0, 0.0, 0.5, 0.5],
                )?;
                return Ok((pair, spec));
            }
        }
        delta_w *= 0.7;
    }
    Err(Error::Infeasible(format!(
        "no realizable cross geometry at distance {epsilon}, within value {a}"
    )))
}

fn boundary_within_value(epsilon: f64) -> f64 {
    // Keep the within value above the reachability floor (3ε-1)/(1+ε)
    // with margin.
    ((3.0 * epsilon - 1.0) / (1.0 + epsilon) + 0.1).clamp(0.75, 0.97)
}

/// A discrete pair whose norm-adaptive distance equals `epsilon` exactly,
/// with the Gaussian kernel it was built for. Uniform atom masses keep
/// sampled counts balanced.
pub fn boundary_pair(epsilon: f64, gamma: f64) -> Result<(DiscretePair, KernelSpec)> {
    four_atom_pair(epsilon, boundary_within_value(epsilon), 0.3, gamma)
}

/// Builds the closed-form reference/test construction for a closeness
/// level `epsilon`, with the test pair `delta` above it.
pub fn reference_test_pairs(epsilon: f64, delta: f64, gamma: f64) -> Result<ReferenceTestPairs> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid("closeness level must lie in (0,1)"));
    }
    let eps2 = epsilon + delta;
    if !(delta > 0.0 && eps2 < 1.0) {
        return Err(Error::invalid("test-pair distance must stay inside (0,1)"));
    }

    // The test pair's denominator lands inside the window
    // (ε/ε₂·NORM₁, NORM₁): the test pair is then more concentrated while
    // keeping the larger squared MMD. The ratio stays close to one so
    // neither pair is pushed toward a degenerate geometry.
    let a1 = boundary_within_value(epsilon);
    let ratio = ((1.0 + epsilon / eps2) / 2.0).max(0.97);
    let a2 = 3.0 - ratio * (3.0 - a1);

    let (reference, spec) = four_atom_pair(epsilon, a1, 0.3, gamma)?;
    let (test, _) = four_atom_pair(eps2, a2, 0.3, gamma)?;

    // Report the exact values through the discrete evaluators so they are
    // definitionally consistent with the estimators being tested.
    let gram_ref = reference.support_gram(&spec)?;
    let gram_test = test.support_gram(&spec)?;
    let (pp1, qq1, pq1) = exact_discrete_embeddings(&reference, &gram_ref)?;
    let (pp2, qq2, pq2) = exact_discrete_embeddings(&test, &gram_test)?;
    let eps_mmd2 = pp1 + qq1 - 2.0 * pq1;
    let test_mmd2 = pp2 + qq2 - 2.0 * pq2;
    let eps_nammd = eps_mmd2 / (4.0 - pp1 - qq1);
    let test_nammd = test_mmd2 / (4.0 - pp2 - qq2);

    if pp2 + qq2 <= pp1 + qq1 {
        return Err(Error::Infeasible("norm ordering violated".into()));
    }
    if test_mmd2 <= eps_mmd2 {
        return Err(Error::Infeasible("squared-MMD ordering violated".into()));
    }

    Ok(ReferenceTestPairs {
        reference,
        test,
        spec,
        eps_nammd,
        eps_mmd2,
        test_nammd,
        test_mmd2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{exact_discrete_nammd, tv_distance};
    use rand::SeedableRng;

    fn grid_support(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![i as f64, (i * i % 7) as f64]).collect()
    }

    #[test]
    fn tv_construction_is_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let pair = uniform_with_tv(grid_support(4), 0.5, &mut rng).unwrap();
        assert!((tv_distance(pair.p(), pair.q()).unwrap() - 0.5).abs() < 1e-12);

        let pair = uniform_with_tv(grid_support(50), 0.7, &mut rng).unwrap();
        assert!((tv_distance(pair.p(), pair.q()).unwrap() - 0.7).abs() < 1e-12);
        assert!(pair.q().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn tv_construction_random_sweep() {
        use rand::Rng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..300 {
            let n = rng.random_range(2..40);
            let max_tv = (n as f64 - 1.0) / n as f64;
            let eps = rng.random_range(0.01..max_tv);
            let pair = uniform_with_tv(grid_support(n), eps, &mut rng).unwrap();
            assert!((tv_distance(pair.p(), pair.q()).unwrap() - eps).abs() < 1e-12);
        }
    }

    #[test]
    fn tv_construction_rejects_invalid_targets() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        assert!(uniform_with_tv(grid_support(4), 0.0, &mut rng).is_err());
        assert!(uniform_with_tv(grid_support(4), 1.0, &mut rng).is_err());
        // 0.9 exceeds (n-1)/n = 0.75 for n = 4.
        assert!(matches!(
            uniform_with_tv(grid_support(4), 0.9, &mut rng),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn dirac_pair_values() {
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let same = dirac_pair(vec![1.0, 2.0], vec![1.0, 2.0]).unwrap();
        let gram = same.support_gram(&spec).unwrap();
        assert!(exact_discrete_nammd(&same, &gram, 1.0).unwrap().abs() < 1e-15);

        // NAMMD(δ_a, δ_b) = 1 - κ(a,b), strictly increasing in distance.
        let mut last = -1.0;
        for dist in [0.5, 1.0, 2.0, 4.0] {
            let pair = dirac_pair(vec![0.0], vec![dist]).unwrap();
            let gram = pair.support_gram(&spec).unwrap();
            let nammd = exact_discrete_nammd(&pair, &gram, 1.0).unwrap();
            let kappa = crate::kernels::eval_kernel(&spec, &[0.0], &[dist]).unwrap();
            assert!((nammd - (1.0 - kappa)).abs() < 1e-12);
            assert!(nammd > last);
            last = nammd;
            assert_eq!(tv_distance(pair.p(), pair.q()).unwrap(), 1.0);
        }
    }

    #[test]
    fn constant_mmd_sweep_round_trip() {
        let gamma = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(constant_mmd_gaussian_sweep(0.5, 0.0, gamma).unwrap(), 0.0);
        let gap = constant_mmd_gaussian_sweep(0.5, 0.15, gamma).unwrap();
        let back = gaussian_moment_oracle(0.5, 0.5, gap, gamma).unwrap().mmd2;
        assert!((back - 0.15).abs() < 1e-10);
        assert!(matches!(
            constant_mmd_gaussian_sweep(0.5, 1.9, gamma),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn constant_mmd_sweep_nammd_decreases_with_variance() {
        let gamma = std::f64::consts::FRAC_1_SQRT_2;
        let mut last = f64::INFINITY;
        for i in 0..20 {
            let s2 = 0.1 + i as f64 * 0.1;
            let gap = constant_mmd_gaussian_sweep(s2, 0.15, gamma).unwrap();
            let o = gaussian_moment_oracle(s2, s2, gap, gamma).unwrap();
            let nammd = o.mmd2 / (4.0 - o.norm_p - o.norm_q);
            assert!(nammd < last, "not strictly decreasing at s2 = {s2}");
            last = nammd;
        }
    }

    #[test]
    fn learn_hits_target_when_initialized_there() {
        // If the initialization already satisfies the tolerance the learner
        // must return it unchanged after the first check.
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let z = Sample::from_rows(vec![vec![0.0], vec![0.1], vec![0.2], vec![0.3]]).unwrap();
        let zp = Sample::from_rows(vec![vec![5.0], vec![5.1], vec![5.2], vec![5.3]]).unwrap();
        let eps = nammd_of_point_sets(&spec, &z, &zp);
        let cfg = OptimizerConfig {
            iterations: 100,
            step_size: 1e-3,
            ..OptimizerConfig::default()
        };
        let out = learn_target_nammd(&z, &zp, &spec, eps, &cfg).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 0);
        assert_eq!(out.x.as_flat(), z.as_flat());
    }

    #[test]
    fn learn_gradient_matches_central_difference() {
        let spec = KernelSpec::gaussian(0.8).unwrap();
        let z = Sample::from_rows(vec![vec![0.0, 0.3], vec![0.4, -0.2], vec![-0.6, 0.9]]).unwrap();
        let zp = Sample::from_rows(vec![vec![1.0, 0.1], vec![0.2, 0.8], vec![-0.3, -0.5]]).unwrap();
        let (va, gz_a, gzp_a) = nammd_grad_gaussian(&spec, &z, &zp);
        let (vc, gz_c, gzp_c) = nammd_grad_central(&spec, &z, &zp, 1e-6);
        assert!((va - vc).abs() < 1e-12);
        for (a, c) in gz_a.iter().chain(&gzp_a).zip(gz_c.iter().chain(&gzp_c)) {
            assert!((a - c).abs() < 1e-6, "analytic {a} vs central {c}");
        }
    }

    #[test]
    fn learn_converges_to_target() {
        use rand::Rng;
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mk = |rng: &mut rand_chacha::ChaCha8Rng, shift: f64| {
            Sample::from_rows(
                (0..20)
                    .map(|_| vec![rng.random_range(-1.0..1.0) + shift, rng.random_range(-1.0..1.0)])
                    .collect(),
            )
            .unwrap()
        };
        let z = mk(&mut rng, 0.0);
        let zp = mk(&mut rng, 0.7);
        let cfg = OptimizerConfig {
            iterations: 5000,
            step_size: 2e-3,
            ..OptimizerConfig::default()
        };
        let out = learn_target_nammd(&z, &zp, &spec, 0.3, &cfg).unwrap();
        assert!(out.converged, "gap {} after {} iters", out.achieved - 0.3, out.iterations);
        assert!((out.achieved - 0.3).abs() <= TARGET_TOLERANCE);
        // The exact evaluator on the uniform empirical pair agrees.
        let pair = out.discrete_pair().unwrap();
        let gram = pair.support_gram(&spec).unwrap();
        let exact = exact_discrete_nammd(&pair, &gram, 1.0).unwrap();
        assert!((exact - out.achieved).abs() < 1e-10);
        assert!(out.x.as_flat().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn generators_are_seeded_and_reproducible() {
        let cfg = BlobConfig::default();
        let mut r1 = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut r2 = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let (x1, y1) = blob_pair(&cfg, 16, PairMode::Alt, &mut r1).unwrap();
        let (x2, y2) = blob_pair(&cfg, 16, PairMode::Alt, &mut r2).unwrap();
        assert_eq!(x1, x2);
        assert_eq!(y1, y2);

        let hcfg = HdgmConfig::default();
        let mut r1 = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let mut r2 = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let (x1, _) = hdgm_pair(&hcfg, 8, PairMode::Null, &mut r1).unwrap();
        let (x2, _) = hdgm_pair(&hcfg, 8, PairMode::Null, &mut r2).unwrap();
        assert_eq!(x1, x2);
        assert_eq!(x1.dim(), 10);
    }

    #[test]
    fn reference_test_pairs_satisfy_all_orderings() {
        for eps in [0.1, 0.3, 0.5, 0.7] {
            let pairs = reference_test_pairs(eps, 0.01, 1.0).unwrap();
            assert!((pairs.eps_nammd - eps).abs() < 1e-9, "reference off at {eps}");
            assert!(
                (pairs.test_nammd - (eps + 0.01)).abs() < 1e-9,
                "test off at {eps}"
            );
            assert!(pairs.test_mmd2 > pairs.eps_mmd2);

            let gram_ref = pairs.reference.support_gram(&pairs.spec).unwrap();
            let gram_test = pairs.test.support_gram(&pairs.spec).unwrap();
            let (pp1, qq1, _) = exact_discrete_embeddings(&pairs.reference, &gram_ref).unwrap();
            let (pp2, qq2, _) = exact_discrete_embeddings(&pairs.test, &gram_test).unwrap();
            assert!(pp2 + qq2 > pp1 + qq1, "norm condition violated at {eps}");
        }
    }
}
