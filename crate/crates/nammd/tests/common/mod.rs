//! Independent oracles shared by the integration suites. Everything here
//! is written from the term-by-term definitions with explicit index
//! loops, deliberately avoiding the reductions used by the library.

#![allow(dead_code)]

use nammd::kernels::{GramBlock, Matrix, Sample};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Brute-force squared-MMD U-statistic over ordered index pairs.
pub fn naive_mmd2(g: &GramBlock) -> f64 {
    let m = g.m();
    let mut acc = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            acc += g.kxx().get(i, j) + g.kyy().get(i, j)
                - g.kxy().get(i, j)
                - g.kxy().get(j, i);
        }
    }
    acc / (m as f64 * (m as f64 - 1.0))
}

/// Brute-force norm U-statistic.
pub fn naive_norm(g: &GramBlock) -> f64 {
    let m = g.m();
    let k = g.upper_bound();
    let mut acc = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                acc += 4.0 * k - g.kxx().get(i, j) - g.kyy().get(i, j);
            }
        }
    }
    acc / (m as f64 * (m as f64 - 1.0))
}

/// Loop-oracle evaluation of the two variance components, assembled from
/// the individual moment estimators with explicit index loops.
pub fn loop_zeta(g: &GramBlock) -> (f64, f64) {
    let m = g.m();
    let mf = m as f64;
    let m3 = mf * (mf - 1.0) * (mf - 2.0);
    let m4 = m3 * (mf - 3.0);
    let kxx = g.kxx();
    let kyy = g.kyy();
    let kxy = g.kxy();

    // <mu_X, C_X mu_X>: ordered triples (i, j, l), j != l, both != i.
    let cx_mu_x = |within: &Matrix| -> f64 {
        let mut acc = 0.0;
        for i in 0..m {
            for j in 0..m {
                if j == i {
                    continue;
                }
                for l in 0..m {
                    if l == i || l == j {
                        continue;
                    }
                    acc += within.get(i, j) * within.get(i, l);
                }
            }
        }
        acc / m3
    };

    // <mu_X, mu_X>^2: ordered quadruples with all four indices distinct.
    let mu_sq = |within: &Matrix| -> f64 {
        let mut acc = 0.0;
        for i in 0..m {
            for j in 0..m {
                if j == i {
                    continue;
                }
                for a in 0..m {
                    if a == i || a == j {
                        continue;
                    }
                    for b in 0..m {
                        if b == i || b == j || b == a {
                            continue;
                        }
                        acc += within.get(i, j) * within.get(a, b);
                    }
                }
            }
        }
        acc / m4
    };

    // <mu_Y, C_X mu_Y>: sum over i, j, l != j of K(i,j) K(i,l).
    let mut cy_shared_x = 0.0;
    for i in 0..m {
        for j in 0..m {
            for l in 0..m {
                if l != j {
                    cy_shared_x += kxy.get(i, j) * kxy.get(i, l);
                }
            }
        }
    }
    cy_shared_x /= mf * mf * (mf - 1.0);

    // <mu_X, C_Y mu_X>: shared column index.
    let mut cx_shared_y = 0.0;
    for j in 0..m {
        for i in 0..m {
            for l in 0..m {
                if l != i {
                    cx_shared_y += kxy.get(i, j) * kxy.get(l, j);
                }
            }
        }
    }
    cx_shared_y /= mf * mf * (mf - 1.0);

    // <mu_X, mu_Y>^2: cross pairs sharing neither row nor column.
    let mut cross_sq = 0.0;
    for i in 0..m {
        for j in 0..m {
            for ip in 0..m {
                if ip == i {
                    continue;
                }
                for jp in 0..m {
                    if jp == j {
                        continue;
                    }
                    cross_sq += kxy.get(i, j) * kxy.get(ip, jp);
                }
            }
        }
    }
    cross_sq /= mf * mf * (mf - 1.0) * (mf - 1.0);

    // <mu_X, C_X mu_Y>: within pair (i, j) and cross entry anchored at i.
    let mixed = |within: &Matrix, cross_at: &dyn Fn(usize, usize) -> f64| -> f64 {
        let mut acc = 0.0;
        for i in 0..m {
            for j in 0..m {
                if j == i {
                    continue;
                }
                for l in 0..m {
                    acc += within.get(i, j) * cross_at(i, l);
                }
            }
        }
        acc / (mf * mf * (mf - 1.0))
    };
    let cx_mu_y = mixed(kxx, &|i, l| kxy.get(i, l));
    let cy_mu_x = mixed(kyy, &|j, l| kxy.get(l, j));

    // <mu,mu><mu_X,mu_Y>: within pair (i, j), cross pair at l outside it.
    let product = |within: &Matrix, cross_row: bool| -> f64 {
        let mut acc = 0.0;
        for i in 0..m {
            for j in 0..m {
                if j == i {
                    continue;
                }
                for l in 0..m {
                    if l == i || l == j {
                        continue;
                    }
                    for a in 0..m {
                        let c = if cross_row { kxy.get(l, a) } else { kxy.get(a, l) };
                        acc += within.get(i, j) * c;
                    }
                }
            }
        }
        acc / (mf * m3)
    };
    let xx_xy = product(kxx, true);
    let yy_xy = product(kyy, false);

    // Second moments.
    let sq_within = |within: &Matrix| -> f64 {
        let mut acc = 0.0;
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    acc += within.get(i, j) * within.get(i, j);
                }
            }
        }
        acc / (mf * (mf - 1.0))
    };
    let mut sq_cross = 0.0;
    for i in 0..m {
        for j in 0..m {
            sq_cross += kxy.get(i, j) * kxy.get(i, j);
        }
    }
    sq_cross /= mf * mf;

    let zeta1 = cx_mu_x(kxx) - mu_sq(kxx) + cx_mu_x(kyy) - mu_sq(kyy) + cy_shared_x + cx_shared_y
        - 2.0 * cross_sq
        - 2.0 * cx_mu_y
        + 2.0 * xx_xy
        - 2.0 * cy_mu_x
        + 2.0 * yy_xy;

    let zeta2 = sq_within(kxx) - mu_sq(kxx) + sq_within(kyy) - mu_sq(kyy) + 2.0 * sq_cross
        - 2.0 * cross_sq
        - 4.0 * cx_mu_y
        + 4.0 * xx_xy
        - 4.0 * cy_mu_x
        + 4.0 * yy_xy;

    (zeta1, zeta2)
}

/// Arbitrary valid Gram block: symmetric entries in [0, 1], unit
/// diagonals. Not necessarily positive definite, which is the point --
/// the estimator identities must hold for any block satisfying the
/// structural invariants.
pub fn random_gram_block(m: usize, rng: &mut ChaCha8Rng) -> GramBlock {
    let within = |rng: &mut ChaCha8Rng| {
        let mut mat = Matrix::zeros(m, m);
        for i in 0..m {
            mat.set(i, i, 1.0);
            for j in (i + 1)..m {
                let v = rng.random_range(0.0..1.0);
                mat.set(i, j, v);
                mat.set(j, i, v);
            }
        }
        mat
    };
    let kxx = within(rng);
    let kyy = within(rng);
    let mut kxy = Matrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            kxy.set(i, j, rng.random_range(0.0..1.0));
        }
    }
    GramBlock::from_matrices(kxx, kyy, kxy, 1.0).expect("construction satisfies the invariants")
}

/// Simpson-rule quadrature of `E[exp(-a z^2)]` for `z ~ N(gap, s2)`,
/// the independent check of the closed-form Gaussian moments.
pub fn quadrature_gauss_moment(s2: f64, gap: f64, a: f64) -> f64 {
    let sd = s2.sqrt();
    let lo = gap - 14.0 * sd;
    let hi = gap + 14.0 * sd;
    let n = 40_000usize; // even
    let h = (hi - lo) / n as f64;
    let density =
        |z: f64| (-(z - gap) * (z - gap) / (2.0 * s2)).exp() / (2.0 * std::f64::consts::PI * s2).sqrt();
    let f = |z: f64| (-a * z * z).exp() * density(z);
    let mut acc = f(lo) + f(hi);
    for i in 1..n {
        let z = lo + i as f64 * h;
        acc += f(z) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

/// Seeded sample of i.i.d. 1-D Gaussians.
pub fn gaussian_sample(m: usize, mean: f64, sd: f64, rng: &mut ChaCha8Rng) -> Sample {
    use rand_distr::{Distribution, StandardNormal};
    let data: Vec<f64> = (0..m)
        .map(|_| {
            let v: f64 = StandardNormal.sample(rng);
            mean + sd * v
        })
        .collect();
    Sample::from_flat(data, m, 1).expect("generated data is finite")
}

/// Kolmogorov-Smirnov distance of a sample of p-values to Uniform(0,1).
pub fn ks_distance_to_uniform(p_values: &mut [f64]) -> f64 {
    p_values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = p_values.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &p) in p_values.iter().enumerate() {
        let upper = (i as f64 + 1.0) / n - p;
        let lower = p - i as f64 / n;
        d = d.max(upper).max(lower);
    }
    d
}
