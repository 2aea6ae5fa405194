use nammd::dct::nammd_dct;
use nammd::estimators::{exact_discrete_nammd, sample_discrete};
use nammd::harness::rep_rng;
use nammd::kernels::{KernelSpec, Sample};
use nammd::selection::OptimizerConfig;
use nammd::synthesis::learn_target_nammd;
use rand::Rng;
use rayon::prelude::*;
use rand_distr::Distribution;

fn cloud(rng: &mut rand_chacha::ChaCha8Rng, n: usize, spread: f64, shift: f64) -> Sample {
    let rows = (0..n).map(|_| (0..2).map(|_| { let v: f64 = rand_distr::StandardNormal.sample(rng); v*spread + shift }).collect()).collect();
    Sample::from_rows(rows).unwrap()
}
fn ring(rng: &mut rand_chacha::ChaCha8Rng, n: usize, radius: f64, jitter: f64, shift: f64) -> Sample {
    let rows = (0..n).map(|i| {
        let th = 2.0*std::f64::consts::PI*(i as f64)/(n as f64);
        let j1: f64 = rand_distr::StandardNormal.sample(rng);
        let j2: f64 = rand_distr::StandardNormal.sample(rng);
        vec![radius*th.cos() + jitter*j1 + shift, radius*th.sin() + jitter*j2]
    }).collect();
    Sample::from_rows(rows).unwrap()
}
fn square(rng: &mut rand_chacha::ChaCha8Rng, n: usize, half: f64, shift: f64) -> Sample {
    let rows = (0..n).map(|_| vec![rng.random_range(-half..half) + shift, rng.random_range(-half..half)]).collect();
    Sample::from_rows(rows).unwrap()
}

fn main() {
    let eps = 0.8f64;
    let n = 100usize;
    for geom in ["cloud", "ring", "square"] {
        let mut rates = Vec::new();
        for seed in [404u64, 405, 406, 407] {
            let spec = KernelSpec::gaussian(1.0).unwrap();
            let mut rng = rep_rng(seed, 0);
            let (z, zp) = match geom {
                "cloud" => (cloud(&mut rng, n, 0.4, 0.0), cloud(&mut rng, n, 0.4, 3.4)),
                "ring" => (ring(&mut rng, n, 0.5, 0.1, 0.0), ring(&mut rng, n, 0.5, 0.1, 3.4)),
                _ => (square(&mut rng, n, 0.6, 0.0), square(&mut rng, n, 0.6, 3.4)),
            };
            let cfg = OptimizerConfig { iterations: 5000, step_size: 2e-3, ..OptimizerConfig::default() };
            let learned = match learn_target_nammd(&z, &zp, &spec, eps, &cfg) { Ok(l) => l, Err(_) => continue };
            if !learned.converged { println!("{geom} seed {seed}: no conv ({:.3})", learned.achieved); continue; }
            let pair = learned.discrete_pair().unwrap();
            let gram = pair.support_gram(&spec).unwrap();
            let exact = exact_discrete_nammd(&pair, &gram, 1.0).unwrap();
            let rej: Vec<bool> = (0..4000).into_par_iter().map(|rep| {
                let mut rng = rep_rng(999 + seed, rep);
                let x = sample_discrete(&pair, false, 200, &mut rng).unwrap();
                let y = sample_discrete(&pair, true, 200, &mut rng).unwrap();
                nammd_dct(&x, &y, &spec, exact, 0.05).unwrap().reject
            }).collect();
            rates.push(rej.iter().filter(|&&r| r).count() as f64 / 4000.0);
        }
        println!("eps {eps} {geom}: rates {rates:?}");
    }
}
