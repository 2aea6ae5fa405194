//! Experiment harness: declarative configuration, seeded parallel Monte
//! Carlo runners for every experiment kind, and machine-readable result
//! emission.
//!
//! Every run is fully determined by `(config, master_seed)`: repetition
//! seeds are derived by hashing the master seed with the repetition
//! index, repetitions execute in parallel, and results are collected in
//! repetition order, so output files are identical across thread counts.

use crate::dct::{canonne_dct, mmd_dct, nammd_dct};
use crate::error::{Error, Result};
use crate::estimators::{
    embedding_estimates_streaming, exact_discrete_nammd, gaussian_moment_oracle, sample_discrete,
    DiscretePair,
};
use crate::kernels::{median_heuristic, KernelFamily, KernelSpec, Sample};
use crate::selection::OptimizerConfig;
use crate::synthesis::{
    blob_pair, boundary_pair, hdgm_pair, learn_target_nammd, reference_test_pairs, uniform_with_tv,
    BlobConfig, HdgmConfig, PairMode,
};
use crate::tst::{permutation_test, KernelBank, PermutationPlan, TestKernel, TstStatistic};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

// ---------------------------------------------------------------------------
// Seeding
// ---------------------------------------------------------------------------

/// Stable 64-bit mix (splitmix64 finalizer) of the master seed and an
/// index; repetition RNGs derived this way are independent of the
/// parallel schedule.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E3779B97F4A7C15)
        .wrapping_add(index.wrapping_mul(0xBF58476D1CE4E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// RNG for one repetition of an experiment.
pub fn rep_rng(master: u64, rep: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(derive_seed(master, rep))
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    PowerDct,
    PowerTst,
    Type1Dct,
    Type1Tst,
    ClosenessSweep,
    Figure1Sweep,
    OracleCheck,
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            ExperimentKind::PowerDct => "power_dct",
            ExperimentKind::PowerTst => "power_tst",
            ExperimentKind::Type1Dct => "type1_dct",
            ExperimentKind::Type1Tst => "type1_tst",
            ExperimentKind::ClosenessSweep => "closeness_sweep",
            ExperimentKind::Figure1Sweep => "figure1_sweep",
            ExperimentKind::OracleCheck => "oracle_check",
        };
        write!(f, "{name}")
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "power_dct" => Ok(ExperimentKind::PowerDct),
            "power_tst" => Ok(ExperimentKind::PowerTst),
            "type1_dct" => Ok(ExperimentKind::Type1Dct),
            "type1_tst" => Ok(ExperimentKind::Type1Tst),
            "closeness_sweep" => Ok(ExperimentKind::ClosenessSweep),
            "figure1_sweep" => Ok(ExperimentKind::Figure1Sweep),
            "oracle_check" => Ok(ExperimentKind::OracleCheck),
            other => Err(Error::config(format!(
                "unknown experiment '{other}' (expected one of power_dct, power_tst, type1_dct, \
                 type1_tst, closeness_sweep, figure1_sweep, oracle_check)"
            ))),
        }
    }
}

/// Bandwidth choice: the median heuristic or a fixed value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bandwidth {
    Named(BandwidthName),
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthName {
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub family: KernelFamily,
    pub bandwidth: Bandwidth,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            family: KernelFamily::Gaussian,
            bandwidth: Bandwidth::Named(BandwidthName::Median),
        }
    }
}

impl KernelConfig {
    /// Resolves the kernel against a sample pair (for the median
    /// heuristic).
    pub fn resolve(&self, x: &Sample, y: &Sample) -> Result<KernelSpec> {
        let gamma = match self.bandwidth {
            Bandwidth::Value(v) => v,
            Bandwidth::Named(BandwidthName::Median) => median_heuristic(x, y)?,
        };
        match self.family {
            KernelFamily::Gaussian => KernelSpec::gaussian(gamma),
            KernelFamily::Laplace => KernelSpec::laplace(gamma),
            KernelFamily::Mahalanobis => KernelSpec::mahalanobis_diag(gamma, &vec![1.0; x.dim()]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Blob,
    Hdgm,
    /// Closed-form two-atom constructions (closeness tests).
    TwoPoint,
    /// Point sets learned to the target distance.
    Learned,
    /// Samples subsampled from CSV files.
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    pub blob: BlobConfig,
    pub hdgm: HdgmConfig,
    /// Support size for discrete constructions.
    pub support_size: usize,
    pub support_dim: usize,
    /// TV offset of the alternative pair in the closeness sweep.
    pub tv_gap: f64,
    /// Distance offset of the test pair above the reference.
    pub delta: f64,
    /// Settings for learned point sets.
    pub learn_points: usize,
    pub learn_dim: usize,
    pub learn_iterations: usize,
    pub learn_step_size: f64,
    /// CSV dataset paths (kind = "csv").
    pub x_path: Option<String>,
    pub y_path: Option<String>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            kind: DatasetKind::Blob,
            blob: BlobConfig::default(),
            hdgm: HdgmConfig::default(),
            support_size: 50,
            support_dim: 2,
            tv_gap: 0.2,
            delta: 0.01,
            learn_points: 50,
            learn_dim: 2,
            learn_iterations: 5000,
            learn_step_size: 2e-3,
            x_path: None,
            y_path: None,
        }
    }
}

fn default_repetitions() -> usize {
    500
}
fn default_sample_size() -> usize {
    100
}
fn default_alpha() -> f64 {
    0.05
}
fn default_b() -> usize {
    200
}
fn default_outer() -> usize {
    1
}
fn default_variance_grid() -> Vec<f64> {
    (1..=20).map(|i| 0.1 * i as f64).collect()
}
fn default_target_mmd2() -> f64 {
    0.15
}

/// One experiment, fully determined together with `master_seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_sample_size")]
    pub sample_size: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Closeness-level grid (distance targets, or TV levels for the
    /// closeness sweep).
    #[serde(default)]
    pub epsilon: Vec<f64>,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub master_seed: u64,
    /// Permutation / resampling iteration count.
    #[serde(default = "default_b")]
    pub b: usize,
    /// Outer repeats for the reported standard deviation.
    #[serde(default = "default_outer")]
    pub outer_repeats: usize,
    /// Sample-size grid for power-versus-m experiments.
    #[serde(default)]
    pub sample_grid: Vec<usize>,
    /// Variance grid for the constant-MMD sweep.
    #[serde(default = "default_variance_grid")]
    pub variance_grid: Vec<f64>,
    #[serde(default = "default_target_mmd2")]
    pub target_mmd2: f64,
    /// Optional output path (the CLI flag overrides it).
    #[serde(default)]
    pub out: Option<String>,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        ExperimentConfig {
            experiment,
            repetitions: default_repetitions(),
            sample_size: default_sample_size(),
            alpha: default_alpha(),
            epsilon: Vec::new(),
            kernel: KernelConfig::default(),
            dataset: DatasetConfig::default(),
            master_seed: 0,
            b: default_b(),
            outer_repeats: default_outer(),
            sample_grid: Vec::new(),
            variance_grid: default_variance_grid(),
            target_mmd2: default_target_mmd2(),
            out: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions < 1 {
            return Err(Error::config("repetitions must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config("alpha must lie in (0,1)"));
        }
        if self.sample_size < 4 {
            return Err(Error::config("sample size must be at least 4"));
        }
        if self.outer_repeats < 1 || self.outer_repeats > self.repetitions {
            return Err(Error::config(
                "outer repeats must lie between 1 and the repetition count",
            ));
        }
        Ok(())
    }

    fn epsilon_grid(&self) -> Vec<f64> {
        if self.epsilon.is_empty() {
            vec![0.1, 0.3, 0.5, 0.7]
        } else {
            self.epsilon.clone()
        }
    }

    fn m_grid(&self) -> Vec<usize> {
        if self.sample_grid.is_empty() {
            vec![self.sample_size]
        } else {
            self.sample_grid.clone()
        }
    }
}

// ---------------------------------------------------------------------------
// Result rows
// ---------------------------------------------------------------------------

/// One emitted result cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub experiment: String,
    pub dataset: String,
    pub method: String,
    pub epsilon: Option<f64>,
    pub m: Option<usize>,
    pub quantity: String,
    pub value: Option<f64>,
    pub std_dev: Option<f64>,
    pub p_value_mean: Option<f64>,
    pub repetitions: Option<usize>,
    pub seed: u64,
    pub error: Option<String>,
}

impl ResultRow {
    fn new(experiment: ExperimentKind, dataset: &str, method: &str, quantity: &str) -> Self {
        ResultRow {
            experiment: experiment.to_string(),
            dataset: dataset.to_string(),
            method: method.to_string(),
            epsilon: None,
            m: None,
            quantity: quantity.to_string(),
            value: None,
            std_dev: None,
            p_value_mean: None,
            repetitions: None,
            seed: 0,
            error: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

const CSV_HEADER: &str =
    "experiment,dataset,method,epsilon,m,quantity,value,std_dev,p_value_mean,repetitions,seed,error";

fn csv_field_f64(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_escape(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Serializes rows with a stable column order; identical rows produce
/// byte-identical output.
pub fn render_results(rows: &[ResultRow], format: OutputFormat) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::invalid("no result rows to emit"));
    }
    match format {
        OutputFormat::Csv => {
            let mut out = String::from(CSV_HEADER);
            out.push('\n');
            for r in rows {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                    csv_escape(&r.experiment),
                    csv_escape(&r.dataset),
                    csv_escape(&r.method),
                    csv_field_f64(r.epsilon),
                    r.m.map(|v| v.to_string()).unwrap_or_default(),
                    csv_escape(&r.quantity),
                    csv_field_f64(r.value),
                    csv_field_f64(r.std_dev),
                    csv_field_f64(r.p_value_mean),
                    r.repetitions.map(|v| v.to_string()).unwrap_or_default(),
                    r.seed,
                    csv_escape(r.error.as_deref().unwrap_or("")),
                ));
            }
            Ok(out)
        }
        OutputFormat::Json => {
            let mut out = serde_json::to_string_pretty(rows)
                .map_err(|e| Error::config(format!("serialization failed: {e}")))?;
            out.push('\n');
            Ok(out)
        }
    }
}

/// Writes rows atomically (temp file + rename in the target directory).
pub fn emit_results(rows: &[ResultRow], format: OutputFormat, path: &Path) -> Result<()> {
    let rendered = render_results(rows, format)?;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let tmp = match dir {
        Some(d) => d.join(format!(
            ".{}.tmp",
            path.file_name().and_then(|n| n.to_str()).unwrap_or("results")
        )),
        None => std::path::PathBuf::from(format!(
            ".{}.tmp",
            path.file_name().and_then(|n| n.to_str()).unwrap_or("results")
        )),
    };
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(rendered.as_bytes())?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// CSV dataset loading / export
// ---------------------------------------------------------------------------

/// Loads a rectangular numeric CSV (optional single header line) as a
/// sample.
pub fn load_csv(path: &Path) -> Result<Sample> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> =
            fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(values) => {
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Parse {
                        line: line_no,
                        message: "non-finite value".into(),
                    });
                }
                match width {
                    None => width = Some(values.len()),
                    Some(w) if w != values.len() => {
                        return Err(Error::Parse {
                            line: line_no,
                            message: format!("expected {w} columns, found {}", values.len()),
                        })
                    }
                    _ => {}
                }
                rows.push(values);
            }
            Err(e) => {
                // A non-numeric first line is treated as a header.
                if idx == 0 && rows.is_empty() {
                    continue;
                }
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("non-numeric field: {e}"),
                });
            }
        }
    }
    Sample::from_rows(rows)
}

/// Exports a sample pair as CSV: one point per row, final column is the
/// sample label (0 for the first sample, 1 for the second).
pub fn export_labeled_csv(x: &Sample, y: &Sample, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (sample, label) in [(x, 0), (y, 1)] {
        for row in sample.rows() {
            for v in row {
                out.push_str(&v.to_string());
                out.push(',');
            }
            out.push_str(&label.to_string());
            out.push('\n');
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Monte Carlo plumbing
// ---------------------------------------------------------------------------

/// Deterministic parallel map over repetitions; results come back in
/// repetition order.
fn monte_carlo<T: Send>(
    reps: usize,
    master: u64,
    f: impl Fn(usize, &mut ChaCha8Rng) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rep_rng(master, rep as u64);
            f(rep, &mut rng)
        })
        .collect()
}

/// Mean rejection rate plus a spread: across outer repeats when more
/// than one is configured, otherwise the binomial standard error.
fn rate_and_spread(rejections: &[bool], outer: usize) -> (f64, f64) {
    let n = rejections.len();
    let rate = rejections.iter().filter(|&&r| r).count() as f64 / n as f64;
    if outer > 1 && n >= outer {
        let group = n / outer;
        let means: Vec<f64> = (0..outer)
            .map(|g| {
                let slice = &rejections[g * group..(g + 1) * group];
                slice.iter().filter(|&&r| r).count() as f64 / group as f64
            })
            .collect();
        let mean = means.iter().sum::<f64>() / outer as f64;
        let var = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (outer as f64 - 1.0);
        (mean, var.sqrt())
    } else {
        (rate, (rate * (1.0 - rate) / n as f64).sqrt())
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

// ---------------------------------------------------------------------------
// Dataset plumbing
// ---------------------------------------------------------------------------

fn draw_tst_pair(
    cfg: &ExperimentConfig,
    mode: PairMode,
    m: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Sample, Sample)> {
    match cfg.dataset.kind {
        DatasetKind::Blob => blob_pair(&cfg.dataset.blob, m, mode, rng),
        DatasetKind::Hdgm => hdgm_pair(&cfg.dataset.hdgm, m, mode, rng),
        DatasetKind::Csv => {
            let x_path = cfg.dataset.x_path.as_deref().ok_or_else(|| {
                Error::config("csv dataset needs x_path")
            })?;
            let y_path = cfg
                .dataset
                .y_path
                .as_deref()
                .ok_or_else(|| Error::config("csv dataset needs y_path"))?;
            let x_all = load_csv(Path::new(x_path))?;
            let y_all = load_csv(Path::new(y_path))?;
            let pick = |s: &Sample, rng: &mut ChaCha8Rng| -> Result<Sample> {
                if s.len() < m {
                    return Err(Error::invalid(format!(
                        "csv dataset has {} rows, need {m}",
                        s.len()
                    )));
                }
                let idx: Vec<usize> = rand::seq::index::sample(rng, s.len(), m).into_vec();
                s.select(&idx)
            };
            let (x, y) = match mode {
                PairMode::Alt => (pick(&x_all, rng)?, pick(&y_all, rng)?),
                // Null draws both subsamples from the pooled data.
                PairMode::Null => {
                    let pooled = x_all.pooled(&y_all)?;
                    (pick(&pooled, rng)?, pick(&pooled, rng)?)
                }
            };
            Ok((x, y))
        }
        other => Err(Error::config(format!(
            "dataset {other:?} is not a two-sample generator"
        ))),
    }
}

fn dataset_label(cfg: &ExperimentConfig) -> String {
    format!("{:?}", cfg.dataset.kind).to_lowercase()
}

/// Discrete pair with exact distance `epsilon` for boundary experiments.
fn boundary_construction(
    cfg: &ExperimentConfig,
    epsilon: f64,
    seed: u64,
) -> Result<(DiscretePair, KernelSpec, f64)> {
    match cfg.dataset.kind {
        DatasetKind::Learned => {
            let mut rng = rep_rng(seed, 0xA16);
            let d = cfg.dataset.learn_dim;
            let n = cfg.dataset.learn_points;
            let mk = |rng: &mut ChaCha8Rng, shift: f64| -> Result<Sample> {
                let rows = (0..n)
                    .map(|_| {
                        (0..d)
                            .map(|_| {
                                let v: f64 = StandardNormal.sample(rng);
                                v + shift
                            })
                            .collect()
                    })
                    .collect();
                Sample::from_rows(rows)
            };
            let z = mk(&mut rng, 0.0)?;
            let zp = mk(&mut rng, 1.0)?;
            let spec = KernelSpec::gaussian(1.0)?;
            let opt = OptimizerConfig {
                iterations: cfg.dataset.learn_iterations,
                step_size: cfg.dataset.learn_step_size,
                ..OptimizerConfig::default()
            };
            let learned = learn_target_nammd(&z, &zp, &spec, epsilon, &opt)?;
            if !learned.converged {
                return Err(Error::Infeasible(format!(
                    "target {epsilon} not reached (achieved {})",
                    learned.achieved
                )));
            }
            let pair = learned.discrete_pair()?;
            let gram = pair.support_gram(&spec)?;
            let exact = exact_discrete_nammd(&pair, &gram, spec.upper_bound())?;
            Ok((pair, spec, exact))
        }
        _ => {
            let (pair, spec) = boundary_pair(epsilon, 1.0)?;
            let gram = pair.support_gram(&spec)?;
            let exact = exact_discrete_nammd(&pair, &gram, spec.upper_bound())?;
            Ok((pair, spec, exact))
        }
    }
}

// ---------------------------------------------------------------------------
// Experiment kinds
// ---------------------------------------------------------------------------

fn run_type1_tst(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let dataset = dataset_label(cfg);
    let mut rows = Vec::new();
    for m in cfg.m_grid() {
        let outcomes = monte_carlo(cfg.repetitions, cfg.master_seed, |rep, rng| {
            let (x, y) = draw_tst_pair(cfg, PairMode::Null, m, rng)?;
            let spec = cfg.kernel.resolve(&x, &y)?;
            let plan = PermutationPlan::new(cfg.b, derive_seed(cfg.master_seed, rep as u64 ^ 0x7E57))?;
            permutation_test(&x, &y, &TestKernel::Single(spec), TstStatistic::Nammd, cfg.alpha, &plan)
        })?;
        let rejections: Vec<bool> = outcomes.iter().map(|o| o.reject).collect();
        let (rate, spread) = rate_and_spread(&rejections, cfg.outer_repeats);
        let p_mean = mean(&outcomes.iter().filter_map(|o| o.p_value).collect::<Vec<_>>());
        let mut row = ResultRow::new(cfg.experiment, &dataset, "nammd_tst", "rejection_rate");
        row.m = Some(m);
        row.epsilon = Some(0.0);
        row.value = Some(rate);
        row.std_dev = Some(spread);
        row.p_value_mean = Some(p_mean);
        row.repetitions = Some(cfg.repetitions);
        row.seed = cfg.master_seed;
        rows.push(row);
    }
    Ok(rows)
}

fn run_power_tst(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let dataset = dataset_label(cfg);
    let mut rows = Vec::new();
    for m in cfg.m_grid() {
        let outcomes = monte_carlo(cfg.repetitions, cfg.master_seed, |rep, rng| {
            let (x, y) = draw_tst_pair(cfg, PairMode::Alt, m, rng)?;
            let spec = cfg.kernel.resolve(&x, &y)?;
            let seed = derive_seed(cfg.master_seed, 0x7E57 ^ rep as u64);
            let plan = PermutationPlan::new(cfg.b, seed)?;
            let nammd = permutation_test(
                &x,
                &y,
                &TestKernel::Single(spec.clone()),
                TstStatistic::Nammd,
                cfg.alpha,
                &plan,
            )?;
            let mmd = permutation_test(
                &x,
                &y,
                &TestKernel::Single(spec.clone()),
                TstStatistic::Mmd2,
                cfg.alpha,
                &plan,
            )?;
            let gamma = spec.bandwidth();
            let bank = KernelBank::uniform(
                [0.25, 0.5, 1.0, 2.0, 4.0]
                    .iter()
                    .map(|s| KernelSpec::gaussian(gamma * s))
                    .collect::<Result<Vec<_>>>()?,
                1.0,
            )?;
            let fuse = permutation_test(
                &x,
                &y,
                &TestKernel::Bank(bank),
                TstStatistic::Fuse,
                cfg.alpha,
                &plan,
            )?;
            Ok((nammd, mmd, fuse))
        })?;
        for (method, pick) in [
            ("nammd_tst", 0usize),
            ("mmd2_tst", 1),
            ("fuse_tst", 2),
        ] {
            let rejections: Vec<bool> = outcomes
                .iter()
                .map(|(a, b, c)| match pick {
                    0 => a.reject,
                    1 => b.reject,
                    _ => c.reject,
                })
                .collect();
            let (rate, spread) = rate_and_spread(&rejections, cfg.outer_repeats);
            let mut row = ResultRow::new(cfg.experiment, &dataset, method, "rejection_rate");
            row.m = Some(m);
            row.epsilon = Some(0.0);
            row.value = Some(rate);
            row.std_dev = Some(spread);
            row.repetitions = Some(cfg.repetitions);
            row.seed = cfg.master_seed;
            rows.push(row);
        }
    }
    Ok(rows)
}

fn run_type1_dct(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let dataset = dataset_label(cfg);
    let mut rows = Vec::new();
    for eps in cfg.epsilon_grid() {
        match boundary_construction(cfg, eps, cfg.master_seed) {
            Ok((pair, spec, exact)) => {
                let m = cfg.sample_size;
                let outcomes = monte_carlo(cfg.repetitions, cfg.master_seed, |_, rng| {
                    let x = sample_discrete(&pair, false, m, rng)?;
                    let y = sample_discrete(&pair, true, m, rng)?;
                    nammd_dct(&x, &y, &spec, exact, cfg.alpha)
                })?;
                let rejections: Vec<bool> = outcomes.iter().map(|o| o.reject).collect();
                let (rate, spread) = rate_and_spread(&rejections, cfg.outer_repeats);
                let mut row = ResultRow::new(cfg.experiment, &dataset, "nammd_dct", "rejection_rate");
                row.epsilon = Some(eps);
                row.m = Some(m);
                row.value = Some(rate);
                row.std_dev = Some(spread);
                row.p_value_mean = Some(mean(
                    &outcomes.iter().filter_map(|o| o.p_value).collect::<Vec<_>>(),
                ));
                row.repetitions = Some(cfg.repetitions);
                row.seed = cfg.master_seed;
                rows.push(row);
            }
            Err(e) => {
                let mut row = ResultRow::new(cfg.experiment, &dataset, "nammd_dct", "error");
                row.epsilon = Some(eps);
                row.error = Some(e.to_string());
                row.seed = cfg.master_seed;
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

fn run_power_dct(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let dataset = dataset_label(cfg);
    let mut rows = Vec::new();
    for eps in cfg.epsilon_grid() {
        let built = reference_test_pairs(eps, cfg.dataset.delta, 1.0);
        match built {
            Ok(pairs) => {
                let m = cfg.sample_size;
                let outcomes = monte_carlo(cfg.repetitions, cfg.master_seed, |_, rng| {
                    let x = sample_discrete(&pairs.test, false, m, rng)?;
                    let y = sample_discrete(&pairs.test, true, m, rng)?;
                    let n = nammd_dct(&x, &y, &pairs.spec, pairs.eps_nammd, cfg.alpha)?;
                    let mm = mmd_dct(&x, &y, &pairs.spec, pairs.eps_mmd2, cfg.alpha)?;
                    Ok((n.reject, mm.reject))
                })?;
                let nammd_rej: Vec<bool> = outcomes.iter().map(|o| o.0).collect();
                let mmd_rej: Vec<bool> = outcomes.iter().map(|o| o.1).collect();
                let mmd_only =
                    outcomes.iter().filter(|(n, m)| *m && !*n).count() as f64 / outcomes.len() as f64;
                for (method, rej) in [("nammd_dct", &nammd_rej), ("mmd_dct", &mmd_rej)] {
                    let (rate, spread) = rate_and_spread(rej, cfg.outer_repeats);
                    let mut row = ResultRow::new(cfg.experiment, &dataset, method, "rejection_rate");
                    row.epsilon = Some(eps);
                    row.m = Some(m);
                    row.value = Some(rate);
                    row.std_dev = Some(spread);
                    row.repetitions = Some(cfg.repetitions);
                    row.seed = cfg.master_seed;
                    rows.push(row);
                }
                let mut row =
                    ResultRow::new(cfg.experiment, &dataset, "paired", "mmd_only_reject_rate");
                row.epsilon = Some(eps);
                row.m = Some(m);
                row.value = Some(mmd_only);
                row.repetitions = Some(cfg.repetitions);
                row.seed = cfg.master_seed;
                rows.push(row);
            }
            Err(e) => {
                let mut row = ResultRow::new(cfg.experiment, &dataset, "paired", "error");
                row.epsilon = Some(eps);
                row.error = Some(e.to_string());
                row.seed = cfg.master_seed;
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

fn run_closeness_sweep(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let dataset = dataset_label(cfg);
    let mut rows = Vec::new();
    for eps_prime in cfg.epsilon_grid() {
        let mut setup_rng = rep_rng(cfg.master_seed, 0x5E7);
        let n = cfg.dataset.support_size;
        let d = cfg.dataset.support_dim;
        let support: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..d)
                    .map(|_| {
                        let v: f64 = StandardNormal.sample(&mut setup_rng);
                        2.0 * v
                    })
                    .collect()
            })
            .collect();
        let cell = (|| -> Result<(DiscretePair, DiscretePair, KernelSpec, f64)> {
            let null_pair = uniform_with_tv(support.clone(), eps_prime, &mut setup_rng)?;
            let alt_pair =
                uniform_with_tv(support.clone(), eps_prime + cfg.dataset.tv_gap, &mut setup_rng)?;
            let support_sample = Sample::from_rows(support.clone())?;
            let spec = cfg.kernel.resolve(&support_sample, &support_sample)?;
            let gram = null_pair.support_gram(&spec)?;
            let eps_n = exact_discrete_nammd(&null_pair, &gram, spec.upper_bound())?;
            Ok((null_pair, alt_pair, spec, eps_n))
        })();
        match cell {
            Ok((null_pair, alt_pair, spec, eps_n)) => {
                let m = cfg.sample_size;
                let outcomes = monte_carlo(cfg.repetitions, cfg.master_seed, |_, rng| {
                    let canonne = canonne_dct(&null_pair, &alt_pair, m, cfg.alpha, cfg.b, rng)?;
                    let x = sample_discrete(&alt_pair, false, m, rng)?;
                    let y = sample_discrete(&alt_pair, true, m, rng)?;
                    let nammd = nammd_dct(&x, &y, &spec, eps_n, cfg.alpha)?;
                    Ok((canonne.reject, nammd.reject))
                })?;
                for (method, pick) in [("canonne_dct", 0usize), ("nammd_dct", 1)] {
                    let rej: Vec<bool> = outcomes
                        .iter()
                        .map(|o| if pick == 0 { o.0 } else { o.1 })
                        .collect();
                    let (rate, spread) = rate_and_spread(&rej, cfg.outer_repeats);
                    let mut row = ResultRow::new(cfg.experiment, &dataset, method, "rejection_rate");
                    row.epsilon = Some(eps_prime);
                    row.m = Some(m);
                    row.value = Some(rate);
                    row.std_dev = Some(spread);
                    row.repetitions = Some(cfg.repetitions);
                    row.seed = cfg.master_seed;
                    rows.push(row);
                }
            }
            Err(e) => {
                let mut row = ResultRow::new(cfg.experiment, &dataset, "canonne_dct", "error");
                row.epsilon = Some(eps_prime);
                row.error = Some(e.to_string());
                row.seed = cfg.master_seed;
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

fn run_figure1_sweep(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let gamma = std::f64::consts::FRAC_1_SQRT_2;
    let mut rows = Vec::new();
    for &s2 in &cfg.variance_grid {
        match crate::synthesis::constant_mmd_gaussian_sweep(s2, cfg.target_mmd2, gamma) {
            Ok(gap) => {
                let o = gaussian_moment_oracle(s2, s2, gap, gamma)?;
                let nammd = o.mmd2 / (4.0 - o.norm_p - o.norm_q);
                for (quantity, value) in [
                    ("mean_gap", gap),
                    ("norm_sum", o.norm_p + o.norm_q),
                    ("mmd2", o.mmd2),
                    ("nammd", nammd),
                ] {
                    let mut row = ResultRow::new(cfg.experiment, "gaussian_1d", "oracle", quantity);
                    row.epsilon = Some(s2);
                    row.value = Some(value);
                    row.seed = cfg.master_seed;
                    rows.push(row);
                }
            }
            Err(e) => {
                let mut row = ResultRow::new(cfg.experiment, "gaussian_1d", "oracle", "error");
                row.epsilon = Some(s2);
                row.error = Some(e.to_string());
                row.seed = cfg.master_seed;
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

fn run_oracle_check(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let gamma = std::f64::consts::FRAC_1_SQRT_2;
    let m = cfg.sample_size.max(1000);
    let mut rows = Vec::new();
    // (label, var_p, var_q, expected four moments)
    let cases = [
        ("narrow_vs_unit", 0.01, 1.0),
        ("reference_pair", 1.1, 1.6),
        ("test_pair", 0.5, 1.0),
    ];
    for (label, var_p, var_q) in cases {
        let oracle = gaussian_moment_oracle(var_p, var_q, 0.0, gamma)?;
        let mut rng = rep_rng(cfg.master_seed, 0x0AC1E);
        let draw = |rng: &mut ChaCha8Rng, sd: f64| -> Result<Sample> {
            let data: Vec<f64> = (0..m)
                .map(|_| {
                    let v: f64 = StandardNormal.sample(rng);
                    v * sd
                })
                .collect();
            Sample::from_flat(data, m, 1)
        };
        let x = draw(&mut rng, var_p.sqrt())?;
        let y = draw(&mut rng, var_q.sqrt())?;
        let spec = KernelSpec::gaussian(gamma)?;
        let (np, nq, cross, mmd2) = embedding_estimates_streaming(&spec, &x, &y)?;
        for (quantity, est, exact) in [
            ("norm_p", np, oracle.norm_p),
            ("norm_q", nq, oracle.norm_q),
            ("cross", cross, oracle.cross),
            ("mmd2", mmd2, oracle.mmd2),
        ] {
            let mut row = ResultRow::new(cfg.experiment, label, "monte_carlo", quantity);
            row.m = Some(m);
            row.value = Some(est);
            row.std_dev = Some((est - exact).abs());
            row.p_value_mean = Some(exact);
            row.seed = cfg.master_seed;
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Runs one experiment; per-cell failures become error rows, config
/// errors fail the run.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    match cfg.experiment {
        ExperimentKind::Type1Tst => run_type1_tst(cfg),
        ExperimentKind::PowerTst => run_power_tst(cfg),
        ExperimentKind::Type1Dct => run_type1_dct(cfg),
        ExperimentKind::PowerDct => run_power_dct(cfg),
        ExperimentKind::ClosenessSweep => run_closeness_sweep(cfg),
        ExperimentKind::Figure1Sweep => run_figure1_sweep(cfg),
        ExperimentKind::OracleCheck => run_oracle_check(cfg),
    }
}
