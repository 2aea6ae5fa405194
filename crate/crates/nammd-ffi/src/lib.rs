//! C ABI for the testing toolkit: opaque handles for samples and kernels,
//! plain structs for results, and integer status codes. Every function is
//! null-safe; the most recent error message is retrievable per thread.
//!
//! The generated header lives at `include/nammd.h`.

use nammd::dct;
use nammd::estimators;
use nammd::kernels::{median_heuristic, KernelSpec, Matrix, Sample};
use nammd::tst::{self, PermutationPlan, TestKernel, TstStatistic};
use std::cell::RefCell;
use std::ffi::{c_char, CString};

/// Status code returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NammdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DegenerateInput = 3,
    ConfigError = 4,
    RuntimeError = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(message: &str) {
    let sanitized = CString::new(message.replace('\0', " "))
        .unwrap_or_else(|_| CString::new("invalid error message").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = sanitized);
}

fn status_of(err: &nammd::Error) -> NammdStatus {
    use nammd::Error::*;
    match err {
        DimensionMismatch { .. } | SizeMismatch { .. } | InvalidInput(_) | Parse { .. } => {
            NammdStatus::InvalidArgument
        }
        DegenerateInput(_) | Infeasible(_) => NammdStatus::DegenerateInput,
        Config(_) => NammdStatus::ConfigError,
        Io(_) => NammdStatus::RuntimeError,
    }
}

fn fail(err: nammd::Error) -> NammdStatus {
    let status = status_of(&err);
    set_error(&err.to_string());
    status
}

fn null_pointer() -> NammdStatus {
    set_error("null pointer argument");
    NammdStatus::NullPointer
}

/// Message describing the most recent error on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn nammd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Opaque sample handle (m points of dimension d).
pub struct NammdSample(Sample);

/// Opaque kernel handle.
pub struct NammdKernel(KernelSpec);

/// Point estimates for one sample pair.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NammdEstimates {
    pub mmd2: f64,
    pub norm: f64,
    pub nammd: f64,
    pub zeta1: f64,
    pub zeta2: f64,
    pub sigma: f64,
    pub sample_size: usize,
}

/// Outcome of a hypothesis test.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NammdTestOutcome {
    pub statistic: f64,
    pub threshold: f64,
    pub p_value: f64,
    /// 1 when the null hypothesis is rejected, 0 otherwise.
    pub reject: i32,
    pub alpha: f64,
    pub epsilon: f64,
    pub sample_size: usize,
}

/// Statistic selector for the permutation two-sample test.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NammdTstStatistic {
    NormAdaptive = 0,
    SquaredMmd = 1,
}

/// Creates a sample from a row-major buffer of `m x d` coordinates.
///
/// # Safety
/// `data` must point to `m * d` readable doubles; `out` must be a valid
/// destination pointer.
#[no_mangle]
pub unsafe extern "C" fn nammd_sample_new(
    data: *const f64,
    m: usize,
    d: usize,
    out: *mut *mut NammdSample,
) -> NammdStatus {
    if data.is_null() || out.is_null() {
        return null_pointer();
    }
    let flat = std::slice::from_raw_parts(data, m.saturating_mul(d)).to_vec();
    match Sample::from_flat(flat, m, d) {
        Ok(sample) => {
            *out = Box::into_raw(Box::new(NammdSample(sample)));
            NammdStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// # Safety
/// `sample` must be a pointer previously returned by `nammd_sample_new`
/// (or null, in which case this is a no-op).
#[no_mangle]
pub unsafe extern "C" fn nammd_sample_free(sample: *mut NammdSample) {
    if !sample.is_null() {
        drop(Box::from_raw(sample));
    }
}

/// # Safety
/// `out` must be a valid destination pointer.
#[no_mangle]
pub unsafe extern "C" fn nammd_kernel_gaussian(
    bandwidth: f64,
    out: *mut *mut NammdKernel,
) -> NammdStatus {
    if out.is_null() {
        return null_pointer();
    }
    match KernelSpec::gaussian(bandwidth) {
        Ok(spec) => {
            *out = Box::into_raw(Box::new(NammdKernel(spec)));
            NammdStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// # Safety
/// `out` must be a valid destination pointer.
#[no_mangle]
pub unsafe extern "C" fn nammd_kernel_laplace(
    bandwidth: f64,
    out: *mut *mut NammdKernel,
) -> NammdStatus {
    if out.is_null() {
        return null_pointer();
    }
    match KernelSpec::laplace(bandwidth) {
        Ok(spec) => {
            *out = Box::into_raw(Box::new(NammdKernel(spec)));
            NammdStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Mahalanobis kernel with a row-major `d x d` symmetric positive
/// definite metric.
///
/// # Safety
/// `metric` must point to `d * d` readable doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn nammd_kernel_mahalanobis(
    bandwidth: f64,
    metric: *const f64,
    d: usize,
    out: *mut *mut NammdKernel,
) -> NammdStatus {
    if metric.is_null() || out.is_null() {
        return null_pointer();
    }
    let flat = std::slice::from_raw_parts(metric, d.saturating_mul(d)).to_vec();
    let matrix = match Matrix::from_flat(flat, d, d) {
        Ok(m) => m,
        Err(e) => return fail(e),
    };
    match KernelSpec::mahalanobis(bandwidth, matrix) {
        Ok(spec) => {
            *out = Box::into_raw(Box::new(NammdKernel(spec)));
            NammdStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// # Safety
/// `kernel` must be a pointer previously returned by a kernel constructor
/// (or null, no-op).
#[no_mangle]
pub unsafe extern "C" fn nammd_kernel_free(kernel: *mut NammdKernel) {
    if !kernel.is_null() {
        drop(Box::from_raw(kernel));
    }
}

/// Median of pairwise distances over the pooled sample.
///
/// # Safety
/// All pointers must be valid handles / destinations.
#[no_mangle]
pub unsafe extern "C" fn nammd_median_heuristic(
    x: *const NammdSample,
    y: *const NammdSample,
    out: *mut f64,
) -> NammdStatus {
    if x.is_null() || y.is_null() || out.is_null() {
        return null_pointer();
    }
    match median_heuristic(&(*x).0, &(*y).0) {
        Ok(v) => {
            *out = v;
            NammdStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Point estimates (squared MMD, norm, their ratio, variance components,
/// sigma) for a sample pair. Needs at least 4 points per sample.
///
/// # Safety
/// All pointers must be valid handles / destinations.
#[no_mangle]
pub unsafe extern "C" fn nammd_estimates(
    kernel: *const NammdKernel,
    x: *const NammdSample,
    y: *const NammdSample,
    out: *mut NammdEstimates,
) -> NammdStatus {
    if kernel.is_null() || x.is_null() || y.is_null() || out.is_null() {
        return null_pointer();
    }
    match estimators::estimator_report_streaming(&(*kernel).0, &(*x).0, &(*y).0) {
        Ok(r) => {
            *out = NammdEstimates {
                mmd2: r.mmd2_hat,
                norm: r.norm_hat,
                nammd: r.nammd_hat,
                zeta1: r.zeta1,
                zeta2: r.zeta2,
                sigma: r.sigma_hat,
                sample_size: r.m,
            };
            NammdStatus::Ok
        }
        Err(e) => fail(e),
    }
}

unsafe fn write_outcome(out: *mut NammdTestOutcome, o: &dct::TestOutcome) {
    *out = NammdTestOutcome {
        statistic: o.statistic,
        threshold: o.threshold,
        p_value: o.p_value.unwrap_or(f64::NAN),
        reject: o.reject as i32,
        alpha: o.alpha,
        epsilon: o.epsilon,
        sample_size: o.m,
    };
}

/// Norm-adaptive closeness test of `H0: distance <= epsilon` at level
/// `alpha`, with the asymptotic threshold. `epsilon` must lie strictly
/// inside (0, 1); use the permutation test for zero.
///
/// # Safety
/// All pointers must be valid handles / destinations.
#[no_mangle]
pub unsafe extern "C" fn nammd_closeness_test(
    kernel: *const NammdKernel,
    x: *const NammdSample,
    y: *const NammdSample,
    epsilon: f64,
    alpha: f64,
    out: *mut NammdTestOutcome,
) -> NammdStatus {
    if kernel.is_null() || x.is_null() || y.is_null() || out.is_null() {
        return null_pointer();
    }
    match dct::nammd_dct(&(*x).0, &(*y).0, &(*kernel).0, epsilon, alpha) {
        Ok(o) => {
            write_outcome(out, &o);
            NammdStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Squared-MMD closeness test baseline.
///
/// # Safety
/// All pointers must be valid handles / destinations.
#[no_mangle]
pub unsafe extern "C" fn nammd_mmd_closeness_test(
    kernel: *const NammdKernel,
    x: *const NammdSample,
    y: *const NammdSample,
    epsilon_m: f64,
    alpha: f64,
    out: *mut NammdTestOutcome,
) -> NammdStatus {
    if kernel.is_null() || x.is_null() || y.is_null() || out.is_null() {
        return null_pointer();
    }
    match dct::mmd_dct(&(*x).0, &(*y).0, &(*kernel).0, epsilon_m, alpha) {
        Ok(o) => {
            write_outcome(out, &o);
            NammdStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Permutation two-sample test with `permutations` Monte Carlo
/// relabelings; deterministic given `seed`.
///
/// # Safety
/// All pointers must be valid handles / destinations.
#[no_mangle]
pub unsafe extern "C" fn nammd_two_sample_test(
    kernel: *const NammdKernel,
    x: *const NammdSample,
    y: *const NammdSample,
    which: NammdTstStatistic,
    alpha: f64,
    permutations: usize,
    seed: u64,
    out: *mut NammdTestOutcome,
) -> NammdStatus {
    if kernel.is_null() || x.is_null() || y.is_null() || out.is_null() {
        return null_pointer();
    }
    let plan = match PermutationPlan::new(permutations, seed) {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    let statistic = match which {
        NammdTstStatistic::NormAdaptive => TstStatistic::Nammd,
        NammdTstStatistic::SquaredMmd => TstStatistic::Mmd2,
    };
    let spec = TestKernel::Single((*kernel).0.clone());
    match tst::permutation_test(&(*x).0, &(*y).0, &spec, statistic, alpha, &plan) {
        Ok(o) => {
            write_outcome(out, &o);
            NammdStatus::Ok
        }
        Err(e) => fail(e),
    }
}
