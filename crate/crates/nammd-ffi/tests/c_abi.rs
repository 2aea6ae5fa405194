//! Drives the exported C functions through raw pointers, the way a
//! foreign caller would.

use nammd_ffi::*;
use std::ffi::CStr;
use std::ptr;

fn make_sample(rows: &[[f64; 2]]) -> *mut NammdSample {
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    let mut handle: *mut NammdSample = ptr::null_mut();
    let status = unsafe { nammd_sample_new(flat.as_ptr(), rows.len(), 2, &mut handle) };
    assert_eq!(status, NammdStatus::Ok);
    assert!(!handle.is_null());
    handle
}

#[test]
fn estimates_round_trip_through_the_abi() {
    let x = make_sample(&[
        [0.0, 0.1],
        [0.4, -0.2],
        [-0.5, 0.3],
        [0.2, 0.9],
        [1.0, -0.4],
    ]);
    let y = make_sample(&[
        [1.0, 1.1],
        [1.4, 0.8],
        [0.5, 1.3],
        [1.2, 1.9],
        [2.0, 0.6],
    ]);
    let mut kernel: *mut NammdKernel = ptr::null_mut();
    assert_eq!(
        unsafe { nammd_kernel_gaussian(1.0, &mut kernel) },
        NammdStatus::Ok
    );

    let mut gamma = 0.0;
    assert_eq!(
        unsafe { nammd_median_heuristic(x, y, &mut gamma) },
        NammdStatus::Ok
    );
    assert!(gamma > 0.0);

    let mut est = NammdEstimates {
        mmd2: 0.0,
        norm: 0.0,
        nammd: 0.0,
        zeta1: 0.0,
        zeta2: 0.0,
        sigma: 0.0,
        sample_size: 0,
    };
    assert_eq!(
        unsafe { nammd_estimates(kernel, x, y, &mut est) },
        NammdStatus::Ok
    );
    assert_eq!(est.sample_size, 5);
    assert!((2.0..=4.0).contains(&est.norm));
    assert!((est.nammd - est.mmd2 / est.norm).abs() < 1e-15);

    let mut outcome = NammdTestOutcome {
        statistic: 0.0,
        threshold: 0.0,
        p_value: 0.0,
        reject: 0,
        alpha: 0.0,
        epsilon: 0.0,
        sample_size: 0,
    };
    assert_eq!(
        unsafe { nammd_closeness_test(kernel, x, y, 0.5, 0.05, &mut outcome) },
        NammdStatus::Ok
    );
    assert_eq!(outcome.sample_size, 5);
    assert_eq!(outcome.reject, (outcome.statistic > outcome.threshold) as i32);

    assert_eq!(
        unsafe { nammd_mmd_closeness_test(kernel, x, y, 0.3, 0.05, &mut outcome) },
        NammdStatus::Ok
    );

    // Deterministic permutation test through the ABI.
    let mut first = outcome;
    assert_eq!(
        unsafe {
            nammd_two_sample_test(
                kernel,
                x,
                y,
                NammdTstStatistic::NormAdaptive,
                0.05,
                100,
                42,
                &mut first,
            )
        },
        NammdStatus::Ok
    );
    let mut second = first;
    assert_eq!(
        unsafe {
            nammd_two_sample_test(
                kernel,
                x,
                y,
                NammdTstStatistic::NormAdaptive,
                0.05,
                100,
                42,
                &mut second,
            )
        },
        NammdStatus::Ok
    );
    assert_eq!(first, second);

    unsafe {
        nammd_kernel_free(kernel);
        nammd_sample_free(x);
        nammd_sample_free(y);
    }
}

#[test]
fn errors_surface_with_messages() {
    let mut kernel: *mut NammdKernel = ptr::null_mut();
    assert_eq!(
        unsafe { nammd_kernel_gaussian(-1.0, &mut kernel) },
        NammdStatus::InvalidArgument
    );
    let message = unsafe { CStr::from_ptr(nammd_last_error_message()) };
    assert!(message.to_string_lossy().contains("bandwidth"));

    // Null pointers are reported, not dereferenced.
    assert_eq!(
        unsafe { nammd_kernel_gaussian(1.0, ptr::null_mut()) },
        NammdStatus::NullPointer
    );
    let mut out = 0.0;
    assert_eq!(
        unsafe { nammd_median_heuristic(ptr::null(), ptr::null(), &mut out) },
        NammdStatus::NullPointer
    );

    // Non-finite sample data is rejected.
    let bad = [f64::NAN, 0.0, 1.0, 2.0];
    let mut handle: *mut NammdSample = ptr::null_mut();
    assert_eq!(
        unsafe { nammd_sample_new(bad.as_ptr(), 2, 2, &mut handle) },
        NammdStatus::InvalidArgument
    );

    // A valid metric must be symmetric positive definite.
    let metric = [1.0, 0.0, 0.0, -2.0];
    assert_eq!(
        unsafe { nammd_kernel_mahalanobis(1.0, metric.as_ptr(), 2, &mut kernel) },
        NammdStatus::InvalidArgument
    );

    // Epsilon of zero is routed to the permutation test.
    let x = make_sample(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
    let mut k: *mut NammdKernel = ptr::null_mut();
    assert_eq!(unsafe { nammd_kernel_gaussian(1.0, &mut k) }, NammdStatus::Ok);
    let mut outcome = NammdTestOutcome {
        statistic: 0.0,
        threshold: 0.0,
        p_value: 0.0,
        reject: 0,
        alpha: 0.0,
        epsilon: 0.0,
        sample_size: 0,
    };
    assert_eq!(
        unsafe { nammd_closeness_test(k, x, x, 0.0, 0.05, &mut outcome) },
        NammdStatus::InvalidArgument
    );
    unsafe {
        nammd_kernel_free(k);
        nammd_sample_free(x);
    }
}
