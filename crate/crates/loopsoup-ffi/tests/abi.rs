//! Drive the C surface the way a foreign caller would: raw pointers, status
//! codes, explicit frees.

use std::ffi::{CStr, CString};
use std::ptr;

use loopsoup_ffi::*;

#[test]
fn version_and_registry() {
    let version = unsafe { CStr::from_ptr(ls_version()) }.to_str().unwrap();
    assert!(!version.is_empty());

    let n = ls_experiment_count();
    assert_eq!(n, 12);
    for i in 0..n {
        let name = unsafe { CStr::from_ptr(ls_experiment_name(i)) };
        assert!(!name.to_bytes().is_empty());
    }
    assert!(ls_experiment_name(n).is_null());
}

#[test]
fn grid_domain_green_function() {
    let mut d: *mut LsDomain = ptr::null_mut();
    let status = unsafe { ls_domain_new_grid(3, 3, 0.5, &mut d) };
    assert_eq!(status, LsStatus::Ok);
    assert!(!d.is_null());

    let mut sites = 0usize;
    assert_eq!(
        unsafe { ls_domain_site_count(d, &mut sites) },
        LsStatus::Ok
    );
    assert_eq!(sites, 9);

    // Symmetric, positive on the diagonal, and the diagonal dominates.
    for i in 0..sites {
        for j in 0..sites {
            let mut gij = f64::NAN;
            let mut gji = f64::NAN;
            assert_eq!(unsafe { ls_domain_green(d, i, j, &mut gij) }, LsStatus::Ok);
            assert_eq!(unsafe { ls_domain_green(d, j, i, &mut gji) }, LsStatus::Ok);
            assert!((gij - gji).abs() < 1e-12);
            if i == j {
                assert!(gij > 0.0);
            }
        }
    }
    let mut g00 = 0.0;
    let mut g01 = 0.0;
    unsafe {
        assert_eq!(ls_domain_green(d, 0, 0, &mut g00), LsStatus::Ok);
        assert_eq!(ls_domain_green(d, 0, 1, &mut g01), LsStatus::Ok);
    }
    assert!(g00 > g01.abs());

    let mut oob = 0.0;
    assert_eq!(
        unsafe { ls_domain_green(d, 9, 0, &mut oob) },
        LsStatus::InvalidArgument
    );
    let msg = unsafe { CStr::from_ptr(ls_last_error_message()) };
    assert!(msg.to_str().unwrap().contains("site index"));

    unsafe { ls_domain_free(d) };
}

#[test]
fn bad_construction_arguments() {
    let mut d: *mut LsDomain = ptr::null_mut();
    assert_eq!(
        unsafe { ls_domain_new_grid(0, 3, 0.5, &mut d) },
        LsStatus::InvalidArgument
    );
    assert!(d.is_null());
    assert_eq!(
        unsafe { ls_domain_new_grid(3, 3, -1.0, &mut d) },
        LsStatus::InvalidArgument
    );
    assert!(d.is_null());
    assert_eq!(
        unsafe { ls_domain_new_grid(3, 3, 0.5, ptr::null_mut()) },
        LsStatus::NullPointer
    );
    assert!(!unsafe { ls_last_error_message() }.is_null());
}

#[test]
fn soup_sampling_is_deterministic() {
    let mut d: *mut LsDomain = ptr::null_mut();
    assert_eq!(
        unsafe { ls_domain_new_grid(3, 3, 0.7, &mut d) },
        LsStatus::Ok
    );

    let mut a: *mut LsSoup = ptr::null_mut();
    let mut b: *mut LsSoup = ptr::null_mut();
    assert_eq!(
        unsafe { ls_soup_sample(d, 1.0, 16, 42, &mut a) },
        LsStatus::Ok
    );
    assert_eq!(
        unsafe { ls_soup_sample(d, 1.0, 16, 42, &mut b) },
        LsStatus::Ok
    );

    let (mut ca, mut cb, mut sa, mut sb) = (0usize, 0usize, 0usize, 0usize);
    unsafe {
        assert_eq!(ls_soup_loop_count(a, &mut ca), LsStatus::Ok);
        assert_eq!(ls_soup_loop_count(b, &mut cb), LsStatus::Ok);
        assert_eq!(ls_soup_total_steps(a, &mut sa), LsStatus::Ok);
        assert_eq!(ls_soup_total_steps(b, &mut sb), LsStatus::Ok);
    }
    assert_eq!(ca, cb);
    assert_eq!(sa, sb);

    // And the occupation field is a deterministic function of the pair.
    let mut occ1 = vec![f64::NAN; 9];
    let mut occ2 = vec![f64::NAN; 9];
    unsafe {
        assert_eq!(
            ls_soup_occupation(d, a, occ1.as_mut_ptr(), occ1.len()),
            LsStatus::Ok
        );
        assert_eq!(
            ls_soup_occupation(d, b, occ2.as_mut_ptr(), occ2.len()),
            LsStatus::Ok
        );
    }
    assert_eq!(occ1, occ2);
    assert!(occ1.iter().all(|v| v.is_finite() && *v >= 0.0));

    let mut short = vec![0.0; 4];
    assert_eq!(
        unsafe { ls_soup_occupation(d, a, short.as_mut_ptr(), short.len()) },
        LsStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { ls_soup_occupation(d, ptr::null(), occ1.as_mut_ptr(), occ1.len()) },
        LsStatus::NullPointer
    );

    unsafe {
        ls_soup_free(a);
        ls_soup_free(b);
        ls_domain_free(d);
    }
}

#[test]
fn occupation_rejects_mismatched_domain() {
    let mut d3: *mut LsDomain = ptr::null_mut();
    let mut d2: *mut LsDomain = ptr::null_mut();
    unsafe {
        assert_eq!(ls_domain_new_grid(3, 3, 0.5, &mut d3), LsStatus::Ok);
        assert_eq!(ls_domain_new_grid(2, 2, 0.5, &mut d2), LsStatus::Ok);
    }
    let mut s: *mut LsSoup = ptr::null_mut();
    assert_eq!(
        unsafe { ls_soup_sample(d3, 1.0, 8, 5, &mut s) },
        LsStatus::Ok
    );
    let mut buf = vec![0.0; 4];
    assert_eq!(
        unsafe { ls_soup_occupation(d2, s, buf.as_mut_ptr(), buf.len()) },
        LsStatus::InvalidArgument
    );
    unsafe {
        ls_soup_free(s);
        ls_domain_free(d2);
        ls_domain_free(d3);
    }
}

#[test]
fn experiment_runs_through_the_abi() {
    let name = CString::new("measure-oracle").unwrap();
    let mut r: *mut LsReport = ptr::null_mut();
    assert_eq!(
        unsafe { ls_experiment_run_default(name.as_ptr(), 1, &mut r) },
        LsStatus::Ok
    );
    assert!(!r.is_null());

    let mut passed = false;
    assert_eq!(unsafe { ls_report_passed(r, &mut passed) }, LsStatus::Ok);
    assert!(passed);

    let mut json: *mut std::ffi::c_char = ptr::null_mut();
    assert_eq!(unsafe { ls_report_json(r, &mut json) }, LsStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed["experiment"], "measure-oracle");
    assert_eq!(parsed["passed"], true);
    unsafe { ls_string_free(json) };

    unsafe { ls_report_free(r) };
}

#[test]
fn experiment_override_and_errors() {
    let name = CString::new("poisson-sampling").unwrap();
    let mut r: *mut LsReport = ptr::null_mut();
    // Small replica override keeps this fast; the run must still succeed.
    assert_eq!(
        unsafe { ls_experiment_run(name.as_ptr(), 9, 2_000, 1, &mut r) },
        LsStatus::Ok
    );
    assert!(!r.is_null());
    unsafe { ls_report_free(r) };

    assert_eq!(
        unsafe { ls_experiment_run(name.as_ptr(), 9, 0, 1, &mut r) },
        LsStatus::InvalidArgument
    );
    assert!(r.is_null());

    let bogus = CString::new("no-such-experiment").unwrap();
    assert_eq!(
        unsafe { ls_experiment_run_default(bogus.as_ptr(), 1, &mut r) },
        LsStatus::InvalidArgument
    );
    let msg = unsafe { CStr::from_ptr(ls_last_error_message()) };
    assert!(msg.to_str().unwrap().contains("no-such-experiment"));

    assert_eq!(
        unsafe { ls_experiment_run_default(ptr::null(), 1, &mut r) },
        LsStatus::NullPointer
    );
}
