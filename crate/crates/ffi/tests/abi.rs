use std::ffi::CStr;
use std::ptr;

use trapfield_ffi::*;

fn last_error() -> String {
    let p = tf_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn environment_lifecycle() {
    unsafe {
        let mut env = ptr::null_mut();
        assert_eq!(tf_environment_new(1, 5, 0.5, 7, &mut env), TfStatus::Ok);
        let mut sites = 0;
        assert_eq!(tf_environment_site_count(env, &mut sites), TfStatus::Ok);
        assert_eq!(sites, 11);
        let mut alpha = vec![0u64; sites];
        assert_eq!(tf_environment_copy_alpha(env, alpha.as_mut_ptr(), sites), TfStatus::Ok);
        assert!(alpha.iter().all(|&a| a >= 1));
        assert_eq!(
            tf_environment_copy_alpha(env, alpha.as_mut_ptr(), sites - 1),
            TfStatus::BufferTooSmall
        );
        assert!(last_error().contains("needed"));
        tf_environment_free(env);
        tf_environment_free(ptr::null_mut());
    }
}

#[test]
fn same_seed_same_depths() {
    unsafe {
        let mut a = ptr::null_mut();
        let mut b = ptr::null_mut();
        assert_eq!(tf_environment_new(2, 3, 0.7, 11, &mut a), TfStatus::Ok);
        assert_eq!(tf_environment_new(2, 3, 0.7, 11, &mut b), TfStatus::Ok);
        let mut xa = vec![0u64; 49];
        let mut xb = vec![0u64; 49];
        tf_environment_copy_alpha(a, xa.as_mut_ptr(), 49);
        tf_environment_copy_alpha(b, xb.as_mut_ptr(), 49);
        assert_eq!(xa, xb);
        tf_environment_free(a);
        tf_environment_free(b);
    }
}

#[test]
fn errors_map_to_codes() {
    unsafe {
        let mut env = ptr::null_mut();
        assert_eq!(tf_environment_new(1, 5, 1.5, 7, &mut env), TfStatus::InvalidArgument);
        assert!(env.is_null());
        assert!(last_error().contains("beta"));
        assert_eq!(tf_environment_new(1, 5, 0.5, 7, ptr::null_mut()), TfStatus::NullPointer);
        let mut v = 0.0;
        assert_eq!(tf_mittag_leffler(0.5, 1.0, &mut v), TfStatus::InvalidArgument);
        assert_eq!(tf_environment_site_count(ptr::null(), &mut 0), TfStatus::NullPointer);
    }
}

#[test]
fn scalar_functions() {
    unsafe {
        let mut v = 0.0;
        assert_eq!(tf_mittag_leffler(1.0, -2.0, &mut v), TfStatus::Ok);
        assert!((v - (-2.0f64).exp()).abs() < 1e-15);
        assert_eq!(tf_mittag_leffler(0.5, 0.0, &mut v), TfStatus::Ok);
        assert_eq!(v, 1.0);
        let mut theta = 0.0;
        assert_eq!(tf_theta_n(10.0, 1, 0.5, &mut theta), TfStatus::Ok);
        assert_eq!(theta, trapfield::fields::theta_n(10.0, 1, 0.5).unwrap());
    }
}

#[test]
fn duality_on_a_small_box() {
    unsafe {
        let alpha = [2u64, 1, 3];
        let mut env = ptr::null_mut();
        assert_eq!(tf_environment_from_alpha(1, 1, 0.5, alpha.as_ptr(), 3, &mut env), TfStatus::Ok);
        let eta = [1u64, 0, 2];
        let (mut lhs, mut rhs, mut pass) = (0.0, 0.0, false);
        for &a in &[0.0, 0.5, 1.0] {
            let s = tf_duality_verify_one(env, a, eta.as_ptr(), 3, 1, 0.7, &mut lhs, &mut rhs, &mut pass);
            assert_eq!(s, TfStatus::Ok);
            assert!(pass, "a={a}: {lhs} vs {rhs}");
            assert!((lhs - rhs).abs() < 1e-10);
        }
        let bad = [5u64, 0, 0];
        let s = tf_duality_verify_one(env, 0.0, bad.as_ptr(), 3, 0, 0.7, &mut lhs, &mut rhs, &mut pass);
        assert_eq!(s, TfStatus::InvalidArgument);
        tf_environment_free(env);
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/trapfield.h")).unwrap();
    for name in [
        "TfStatus",
        "TfEnvironment",
        "tf_last_error_message",
        "tf_environment_new",
        "tf_environment_from_alpha",
        "tf_environment_free",
        "tf_environment_site_count",
        "tf_environment_copy_alpha",
        "tf_theta_n",
        "tf_mittag_leffler",
        "tf_duality_verify_one",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
