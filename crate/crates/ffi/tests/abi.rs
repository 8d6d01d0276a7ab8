use std::ffi::{CStr, CString};
use std::ptr;

use genbench_ffi::*;

fn last_error() -> String {
    let p = gb_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn stats(mean: &[f64], cov: &[f64]) -> *mut GbGaussianStats {
    let mut h = ptr::null_mut();
    let st = unsafe { gb_stats_from_moments(mean.as_ptr(), cov.as_ptr(), mean.len(), &mut h) };
    assert_eq!(st, GbStatus::Ok);
    h
}

#[test]
fn frechet_of_shifted_identity() {
    let a = stats(&[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0]);
    let b = stats(&[3.0, 4.0], &[1.0, 0.0, 0.0, 1.0]);
    let mut d = f64::NAN;
    assert_eq!(unsafe { gb_frechet_distance(a, b, &mut d) }, GbStatus::Ok);
    assert!((d - 25.0).abs() < 1e-9);
    assert!(gb_last_error().is_null());
    let mut dim = 0;
    assert_eq!(unsafe { gb_stats_dim(a, &mut dim) }, GbStatus::Ok);
    assert_eq!(dim, 2);
    unsafe {
        gb_stats_free(a);
        gb_stats_free(b);
        gb_stats_free(ptr::null_mut());
    }
}

#[test]
fn stats_from_features_needs_two_rows() {
    let one = [1.0, 2.0];
    let mut h = ptr::null_mut();
    let st = unsafe { gb_stats_from_features(one.as_ptr(), 1, 2, &mut h) };
    assert_eq!(st, GbStatus::InsufficientSamples);
    assert!(h.is_null());
    assert!(last_error().contains("insufficient"));

    let rows = [0.0, 0.0, 2.0, 2.0];
    let st = unsafe { gb_stats_from_features(rows.as_ptr(), 2, 2, &mut h) };
    assert_eq!(st, GbStatus::Ok);
    let same = stats(&[1.0, 1.0], &[2.0, 2.0, 2.0, 2.0]);
    let mut d = f64::NAN;
    assert_eq!(unsafe { gb_frechet_distance(h, same, &mut d) }, GbStatus::Ok);
    assert!(d.abs() < 1e-6, "{d}");
    unsafe {
        gb_stats_free(h);
        gb_stats_free(same);
    }
}

#[test]
fn dimension_mismatch_and_nulls() {
    let a = stats(&[0.0], &[1.0]);
    let b = stats(&[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0]);
    let mut d = 0.0;
    assert_eq!(unsafe { gb_frechet_distance(a, b, &mut d) }, GbStatus::DimensionMismatch);
    assert_eq!(unsafe { gb_frechet_distance(a, ptr::null(), &mut d) }, GbStatus::NullPointer);
    assert!(last_error().contains("`b`"));
    assert_eq!(unsafe { gb_frechet_distance(a, a, ptr::null_mut()) }, GbStatus::NullPointer);
    unsafe {
        gb_stats_free(a);
        gb_stats_free(b);
    }
}

#[test]
fn inception_score_bounds() {
    // one-hot over 4 classes, balanced: IS = 4 exactly when every split is balanced
    let mut probs = vec![0.0; 40 * 4];
    for i in 0..40 {
        probs[i * 4 + i % 4] = 1.0;
    }
    let (mut m, mut s) = (0.0, 0.0);
    let st = unsafe { gb_inception_score(probs.as_ptr(), 40, 4, 10, &mut m, &mut s) };
    assert_eq!(st, GbStatus::Ok);
    assert!((m - 4.0).abs() < 1e-9 && s.abs() < 1e-9, "{m} {s}");

    probs[0] = 0.5;
    let st = unsafe { gb_inception_score(probs.as_ptr(), 40, 4, 10, &mut m, &mut s) };
    assert_eq!(st, GbStatus::InvalidInput);
}

#[test]
fn mmhm_matches_reference_rows() {
    let mut b = ptr::null_mut();
    assert_eq!(unsafe { gb_bounds_imagenet(&mut b) }, GbStatus::Ok);
    let mut score = 0.0;
    let mut u = [0.0; 4];
    let st = unsafe { gb_mmhm(b, 11.60, 382.36, 31.33, 20.58, 0.0, &mut score, u.as_mut_ptr()) };
    assert_eq!(st, GbStatus::Ok);
    assert!((score - 0.886).abs() < 5e-4, "{score}");
    assert!((u[1] - 1.0).abs() < 1e-12);
    let st = unsafe { gb_mmhm(b, f64::NAN, 1.0, 1.0, 1.0, 0.0, &mut score, ptr::null_mut()) };
    assert_eq!(st, GbStatus::InvalidInput);
    unsafe { gb_bounds_free(b) };
}

#[test]
fn bounds_file_roundtrip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bounds.json");
    genbench::composite::BoundsRegistry::imagenet_reference()
        .save(&path)
        .unwrap();
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut b = ptr::null_mut();
    assert_eq!(unsafe { gb_bounds_load(c.as_ptr(), &mut b) }, GbStatus::Ok);
    assert!(!b.is_null());
    unsafe { gb_bounds_free(b) };

    let missing = CString::new(dir.path().join("nope.json").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { gb_bounds_load(missing.as_ptr(), &mut b) }, GbStatus::Io);
    assert!(b.is_null());
    std::fs::write(&path, "{").unwrap();
    assert_eq!(unsafe { gb_bounds_load(c.as_ptr(), &mut b) }, GbStatus::Parse);
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/genbench.h");
    for name in [
        "gb_last_error",
        "gb_version",
        "gb_stats_from_features",
        "gb_stats_from_moments",
        "gb_stats_dim",
        "gb_stats_free",
        "gb_frechet_distance",
        "gb_inception_score",
        "gb_bounds_imagenet",
        "gb_bounds_load",
        "gb_bounds_free",
        "gb_mmhm",
        "GB_STATUS_NOT_PSD",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
    let v = unsafe { CStr::from_ptr(gb_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
