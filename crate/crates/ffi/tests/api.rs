use std::ffi::{CStr, CString};
use std::ptr;

use cdf_ffi::*;

fn last_error() -> Option<String> {
    let p = cdf_last_error();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}

fn labeled(n: usize, seed: u64) -> (*mut CdfMatrix, Vec<u8>) {
    let mut labels = vec![0u8; n];
    let mut m = ptr::null_mut();
    let status = unsafe { cdf_generate_labeled(n, seed, labels.as_mut_ptr(), &mut m) };
    assert_eq!(status, CdfStatus::Ok);
    (m, labels)
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(cdf_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn robust_distance_agrees_with_core() {
    let x = [0.3, -1.5, 40.0];
    let c = [0.0, 0.5, -2.0];
    let b = [1.0, 2.0, 0.5];
    let mut d = 0.0;
    assert_eq!(
        unsafe { cdf_robust_distance(x.as_ptr(), c.as_ptr(), b.as_ptr(), 3, &mut d) },
        CdfStatus::Ok
    );
    assert_eq!(
        d,
        cdf_core::clustering::robust_distance(&x, &c, &b).unwrap()
    );
    assert!(last_error().is_none());

    let bad = [1.0, 0.0, 1.0];
    let status = unsafe { cdf_robust_distance(x.as_ptr(), c.as_ptr(), bad.as_ptr(), 3, &mut d) };
    assert_eq!(status, CdfStatus::InvalidConfig);
    assert!(last_error().unwrap().contains("positive"));
}

#[test]
fn null_pointers_are_reported() {
    let mut d = 0.0;
    let status = unsafe { cdf_robust_distance(ptr::null(), ptr::null(), ptr::null(), 2, &mut d) };
    assert_eq!(status, CdfStatus::NullPointer);
    assert_eq!(unsafe { cdf_matrix_rows(ptr::null()) }, 0);
    assert_eq!(unsafe { cdf_pipeline_clusters(ptr::null()) }, 0);
    unsafe {
        cdf_matrix_free(ptr::null_mut());
        cdf_pipeline_free(ptr::null_mut());
        cdf_string_free(ptr::null_mut());
    }
}

#[test]
fn matrix_round_trip_with_names() {
    let values = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let a = CString::new("alpha").unwrap();
    let b = CString::new("beta").unwrap();
    let c = CString::new("gamma").unwrap();
    let names = [a.as_ptr(), b.as_ptr(), c.as_ptr()];
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { cdf_matrix_new(values.as_ptr(), 2, 3, names.as_ptr(), &mut m) },
        CdfStatus::Ok
    );
    unsafe {
        assert_eq!((cdf_matrix_rows(m), cdf_matrix_cols(m)), (2, 3));
        assert_eq!(
            CStr::from_ptr(cdf_matrix_column_name(m, 1))
                .to_str()
                .unwrap(),
            "beta"
        );
        assert!(cdf_matrix_column_name(m, 3).is_null());
        let mut out = [0.0; 6];
        assert_eq!(
            cdf_matrix_copy_values(m, out.as_mut_ptr(), 6),
            CdfStatus::Ok
        );
        assert_eq!(out, values);
        assert_eq!(
            cdf_matrix_copy_values(m, out.as_mut_ptr(), 5),
            CdfStatus::ShapeMismatch
        );
        cdf_matrix_free(m);
    }

    let dup = [a.as_ptr(), a.as_ptr(), c.as_ptr()];
    let status = unsafe { cdf_matrix_new(values.as_ptr(), 2, 3, dup.as_ptr(), &mut m) };
    assert_eq!(status, CdfStatus::InvalidData);
}

#[test]
fn generated_matrix_matches_core() {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { cdf_generate(50, 3, &mut m) }, CdfStatus::Ok);
    let config = cdf_core::telemetry::GeneratorConfig {
        samples: 50,
        ..Default::default()
    };
    let expected = cdf_core::telemetry::generate_dataset(&config, 3).unwrap();
    let mut out = vec![0.0; 50 * 41];
    unsafe {
        assert_eq!(
            cdf_matrix_copy_values(m, out.as_mut_ptr(), out.len()),
            CdfStatus::Ok
        );
        cdf_matrix_free(m);
    }
    assert_eq!(out, expected.values().iter().copied().collect::<Vec<_>>());
    assert_eq!(
        unsafe { cdf_generate(0, 3, &mut m) },
        CdfStatus::InvalidConfig
    );
}

#[test]
fn fit_classify_serialize_detect() {
    let n = 1500;
    let (m, labels) = labeled(n, 21);
    unsafe {
        let mut p = ptr::null_mut();
        let status = cdf_pipeline_fit(
            m,
            labels.as_ptr(),
            n,
            CDF_VARIANT_EA_PCA,
            CDF_ALGORITHM_POSSCP,
            4,
            &mut p,
        );
        assert_eq!(status, CdfStatus::Ok, "{:?}", last_error());
        assert_eq!(cdf_pipeline_clusters(p), 2);

        let mut pred = vec![0u8; n];
        assert_eq!(
            cdf_pipeline_classify(p, m, pred.as_mut_ptr(), n),
            CdfStatus::Ok
        );
        let agree = pred.iter().zip(&labels).filter(|(a, b)| a == b).count();
        assert!(agree as f64 / n as f64 > 0.8, "agreement {agree}/{n}");

        let mut w = vec![0.0; 2 * n];
        assert_eq!(
            cdf_pipeline_memberships(p, m, w.as_mut_ptr(), w.len()),
            CdfStatus::Ok
        );
        assert!(w.iter().all(|v| v.is_finite() && *v > 0.0 && *v <= 1.0));

        let mut json = ptr::null_mut();
        assert_eq!(cdf_pipeline_to_json(p, &mut json), CdfStatus::Ok);
        let mut q = ptr::null_mut();
        assert_eq!(cdf_pipeline_from_json(json, &mut q), CdfStatus::Ok);
        cdf_string_free(json);
        let mut pred_q = vec![0u8; n];
        assert_eq!(
            cdf_pipeline_classify(q, m, pred_q.as_mut_ptr(), n),
            CdfStatus::Ok
        );
        assert_eq!(pred, pred_q);

        let mut states = vec![0u8; n];
        let mut transition = 0i64;
        assert_eq!(
            cdf_detect_stream(q, m, 40, states.as_mut_ptr(), n, &mut transition),
            CdfStatus::Ok
        );
        let first = states.iter().position(|s| *s == 1).map_or(-1, |i| i as i64);
        assert_eq!(transition, first);

        cdf_pipeline_free(p);
        cdf_pipeline_free(q);
        cdf_matrix_free(m);
    }
}

#[test]
fn nominal_stream_stays_ok() {
    let (train, labels) = labeled(1500, 8);
    let mut stream = ptr::null_mut();
    unsafe {
        assert_eq!(cdf_generate(150, 99, &mut stream), CdfStatus::Ok);
        let mut p = ptr::null_mut();
        assert_eq!(
            cdf_pipeline_fit(
                train,
                labels.as_ptr(),
                1500,
                CDF_VARIANT_EA_PCA,
                CDF_ALGORITHM_FCM,
                1,
                &mut p
            ),
            CdfStatus::Ok
        );
        let mut transition = 0i64;
        assert_eq!(
            cdf_detect_stream(p, stream, 40, ptr::null_mut(), 0, &mut transition),
            CdfStatus::Ok
        );
        assert_eq!(transition, -1);
        cdf_pipeline_free(p);
        cdf_matrix_free(stream);
        cdf_matrix_free(train);
    }
}

#[test]
fn argument_errors() {
    let n = 300;
    let (m, labels) = labeled(n, 2);
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(
            cdf_pipeline_fit(m, labels.as_ptr(), n, 7, 0, 0, &mut p),
            CdfStatus::InvalidArgument
        );
        assert!(last_error().unwrap().contains("variant"));
        assert_eq!(
            cdf_pipeline_fit(m, labels.as_ptr(), n, 0, 9, 0, &mut p),
            CdfStatus::InvalidArgument
        );
        assert_eq!(
            cdf_pipeline_fit(m, labels.as_ptr(), n - 1, 0, 0, 0, &mut p),
            CdfStatus::ShapeMismatch
        );

        let garbage = CString::new("{not json").unwrap();
        assert_eq!(
            cdf_pipeline_from_json(garbage.as_ptr(), &mut p),
            CdfStatus::Parse
        );

        let narrow = [0.0; 4];
        let mut other = ptr::null_mut();
        assert_eq!(
            cdf_matrix_new(narrow.as_ptr(), 2, 2, ptr::null(), &mut other),
            CdfStatus::Ok
        );
        assert_eq!(
            cdf_pipeline_fit(m, labels.as_ptr(), n, 0, 0, 0, &mut p),
            CdfStatus::Ok
        );
        let mut out = [0u8; 2];
        let status = cdf_pipeline_classify(p, other, out.as_mut_ptr(), 2);
        assert_ne!(status, CdfStatus::Ok);
        assert!(last_error().is_some());
        cdf_pipeline_free(p);
        cdf_matrix_free(other);
        cdf_matrix_free(m);
    }
}
