use renormtrace_ffi::*;
use std::ffi::{CStr, CString};
use std::ptr;

const WEIGHT: &str = r#"{"kind": "multiplier", "coeffs": [[2, 1], [0, 1]]}"#;
const INV_SQRT: &str = r#"{"kind": "multiplier", "coeffs": [[2, 1], [0, 1]], "power": -0.5}"#;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = rt_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn committed_header_is_current() {
    let generated = include_str!(concat!(env!("OUT_DIR"), "/renormtrace.h"));
    let committed = include_str!("../include/renormtrace.h");
    assert_eq!(generated, committed, "run RENORMTRACE_UPDATE_HEADER=1 cargo build -p renormtrace-ffi");
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = std::process::Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler; skipped");
        return;
    };
    assert!(cc.status.success());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("t.c");
    std::fs::write(&src, "#include \"renormtrace.h\"\nint main(void) { return rt_version() == 0; }\n").unwrap();
    let inc = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let o = std::process::Command::new("cc").args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I", inc]).arg(&src).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn heat_trace_and_residue_round_trip() {
    unsafe {
        let mut w = ptr::null_mut();
        assert_eq!(rt_weight_from_json(c(WEIGHT).as_ptr(), 40, &mut w), RtStatus::Ok);
        let mut a = ptr::null_mut();
        assert_eq!(rt_operator_from_json(c(r#"{"kind": "multiplier", "coeffs": [[0, 1]]}"#).as_ptr(), 40, &mut a), RtStatus::Ok);
        let mut v = RtComplex { re: 0.0, im: 0.0 };
        assert_eq!(rt_heat_trace(a, w, 0.5, &mut v), RtStatus::Ok);
        let exact: f64 = (-40i64..=40).map(|n| (-0.5 * (n * n + 1) as f64).exp()).sum();
        assert!((v.re - exact).abs() < 1e-13 && v.im == 0.0);
        rt_operator_free(a);
        rt_weight_free(w);

        let mut r = RtComplex { re: 0.0, im: 0.0 };
        assert_eq!(rt_residue(c(INV_SQRT).as_ptr(), &mut r), RtStatus::Ok);
        assert!((r.re - 2.0).abs() < 1e-12);

        let mut n = 0usize;
        assert_eq!(rt_cutoff_for_tail(c(WEIGHT).as_ptr(), 0.1, 0.0, 1e-12, &mut n), RtStatus::Ok);
        assert!(n > 10);
    }
}

#[test]
fn errors_are_reported_not_raised() {
    unsafe {
        let mut w = ptr::null_mut();
        assert_eq!(rt_weight_from_json(ptr::null(), 4, &mut w), RtStatus::NullPointer);
        assert_eq!(rt_weight_from_json(c("{").as_ptr(), 4, &mut w), RtStatus::Parse);
        assert!(last_error().contains("operator literal"));
        assert!(w.is_null());
        let mut v = RtComplex { re: 0.0, im: 0.0 };
        assert_eq!(rt_heat_trace(ptr::null(), ptr::null(), 0.1, &mut v), RtStatus::NullPointer);
        assert_eq!(rt_residue(c(r#"{"kind": "matrix", "entries": [], "order": 0}"#).as_ptr(), &mut v), RtStatus::Unsupported);
        rt_weight_free(ptr::null_mut());
        rt_operator_free(ptr::null_mut());
        rt_report_free(ptr::null_mut());
        assert!(!rt_report_passed(ptr::null()));
    }
}

#[test]
fn scenario_report_through_handles() {
    let sc = r#"{"name": "ffi", "seed": 3, "mu": 0, "tasks": [{"id": "a", "task": "acs_identities", "trials": 50}]}"#;
    unsafe {
        let mut r = ptr::null_mut();
        assert_eq!(rt_scenario_run(c(sc).as_ptr(), &mut r), RtStatus::Ok);
        assert!(rt_report_passed(r));
        assert!(rt_report_rows(r) > 5);
        let js: serde_json::Value = serde_json::from_str(CStr::from_ptr(rt_report_json(r)).to_str().unwrap()).unwrap();
        assert_eq!(js["scenario"], "ffi");
        rt_report_free(r);

        let mut r = ptr::null_mut();
        assert_eq!(rt_scenario_run(c(r#"{"name": "x"}"#).as_ptr(), &mut r), RtStatus::Parse);
        assert!(r.is_null());
    }
    let v = unsafe { CStr::from_ptr(rt_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
