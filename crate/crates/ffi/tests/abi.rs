use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use semigroup_bench_ffi::*;

fn last_error() -> String {
    let p = sgb_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn new_matrix(dim: usize, re: &[f64], im: Option<&[f64]>) -> *mut SgbMatrix {
    let mut m = ptr::null_mut();
    let st = unsafe { sgb_matrix_new(dim, re.as_ptr(), im.map_or(ptr::null(), |v| v.as_ptr()), &mut m) };
    assert_eq!(st, SgbStatus::Ok);
    m
}

#[test]
fn matrix_round_trip_and_norms() {
    let re = [3.0, 0.0, 0.0, -4.0];
    let im = [0.0, 1.0, 0.0, 0.0];
    let m = new_matrix(2, &re, Some(&im));
    assert_eq!(unsafe { sgb_matrix_dim(m) }, 2);
    let (mut r, mut i) = ([0.0; 4], [0.0; 4]);
    assert_eq!(unsafe { sgb_matrix_copy_out(m, r.as_mut_ptr(), i.as_mut_ptr(), 4) }, SgbStatus::Ok);
    assert_eq!(r, re);
    assert_eq!(i, im);
    assert_eq!(unsafe { sgb_matrix_copy_out(m, r.as_mut_ptr(), ptr::null_mut(), 3) }, SgbStatus::Input);

    let d = new_matrix(2, &[3.0, 0.0, 0.0, -4.0], None);
    let mut norm = 0.0;
    assert_eq!(unsafe { sgb_opnorm(d, &mut norm) }, SgbStatus::Ok);
    assert!((norm - 4.0).abs() < 1e-12);

    let mut buf = [0 as std::ffi::c_char; 64];
    assert_eq!(unsafe { sgb_matrix_fingerprint(d, buf.as_mut_ptr(), buf.len()) }, SgbStatus::Ok);
    let fp = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap();
    assert!(fp.starts_with("d2-"));
    unsafe {
        sgb_matrix_free(m);
        sgb_matrix_free(d);
        sgb_matrix_free(ptr::null_mut());
    }
}

#[test]
fn expm_powm_and_defects() {
    let a = new_matrix(1, &[1.0], None);
    let mut e = ptr::null_mut();
    assert_eq!(unsafe { sgb_expm(a, &mut e) }, SgbStatus::Ok);
    let mut v = [0.0];
    unsafe { sgb_matrix_copy_out(e, v.as_mut_ptr(), ptr::null_mut(), 1) };
    assert!((v[0] - std::f64::consts::E).abs() < 1e-14);

    let half = new_matrix(1, &[0.5], None);
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { sgb_powm(half, 10, &mut p) }, SgbStatus::Ok);
    unsafe { sgb_matrix_copy_out(p, v.as_mut_ptr(), ptr::null_mut(), 1) };
    assert_eq!(v[0], 0.5f64.powi(10));

    let mut x = 0.0;
    assert_eq!(unsafe { sgb_euler_defect(a, 1.0, 1, &mut x) }, SgbStatus::Ok);
    assert!((x - (0.5 - (-1.0f64).exp())).abs() < 1e-14);

    let zero = new_matrix(1, &[0.0], None);
    assert_eq!(unsafe { sgb_trotter_defect(a, zero, 1.0, 8, &mut x) }, SgbStatus::Ok);
    assert!(x < 1e-14);

    let (mut d, mut pf) = (0.0, 0.0);
    assert_eq!(unsafe { sgb_resolvent_defect(a, 1e-3, 1.0, 0.0, &mut d, &mut pf) }, SgbStatus::Ok);
    assert!((d - pf).abs() <= 1e-10 * d);
    assert!((d / 1e-3 - 0.25).abs() < 1e-3);

    assert_eq!(unsafe { sgb_chernoff_defect_norm(half, 4, &mut x) }, SgbStatus::Ok);
    assert!(x > 0.0);
    for h in [a, e, half, p, zero] {
        unsafe { sgb_matrix_free(h) };
    }
}

#[test]
fn bounds_and_geometry() {
    assert_eq!(sgb_bound_sqrt_n(49, 2.0), 14.0);
    assert!((sgb_bound_lemma2(8, -1.0 / 6.0, 1.0) - 4.0).abs() < 1e-12);
    assert!((sgb_bound_thm22(64, 1.0 / 6.0, 1.0, 1.0) - 16.5).abs() < 1e-12);
    assert!((sgb_bound_quasisectorial(64, 1.0 / 6.0, 1.0) - 1.0).abs() < 1e-12);
    assert!((sgb_bound_cube_root(8, 1.0) - 2.0).abs() < 1e-12);

    let json = CString::new(r#"{"dim": 2, "re": [[0.5, 0.5], [0.0, 0.5]], "im": [[0, 0], [0, 0]]}"#).unwrap();
    let mut j = ptr::null_mut();
    assert_eq!(unsafe { sgb_matrix_from_json(json.as_ptr(), &mut j) }, SgbStatus::Ok);
    let (mut alpha, mut ok) = (0.0, false);
    assert_eq!(unsafe { sgb_min_semi_angle(j, 256, &mut alpha, &mut ok) }, SgbStatus::Ok);
    assert!(ok);
    assert!((alpha - std::f64::consts::FRAC_PI_6).abs() < 1e-4);

    let u = new_matrix(1, &[0.0], Some(&[1.0]));
    assert_eq!(unsafe { sgb_min_semi_angle(u, 256, &mut alpha, &mut ok) }, SgbStatus::Ok);
    assert!(!ok && alpha.is_nan());

    let mut r = SgbRitt::default();
    let g = new_matrix(1, &[0.5], None);
    assert_eq!(unsafe { sgb_ritt_constant(g, 512, &mut r) }, SgbStatus::Ok);
    assert!((r.k_hat - 0.5).abs() < 1e-12);
    for h in [j, u, g] {
        unsafe { sgb_matrix_free(h) };
    }
}

#[test]
fn poisson_and_fit() {
    let mut v = 0.0;
    assert_eq!(unsafe { sgb_poisson_var_sum(100, &mut v) }, SgbStatus::Ok);
    assert!((v - 100.0).abs() < 1e-8);
    assert_eq!(unsafe { sgb_poisson_abs_moment(1, &mut v) }, SgbStatus::Ok);
    assert!((v - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
    let mut s = SgbPoissonSplit::default();
    assert_eq!(unsafe { sgb_poisson_split(100, 1.0 / 6.0, &mut s) }, SgbStatus::Ok);
    assert!((s.tail_abs - 0.78).abs() < 0.01);
    assert_eq!(unsafe { sgb_poisson_split(100, 0.9, &mut s) }, SgbStatus::Input);

    let ns = [16u64, 32, 64, 128];
    let vals: Vec<f64> = ns.iter().map(|&n| 3.0 / n as f64).collect();
    let mut f = SgbPowerFit::default();
    assert_eq!(unsafe { sgb_fit_power(ns.as_ptr(), vals.as_ptr(), 4, &mut f) }, SgbStatus::Ok);
    assert!((f.exponent - 1.0).abs() < 1e-12 && (f.prefactor - 3.0).abs() < 1e-11);
    assert_eq!(unsafe { sgb_fit_power(ns.as_ptr(), vals.as_ptr(), 2, &mut f) }, SgbStatus::Fit);
    assert!(last_error().contains("at least 3"));
}

#[test]
fn error_codes_and_messages() {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { sgb_matrix_new(2, ptr::null(), ptr::null(), &mut m) }, SgbStatus::NullPointer);
    assert!(last_error().contains("re"));
    assert_eq!(unsafe { sgb_matrix_new(0, [0.0].as_ptr(), ptr::null(), &mut m) }, SgbStatus::Input);
    let nan = [f64::NAN];
    assert_eq!(unsafe { sgb_matrix_new(1, nan.as_ptr(), ptr::null(), &mut m) }, SgbStatus::Input);
    let bad = CString::new("{not json").unwrap();
    assert_eq!(unsafe { sgb_matrix_from_json(bad.as_ptr(), &mut m) }, SgbStatus::Input);
    assert!(m.is_null());

    let mut x = 0.0;
    assert_eq!(unsafe { sgb_opnorm(ptr::null(), &mut x) }, SgbStatus::NullPointer);
    let a = new_matrix(1, &[1.0], None);
    assert_eq!(unsafe { sgb_opnorm(a, ptr::null_mut()) }, SgbStatus::NullPointer);

    let singular = new_matrix(1, &[-1.0], None);
    let (mut d, mut pf) = (0.0, 0.0);
    assert_eq!(unsafe { sgb_resolvent_defect(singular, 1.0, 1.0, 0.0, &mut d, &mut pf) }, SgbStatus::Singular);

    let big = new_matrix(1, &[1e6], None);
    let mut e = ptr::null_mut();
    assert_eq!(unsafe { sgb_expm(big, &mut e) }, SgbStatus::Computation);
    for h in [a, singular, big] {
        unsafe { sgb_matrix_free(h) };
    }
}

#[test]
fn make_operator_from_spec() {
    let spec = CString::new(r#"{"kind": "random_contraction", "dim": 4, "seed": 7}"#).unwrap();
    let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
    assert_eq!(unsafe { sgb_make_operator(spec.as_ptr(), &mut a) }, SgbStatus::Ok);
    assert_eq!(unsafe { sgb_make_operator(spec.as_ptr(), &mut b) }, SgbStatus::Ok);
    let (mut ra, mut rb) = ([0.0; 16], [0.0; 16]);
    unsafe {
        sgb_matrix_copy_out(a, ra.as_mut_ptr(), ptr::null_mut(), 16);
        sgb_matrix_copy_out(b, rb.as_mut_ptr(), ptr::null_mut(), 16);
    }
    assert_eq!(ra, rb);
    let mut n = 0.0;
    unsafe { sgb_opnorm(a, &mut n) };
    assert!(n <= 1.0 + 1e-12);
    let bad = CString::new(r#"{"kind": "nope", "dim": 2}"#).unwrap();
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { sgb_make_operator(bad.as_ptr(), &mut c) }, SgbStatus::Input);
    unsafe {
        sgb_matrix_free(a);
        sgb_matrix_free(b);
    }
}

fn header_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/semigroup_bench.h")
}

#[test]
fn header_declares_the_abi() {
    let h = std::fs::read_to_string(header_path()).unwrap();
    for sym in [
        "typedef struct SgbMatrix SgbMatrix;",
        "SGB_STATUS_OK = 0",
        "SGB_STATUS_PANIC = 9",
        "sgb_matrix_new",
        "sgb_matrix_from_json",
        "sgb_matrix_free",
        "sgb_matrix_dim",
        "sgb_matrix_copy_out",
        "sgb_matrix_fingerprint",
        "sgb_make_operator",
        "sgb_opnorm",
        "sgb_expm",
        "sgb_powm",
        "sgb_chernoff_defect_norm",
        "sgb_ritt_constant",
        "sgb_min_semi_angle",
        "sgb_poisson_split",
        "sgb_poisson_var_sum",
        "sgb_poisson_abs_moment",
        "sgb_bound_sqrt_n",
        "sgb_bound_lemma2",
        "sgb_bound_thm22",
        "sgb_bound_quasisectorial",
        "sgb_bound_cube_root",
        "sgb_euler_defect",
        "sgb_trotter_defect",
        "sgb_resolvent_defect",
        "sgb_fit_power",
        "sgb_last_error_message",
        "sgb_version",
    ] {
        assert!(h.contains(sym), "header lacks {sym}");
    }
}

const C_SMOKE: &str = r#"
#include <math.h>
#include <stdio.h>
#include "semigroup_bench.h"

int main(void) {
    double re[1] = {1.0};
    SgbMatrix *a = NULL;
    if (sgb_matrix_new(1, re, NULL, &a) != SGB_STATUS_OK) return 1;
    double d = 0.0;
    if (sgb_euler_defect(a, 1.0, 1, &d) != SGB_STATUS_OK) return 2;
    if (fabs(d - (0.5 - exp(-1.0))) > 1e-14) return 3;
    SgbPoissonSplit s;
    if (sgb_poisson_split(10000, 1.0 / 6.0, &s) != SGB_STATUS_OK) return 4;
    if (sgb_matrix_new(1, NULL, NULL, &a) != SGB_STATUS_NULL_POINTER) return 5;
    if (sgb_last_error_message() == NULL) return 6;
    sgb_matrix_free(a);
    printf("ok %s %.6f\n", sgb_version(), s.tail_abs);
    return 0;
}
"#;

/// Compiles a C program against the generated header and the static
/// library. Skipped when no C compiler or static library is available.
#[test]
fn c_program_links_and_runs() {
    let Some(cc) = ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
    else {
        eprintln!("skipping: no C compiler found");
        return;
    };
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(Path::parent).unwrap();
    let lib = profile_dir.join("libsemigroup_bench_ffi.a");
    if !lib.exists() {
        eprintln!("skipping: {} not built", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    let bin = dir.path().join("smoke");
    std::fs::write(&src, C_SMOKE).unwrap();
    let out = Command::new(cc)
        .arg(&src)
        .arg("-I")
        .arg(header_path().parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(out.status.success(), "C build failed: {}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "C smoke exited with {:?}", run.status.code());
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok 0.1.0"));
}
