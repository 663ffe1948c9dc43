//! C ABI for `semigroup-bench`.
//!
//! Matrices cross the boundary as opaque `SgbMatrix` handles created by
//! `sgb_matrix_new`, `sgb_matrix_from_json`, `sgb_make_operator`,
//! `sgb_expm` or `sgb_powm` and released with `sgb_matrix_free`. Dense data
//! is exchanged row-major as separate real and imaginary `double` arrays.
//!
//! Fallible calls return an `SgbStatus` and write results through out
//! pointers. On failure a description is available from
//! `sgb_last_error_message` on the same thread until the next failing call.
//! Panics never unwind into the caller; they surface as `SGB_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use semigroup_bench::approximants::{euler_approx, exact_semigroup, resolvent_defect, trotter_approx};
use semigroup_bench::defects::{
    bound_cube_root, bound_lemma2, bound_quasisectorial, bound_sqrt_n, bound_thm22, chernoff_defect_norm, ritt_constant,
};
use semigroup_bench::families::{make_operator, FamilySpec};
use semigroup_bench::linalg::{expm, opnorm, powm, C64};
use semigroup_bench::poisson::{poisson_abs_moment, poisson_split, poisson_var_sum};
use semigroup_bench::rates::fit_power;
use semigroup_bench::regions::{min_semi_angle_with, QuasiSectoriality};
use semigroup_bench::{Error, Mat};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SgbStatus {
    Ok = 0,
    /// Invalid argument (shape, range, non-finite value, malformed JSON).
    Input = 1,
    /// Numerical failure such as overflow.
    Computation = 2,
    /// Matrix singular or too ill-conditioned to invert.
    Singular = 3,
    /// A Chernoff family broke its contract.
    FamilyContract = 4,
    /// Too few usable points for a power-law fit.
    Fit = 5,
    /// Generated operator failed its class check.
    Generation = 6,
    Io = 7,
    /// A required pointer argument was null.
    NullPointer = 8,
    /// Internal panic caught at the boundary.
    Panic = 9,
}

/// Opaque dense complex square matrix.
pub struct SgbMatrix {
    inner: Mat,
}

/// Central/tail split of the Poisson(n) absolute moment at `ε_n = n^{δ+½}`.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct SgbPoissonSplit {
    pub n: u64,
    pub delta: f64,
    pub epsilon_n: f64,
    pub central_abs: f64,
    pub tail_abs: f64,
    pub tail_prob: f64,
    pub var_sum: f64,
}

/// Measured Ritt constant `max_{1≤n≤N} (n+1)‖Cⁿ(1−C)‖`.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct SgbRitt {
    pub k_hat: f64,
    pub n_max: u64,
    pub argmax_n: u64,
    /// True when the maximum sits at `n_max`, so the estimate may be low.
    pub max_at_boundary: bool,
}

/// `value ≈ prefactor · n^{−exponent}` with RMS log residual.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct SgbPowerFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub residual: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

enum Fail {
    Lib(Error),
    Null(&'static str),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn status_of(e: &Error) -> SgbStatus {
    match e {
        Error::Input(_) | Error::Json(_) => SgbStatus::Input,
        Error::Computation(_) => SgbStatus::Computation,
        Error::Singular { .. } => SgbStatus::Singular,
        Error::FamilyContract(_) => SgbStatus::FamilyContract,
        Error::Fit(_) => SgbStatus::Fit,
        Error::Generation(_) => SgbStatus::Generation,
        Error::Io(_) => SgbStatus::Io,
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn call(f: impl FnOnce() -> Result<(), Fail>) -> SgbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SgbStatus::Ok,
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            SgbStatus::NullPointer
        }
        Err(_) => {
            set_error("internal panic".into());
            SgbStatus::Panic
        }
    }
}

unsafe fn mat_ref<'a>(m: *const SgbMatrix, what: &'static str) -> Result<&'a Mat, Fail> {
    // SAFETY: the caller passes either null or a live handle from this library.
    unsafe { m.as_ref() }.map(|h| &h.inner).ok_or(Fail::Null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &'static str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null(what));
    }
    // SAFETY: non-null and, per the caller contract, valid for writes.
    unsafe { out.write(value) };
    Ok(())
}

unsafe fn write_handle(out: *mut *mut SgbMatrix, m: Mat) -> Result<(), Fail> {
    let h = Box::into_raw(Box::new(SgbMatrix { inner: m }));
    // SAFETY: as for `write_out`.
    unsafe { write_out(out, h, "out") }.inspect_err(|_| {
        // SAFETY: `h` was just created by `Box::into_raw` and never shared.
        drop(unsafe { Box::from_raw(h) });
    })
}

unsafe fn c_str<'a>(s: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(Fail::Null(what));
    }
    // SAFETY: non-null, NUL-terminated per the caller contract.
    unsafe { CStr::from_ptr(s) }.to_str().map_err(|_| Fail::Lib(Error::Input(format!("{what} is not valid UTF-8"))))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sgb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sgb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a `dim × dim` matrix from row-major real and imaginary parts.
/// `im` may be null for a real matrix.
///
/// # Safety
/// `re` (and `im` when non-null) must point to `dim*dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sgb_matrix_new(
    dim: usize,
    re: *const f64,
    im: *const f64,
    out: *mut *mut SgbMatrix,
) -> SgbStatus {
    call(|| {
        if re.is_null() {
            return Err(Fail::Null("re"));
        }
        let len = dim.checked_mul(dim).ok_or_else(|| Error::Input("dimension overflow".into()))?;
        // SAFETY: caller guarantees `dim*dim` readable doubles.
        let re = unsafe { std::slice::from_raw_parts(re, len) };
        let im = if im.is_null() {
            None
        } else {
            // SAFETY: as above.
            Some(unsafe { std::slice::from_raw_parts(im, len) })
        };
        let rows: Vec<Vec<C64>> = (0..dim)
            .map(|i| (0..dim).map(|j| C64::new(re[i * dim + j], im.map_or(0.0, |v| v[i * dim + j]))).collect())
            .collect();
        let m = Mat::from_rows(&rows)?;
        unsafe { write_handle(out, m) }
    })
}

/// Parses the shared matrix literal `{"dim": d, "re": [[..]], "im": [[..]]}`.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sgb_matrix_from_json(json: *const c_char, out: *mut *mut SgbMatrix) -> SgbStatus {
    call(|| {
        let s = unsafe { c_str(json, "json") }?;
        let m = Mat::from_json_str(s)?;
        unsafe { write_handle(out, m) }
    })
}

/// Builds a seeded test operator from a family spec JSON,
/// e.g. `{"kind": "random_contraction", "dim": 4, "seed": 7}`.
///
/// # Safety
/// `spec_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sgb_make_operator(spec_json: *const c_char, out: *mut *mut SgbMatrix) -> SgbStatus {
    call(|| {
        let s = unsafe { c_str(spec_json, "spec_json") }?;
        let spec: FamilySpec = serde_json::from_str(s).map_err(Error::from)?;
        let m = make_operator(&spec)?.mat;
        unsafe { write_handle(out, m) }
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `m` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sgb_matrix_free(m: *mut SgbMatrix) {
    if !m.is_null() {
        // SAFETY: ownership returns from the caller.
        drop(unsafe { Box::from_raw(m) });
    }
}

/// Dimension of the matrix, or 0 for null.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sgb_matrix_dim(m: *const SgbMatrix) -> usize {
    unsafe { m.as_ref() }.map_or(0, |h| h.inner.dim())
}

/// Copies the entries row-major into `re` and `im` (either may be null),
/// each of capacity `len ≥ dim*dim`.
///
/// # Safety
/// Non-null buffers must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sgb_matrix_copy_out(m: *const SgbMatrix, re: *mut f64, im: *mut f64, len: usize) -> SgbStatus {
    call(|| {
        let m = unsafe { mat_ref(m, "m") }?;
        let d = m.dim();
        if len < d * d {
            return Err(Error::Input(format!("buffer holds {len} entries, need {}", d * d)).into());
        }
        for i in 0..d {
            for j in 0..d {
                let z = m.get(i, j);
                if !re.is_null() {
                    unsafe { re.add(i * d + j).write(z.re) };
                }
                if !im.is_null() {
                    unsafe { im.add(i * d + j).write(z.im) };
                }
            }
        }
        Ok(())
    })
}

/// Writes the NUL-terminated fingerprint into `buf` (capacity `len`).
///
/// # Safety
/// `buf` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn sgb_matrix_fingerprint(m: *const SgbMatrix, buf: *mut c_char, len: usize) -> SgbStatus {
    call(|| {
        let m = unsafe { mat_ref(m, "m") }?;
        if buf.is_null() {
            return Err(Fail::Null("buf"));
        }
        let fp = m.fingerprint();
        if fp.len() + 1 > len {
            return Err(Error::Input(format!("buffer too small: need {} bytes", fp.len() + 1)).into());
        }
        unsafe {
            ptr::copy_nonoverlapping(fp.as_ptr().cast::<c_char>(), buf, fp.len());
            buf.add(fp.len()).write(0);
        }
        Ok(())
    })
}

/// Spectral norm.
///
/// # Safety
/// `m` a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sgb_opnorm(m: *const SgbMatrix, out: *mut f64) -> SgbStatus {
    call(|| {
        let v = opnorm(unsafe { mat_ref(m, "m") }?)?;
        unsafe { write_out(out, v, "out") }
    })
}

/// Matrix exponential into a new handle.
///
/// # Safety
/// `m` a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sgb_expm(m: *const SgbMatrix, out: *mut *mut SgbMatrix) -> SgbStatus {
    call(|| {
        let e = expm(unsafe { mat_ref(m, "m") }?)?;
        unsafe { write_handle(out, e) }
    })
}

/// `mⁿ` into a new handle.
///
/// # Safety
/// `m` a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sgb_powm(m: *const SgbMatrix, n: u64, out: *mut *mut SgbMatrix) -> SgbStatus {
    call(|| {
        let p = powm(unsafe { mat_ref(m, "m") }?, n);
        unsafe { write_handle(out, p) }
    })
}

/// `‖Cⁿ − e^{n(C−1)}‖`.
///
/// # Safety
/// `c` a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sgb_chernoff_defect_norm(c: *const SgbMatrix, n: u64, out: *mut f64) -> SgbStatus {
    call(|| {
        let v = chernoff_defect_norm(unsafe { mat_ref(c, "c") }?, n)?;
        unsafe { write_out(out, v, "out") }
    })
}

/// `√n · drive`.
#[no_mangle]
pub extern "C" fn sgb_bound_sqrt_n(n: u64, drive: f64) -> f64 {
    bound_sqrt_n(n, drive)
}

/// `(n^{−2δ} + n^{δ+½}) · drive`.
#[no_mangle]
pub extern "C" fn sgb_bound_lemma2(n: u64, delta: f64, drive: f64) -> f64 {
    bound_lemma2(n, delta, drive)
}

/// `2n^{−2δ}‖x‖ + n^{δ+½} · drive`.
#[no_mangle]
pub extern "C" fn sgb_bound_thm22(n: u64, delta: f64, x_norm: f64, drive: f64) -> f64 {
    bound_thm22(n, delta, x_norm, drive)
}

/// `2n^{−2δ} + 2K n^{δ−½}`.
#[no_mangle]
pub extern "C" fn sgb_bound_quasisectorial(n: u64, delta: f64, k: f64) -> f64 {
    bound_quasisectorial(n, delta, k)
}

/// `(2K + 2) / n^{1/3}`.
#[no_mangle]
pub extern "C" fn sgb_bound_cube_root(n: u64, k: f64) -> f64 {
    bound_cube_root(n, k)
}

/// Ritt constant over `1 ≤ n ≤ n_max` (`n_max ≥ 16`).
///
/// # Safety
/// `c` a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sgb_ritt_constant(c: *const SgbMatrix, n_max: u64, out: *mut SgbRitt) -> SgbStatus {
    call(|| {
        let r = ritt_constant(unsafe { mat_ref(c, "c") }?, n_max)?;
        let v = SgbRitt { k_hat: r.k_hat, n_max: r.n_max, argmax_n: r.argmax_n, max_at_boundary: r.max_at_boundary };
        unsafe { write_out(out, v, "out") }
    })
}

/// Least `α` with `W(m) ⊆ D_α`, sampled at `n_angles ≥ 64` directions.
/// `*quasi_sectorial` is false (and `*alpha` NaN) when no `α < π/2` works.
///
/// # Safety
/// `m` a live handle, out pointers writable.
#[no_mangle]
pub unsafe extern "C" fn sgb_min_semi_angle(
    m: *const SgbMatrix,
    n_angles: usize,
    alpha: *mut f64,
    quasi_sectorial: *mut bool,
) -> SgbStatus {
    call(|| {
        let q = min_semi_angle_with(unsafe { mat_ref(m, "m") }?, n_angles)?;
        let (a, ok) = match q {
            QuasiSectoriality::SemiAngle(a) => (a.radians(), true),
            QuasiSectoriality::NotQuasiSectorial => (f64::NAN, false),
        };
        unsafe {
            write_out(alpha, a, "alpha")?;
            write_out(quasi_sectorial, ok, "quasi_sectorial")
        }
    })
}

/// `Σ_m (m−n)² P{N=m}` for `N ~ Poisson(n)`.
///
/// # Safety
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sgb_poisson_var_sum(n: u64, out: *mut f64) -> SgbStatus {
    call(|| unsafe { write_out(out, poisson_var_sum(n)?, "out") })
}

/// `Σ_m |m−n| P{N=m}` for `N ~ Poisson(n)`.
///
/// # Safety
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sgb_poisson_abs_moment(n: u64, out: *mut f64) -> SgbStatus {
    call(|| unsafe { write_out(out, poisson_abs_moment(n)?, "out") })
}

/// Central/tail split at `ε_n = n^{δ+½}`, `δ ∈ [−½, ½]`.
///
/// # Safety
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sgb_poisson_split(n: u64, delta: f64, out: *mut SgbPoissonSplit) -> SgbStatus {
    call(|| {
        let s = poisson_split(n, delta)?;
        let v = SgbPoissonSplit {
            n: s.n,
            delta: s.delta,
            epsilon_n: s.epsilon_n,
            central_abs: s.central_abs,
            tail_abs: s.tail_abs,
            tail_prob: s.tail_prob,
            var_sum: s.var_sum,
        };
        unsafe { write_out(out, v, "out") }
    })
}

/// `‖(1 + tA/n)^{−n} − e^{−tA}‖`.
///
/// # Safety
/// `a` a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sgb_euler_defect(a: *const SgbMatrix, t: f64, n: u64, out: *mut f64) -> SgbStatus {
    call(|| {
        let a = unsafe { mat_ref(a, "a") }?;
        let d = &euler_approx(a, t, n)? - &exact_semigroup(a, t)?;
        unsafe { write_out(out, opnorm(&d)?, "out") }
    })
}

/// `‖(e^{−tA/n} e^{−tB/n})ⁿ − e^{−t(A+B)}‖`.
///
/// # Safety
/// `a`, `b` live handles, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sgb_trotter_defect(
    a: *const SgbMatrix,
    b: *const SgbMatrix,
    t: f64,
    n: u64,
    out: *mut f64,
) -> SgbStatus {
    call(|| {
        let a = unsafe { mat_ref(a, "a") }?;
        let b = unsafe { mat_ref(b, "b") }?;
        if a.dim() != b.dim() {
            return Err(Error::Input("A and B differ in dimension".into()).into());
        }
        let d = &trotter_approx(a, b, t, n)? - &exact_semigroup(&(a + b), t)?;
        unsafe { write_out(out, opnorm(&d)?, "out") }
    })
}

/// Resolvent defect at step `s`, by direct subtraction and by the product form.
///
/// # Safety
/// `a` a live handle, out pointers writable.
#[no_mangle]
pub unsafe extern "C" fn sgb_resolvent_defect(
    a: *const SgbMatrix,
    s: f64,
    zeta_re: f64,
    zeta_im: f64,
    defect: *mut f64,
    product_form: *mut f64,
) -> SgbStatus {
    call(|| {
        let r = resolvent_defect(unsafe { mat_ref(a, "a") }?, s, C64::new(zeta_re, zeta_im))?;
        unsafe {
            write_out(defect, r.defect, "defect")?;
            write_out(product_form, r.product_form, "product_form")
        }
    })
}

/// Least-squares fit of `ln value` against `ln n` over points with `value > 1e-14`.
///
/// # Safety
/// `n` and `values` must hold `len` entries; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sgb_fit_power(
    n: *const u64,
    values: *const f64,
    len: usize,
    out: *mut SgbPowerFit,
) -> SgbStatus {
    call(|| {
        if n.is_null() || values.is_null() {
            return Err(Fail::Null("n/values"));
        }
        // SAFETY: caller guarantees `len` readable entries in each array.
        let (ns, vs) = unsafe { (std::slice::from_raw_parts(n, len), std::slice::from_raw_parts(values, len)) };
        let pts: Vec<(f64, f64)> = ns.iter().zip(vs).map(|(&n, &v)| (n as f64, v)).collect();
        let f = fit_power(&pts)?;
        let v = SgbPowerFit { exponent: f.exponent, prefactor: f.prefactor, residual: f.residual };
        unsafe { write_out(out, v, "out") }
    })
}
