//! C interface to `sosrf`. Matrices, diagonalizations and certificates live
//! behind opaque handles; data crosses the boundary as JSON strings in the
//! same formats the command-line tool reads and writes.
//!
//! Every fallible call returns a [`SosrfStatus`]. On failure the message is
//! available from [`sosrf_last_error`] on the same thread. Strings handed out
//! by the library are released with [`sosrf_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sosrf::schmudgen::{diagonalize, verify_diagonalization, DiagonalizationFile};
use sosrf::sos::{certify_matrix, verify_certificate, Certificate, Domain, SosOptions};
use sosrf::{Error, PolyMatrix};

/// Return codes. The numeric values match the exit codes of the `sosrf`
/// binary where both exist.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SosrfStatus {
    Ok = 0,
    InputError = 2,
    NotPsd = 3,
    NoCertificate = 4,
    InvalidCertificate = 5,
    NullPointer = 6,
    Panic = 7,
}

/// Symmetric polynomial matrix.
pub struct SosrfMatrix(PolyMatrix);

/// Diagonalization of a matrix together with its three relation residuals.
pub struct SosrfDiagonalization(DiagonalizationFile);

/// Sum-of-squares certificate.
pub struct SosrfCertificate(Certificate);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> SosrfStatus {
    match err {
        Error::NotPsd { .. } => SosrfStatus::NotPsd,
        Error::NoCertificate(_) => SosrfStatus::NoCertificate,
        Error::InvalidCertificate(_) => SosrfStatus::InvalidCertificate,
        _ => SosrfStatus::InputError,
    }
}

struct Fail(SosrfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

impl From<serde_json::Error> for Fail {
    fn from(e: serde_json::Error) -> Self {
        Fail(SosrfStatus::InputError, format!("json: {e}"))
    }
}

fn guard(body: impl FnOnce() -> Result<(), Fail>) -> SosrfStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SosrfStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SosrfStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(SosrfStatus::NullPointer, format!("{what} is null"))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(SosrfStatus::InputError, format!("{what} is not UTF-8")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    *out = CString::new(s).map_err(|_| Fail(SosrfStatus::InputError, "nul byte in output".into()))?.into_raw();
    Ok(())
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call into the library.
#[no_mangle]
pub extern "C" fn sosrf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by one of the `*_to_json` functions.
///
/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn sosrf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a matrix from `{"m":..,"n":..,"entries":[..]}`.
///
/// # Safety
/// `json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sosrf_matrix_from_json(json: *const c_char, out: *mut *mut SosrfMatrix) -> SosrfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let m: PolyMatrix = serde_json::from_str(read_str(json, "json")?)?;
        put(out, SosrfMatrix(m));
        Ok(())
    })
}

/// # Safety
/// `m` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sosrf_matrix_to_json(m: *const SosrfMatrix, out: *mut *mut c_char) -> SosrfStatus {
    guard(|| {
        let m = borrow(m, "matrix")?;
        if out.is_null() {
            return Err(null("out"));
        }
        put_string(out, serde_json::to_string(&m.0)?)
    })
}

/// # Safety
/// `m` must come from this library or be null, and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sosrf_matrix_free(m: *mut SosrfMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Diagonalizes `m` and computes the relation residuals.
///
/// # Safety
/// `m` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sosrf_diagonalize(m: *const SosrfMatrix, out: *mut *mut SosrfDiagonalization) -> SosrfStatus {
    guard(|| {
        let m = borrow(m, "matrix")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let diagonalization = diagonalize(&m.0)?;
        let residuals = verify_diagonalization(&m.0, &diagonalization)?;
        put(out, SosrfDiagonalization(DiagonalizationFile { diagonalization, residuals }));
        Ok(())
    })
}

/// Copies the three relation residuals into `out[0..3]`.
///
/// # Safety
/// `d` must be a live handle; `out` must point to three writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sosrf_diagonalization_residuals(d: *const SosrfDiagonalization, out: *mut f64) -> SosrfStatus {
    guard(|| {
        let d = borrow(d, "diagonalization")?;
        if out.is_null() {
            return Err(null("out"));
        }
        ptr::copy_nonoverlapping(d.0.residuals.as_ptr(), out, 3);
        Ok(())
    })
}

/// # Safety
/// `d` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sosrf_diagonalization_to_json(d: *const SosrfDiagonalization, out: *mut *mut c_char) -> SosrfStatus {
    guard(|| {
        let d = borrow(d, "diagonalization")?;
        if out.is_null() {
            return Err(null("out"));
        }
        put_string(out, serde_json::to_string(&d.0)?)
    })
}

/// # Safety
/// `d` must come from this library or be null, and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sosrf_diagonalization_free(d: *mut SosrfDiagonalization) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Builds a certificate for `m` over `domain` ("rn", "rline", "halfline",
/// "interval:a:b", "strip:a:b"). `seed` drives the random starts of the
/// rank search.
///
/// # Safety
/// `m` must be a live handle, `domain` a nul-terminated string and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn sosrf_certify(
    m: *const SosrfMatrix,
    domain: *const c_char,
    seed: u64,
    out: *mut *mut SosrfCertificate,
) -> SosrfStatus {
    guard(|| {
        let m = borrow(m, "matrix")?;
        let domain: Domain = read_str(domain, "domain")?.parse()?;
        if out.is_null() {
            return Err(null("out"));
        }
        let opts = SosOptions { seed, ..SosOptions::default() };
        put(out, SosrfCertificate(certify_matrix(&m.0, domain, &opts)?));
        Ok(())
    })
}

/// # Safety
/// `json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sosrf_certificate_from_json(json: *const c_char, out: *mut *mut SosrfCertificate) -> SosrfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let c: Certificate = serde_json::from_str(read_str(json, "json")?)?;
        put(out, SosrfCertificate(c));
        Ok(())
    })
}

/// # Safety
/// `c` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sosrf_certificate_to_json(c: *const SosrfCertificate, out: *mut *mut c_char) -> SosrfStatus {
    guard(|| {
        let c = borrow(c, "certificate")?;
        if out.is_null() {
            return Err(null("out"));
        }
        put_string(out, serde_json::to_string(&c.0)?)
    })
}

/// # Safety
/// `c` must come from this library or be null, and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sosrf_certificate_free(c: *mut SosrfCertificate) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Writes the relative residual of `c` against `m` to `residual`. A residual
/// above `tol` gives `SOSRF_STATUS_INVALID_CERTIFICATE`, with `residual`
/// still filled in.
///
/// # Safety
/// `m` and `c` must be live handles; `residual` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sosrf_verify(
    m: *const SosrfMatrix,
    c: *const SosrfCertificate,
    tol: f64,
    residual: *mut f64,
) -> SosrfStatus {
    guard(|| {
        let m = borrow(m, "matrix")?;
        let c = borrow(c, "certificate")?;
        if residual.is_null() {
            return Err(null("residual"));
        }
        let r = verify_certificate(&m.0, &c.0)?;
        *residual = r;
        if r > tol {
            return Err(Fail(SosrfStatus::InvalidCertificate, format!("residual {r:e} exceeds {tol:e}")));
        }
        Ok(())
    })
}
