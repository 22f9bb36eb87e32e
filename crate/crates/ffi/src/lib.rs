//! C ABI for trapfield.
//!
//! Every function returns a [`TfStatus`]; results go through out-pointers.
//! On failure the message is available from [`tf_last_error_message`] on the
//! same thread. Environments are opaque handles owned by the caller and
//! released with [`tf_environment_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use trapfield::duality::verify_duality_one;
use trapfield::environment::build_environment;
use trapfield::fields::theta_n;
use trapfield::fractional::mittag_leffler;
use trapfield::{Environment, Error, TailLaw};

/// Status codes returned by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    StateSpaceTooLarge = 4,
    BufferTooSmall = 5,
    Panic = 6,
    Other = 7,
}

/// Opaque trap environment.
pub struct TfEnvironment {
    inner: Environment,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> TfStatus {
    match err {
        Error::InvalidParameter { .. } | Error::InvalidVariate(_) | Error::Undefined(_) | Error::Config(_) => {
            TfStatus::InvalidArgument
        }
        Error::Numerical { .. } | Error::Stiffness(_) | Error::EventCap { .. } => TfStatus::Numerical,
        Error::StateSpaceTooLarge { .. } => TfStatus::StateSpaceTooLarge,
        _ => TfStatus::Other,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (TfStatus, String)>) -> TfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TfStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            TfStatus::Panic
        }
    }
}

fn lib(err: Error) -> (TfStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(name: &str) -> (TfStatus, String) {
    (TfStatus::NullPointer, format!("`{name}` is NULL"))
}

/// Message of the last failure on this thread, or NULL if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Samples a trap environment on the torus `{-L..L}^d` with tail exponent
/// `beta`.
///
/// # Safety
/// `out` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn tf_environment_new(
    d: usize,
    half_width: usize,
    beta: f64,
    seed: u64,
    out: *mut *mut TfEnvironment,
) -> TfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let law = TailLaw::new(beta).map_err(lib)?;
        let inner = build_environment(d, half_width, law, seed).map_err(lib)?;
        *out = Box::into_raw(Box::new(TfEnvironment { inner }));
        Ok(())
    })
}

/// Builds an environment on the torus `{-L..L}^d` from explicit depths.
///
/// # Safety
/// `alpha` must point to `len` readable values and `out` must be valid for
/// writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn tf_environment_from_alpha(
    d: usize,
    half_width: usize,
    beta: f64,
    alpha: *const u64,
    len: usize,
    out: *mut *mut TfEnvironment,
) -> TfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if alpha.is_null() {
            return Err(null("alpha"));
        }
        let geometry = trapfield::Geometry::torus(d, half_width).map_err(lib)?;
        let law = TailLaw::new(beta).map_err(lib)?;
        let depths = std::slice::from_raw_parts(alpha, len).to_vec();
        let inner = Environment::from_alpha(geometry, law, depths).map_err(lib)?;
        *out = Box::into_raw(Box::new(TfEnvironment { inner }));
        Ok(())
    })
}

/// Releases an environment. NULL is ignored.
///
/// # Safety
/// `env` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tf_environment_free(env: *mut TfEnvironment) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Number of lattice sites.
///
/// # Safety
/// `env` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn tf_environment_site_count(env: *const TfEnvironment, out: *mut usize) -> TfStatus {
    guard(|| {
        let env = env.as_ref().ok_or_else(|| null("env"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = env.inner.num_sites();
        Ok(())
    })
}

/// Copies the trap depths into `buf`, which must hold at least the site
/// count.
///
/// # Safety
/// `env` must be a live handle and `buf` valid for writing `len` values.
#[no_mangle]
pub unsafe extern "C" fn tf_environment_copy_alpha(env: *const TfEnvironment, buf: *mut u64, len: usize) -> TfStatus {
    guard(|| {
        let env = env.as_ref().ok_or_else(|| null("env"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let alpha = env.inner.alpha();
        if len < alpha.len() {
            return Err((
                TfStatus::BufferTooSmall,
                format!("buffer holds {len} values, {} needed", alpha.len()),
            ));
        }
        std::slice::from_raw_parts_mut(buf, alpha.len()).copy_from_slice(alpha);
        Ok(())
    })
}

/// Time scale `theta_n`.
///
/// # Safety
/// `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn tf_theta_n(n: f64, d: usize, beta: f64, out: *mut f64) -> TfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = theta_n(n, d, beta).map_err(lib)?;
        Ok(())
    })
}

/// `E_beta(z)` for `0 < beta <= 1`, `z <= 0`.
///
/// # Safety
/// `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn tf_mittag_leffler(beta: f64, z: f64, out: *mut f64) -> TfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = mittag_leffler(beta, z).map_err(lib)?;
        Ok(())
    })
}

/// Checks the one-particle duality relation at site `x` and time `t` for the
/// configuration `eta` on a small environment. Writes both sides and whether
/// they agree within tolerance.
///
/// # Safety
/// `env` must be a live handle, `eta` readable for `len` values and the
/// out-pointers valid for writing.
#[no_mangle]
pub unsafe extern "C" fn tf_duality_verify_one(
    env: *const TfEnvironment,
    a: f64,
    eta: *const u64,
    len: usize,
    x: usize,
    t: f64,
    lhs: *mut f64,
    rhs: *mut f64,
    pass: *mut bool,
) -> TfStatus {
    guard(|| {
        let env = env.as_ref().ok_or_else(|| null("env"))?;
        if eta.is_null() {
            return Err(null("eta"));
        }
        if lhs.is_null() || rhs.is_null() || pass.is_null() {
            return Err(null("lhs/rhs/pass"));
        }
        let eta = std::slice::from_raw_parts(eta, len);
        let report = verify_duality_one(&env.inner, a, eta, x, t).map_err(lib)?;
        *lhs = report.lhs;
        *rhs = report.rhs;
        *pass = report.pass;
        Ok(())
    })
}
