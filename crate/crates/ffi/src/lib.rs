// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! C ABI for `qbayes`.
//!
//! Every function returns a [`QbStatus`]. On failure a message is available
//! from [`qb_last_error`] on the same thread. Ensembles and POVMs are opaque
//! handles released with their `_free` function. Output pointers are only
//! written on success.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};


use qbayes::bayes::{bayes_update, counts_update, posterior_moments, posterior_predictive_counts, qubit_counts_update};
use qbayes::exchangeable::marginal_state;
use qbayes::maxent::maxent_qubit_z;
use qbayes::measurement::{povm_from_operation, projective_spin_povm, tetrahedral_sic_povm};
use qbayes::priors::{discretize_prior, PriorSpec};
use qbayes::{BlochVector, Ensemble, Error, Povm};

/// Result code of every exported function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidState = 3,
    Dimension = 4,
    Capacity = 5,
    ImpossibleOutcome = 6,
    InvalidPrior = 7,
    NoInteriorSolution = 8,
    Config = 9,
    Io = 10,
    Parse = 11,
    BufferTooSmall = 12,
    Panic = 13,
}

/// Opaque weighted set of density operators.
pub struct QbEnsemble(Ensemble);

/// Opaque POVM.
pub struct QbPovm(Povm);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> QbStatus {
    match e {
        Error::InvalidState(_) => QbStatus::InvalidState,
        Error::Dimension(_) => QbStatus::Dimension,
        Error::Capacity { .. } => QbStatus::Capacity,
        Error::ImpossibleOutcome { .. } => QbStatus::ImpossibleOutcome,
        Error::InvalidArgument(_) => QbStatus::InvalidArgument,
        Error::InvalidPrior(_) => QbStatus::InvalidPrior,
        Error::NoInteriorSolution(_) => QbStatus::NoInteriorSolution,
        Error::Config { .. } => QbStatus::Config,
        Error::Io(_) => QbStatus::Io,
        Error::Json(_) | Error::Csv(_) => QbStatus::Parse,
    }
}

struct Failure(QbStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure(QbStatus::Parse, e.to_string())
    }
}

fn null(name: &str) -> Failure {
    Failure(QbStatus::NullPointer, format!("`{name}` is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> QbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            QbStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(&message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            QbStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, name: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn c_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(QbStatus::InvalidArgument, format!("`{name}` is not UTF-8")))
}

unsafe fn axis3(p: *const f64, name: &str) -> Result<[f64; 3], Failure> {
    let s = slice(p, 3, name)?;
    Ok([s[0], s[1], s[2]])
}

unsafe fn put<T>(out: *mut *mut T, value: T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(name));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_scalar<T>(out: *mut T, value: T) {
    if !out.is_null() {
        *out = value;
    }
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn qb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, NUL-terminated, static.
#[no_mangle]
pub extern "C" fn qb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Ensemble of `n` qubit atoms. `weights` has `n` entries summing to one;
/// `bloch` holds `3n` coordinates.
#[no_mangle]
pub unsafe extern "C" fn qb_ensemble_from_bloch(
    weights: *const f64,
    bloch: *const f64,
    n: usize,
    out: *mut *mut QbEnsemble,
) -> QbStatus {
    guard(|| {
        let w = slice(weights, n, "weights")?.to_vec();
        let b = slice(bloch, 3 * n, "bloch")?;
        let points = b
            .chunks_exact(3)
            .map(|c| BlochVector::new(c[0], c[1], c[2]))
            .collect::<Result<Vec<_>, _>>()?;
        put(out, QbEnsemble(Ensemble::from_bloch(w, &points)?), "out")
    })
}

/// Discretizes a prior given as JSON.
#[no_mangle]
pub unsafe extern "C" fn qb_ensemble_from_prior_json(json: *const c_char, out: *mut *mut QbEnsemble) -> QbStatus {
    guard(|| {
        let spec: PriorSpec = serde_json::from_str(c_str(json, "json")?)?;
        put(out, QbEnsemble(discretize_prior(&spec)?), "out")
    })
}

/// Parses an ensemble in its JSON form `{dim, atoms}`.
#[no_mangle]
pub unsafe extern "C" fn qb_ensemble_from_json(json: *const c_char, out: *mut *mut QbEnsemble) -> QbStatus {
    guard(|| {
        let e: Ensemble = serde_json::from_str(c_str(json, "json")?)?;
        put(out, QbEnsemble(e), "out")
    })
}

/// Writes the JSON form into `buf` including the terminating NUL. `needed`
/// receives the required capacity; a short buffer yields
/// `QB_STATUS_BUFFER_TOO_SMALL` and leaves `buf` untouched.
#[no_mangle]
pub unsafe extern "C" fn qb_ensemble_to_json(
    e: *const QbEnsemble,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> QbStatus {
    guard(|| {
        let json = serde_json::to_string(&deref(e, "ensemble")?.0)?;
        put_scalar(needed, json.len() + 1);
        if cap < json.len() + 1 {
            return Err(Failure(
                QbStatus::BufferTooSmall,
                format!("need {} bytes, have {cap}", json.len() + 1),
            ));
        }
        let dst = out_slice(buf.cast::<u8>(), cap, "buf")?;
        dst[..json.len()].copy_from_slice(json.as_bytes());
        dst[json.len()] = 0;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn qb_ensemble_free(e: *mut QbEnsemble) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

#[no_mangle]
pub unsafe extern "C" fn qb_ensemble_len(e: *const QbEnsemble, out: *mut usize) -> QbStatus {
    guard(|| {
        let n = deref(e, "ensemble")?.0.len();
        *out.as_mut().ok_or_else(|| null("out"))? = n;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn qb_ensemble_dim(e: *const QbEnsemble, out: *mut usize) -> QbStatus {
    guard(|| {
        let d = deref(e, "ensemble")?.0.dim();
        *out.as_mut().ok_or_else(|| null("out"))? = d;
        Ok(())
    })
}

/// Copies the weights into `out`, which must hold `qb_ensemble_len` values.
#[no_mangle]
pub unsafe extern "C" fn qb_ensemble_weights(e: *const QbEnsemble, out: *mut f64, cap: usize) -> QbStatus {
    guard(|| {
        let w = deref(e, "ensemble")?.0.weights();
        if cap < w.len() {
            return Err(Failure(QbStatus::BufferTooSmall, format!("need {} values, have {cap}", w.len())));
        }
        out_slice(out, w.len(), "out")?.copy_from_slice(w);
        Ok(())
    })
}

/// Bloch vector of the single-copy marginal of a qubit ensemble.
#[no_mangle]
pub unsafe extern "C" fn qb_ensemble_marginal_bloch(e: *const QbEnsemble, out: *mut f64) -> QbStatus {
    guard(|| {
        let e = &deref(e, "ensemble")?.0;
        let m = posterior_moments(e)?;
        out_slice(out, 3, "out")?.copy_from_slice(&m.mean_bloch.to_array());
        Ok(())
    })
}

/// Marginal state as `2·dim²` doubles: row-major (re, im) pairs.
#[no_mangle]
pub unsafe extern "C" fn qb_ensemble_marginal_state(e: *const QbEnsemble, out: *mut f64, cap: usize) -> QbStatus {
    guard(|| {
        let e = &deref(e, "ensemble")?.0;
        write_matrix(marginal_state(e).matrix(), out, cap)
    })
}

unsafe fn write_matrix(m: &qbayes::ComplexMatrix, out: *mut f64, cap: usize) -> Result<(), Failure> {
    let d = m.dim();
    if cap < 2 * d * d {
        return Err(Failure(QbStatus::BufferTooSmall, format!("need {} values, have {cap}", 2 * d * d)));
    }
    let dst = out_slice(out, 2 * d * d, "out")?;
    for r in 0..d {
        for c in 0..d {
            let v = m.get(r, c);
            dst[2 * (r * d + c)] = v.re;
            dst[2 * (r * d + c) + 1] = v.im;
        }
    }
    Ok(())
}

/// Tetrahedral SIC POVM on a qubit.
#[no_mangle]
pub unsafe extern "C" fn qb_povm_sic(out: *mut *mut QbPovm) -> QbStatus {
    guard(|| put(out, QbPovm(tetrahedral_sic_povm()), "out"))
}

/// Spin measurement along a unit `axis`; outcome 0 is `+1`.
#[no_mangle]
pub unsafe extern "C" fn qb_povm_spin(axis: *const f64, out: *mut *mut QbPovm) -> QbStatus {
    guard(|| {
        let op = projective_spin_povm(axis3(axis, "axis")?)?;
        put(out, QbPovm(povm_from_operation(&op)), "out")
    })
}

/// Parses a POVM in its JSON form `{dim, effects}`.
#[no_mangle]
pub unsafe extern "C" fn qb_povm_from_json(json: *const c_char, out: *mut *mut QbPovm) -> QbStatus {
    guard(|| {
        let p: Povm = serde_json::from_str(c_str(json, "json")?)?;
        put(out, QbPovm(p), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn qb_povm_free(p: *mut QbPovm) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

#[no_mangle]
pub unsafe extern "C" fn qb_povm_len(p: *const QbPovm, out: *mut usize) -> QbStatus {
    guard(|| {
        let n = deref(p, "povm")?.0.len();
        *out.as_mut().ok_or_else(|| null("out"))? = n;
        Ok(())
    })
}

/// Posterior after one outcome. `p_k` may be null.
#[no_mangle]
pub unsafe extern "C" fn qb_bayes_update(
    prior: *const QbEnsemble,
    povm: *const QbPovm,
    outcome: usize,
    posterior: *mut *mut QbEnsemble,
    p_k: *mut f64,
) -> QbStatus {
    guard(|| {
        if posterior.is_null() {
            return Err(null("posterior"));
        }
        let (post, p) = bayes_update(&deref(prior, "prior")?.0, &deref(povm, "povm")?.0, outcome)?;
        put(posterior, QbEnsemble(post), "posterior")?;
        put_scalar(p_k, p);
        Ok(())
    })
}

/// Posterior after outcome counts of one POVM. `log_evidence` may be null.
#[no_mangle]
pub unsafe extern "C" fn qb_counts_update(
    prior: *const QbEnsemble,
    povm: *const QbPovm,
    counts: *const u64,
    n: usize,
    posterior: *mut *mut QbEnsemble,
    log_evidence: *mut f64,
) -> QbStatus {
    guard(|| {
        if posterior.is_null() {
            return Err(null("posterior"));
        }
        let c = slice(counts, n, "counts")?;
        let u = counts_update(&deref(prior, "prior")?.0, &deref(povm, "povm")?.0, c)?;
        put(posterior, QbEnsemble(u.posterior), "posterior")?;
        put_scalar(log_evidence, u.log_evidence);
        Ok(())
    })
}

/// Posterior after `n_plus` results `+1` and `n_minus` results `−1` along
/// `axis`.
#[no_mangle]
pub unsafe extern "C" fn qb_qubit_counts_update(
    prior: *const QbEnsemble,
    axis: *const f64,
    n_plus: u64,
    n_minus: u64,
    posterior: *mut *mut QbEnsemble,
) -> QbStatus {
    guard(|| {
        if posterior.is_null() {
            return Err(null("posterior"));
        }
        let post = qubit_counts_update(&deref(prior, "prior")?.0, axis3(axis, "axis")?, n_plus, n_minus)?;
        put(posterior, QbEnsemble(post), "posterior")
    })
}

/// Probabilities of `0..=n` results `+1` among `n` future spin measurements
/// along `axis`. `out` must hold `n + 1` values.
#[no_mangle]
pub unsafe extern "C" fn qb_posterior_predictive(
    e: *const QbEnsemble,
    axis: *const f64,
    n: usize,
    out: *mut f64,
    cap: usize,
) -> QbStatus {
    guard(|| {
        let e = &deref(e, "ensemble")?.0;
        let axis = axis3(axis, "axis")?;
        if cap < n.saturating_add(1) {
            return Err(Failure(QbStatus::BufferTooSmall, format!("need {} values, have {cap}", n.saturating_add(1))));
        }
        let p = posterior_predictive_counts(e, axis, n)?;
        out_slice(out, n + 1, "out")?.copy_from_slice(&p.probabilities);
        Ok(())
    })
}

/// Maximum-entropy qubit state with `⟨σ_z⟩ = e_z`, as 8 doubles: row-major
/// (re, im) pairs.
#[no_mangle]
pub unsafe extern "C" fn qb_maxent_qubit_z(e_z: f64, out: *mut f64) -> QbStatus {
    guard(|| {
        let r = maxent_qubit_z(e_z)?;
        write_matrix(r.matrix(), out, 8)
    })
}

