//! C ABI over `sbbts-core`.
//!
//! Every fallible entry point returns an [`SbbtsStatus`]; on failure the
//! message is available from [`sbbts_last_error`] on the same thread.
//! Models are opaque handles created by `sbbts_model_train` or
//! `sbbts_model_load` and released with `sbbts_model_free`.
//!
//! Path arrays are row-major `n_paths × n_dates × dim`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use sbbts_core::calib::{heston_qmle, PARAM_NAMES};
use sbbts_core::evaluation::var_es;
use sbbts_core::sbbts::{generate, load_checkpoint, save_checkpoint, train, SBBTSConfig, TrainedModel};
use sbbts_core::stochastic::RandomSource;
use sbbts_core::{Error, TimeSeriesDataset};

/// Status codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SbbtsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    Dimension = 10,
    Config = 11,
    Domain = 12,
    Data = 13,
    Contract = 14,
    Schema = 15,
    Training = 16,
    Estimation = 17,
    Numerical = 18,
    Version = 19,
    Io = 20,
    Panic = 99,
}

/// Trained generator.
pub struct SbbtsModel {
    inner: TrainedModel,
}

/// Number of Heston parameters written by `sbbts_heston_qmle`:
/// `kappa, theta, xi_vol, rho, r, v0`.
pub const SBBTS_HESTON_PARAMS: usize = 6;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(SbbtsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Dimension(_) => SbbtsStatus::Dimension,
            Error::Config(_) => SbbtsStatus::Config,
            Error::Domain(_) => SbbtsStatus::Domain,
            Error::Data(_) => SbbtsStatus::Data,
            Error::Contract(_) => SbbtsStatus::Contract,
            Error::Schema(_) => SbbtsStatus::Schema,
            Error::Training { .. } => SbbtsStatus::Training,
            Error::Estimation { .. } => SbbtsStatus::Estimation,
            Error::Numerical(_) => SbbtsStatus::Numerical,
            Error::Version { .. } => SbbtsStatus::Version,
            Error::Io { .. } => SbbtsStatus::Io,
        };
        Failure(code, e.to_string())
    }
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> SbbtsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SbbtsStatus::Ok,
        Ok(Err(Failure(code, msg))) => {
            set_last_error(msg);
            code
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            SbbtsStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(SbbtsStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(SbbtsStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn model_arg<'a>(p: *const SbbtsModel) -> Result<&'a SbbtsModel, Failure> {
    p.as_ref().ok_or_else(|| null("model"))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sbbts_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or null if there was none.
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn sbbts_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Trains a generator on `n_paths × n_dates × dim` values. `config_toml`
/// holds the generator settings as TOML and may be null for defaults.
///
/// # Safety
/// `values` must point to `n_paths·n_dates·dim` doubles, `config_toml` must be
/// null or NUL-terminated, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sbbts_model_train(
    values: *const f64,
    n_paths: usize,
    n_dates: usize,
    dim: usize,
    config_toml: *const c_char,
    seed: u64,
    out: *mut *mut SbbtsModel,
) -> SbbtsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let len = n_paths
            .checked_mul(n_dates)
            .and_then(|v| v.checked_mul(dim))
            .ok_or_else(|| Failure(SbbtsStatus::InvalidArgument, "array size overflows".into()))?;
        let values = slice_arg(values, len, "values")?;
        let config = if config_toml.is_null() {
            SBBTSConfig::default()
        } else {
            toml::from_str(str_arg(config_toml, "config_toml")?)
                .map_err(|e| Failure(SbbtsStatus::Config, format!("config_toml: {e}")))?
        };
        let data = TimeSeriesDataset::new(
            n_paths,
            n_dates,
            dim,
            TimeSeriesDataset::default_names(dim),
            values.to_vec(),
        )?;
        let outcome = train(&data, &config, RandomSource::new(seed).named("train"))?;
        *out = Box::into_raw(Box::new(SbbtsModel { inner: outcome.model }));
        Ok(())
    })
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sbbts_model_load(path: *const c_char, out: *mut *mut SbbtsModel) -> SbbtsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = str_arg(path, "path")?;
        let inner = load_checkpoint(Path::new(path))?;
        *out = Box::into_raw(Box::new(SbbtsModel { inner }));
        Ok(())
    })
}

/// Writes a checkpoint file.
///
/// # Safety
/// `model` must come from this library and `path` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sbbts_model_save(model: *const SbbtsModel, path: *const c_char) -> SbbtsStatus {
    guard(|| {
        let model = model_arg(model)?;
        let path = str_arg(path, "path")?;
        save_checkpoint(&model.inner, Path::new(path))?;
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sbbts_model_free(model: *mut SbbtsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Path dimension of a model, or 0 for null.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sbbts_model_dim(model: *const SbbtsModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.dim())
}

/// Number of dates per generated path, or 0 for null.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sbbts_model_n_dates(model: *const SbbtsModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.grid.n_dates())
}

/// Generates `n_paths` paths into `out`, which holds `out_len` doubles and
/// must have room for `n_paths·n_dates·dim`. Same seed, same output as the
/// `generate` command.
///
/// # Safety
/// `model` must be a live handle and `out` must point to `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sbbts_model_generate(
    model: *const SbbtsModel,
    n_paths: usize,
    seed: u64,
    out: *mut f64,
    out_len: usize,
) -> SbbtsStatus {
    guard(|| {
        let model = model_arg(model)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let need = n_paths * model.inner.grid.n_dates() * model.inner.dim();
        if out_len < need {
            return Err(Failure(
                SbbtsStatus::BufferTooSmall,
                format!("output holds {out_len} values, {need} needed"),
            ));
        }
        let paths = generate(&model.inner, n_paths, RandomSource::new(seed).named("generate"))?;
        std::slice::from_raw_parts_mut(out, need).copy_from_slice(paths.values());
        Ok(())
    })
}

/// Heston quasi-maximum-likelihood fit of one path of prices `x` and
/// variances `v` observed every `dt`. Writes `SBBTS_HESTON_PARAMS` values.
///
/// # Safety
/// `x` and `v` must point to `n` doubles, `out_params` to six.
#[no_mangle]
pub unsafe extern "C" fn sbbts_heston_qmle(
    x: *const f64,
    v: *const f64,
    n: usize,
    dt: f64,
    out_params: *mut f64,
) -> SbbtsStatus {
    guard(|| {
        let x = slice_arg(x, n, "x")?;
        let v = slice_arg(v, n, "v")?;
        if out_params.is_null() {
            return Err(null("out_params"));
        }
        let fit = heston_qmle(x, v, dt)?;
        let p = &fit.params;
        let vals = [p.kappa, p.theta, p.xi_vol, p.rho, p.r, p.v0];
        debug_assert_eq!(vals.len(), PARAM_NAMES.len());
        std::slice::from_raw_parts_mut(out_params, SBBTS_HESTON_PARAMS).copy_from_slice(&vals);
        Ok(())
    })
}

/// Historical value at risk and expected shortfall at `level` (e.g. 0.95),
/// both reported as positive loss magnitudes.
///
/// # Safety
/// `returns` must point to `n` doubles; `out_var` and `out_es` writable.
#[no_mangle]
pub unsafe extern "C" fn sbbts_var_es(
    returns: *const f64,
    n: usize,
    level: f64,
    out_var: *mut f64,
    out_es: *mut f64,
) -> SbbtsStatus {
    guard(|| {
        let r = slice_arg(returns, n, "returns")?;
        if out_var.is_null() || out_es.is_null() {
            return Err(null("output"));
        }
        let (var, es) = var_es(r, level)?;
        *out_var = var;
        *out_es = es;
        Ok(())
    })
}
