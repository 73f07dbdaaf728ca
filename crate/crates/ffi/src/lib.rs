//! C ABI over the topoformer toolkit.
//!
//! Problems and models are opaque handles created and freed here. Every call
//! returns a [`TfStatus`]; on failure a message is kept per thread and can be
//! copied out with [`tf_last_error`]. Panics never cross the boundary.
//! Density and field buffers are caller-owned arrays of `nelx * nely` doubles,
//! element `ey * nelx + ex` with row 0 at the top.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use topoformer::dataset::{model_inputs, GeneratorConfig};
use topoformer::dynamic::optimize_dynamic;
use topoformer::eval::predict_design;
use topoformer::simp::{binarize_to_volume, optimize_static};
use topoformer::vit::ViT;
use topoformer::{Error, ProblemKind, ProblemSpec};

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TfStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Bad argument value, including non-UTF-8 strings and short buffers.
    InvalidArgument = 2,
    /// File could not be read or written.
    Io = 3,
    /// Malformed JSON, file format or mismatched shapes between objects.
    Schema = 4,
    /// Singular system, solver or optimizer failure, non-finite values.
    Numerical = 5,
    /// A Rust panic was caught; the handle involved should be discarded.
    Panic = 6,
}

/// A validated problem definition.
pub struct TfProblem {
    spec: ProblemSpec,
    cfg: GeneratorConfig,
}

/// A loaded surrogate model.
pub struct TfModel {
    model: ViT,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> TfStatus {
    match e {
        Error::Io { .. } => TfStatus::Io,
        e if e.is_schema() => TfStatus::Schema,
        Error::Shape { .. } | Error::Dimension { .. } => TfStatus::Schema,
        Error::InvalidArgument(_) => TfStatus::InvalidArgument,
        _ => TfStatus::Numerical,
    }
}

enum Fail {
    Null(&'static str),
    Arg(String),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

type Outcome = Result<(), Fail>;

/// Run `f`, converting errors and panics into a status and stored message.
fn guard(f: impl FnOnce() -> Outcome) -> TfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            TfStatus::Ok
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("{what} is null"));
            TfStatus::NullPointer
        }
        Ok(Err(Fail::Arg(msg))) => {
            set_error(msg);
            TfStatus::InvalidArgument
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            TfStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Arg(format!("{what} is not UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, what: &'static str) -> Result<Option<&'a str>, Fail> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, what).map(Some)
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn out_buf<'a>(
    p: *mut f64,
    len: usize,
    need: usize,
    what: &'static str,
) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    if len < need {
        return Err(Fail::Arg(format!(
            "{what} holds {len} values, {need} needed"
        )));
    }
    Ok(std::slice::from_raw_parts_mut(p, need))
}

unsafe fn write_out<T>(p: *mut T, v: T) {
    if !p.is_null() {
        p.write(v);
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `cap`). Returns the full message length excluding the NUL,
/// so a caller can size a buffer with a first call using `cap = 0`.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn tf_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Parse a problem from JSON. `config_json` is an optional generator config
/// (solver, optimizer and dynamics settings); null means defaults.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tf_problem_from_json(
    spec_json: *const c_char,
    config_json: *const c_char,
    out: *mut *mut TfProblem,
) -> TfStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let spec: ProblemSpec =
            serde_json::from_str(str_arg(spec_json, "spec_json")?).map_err(Error::from)?;
        spec.validate()?;
        let cfg = match opt_str_arg(config_json, "config_json")? {
            Some(s) => serde_json::from_str(s).map_err(Error::from)?,
            None => GeneratorConfig::default(),
        };
        out.write(Box::into_raw(Box::new(TfProblem { spec, cfg })));
        Ok(())
    })
}

/// # Safety
/// `p` must be null or a handle from [`tf_problem_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tf_problem_free(p: *mut TfProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Grid size and whether the load is time-varying.
///
/// # Safety
/// `p` must be a live problem handle; output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn tf_problem_info(
    p: *const TfProblem,
    nelx: *mut usize,
    nely: *mut usize,
    is_dynamic: *mut bool,
) -> TfStatus {
    guard(|| {
        let p = handle(p, "problem")?;
        write_out(nelx, p.spec.grid.nelx);
        write_out(nely, p.spec.grid.nely);
        write_out(is_dynamic, p.spec.kind() == ProblemKind::Dynamic);
        Ok(())
    })
}

/// Normalized strain-energy-density and von Mises fields of the solid domain.
///
/// # Safety
/// `p` must be a live problem handle; `sed` and `vm` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn tf_problem_fields(
    p: *const TfProblem,
    sed: *mut f64,
    vm: *mut f64,
    len: usize,
) -> TfStatus {
    guard(|| {
        let p = handle(p, "problem")?;
        let n = p.spec.grid.n_elements();
        let sed = out_buf(sed, len, n, "sed")?;
        let vm = out_buf(vm, len, n, "vm")?;
        let (fields, _) = model_inputs(&p.spec, &p.cfg)?;
        sed.copy_from_slice(&fields.sed);
        vm.copy_from_slice(&fields.vm);
        Ok(())
    })
}

/// Run the optimizer. Writes the converged soft density to `density` and,
/// when `binary` is non-null, the volume-matched 0/1 design to `binary`.
///
/// # Safety
/// `p` must be a live problem handle; non-null buffers must hold `len`
/// doubles; `iterations` and `converged` may be null.
#[no_mangle]
pub unsafe extern "C" fn tf_optimize(
    p: *const TfProblem,
    density: *mut f64,
    binary: *mut f64,
    len: usize,
    iterations: *mut usize,
    converged: *mut bool,
) -> TfStatus {
    guard(|| {
        let p = handle(p, "problem")?;
        let n = p.spec.grid.n_elements();
        let density = out_buf(density, len, n, "density")?;
        let binary = if binary.is_null() {
            None
        } else {
            Some(out_buf(binary, len, n, "binary")?)
        };
        let r = match p.spec.kind() {
            ProblemKind::Static => optimize_static(&p.spec, &p.cfg.optimizer)?,
            ProblemKind::Dynamic => optimize_dynamic(&p.spec, &p.cfg.dynamics, &p.cfg.optimizer)?,
        };
        density.copy_from_slice(&r.density.values);
        if let Some(b) = binary {
            let (d, _) = binarize_to_volume(&r.density, p.spec.vf, p.cfg.threshold);
            b.copy_from_slice(&d.values);
        }
        write_out(iterations, r.iterations);
        write_out(converged, r.converged);
        Ok(())
    })
}

/// Load a checkpoint written by training or fine-tuning.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tf_model_load(path: *const c_char, out: *mut *mut TfModel) -> TfStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let path = PathBuf::from(str_arg(path, "path")?);
        let (model, _) = ViT::load(&path)?;
        out.write(Box::into_raw(Box::new(TfModel { model })));
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle from [`tf_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tf_model_free(m: *mut TfModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Square grid side the model predicts and whether it takes dynamic conditions.
///
/// # Safety
/// `m` must be a live model handle; output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn tf_model_info(
    m: *const TfModel,
    grid: *mut usize,
    is_dynamic: *mut bool,
) -> TfStatus {
    guard(|| {
        let m = handle(m, "model")?;
        write_out(grid, m.model.cfg.grid);
        write_out(
            is_dynamic,
            m.model.cfg.cond_dim == topoformer::train::cond_dim_for(ProblemKind::Dynamic),
        );
        Ok(())
    })
}

/// Predict the soft density of a problem. The model grid and condition width
/// must match the problem, otherwise [`TfStatus::Schema`].
///
/// # Safety
/// Handles must be live; `density` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn tf_model_predict(
    m: *const TfModel,
    p: *const TfProblem,
    density: *mut f64,
    len: usize,
) -> TfStatus {
    guard(|| {
        let m = handle(m, "model")?;
        let p = handle(p, "problem")?;
        let out = out_buf(density, len, p.spec.grid.n_elements(), "density")?;
        let soft = predict_design(&m.model, &p.spec, &p.cfg)?;
        out.copy_from_slice(&soft.values);
        Ok(())
    })
}
