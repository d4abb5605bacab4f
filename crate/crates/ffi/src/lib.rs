//! C interface: open a trained model from a work directory and generate
//! reviews as JSON strings.
//!
//! Every fallible call returns a [`C2fStatus`]. On failure the message is
//! kept per thread and read back with [`c2f_last_error`]. Strings handed out
//! by the library must be released with [`c2f_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use c2f_core::pipeline::run::{self, WorkDir};
use c2f_core::pipeline::{Artifacts, Model};
use c2f_core::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum C2fStatus {
    Ok = 0,
    /// Bad arguments or configuration.
    Usage = 1,
    /// Unreadable or inconsistent files.
    Data = 2,
    NullPointer = 4,
    /// A string argument was not valid UTF-8.
    Utf8 = 5,
    /// The library panicked; the handle should be considered unusable.
    Panic = 6,
}

/// An opened model with everything generation needs.
pub struct C2fModel {
    artifacts: Artifacts,
    model: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes removed"));
}

fn fail(e: Error) -> C2fStatus {
    let status = match e.exit_code() {
        1 => C2fStatus::Usage,
        _ => C2fStatus::Data,
    };
    set_error(e.to_string());
    status
}

/// Run `f`, turning panics into `C2fStatus::Panic`.
fn guarded(f: impl FnOnce() -> C2fStatus) -> C2fStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            C2fStatus::Panic
        }
    }
}

unsafe fn arg_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, C2fStatus> {
    if p.is_null() {
        set_error(format!("{name} is null"));
        return Err(C2fStatus::NullPointer);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{name} is not valid UTF-8"));
        C2fStatus::Utf8
    })
}

/// Message of the last failed call on this thread, or an empty string. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn c2f_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn c2f_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Open the artifacts in `work_dir` and the checkpoint at `model_path`
/// (`<work_dir>/model.bin` when null).
///
/// # Safety
/// `work_dir` must be a valid C string, `model_path` null or a valid C
/// string, and `out` a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn c2f_model_open(
    work_dir: *const c_char,
    model_path: *const c_char,
    out: *mut *mut C2fModel,
) -> C2fStatus {
    guarded(|| {
        if out.is_null() {
            set_error("out is null");
            return C2fStatus::NullPointer;
        }
        *out = ptr::null_mut();
        let work = match arg_str(work_dir, "work_dir") {
            Ok(s) => WorkDir::new(s),
            Err(s) => return s,
        };
        let path = if model_path.is_null() {
            work.model()
        } else {
            match arg_str(model_path, "model_path") {
                Ok(s) => PathBuf::from(s),
                Err(s) => return s,
            }
        };
        let opened = Artifacts::load(&work).and_then(|artifacts| {
            let model = run::load_model(&path)?;
            artifacts.generator(&model)?;
            Ok(C2fModel { artifacts, model })
        });
        match opened {
            Ok(m) => {
                *out = Box::into_raw(Box::new(m));
                C2fStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `model` must be null or a handle from [`c2f_model_open`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn c2f_model_free(model: *mut C2fModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Generate one review for a raw user id, item id and 1-based rating.
/// `beam` of zero uses the configured width. On success `*out_json` holds a
/// JSON object with the aspect sequence, sketches, sentences and text.
///
/// # Safety
/// `model` must be a live handle, `user` and `item` valid C strings and
/// `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn c2f_generate(
    model: *const C2fModel,
    user: *const c_char,
    item: *const c_char,
    rating: u32,
    beam: u32,
    out_json: *mut *mut c_char,
) -> C2fStatus {
    guarded(|| {
        if model.is_null() || out_json.is_null() {
            set_error("model or out_json is null");
            return C2fStatus::NullPointer;
        }
        *out_json = ptr::null_mut();
        let m = &*model;
        let (user, item) = match (arg_str(user, "user"), arg_str(item, "item")) {
            (Ok(u), Ok(i)) => (u, i),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let result = m.artifacts.generator(&m.model).and_then(|g| {
            let ctx = m.artifacts.context(user, item, rating)?;
            let width = if beam == 0 {
                m.model.config.orchestrator.beam
            } else {
                beam as usize
            };
            g.generate_with(&ctx, width)
        });
        match result {
            Ok(r) => {
                let json = serde_json::to_string(&r).expect("results serialize");
                *out_json = CString::new(json).expect("JSON has no nul bytes").into_raw();
                C2fStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Number of learned aspects in the model, or zero for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn c2f_model_num_aspects(model: *const C2fModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.sizes.aspects)
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn c2f_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_arguments_are_reported() {
        unsafe {
            let mut h = ptr::null_mut();
            assert_eq!(c2f_model_open(ptr::null(), ptr::null(), &mut h), C2fStatus::NullPointer);
            assert!(h.is_null());
            let msg = CStr::from_ptr(c2f_last_error()).to_str().unwrap();
            assert!(msg.contains("work_dir"));
            let mut out = ptr::null_mut();
            assert_eq!(
                c2f_generate(ptr::null(), ptr::null(), ptr::null(), 1, 0, &mut out),
                C2fStatus::NullPointer
            );
            c2f_model_free(ptr::null_mut());
            c2f_string_free(ptr::null_mut());
            assert_eq!(c2f_model_num_aspects(ptr::null()), 0);
        }
    }

    #[test]
    fn missing_work_dir_is_a_data_error() {
        let dir = CString::new("/nonexistent/c2f-work").unwrap();
        let mut h = ptr::null_mut();
        let s = unsafe { c2f_model_open(dir.as_ptr(), ptr::null(), &mut h) };
        assert_eq!(s, C2fStatus::Data);
        assert!(h.is_null());
    }

    #[test]
    fn version_matches_crate() {
        let v = unsafe { CStr::from_ptr(c2f_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}
