//! C ABI over `mfdnet`.
//!
//! Every fallible call returns an `MFD_*` status code. On failure a message
//! is kept per thread and can be read with [`mfd_last_error`]. Models are
//! opaque `MfdModel` handles created by `mfd_model_load` or
//! `mfd_model_init_random` and released with `mfd_model_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use mfdnet::cost::{estimate, CostConvention};
use mfdnet::graph::{build_model, forward, Form, GraphError, GraphSpec, ModelConfig, Variant};
use mfdnet::reparam::{fold_graph, verify_fold, FoldError};
use mfdnet::weights::{self, init_random, InitScheme, InitSpec, MfdwError, WeightStore};
use mfdnet::{Shape, Tensor, TensorError};

pub const MFD_OK: i32 = 0;
/// A required pointer argument was null.
pub const MFD_ERR_NULL: i32 = 1;
pub const MFD_ERR_INVALID_ARG: i32 = 2;
pub const MFD_ERR_IO: i32 = 3;
/// Malformed MFDW file.
pub const MFD_ERR_FORMAT: i32 = 4;
pub const MFD_ERR_SHAPE: i32 = 5;
/// Weights missing or not matching the model.
pub const MFD_ERR_WEIGHTS: i32 = 6;
/// A verification check ran but did not meet its tolerance.
pub const MFD_ERR_VERIFY: i32 = 7;
pub const MFD_ERR_PANIC: i32 = 99;

pub const MFD_FORM_TRAIN: i32 = 0;
pub const MFD_FORM_DEPLOY: i32 = 1;

/// Opaque model handle.
pub struct MfdModel {
    graph: GraphSpec,
    weights: WeightStore,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MfdCost {
    pub macs: u64,
    pub params: u64,
    /// Bytes.
    pub mem_read: u64,
    /// Bytes.
    pub mem_write: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(i32, String);

type Res<T> = Result<T, Failure>;

fn fail<T>(code: i32, msg: impl Into<String>) -> Res<T> {
    Err(Failure(code, msg.into()))
}

impl From<GraphError> for Failure {
    fn from(e: GraphError) -> Self {
        let code = match &e {
            GraphError::MissingWeight { .. } | GraphError::WeightShape { .. } => MFD_ERR_WEIGHTS,
            GraphError::InvalidConfig(_) => MFD_ERR_INVALID_ARG,
            _ => MFD_ERR_SHAPE,
        };
        Failure(code, e.to_string())
    }
}

impl From<MfdwError> for Failure {
    fn from(e: MfdwError) -> Self {
        let code = if matches!(e, MfdwError::Io(_)) {
            MFD_ERR_IO
        } else {
            MFD_ERR_FORMAT
        };
        Failure(code, e.to_string())
    }
}

impl From<FoldError> for Failure {
    fn from(e: FoldError) -> Self {
        match e {
            FoldError::Graph(g) => g.into(),
            other => Failure(MFD_ERR_WEIGHTS, other.to_string()),
        }
    }
}

impl From<TensorError> for Failure {
    fn from(e: TensorError) -> Self {
        Failure(MFD_ERR_SHAPE, e.to_string())
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Res<()>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MFD_OK,
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("panic inside mfdnet".into());
            MFD_ERR_PANIC
        }
    }
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Res<&'a str> {
    if p.is_null() {
        return fail(MFD_ERR_NULL, format!("{what} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(MFD_ERR_INVALID_ARG, format!("{what} is not UTF-8")))
}

unsafe fn model_ref<'a>(m: *const MfdModel) -> Res<&'a MfdModel> {
    m.as_ref()
        .map_or_else(|| fail(MFD_ERR_NULL, "model handle is null"), Ok)
}

fn config(name: &str, form: Form) -> Res<ModelConfig> {
    let variant: Variant = name.parse()?;
    let cfg = match variant {
        Variant::Baseline => ModelConfig::baseline(48, 16, 4),
        v => ModelConfig::mfdnet(v, form),
    };
    cfg.check()?;
    Ok(cfg)
}

fn form_from(code: i32) -> Res<Form> {
    match code {
        MFD_FORM_TRAIN => Ok(Form::Train),
        MFD_FORM_DEPLOY => Ok(Form::Deploy),
        other => fail(MFD_ERR_INVALID_ARG, format!("unknown form {other}")),
    }
}

fn publish(out: *mut *mut MfdModel, m: MfdModel) {
    unsafe { *out = Box::into_raw(Box::new(m)) };
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mfd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mfd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads `path` (MFDW) for model `name` ("baseline", "mfdnet-s", "mfdnet",
/// "mfdnet-l"). Train or deploy form is detected from the tensors.
///
/// # Safety
/// `name` and `path` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mfd_model_load(
    name: *const c_char,
    path: *const c_char,
    out: *mut *mut MfdModel,
) -> i32 {
    guard(|| {
        let name = string(name, "name")?;
        let path = string(path, "path")?;
        if out.is_null() {
            return fail(MFD_ERR_NULL, "out is null");
        }
        let weights = weights::load(Path::new(path))?;
        let form = if weights.names().any(|n| n.ends_with(".expand.w")) {
            Form::Train
        } else {
            Form::Deploy
        };
        let graph = build_model(&config(name, form)?)?;
        graph.check_weights(&weights)?;
        publish(out, MfdModel { graph, weights });
        Ok(())
    })
}

/// Builds model `name` with seeded KaimingUniform weights scaled by `gain`.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mfd_model_init_random(
    name: *const c_char,
    form: i32,
    seed: u64,
    gain: f32,
    out: *mut *mut MfdModel,
) -> i32 {
    guard(|| {
        let name = string(name, "name")?;
        if out.is_null() {
            return fail(MFD_ERR_NULL, "out is null");
        }
        if !(gain.is_finite() && gain >= 0.0) {
            return fail(MFD_ERR_INVALID_ARG, "gain must be finite and non-negative");
        }
        let graph = build_model(&config(name, form_from(form)?)?)?;
        let weights = init_random(
            &graph,
            &InitSpec::new(seed, InitScheme::KaimingUniform).with_gain(gain),
        );
        publish(out, MfdModel { graph, weights });
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `m` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mfd_model_free(m: *mut MfdModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// `MFD_FORM_TRAIN` or `MFD_FORM_DEPLOY`, or -1 for a null handle.
///
/// # Safety
/// `m` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn mfd_model_form(m: *const MfdModel) -> i32 {
    match m.as_ref() {
        Some(m) if m.graph.form == Form::Train => MFD_FORM_TRAIN,
        Some(_) => MFD_FORM_DEPLOY,
        None => -1,
    }
}

/// Height and width of inputs must be multiples of this; 0 for a null handle.
///
/// # Safety
/// `m` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn mfd_model_required_multiple(m: *const MfdModel) -> usize {
    m.as_ref().map_or(0, |m| m.graph.required_multiple)
}

/// Folds RepConv branches in place. A deploy-form model is left unchanged.
///
/// # Safety
/// `m` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mfd_model_fold(m: *mut MfdModel) -> i32 {
    guard(|| {
        let model = m
            .as_mut()
            .map_or_else(|| fail(MFD_ERR_NULL, "model handle is null"), Ok)?;
        if model.graph.form == Form::Train {
            let (graph, weights) = fold_graph(&model.graph, &model.weights)?;
            *model = MfdModel { graph, weights };
        }
        Ok(())
    })
}

/// Writes the model's weights to `path` as MFDW.
///
/// # Safety
/// `m` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mfd_model_save(m: *const MfdModel, path: *const c_char) -> i32 {
    guard(|| {
        let model = model_ref(m)?;
        let path = string(path, "path")?;
        weights::save(&model.weights, Path::new(path))?;
        Ok(())
    })
}

/// Runs the model on an `n x 3 x h x w` NCHW f32 buffer. The output has the
/// same shape; `output_len` must equal `n * 3 * h * w`.
///
/// # Safety
/// `input` must hold `n * 3 * h * w` floats and `output` room for `output_len`.
#[no_mangle]
pub unsafe extern "C" fn mfd_model_forward(
    m: *const MfdModel,
    input: *const f32,
    n: usize,
    h: usize,
    w: usize,
    output: *mut f32,
    output_len: usize,
) -> i32 {
    guard(|| {
        let model = model_ref(m)?;
        if input.is_null() || output.is_null() {
            return fail(MFD_ERR_NULL, "input or output buffer is null");
        }
        let shape = Shape::new(n, 3, h, w);
        let len = n
            .checked_mul(3 * h)
            .and_then(|v| v.checked_mul(w))
            .filter(|&v| v > 0)
            .map_or_else(
                || fail(MFD_ERR_INVALID_ARG, "empty or overflowing input shape"),
                Ok,
            )?;
        if output_len != len {
            return fail(
                MFD_ERR_INVALID_ARG,
                format!("output_len {output_len}, expected {len}"),
            );
        }
        let x = Tensor::new(shape, std::slice::from_raw_parts(input, len).to_vec())?;
        let y = forward(&model.graph, &model.weights, &x)?;
        if y.shape() != shape {
            return fail(MFD_ERR_SHAPE, format!("model produced {}", y.shape()));
        }
        std::slice::from_raw_parts_mut(output, len).copy_from_slice(y.data());
        Ok(())
    })
}

/// Cost of one `1 x 3 x height x width` forward pass. `calibrated` selects
/// the calibrated traffic convention, otherwise every layer is counted.
///
/// # Safety
/// `m` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mfd_model_cost(
    m: *const MfdModel,
    width: usize,
    height: usize,
    calibrated: bool,
    out: *mut MfdCost,
) -> i32 {
    guard(|| {
        let model = model_ref(m)?;
        if out.is_null() {
            return fail(MFD_ERR_NULL, "out is null");
        }
        let cv = if calibrated {
            CostConvention::calibrated()
        } else {
            CostConvention::default()
        };
        let r = estimate(&model.graph, Shape::new(1, 3, height, width), &cv)?;
        *out = MfdCost {
            macs: r.macs,
            params: r.params,
            mem_read: r.mem_read,
            mem_write: r.mem_write,
        };
        Ok(())
    })
}

/// Checks RepConv folding on `trials` seeded random branches. Returns
/// `MFD_OK` if the largest difference is within `tol`, `MFD_ERR_VERIFY`
/// otherwise. The difference is written to `max_abs_diff` if non-null.
///
/// # Safety
/// `max_abs_diff` must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn mfd_verify_fold(
    seed: u64,
    trials: usize,
    tol: f32,
    max_abs_diff: *mut f32,
) -> i32 {
    guard(|| {
        let r = verify_fold(seed, trials, tol);
        if let Some(d) = max_abs_diff.as_mut() {
            *d = r.max_abs_diff;
        }
        if r.pass {
            Ok(())
        } else {
            fail(
                MFD_ERR_VERIFY,
                format!("max_abs_diff {:e} exceeds {:e}", r.max_abs_diff, tol),
            )
        }
    })
}
