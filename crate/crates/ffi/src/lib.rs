//! C ABI over the sparse-activation generator.
//!
//! Every function returns an [`SgaoStatus`]; on failure a message is available from
//! [`sgao_last_error_message`] on the same thread. Images are `f64` buffers in `[w, h, c]`
//! row-major order, i.e. element `(x, y, ch)` lives at `(x * h + y) * c + ch`. Panics never
//! cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use sgao::grammar::{export_parse_graph, parse_graph, reconstruct_from_layer};
use sgao::inference::{langevin_infer, GeneratorPosterior, LangevinConfig};
use sgao::io::{load_checkpoint, save_checkpoint, Checkpoint, Dtype};
use sgao::{Error, Generator, GeneratorConfig, Tensor};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgaoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Config = 4,
    Io = 5,
    Checkpoint = 6,
    Divergence = 7,
    Panic = 8,
    Internal = 9,
}

/// Opaque generator handle.
pub struct SgaoGenerator {
    inner: Generator,
    seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(SgaoStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn status_of(e: &Error) -> SgaoStatus {
    match e {
        Error::Dimension { .. } => SgaoStatus::Dimension,
        Error::Config(_) | Error::Schema(_) | Error::Dataset(_) | Error::Json(_) => {
            SgaoStatus::Config
        }
        Error::Index(_) => SgaoStatus::InvalidArgument,
        Error::Divergence { .. } => SgaoStatus::Divergence,
        Error::Io { .. } => SgaoStatus::Io,
        Error::Checkpoint(_) => SgaoStatus::Checkpoint,
        Error::Example { source, .. } | Error::Stage { source, .. } => status_of(source),
    }
}

fn null(what: &str) -> Failure {
    Failure(SgaoStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(SgaoStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SgaoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SgaoStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            SgaoStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a>(
    p: *const f64,
    len: usize,
    expected: usize,
    what: &str,
) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    if len != expected {
        return Err(Failure(
            SgaoStatus::Dimension,
            format!("{what} has length {len}, expected {expected}"),
        ));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(
    p: *mut f64,
    len: usize,
    expected: usize,
    what: &str,
) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    if len != expected {
        return Err(Failure(
            SgaoStatus::Dimension,
            format!("{what} has length {len}, expected {expected}"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a>(g: *const SgaoGenerator) -> Result<&'a SgaoGenerator, Failure> {
    g.as_ref().ok_or_else(|| null("generator"))
}

fn image_tensor(g: &Generator, data: &[f64]) -> Result<Tensor, Failure> {
    Ok(Tensor::from_vec(&g.output_shape(), data.to_vec())?)
}

/// Message for the last failed call on this thread, or null after a success. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn sgao_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates a randomly initialized generator. `config_json` may be null for the default
/// architecture; otherwise it is a JSON object with any of the configuration fields.
///
/// # Safety
/// `config_json` must be null or a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sgao_generator_new(
    config_json: *const c_char,
    seed: u64,
    out: *mut *mut SgaoGenerator,
) -> SgaoStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let config = if config_json.is_null() {
            GeneratorConfig::default()
        } else {
            let text = str_arg(config_json, "config_json")?;
            serde_json::from_str(text)
                .map_err(|e| Failure(SgaoStatus::Config, format!("config_json: {e}")))?
        };
        let inner = Generator::init(config, seed)?;
        *out = Box::into_raw(Box::new(SgaoGenerator { inner, seed }));
        Ok(())
    })
}

/// Loads the generator stored in a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sgao_generator_load(
    path: *const c_char,
    out: *mut *mut SgaoGenerator,
) -> SgaoStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = PathBuf::from(str_arg(path, "path")?);
        let ck = load_checkpoint(&p)?;
        let inner = ck.generator()?;
        *out = Box::into_raw(Box::new(SgaoGenerator {
            inner,
            seed: ck.meta.seed,
        }));
        Ok(())
    })
}

/// Writes the generator to a checkpoint file with 32-bit storage.
///
/// # Safety
/// `g` must come from this library; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sgao_generator_save(
    g: *const SgaoGenerator,
    path: *const c_char,
) -> SgaoStatus {
    guard(|| {
        let g = handle(g)?;
        let p = PathBuf::from(str_arg(path, "path")?);
        save_checkpoint(
            &p,
            &Checkpoint::from_generator(&g.inner, g.seed),
            Dtype::F32,
        )?;
        Ok(())
    })
}

/// Releases a generator. Null is ignored.
///
/// # Safety
/// `g` must be null or come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sgao_generator_free(g: *mut SgaoGenerator) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Latent dimension and image shape. Any output pointer may be null.
///
/// # Safety
/// `g` must come from this library; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn sgao_generator_dims(
    g: *const SgaoGenerator,
    latent_dim: *mut usize,
    width: *mut usize,
    height: *mut usize,
    channels: *mut usize,
) -> SgaoStatus {
    guard(|| {
        let g = handle(g)?;
        let [w, h, c] = g.inner.output_shape();
        for (p, v) in [
            (latent_dim, g.inner.latent_dim()),
            (width, w),
            (height, h),
            (channels, c),
        ] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// `Y = g(Z)`.
///
/// # Safety
/// `z` must hold `z_len` values and `out` must have room for `out_len`.
#[no_mangle]
pub unsafe extern "C" fn sgao_generator_forward(
    g: *const SgaoGenerator,
    z: *const f64,
    z_len: usize,
    out: *mut f64,
    out_len: usize,
) -> SgaoStatus {
    guard(|| {
        let g = handle(g)?;
        let z = slice_arg(z, z_len, g.inner.latent_dim(), "z")?;
        let out = out_slice(out, out_len, g.inner.output_len(), "out")?;
        out.copy_from_slice(g.inner.generate(&Tensor::vector(z))?.data());
        Ok(())
    })
}

/// Unnormalized `log p(Y, Z)`.
///
/// # Safety
/// Buffers must hold the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sgao_generator_log_joint(
    g: *const SgaoGenerator,
    z: *const f64,
    z_len: usize,
    y: *const f64,
    y_len: usize,
    out: *mut f64,
) -> SgaoStatus {
    guard(|| {
        let g = handle(g)?;
        let z = slice_arg(z, z_len, g.inner.latent_dim(), "z")?;
        let y = slice_arg(y, y_len, g.inner.output_len(), "y")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = g
            .inner
            .log_joint(&Tensor::vector(z), &image_tensor(&g.inner, y)?)?;
        Ok(())
    })
}

/// `∂/∂Z log p(Y, Z)`.
///
/// # Safety
/// Buffers must hold the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn sgao_generator_grad_z(
    g: *const SgaoGenerator,
    z: *const f64,
    z_len: usize,
    y: *const f64,
    y_len: usize,
    grad: *mut f64,
    grad_len: usize,
) -> SgaoStatus {
    guard(|| {
        let g = handle(g)?;
        let z = slice_arg(z, z_len, g.inner.latent_dim(), "z")?;
        let y = slice_arg(y, y_len, g.inner.output_len(), "y")?;
        let grad = out_slice(grad, grad_len, g.inner.latent_dim(), "grad")?;
        grad.copy_from_slice(
            g.inner
                .grad_z_log_joint(&Tensor::vector(z), &image_tensor(&g.inner, y)?)?
                .data(),
        );
        Ok(())
    })
}

/// Langevin posterior inference of `Z` for image `y`. `z_init` may be null to start at
/// zero; `delta = 0` with `steps > 0` is allowed and returns the start point.
///
/// # Safety
/// Buffers must hold the stated lengths; `z_init` may be null.
#[no_mangle]
pub unsafe extern "C" fn sgao_generator_infer(
    g: *const SgaoGenerator,
    y: *const f64,
    y_len: usize,
    z_init: *const f64,
    steps: usize,
    delta: f64,
    seed: u64,
    z_out: *mut f64,
    z_len: usize,
) -> SgaoStatus {
    guard(|| {
        let g = handle(g)?;
        let d = g.inner.latent_dim();
        let y = image_tensor(&g.inner, slice_arg(y, y_len, g.inner.output_len(), "y")?)?;
        let z0 = if z_init.is_null() {
            Tensor::zeros(&[d])
        } else {
            Tensor::vector(slice_arg(z_init, z_len, d, "z_init")?)
        };
        let z_out = out_slice(z_out, z_len, d, "z_out")?;
        let cfg = LangevinConfig {
            delta,
            steps,
            seed,
            ..LangevinConfig::default()
        };
        let posterior = GeneratorPosterior {
            generator: &g.inner,
            y: &y,
        };
        z_out.copy_from_slice(langevin_infer(&posterior, &z0, &cfg)?.data());
        Ok(())
    })
}

/// Parse graph of the forward pass at `z`, as canonical JSON. Free the string with
/// [`sgao_string_free`].
///
/// # Safety
/// `z` must hold `z_len` values; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sgao_generator_parse_graph(
    g: *const SgaoGenerator,
    z: *const f64,
    z_len: usize,
    out_json: *mut *mut c_char,
) -> SgaoStatus {
    guard(|| {
        let g = handle(g)?;
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        let z = slice_arg(z, z_len, g.inner.latent_dim(), "z")?;
        let json = export_parse_graph(&parse_graph(&g.inner.trace(&Tensor::vector(z))?)?)?;
        *out_json = CString::new(json)
            .map_err(|_| Failure(SgaoStatus::Internal, "JSON contains NUL".into()))?
            .into_raw();
        Ok(())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sgao_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// `tanh(Σⱼ sⱼ·Bⱼ)` over the surviving activations of feature map `layer` (1-based),
/// which equals `g(z)` up to rounding.
///
/// # Safety
/// `z` must hold `z_len` values and `out` must have room for `out_len`.
#[no_mangle]
pub unsafe extern "C" fn sgao_generator_reconstruct_from_layer(
    g: *const SgaoGenerator,
    z: *const f64,
    z_len: usize,
    layer: usize,
    out: *mut f64,
    out_len: usize,
) -> SgaoStatus {
    guard(|| {
        let g = handle(g)?;
        let maps = g.inner.config.num_sparse_maps();
        if layer == 0 || layer > maps {
            return Err(invalid(format!("layer must be in 1..={maps}, got {layer}")));
        }
        let z = slice_arg(z, z_len, g.inner.latent_dim(), "z")?;
        let out = out_slice(out, out_len, g.inner.output_len(), "out")?;
        let trace = g.inner.trace(&Tensor::vector(z))?;
        out.copy_from_slice(reconstruct_from_layer(&g.inner, &trace, layer - 1)?.data());
        Ok(())
    })
}
