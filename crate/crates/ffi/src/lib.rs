//! C ABI for the cdrfront enhancement pipeline.
//!
//! Every fallible function returns a [`CdrfStatus`]; on failure a message is
//! available from [`cdrf_last_error`] on the same thread. Enhancers are opaque
//! handles created by `cdrf_enhancer_new*` and released with
//! [`cdrf_enhancer_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cdrfront::cdr::estimate_cdr_pair;
use cdrfront::geometry::ArrayGeometry;
use cdrfront::pipeline::{enhance, DoaMode, NoiseContext, PipelineConfig};
use cdrfront::postfilter::{wiener_gain, PostfilterParams};
use cdrfront::Error;
use ndarray::Array2;
use num_complex::Complex64;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdrfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    Processing = 5,
    Panic = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> CdrfStatus {
    match err {
        Error::Config(_)
        | Error::InvalidGeometry(_)
        | Error::InvalidParameter(_)
        | Error::InvalidFrameParams(_)
        | Error::InvalidGrid(_) => CdrfStatus::Config,
        Error::Io { .. } | Error::Wav { .. } | Error::UnsupportedWav(_) => CdrfStatus::Io,
        Error::DimensionMismatch(_) | Error::TooFewChannels(_) | Error::SampleRateMismatch { .. } => {
            CdrfStatus::InvalidArgument
        }
        _ => CdrfStatus::Processing,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (CdrfStatus, String)>) -> CdrfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CdrfStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CdrfStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (CdrfStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (CdrfStatus, String) {
    (CdrfStatus::NullPointer, format!("{what} is null"))
}

/// Opaque enhancer handle.
pub struct CdrfEnhancer {
    config: PipelineConfig,
    channels: usize,
}

/// Message for the last failed call on this thread, or NULL if none.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cdrf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cdrf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Create an enhancer for `num_mics` microphones.
///
/// `positions` holds `num_mics` consecutive `x, y, z` triples in meters.
/// All other settings take their defaults: SRP-PHAT look direction, noise
/// context in the first 500 ms, postfilter enabled.
///
/// # Safety
/// `positions` must point to `3 * num_mics` readable doubles and `out` to
/// writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn cdrf_enhancer_new(
    positions: *const f64,
    num_mics: usize,
    sample_rate: u32,
    out: *mut *mut CdrfEnhancer,
) -> CdrfStatus {
    guard(|| {
        if positions.is_null() {
            return Err(null("positions"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let flat = std::slice::from_raw_parts(positions, 3 * num_mics);
        let pos = flat.chunks_exact(3).map(|p| [p[0], p[1], p[2]]).collect();
        let geometry = ArrayGeometry::new(pos, cdrfront::geometry::DEFAULT_SPEED_OF_SOUND).map_err(lib_err)?;
        let mut config = PipelineConfig::with_geometry(geometry);
        config.sample_rate = sample_rate;
        config.validate().map_err(lib_err)?;
        *out = Box::into_raw(Box::new(CdrfEnhancer {
            config,
            channels: num_mics,
        }));
        Ok(())
    })
}

/// Create an enhancer from a TOML pipeline config file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable storage for one
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn cdrf_enhancer_from_config(path: *const c_char, out: *mut *mut CdrfEnhancer) -> CdrfStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| (CdrfStatus::InvalidArgument, "path is not UTF-8".to_string()))?;
        let config = PipelineConfig::from_file(path).map_err(lib_err)?;
        let geometry = config.validate().map_err(lib_err)?;
        *out = Box::into_raw(Box::new(CdrfEnhancer {
            channels: geometry.num_mics(),
            config,
        }));
        Ok(())
    })
}

/// Release an enhancer. NULL is ignored.
///
/// # Safety
/// `handle` must come from `cdrf_enhancer_new*` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cdrf_enhancer_free(handle: *mut CdrfEnhancer) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Number of input channels the enhancer expects, 0 for NULL.
///
/// # Safety
/// `handle` must be NULL or a live enhancer.
#[no_mangle]
pub unsafe extern "C" fn cdrf_enhancer_num_channels(handle: *const CdrfEnhancer) -> usize {
    handle.as_ref().map_or(0, |h| h.channels)
}

unsafe fn with_handle(
    handle: *mut CdrfEnhancer,
    f: impl FnOnce(&mut CdrfEnhancer) -> Result<(), (CdrfStatus, String)>,
) -> CdrfStatus {
    guard(|| {
        let h = handle.as_mut().ok_or_else(|| null("handle"))?;
        f(h)
    })
}

/// Steer at a fixed direction, in degrees.
///
/// # Safety
/// `handle` must be a live enhancer.
#[no_mangle]
pub unsafe extern "C" fn cdrf_enhancer_set_doa(
    handle: *mut CdrfEnhancer,
    azimuth_deg: f64,
    elevation_deg: f64,
) -> CdrfStatus {
    with_handle(handle, |h| {
        if !(azimuth_deg.is_finite() && elevation_deg.is_finite()) {
            return Err((CdrfStatus::InvalidArgument, "angles must be finite".into()));
        }
        h.config.doa = DoaMode::Fixed {
            azimuth: azimuth_deg,
            elevation: elevation_deg,
        };
        Ok(())
    })
}

/// Estimate the look direction with SRP-PHAT on every call.
///
/// # Safety
/// `handle` must be a live enhancer.
#[no_mangle]
pub unsafe extern "C" fn cdrf_enhancer_use_srp_phat(handle: *mut CdrfEnhancer) -> CdrfStatus {
    with_handle(handle, |h| {
        h.config.doa = DoaMode::default();
        Ok(())
    })
}

/// Set the postfilter overestimation factor and gain floor. `mu = 0`
/// leaves the beamformer output untouched.
///
/// # Safety
/// `handle` must be a live enhancer.
#[no_mangle]
pub unsafe extern "C" fn cdrf_enhancer_set_postfilter(handle: *mut CdrfEnhancer, mu: f64, g_min: f64) -> CdrfStatus {
    with_handle(handle, |h| {
        PostfilterParams { mu, g_min }.validate().map_err(lib_err)?;
        h.config.postfilter.mu = mu;
        h.config.postfilter.g_min = g_min;
        Ok(())
    })
}

/// Noise-only interval in seconds used for the noise covariance.
///
/// # Safety
/// `handle` must be a live enhancer.
#[no_mangle]
pub unsafe extern "C" fn cdrf_enhancer_set_noise_context(
    handle: *mut CdrfEnhancer,
    start_s: f64,
    end_s: f64,
) -> CdrfStatus {
    with_handle(handle, |h| {
        if !(start_s.is_finite() && end_s.is_finite() && start_s >= 0.0 && end_s > start_s) {
            return Err((
                CdrfStatus::InvalidArgument,
                format!("invalid interval [{start_s}, {end_s}]"),
            ));
        }
        h.config.noise_context = NoiseContext::Interval {
            start: start_s,
            end: end_s,
        };
        Ok(())
    })
}

/// Enhance one utterance.
///
/// `input` holds `num_samples * num_channels` interleaved samples; `output`
/// receives `num_samples` mono samples. If `doa_out` is not NULL it receives
/// the azimuth and elevation (degrees) that were used.
///
/// # Safety
/// `handle` must be a live enhancer; `input`, `output` and (if non-NULL)
/// `doa_out` must point to buffers of the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn cdrf_enhancer_process(
    handle: *mut CdrfEnhancer,
    input: *const f32,
    num_samples: usize,
    num_channels: usize,
    output: *mut f32,
    doa_out: *mut f64,
) -> CdrfStatus {
    with_handle(handle, |h| {
        if input.is_null() {
            return Err(null("input"));
        }
        if output.is_null() {
            return Err(null("output"));
        }
        if num_channels != h.channels {
            return Err((
                CdrfStatus::InvalidArgument,
                format!("expected {} channels, got {num_channels}", h.channels),
            ));
        }
        let samples = std::slice::from_raw_parts(input, num_samples * num_channels);
        let signal = Array2::from_shape_vec(
            (num_samples, num_channels),
            samples.iter().map(|&v| f64::from(v)).collect(),
        )
        .expect("length matches shape");
        let result = enhance(&h.config, &signal, h.config.sample_rate).map_err(lib_err)?;
        let out = std::slice::from_raw_parts_mut(output, num_samples);
        for (o, &v) in out.iter_mut().zip(&result.output) {
            *o = v as f32;
        }
        if !doa_out.is_null() {
            *doa_out = result.doa.azimuth_deg();
            *doa_out.add(1) = result.doa.elevation_deg();
        }
        Ok(())
    })
}

/// CDR of one microphone pair from its coherence estimate and the diffuse
/// coherence model value.
#[no_mangle]
pub extern "C" fn cdrf_estimate_cdr_pair(gamma_re: f64, gamma_im: f64, gamma_n: f64, cdr_max: f64) -> f64 {
    estimate_cdr_pair(Complex64::new(gamma_re, gamma_im), gamma_n, cdr_max)
}

/// Wiener gain for a given SNR (or CDR).
#[no_mangle]
pub extern "C" fn cdrf_wiener_gain(snr: f64, mu: f64, g_min: f64) -> f64 {
    wiener_gain(snr, &PostfilterParams { mu, g_min })
}
