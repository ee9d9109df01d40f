//! C ABI for the qkd-core model.
//!
//! Configurations are opaque handles created from a bundled preset, a file,
//! or the defaults, and mutated through the same `key = value` strings the
//! configuration file format accepts. Every function returns a [`QkdStatus`]
//! code; on failure a thread-local message is available through
//! [`qkd_last_error_message`] until the next failing call on that thread.
//!
//! Detector-indexed arrays are ordered `1a, 2a, 1b, 2b`; pair-indexed arrays
//! are ordered `1a1b, 1a2b, 2a1b, 2a2b`. The generated header lives in
//! `include/qkd.h`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;

use qkd_core::coincidence::total_coincidence_rates;
use qkd_core::config::{ConfigSource, ExperimentConfig};
use qkd_core::counting::singles_rates;
use qkd_core::montecarlo::simulate;
use qkd_core::polarization::{joint_probabilities_closed_form, AnalyzerSetting};
use qkd_core::{correction, protocols, security, Channel, Detector, DetectorPair, QkdError};

/// Status codes returned by every API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QkdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    ParseError = 4,
    ZeroCoincidenceRate = 5,
    Uncorrectable = 6,
    IoError = 7,
    UnknownPreset = 8,
}

/// Protocol selector for `qkd_protocol_eval`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QkdProtocol {
    Bb84 = 0,
    EkertChsh = 1,
    EkertWigner = 2,
}

/// Sifted key (expected counts), error fraction and accidental fraction.
/// `qabr` is NaN when undefined (no coincidences).
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct QkdProtocolResult {
    pub sifted_key: f64,
    pub qber: f64,
    pub qabr: f64,
}

/// CHSH and Wigner parameters with their normalized security margins.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct QkdSecurityResult {
    pub s: f64,
    pub s_prime: f64,
    pub w_param: f64,
    pub s_norm: f64,
    pub w_norm: f64,
}

/// Error-correction outcome. `converged` is 1 when the residual error
/// reached the target within the pass cap, 0 otherwise.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct QkdCorrectionResult {
    pub passes: u32,
    pub converged: u8,
    pub corrected_key: f64,
    pub residual_qber: f64,
    pub residual_qabr: f64,
}

/// Tallies of one event-level simulation run.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct QkdEventTally {
    /// Counts per detector (`1a, 2a, 1b, 2b`).
    pub singles: [u64; 4],
    /// Coincidences per pair (`1a1b, 1a2b, 2a1b, 2a2b`).
    pub coincidences: [u64; 4],
    /// Same-emission subset of `coincidences`.
    pub true_coincidences: [u64; 4],
    /// Live seconds per channel (`alice, bob`).
    pub live_time: [f64; 2],
    pub duration: f64,
    pub seed: u64,
}

/// Opaque experiment configuration handle.
pub struct QkdConfig {
    source: ConfigSource,
    resolved: ExperimentConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: String) {
    let sanitized = CString::new(message.replace('\0', " "))
        .unwrap_or_else(|_| CString::new("invalid error message").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = sanitized);
}

fn fail(err: QkdError) -> QkdStatus {
    let status = match &err {
        QkdError::InvalidParameter { .. } => QkdStatus::InvalidArgument,
        QkdError::Parse { .. } => QkdStatus::ParseError,
        QkdError::ZeroCoincidenceRate => QkdStatus::ZeroCoincidenceRate,
        QkdError::Uncorrectable { .. } => QkdStatus::Uncorrectable,
        QkdError::Io(_) => QkdStatus::IoError,
    };
    set_error(err.to_string());
    status
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn qkd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

unsafe fn read_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, QkdStatus> {
    if ptr.is_null() {
        set_error(format!("{what} is a null pointer"));
        return Err(QkdStatus::NullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        QkdStatus::InvalidUtf8
    })
}

unsafe fn config_ref<'a>(cfg: *const QkdConfig) -> Result<&'a QkdConfig, QkdStatus> {
    if cfg.is_null() {
        set_error("config handle is a null pointer".to_string());
        return Err(QkdStatus::NullPointer);
    }
    Ok(&*cfg)
}

fn emit(out: *mut *mut QkdConfig, source: ConfigSource) -> QkdStatus {
    if out.is_null() {
        set_error("output pointer is null".to_string());
        return QkdStatus::NullPointer;
    }
    match source.resolve() {
        Ok(resolved) => {
            let handle = Box::new(QkdConfig { source, resolved });
            unsafe { *out = Box::into_raw(handle) };
            QkdStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Creates a configuration from a bundled preset (`fig3`, `fig5`, `fig6`,
/// `fig7`).
///
/// # Safety
/// `name` must be a valid NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qkd_config_preset(
    name: *const c_char,
    out: *mut *mut QkdConfig,
) -> QkdStatus {
    let name = match read_str(name, "preset name") {
        Ok(s) => s,
        Err(status) => return status,
    };
    match ConfigSource::preset(name) {
        Some(source) => emit(out, source),
        None => {
            set_error(format!("unknown preset `{name}`"));
            QkdStatus::UnknownPreset
        }
    }
}

/// Loads a configuration file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qkd_config_load(
    path: *const c_char,
    out: *mut *mut QkdConfig,
) -> QkdStatus {
    let path = match read_str(path, "config path") {
        Ok(s) => s,
        Err(status) => return status,
    };
    match ConfigSource::from_path(std::path::Path::new(path)) {
        Ok(source) => emit(out, source),
        Err(e) => fail(e),
    }
}

/// Overrides one configuration key, using the same `key`/`value` strings as
/// the file format (including `_ns`/`_khz` suffixes). The handle is left
/// unchanged if the new value does not validate.
///
/// # Safety
/// `cfg` must be a live handle from this library; `key` and `value` must be
/// valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn qkd_config_set(
    cfg: *mut QkdConfig,
    key: *const c_char,
    value: *const c_char,
) -> QkdStatus {
    if cfg.is_null() {
        set_error("config handle is a null pointer".to_string());
        return QkdStatus::NullPointer;
    }
    let key = match read_str(key, "key") {
        Ok(s) => s,
        Err(status) => return status,
    };
    let value = match read_str(value, "value") {
        Ok(s) => s,
        Err(status) => return status,
    };
    let handle = &mut *cfg;
    let candidate = handle.source.with_override(key, value);
    match candidate.resolve() {
        Ok(resolved) => {
            handle.source = candidate;
            handle.resolved = resolved;
            QkdStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Releases a configuration handle. Accepts null.
///
/// # Safety
/// `cfg` must be null or a live handle from this library; it must not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn qkd_config_free(cfg: *mut QkdConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Derived correlation level of Alice's channel.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qkd_config_alpha_a(cfg: *const QkdConfig, out: *mut f64) -> QkdStatus {
    let handle = match config_ref(cfg) {
        Ok(h) => h,
        Err(status) => return status,
    };
    if out.is_null() {
        set_error("output pointer is null".to_string());
        return QkdStatus::NullPointer;
    }
    *out = handle.resolved.alpha_a();
    QkdStatus::Ok
}

/// Joint detection probabilities for one analyzer setting, written to
/// `out[4]` in pair order.
///
/// # Safety
/// `cfg` must be a live handle; `out` must point to 4 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn qkd_joint_probabilities(
    cfg: *const QkdConfig,
    theta_a: f64,
    theta_b: f64,
    out: *mut f64,
) -> QkdStatus {
    let handle = match config_ref(cfg) {
        Ok(h) => h,
        Err(status) => return status,
    };
    if out.is_null() {
        set_error("output pointer is null".to_string());
        return QkdStatus::NullPointer;
    }
    let c = &handle.resolved;
    let probs = joint_probabilities_closed_form(
        &c.entanglement,
        &c.pbs_a,
        &c.pbs_b,
        &AnalyzerSetting::new(theta_a, theta_b),
    );
    for (i, pair) in DetectorPair::ALL.into_iter().enumerate() {
        *out.add(i) = probs.get(pair);
    }
    QkdStatus::Ok
}

/// Total singles rates per detector, written to `out[4]` in detector order.
///
/// # Safety
/// `cfg` must be a live handle; `out` must point to 4 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn qkd_singles_rates(
    cfg: *const QkdConfig,
    theta_a: f64,
    theta_b: f64,
    out: *mut f64,
) -> QkdStatus {
    let handle = match config_ref(cfg) {
        Ok(h) => h,
        Err(status) => return status,
    };
    if out.is_null() {
        set_error("output pointer is null".to_string());
        return QkdStatus::NullPointer;
    }
    let rates = singles_rates(&handle.resolved, &AnalyzerSetting::new(theta_a, theta_b));
    for (i, det) in Detector::ALL.into_iter().enumerate() {
        *out.add(i) = rates.lambda_tot[det];
    }
    QkdStatus::Ok
}

/// True, accidental and total coincidence rates per pair, written to three
/// caller arrays of 4 doubles each (pair order).
///
/// # Safety
/// `cfg` must be a live handle; each output must point to 4 writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn qkd_coincidence_rates(
    cfg: *const QkdConfig,
    theta_a: f64,
    theta_b: f64,
    true_out: *mut f64,
    accidental_out: *mut f64,
    total_out: *mut f64,
) -> QkdStatus {
    let handle = match config_ref(cfg) {
        Ok(h) => h,
        Err(status) => return status,
    };
    if true_out.is_null() || accidental_out.is_null() || total_out.is_null() {
        set_error("output pointer is null".to_string());
        return QkdStatus::NullPointer;
    }
    let rates = total_coincidence_rates(&handle.resolved, &AnalyzerSetting::new(theta_a, theta_b));
    for (i, pair) in DetectorPair::ALL.into_iter().enumerate() {
        *true_out.add(i) = rates.true_rate[pair];
        *accidental_out.add(i) = rates.accidental_rate[pair];
        *total_out.add(i) = rates.total_rate[pair];
    }
    QkdStatus::Ok
}

/// Sifted key, QBER and QABR for one protocol at base angle `theta_a`.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qkd_protocol_eval(
    cfg: *const QkdConfig,
    protocol: QkdProtocol,
    theta_a: f64,
    out: *mut QkdProtocolResult,
) -> QkdStatus {
    let handle = match config_ref(cfg) {
        Ok(h) => h,
        Err(status) => return status,
    };
    if out.is_null() {
        set_error("output pointer is null".to_string());
        return QkdStatus::NullPointer;
    }
    let result = match protocol {
        QkdProtocol::Bb84 => protocols::bb84(&handle.resolved, theta_a),
        QkdProtocol::EkertChsh => protocols::ekert_chsh(&handle.resolved, theta_a),
        QkdProtocol::EkertWigner => protocols::ekert_wigner(&handle.resolved, theta_a),
    };
    *out = QkdProtocolResult {
        sifted_key: result.sifted_key,
        qber: result.qber,
        qabr: result.qabr.unwrap_or(f64::NAN),
    };
    QkdStatus::Ok
}

/// CHSH and Wigner parameters with normalized margins at base angle
/// `theta_a`.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qkd_security_eval(
    cfg: *const QkdConfig,
    theta_a: f64,
    out: *mut QkdSecurityResult,
) -> QkdStatus {
    let handle = match config_ref(cfg) {
        Ok(h) => h,
        Err(status) => return status,
    };
    if out.is_null() {
        set_error("output pointer is null".to_string());
        return QkdStatus::NullPointer;
    }
    match security::evaluate(&handle.resolved, theta_a) {
        Ok(sec) => {
            *out = QkdSecurityResult {
                s: sec.s,
                s_prime: sec.s_prime,
                w_param: sec.w_param,
                s_norm: sec.s_norm,
                w_norm: sec.w_norm,
            };
            QkdStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Parity-pass error correction on a sifted key of expected size `key` with
/// error fraction `qber` and accidental fraction `qabr`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qkd_correct(
    key: f64,
    qber: f64,
    qabr: f64,
    target: f64,
    out: *mut QkdCorrectionResult,
) -> QkdStatus {
    if out.is_null() {
        set_error("output pointer is null".to_string());
        return QkdStatus::NullPointer;
    }
    match correction::correct(key, qber, qabr, target) {
        Ok(r) => {
            *out = QkdCorrectionResult {
                passes: r.passes,
                converged: r.converged as u8,
                corrected_key: r.corrected_key,
                residual_qber: r.residual_qber,
                residual_qabr: r.residual_qabr,
            };
            QkdStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Runs the event-level simulator for `duration` seconds at the given
/// analyzer setting and seed.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qkd_simulate(
    cfg: *const QkdConfig,
    theta_a: f64,
    theta_b: f64,
    duration: f64,
    seed: u64,
    out: *mut QkdEventTally,
) -> QkdStatus {
    let handle = match config_ref(cfg) {
        Ok(h) => h,
        Err(status) => return status,
    };
    if out.is_null() {
        set_error("output pointer is null".to_string());
        return QkdStatus::NullPointer;
    }
    if duration <= 0.0 || !duration.is_finite() {
        set_error(format!("duration must be finite and > 0, got {duration}"));
        return QkdStatus::InvalidArgument;
    }
    let tally = simulate(
        &handle.resolved,
        &AnalyzerSetting::new(theta_a, theta_b),
        duration,
        seed,
    );
    let mut singles = [0u64; 4];
    for (i, det) in Detector::ALL.into_iter().enumerate() {
        singles[i] = tally.singles[det];
    }
    let mut coincidences = [0u64; 4];
    let mut true_coincidences = [0u64; 4];
    for (i, pair) in DetectorPair::ALL.into_iter().enumerate() {
        coincidences[i] = tally.coincidences[pair];
        true_coincidences[i] = tally.true_coincidences[pair];
    }
    *out = QkdEventTally {
        singles,
        coincidences,
        true_coincidences,
        live_time: [
            tally.live_time[Channel::Alice],
            tally.live_time[Channel::Bob],
        ],
        duration: tally.duration,
        seed: tally.seed,
    };
    QkdStatus::Ok
}
