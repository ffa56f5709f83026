//! C ABI for `adcons`.
//!
//! Every fallible function returns an [`AdconsStatus`]; on failure the
//! message is available from [`adcons_last_error_message`] on the same
//! thread. Objects are handed out as opaque pointers and released with the
//! matching `*_free` function. Matrices are passed row-major.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use libc::size_t;
use nalgebra::DMatrix;

use adcons::export;
use adcons::performance;
use adcons::riccati::{self, PerformanceSpec, PlantModel};
use adcons::scenario::{self, Scenario};
use adcons::simulator::{self, Trace};
use adcons::{Error, GainSet};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdconsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NoStabilizingSolution = 4,
    NoFeasibleGamma = 5,
    NotPositiveDefinite = 6,
    Divergence = 7,
    ParseError = 8,
    IoError = 9,
    ValidationError = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

/// Synthesized gains and certificate.
pub struct AdconsGains {
    inner: GainSet,
}

/// A validated scenario.
pub struct AdconsScenario {
    inner: Scenario,
}

/// A simulated (or imported) trace.
pub struct AdconsTrace {
    inner: Trace,
}

/// Cost summary of a trace.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct AdconsCostReport {
    pub jx_final: f64,
    pub j_star_initial: f64,
    pub j_star_integral: f64,
    pub j_star: f64,
    pub tail_estimate: f64,
    pub horizon: f64,
    /// 1 when `jx_final <= j_star`.
    pub satisfied: c_int,
    pub margin: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    let c = CString::new(text).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> AdconsStatus {
    match err {
        Error::InvalidGraph(_)
        | Error::InvalidArgument(_)
        | Error::NotSymmetric
        | Error::InputNormalization(_) => AdconsStatus::InvalidArgument,
        Error::DimensionMismatch(_) => AdconsStatus::DimensionMismatch,
        Error::NoStabilizingSolution(_) => AdconsStatus::NoStabilizingSolution,
        Error::NotPositiveDefinite => AdconsStatus::NotPositiveDefinite,
        Error::NoFeasibleGamma { .. } => AdconsStatus::NoFeasibleGamma,
        Error::Divergence { .. } => AdconsStatus::Divergence,
        Error::Validation(_) => AdconsStatus::ValidationError,
        Error::Parse { .. } | Error::Csv(_) => AdconsStatus::ParseError,
        Error::Io(_) => AdconsStatus::IoError,
    }
}

fn fail(status: AdconsStatus, msg: impl Into<String>) -> AdconsStatus {
    set_error(msg);
    status
}

/// Runs `f`, translating errors and panics into status codes.
fn guard<F>(f: F) -> AdconsStatus
where
    F: FnOnce() -> Result<(), AdconsStatus>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AdconsStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(AdconsStatus::Panic, "internal panic"),
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, AdconsStatus>;
}

impl<T> OrStatus<T> for adcons::Result<T> {
    fn or_status(self) -> Result<T, AdconsStatus> {
        self.map_err(|e| fail(status_of(&e), e.to_string()))
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), AdconsStatus> {
    if p.is_null() {
        Err(fail(AdconsStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn matrix_arg(
    p: *const f64,
    rows: usize,
    cols: usize,
    what: &str,
) -> Result<DMatrix<f64>, AdconsStatus> {
    non_null(p, what)?;
    if rows == 0 || cols == 0 {
        return Err(fail(
            AdconsStatus::DimensionMismatch,
            format!("{what} has a zero dimension"),
        ));
    }
    // SAFETY: caller guarantees `rows * cols` readable doubles.
    let data = unsafe { slice::from_raw_parts(p, rows * cols) };
    Ok(DMatrix::from_row_slice(rows, cols, data))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, AdconsStatus> {
    non_null(p, what)?;
    // SAFETY: caller guarantees a NUL-terminated string.
    unsafe { CStr::from_ptr(p) }.to_str().map_err(|_| {
        fail(
            AdconsStatus::InvalidArgument,
            format!("{what} is not valid UTF-8"),
        )
    })
}

unsafe fn plant_args(
    a: *const f64,
    b: *const f64,
    d: size_t,
    p: size_t,
) -> Result<PlantModel, AdconsStatus> {
    let a = unsafe { matrix_arg(a, d, d, "A") }?;
    let b = unsafe { matrix_arg(b, d, p, "B") }?;
    PlantModel::new(a, b).or_status()
}

fn emit<T>(value: T, out: *mut *mut T) -> Result<(), AdconsStatus> {
    non_null(out, "output pointer")?;
    // SAFETY: checked non-null; caller provides a writable slot.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

fn copy_matrix(m: &DMatrix<f64>, buf: *mut f64, len: size_t) -> Result<(), AdconsStatus> {
    let need = m.nrows() * m.ncols();
    if len < need {
        return Err(fail(
            AdconsStatus::BufferTooSmall,
            format!("buffer holds {len} values, {need} needed"),
        ));
    }
    non_null(buf, "buffer")?;
    // SAFETY: `buf` has room for at least `need` doubles.
    let out = unsafe { slice::from_raw_parts_mut(buf, need) };
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out[i * m.ncols() + j] = m[(i, j)];
        }
    }
    Ok(())
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length including the NUL,
/// or 0 when there is no error.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn adcons_last_error_message(buf: *mut c_char, len: size_t) -> size_t {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len);
            // SAFETY: `buf` has `len >= n` writable bytes.
            unsafe {
                ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n - 1) = 0;
            }
        }
        bytes.len()
    })
}

/// Linear design at a fixed γ. `a` is d×d, `b` d×p, `q` d×d.
///
/// # Safety
/// Matrix pointers must reference the stated number of doubles; `out` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn adcons_synthesize_linear(
    a: *const f64,
    b: *const f64,
    d: size_t,
    p: size_t,
    q: *const f64,
    gamma: f64,
    out: *mut *mut AdconsGains,
) -> AdconsStatus {
    guard(|| {
        let plant = unsafe { plant_args(a, b, d, p) }?;
        let q = unsafe { matrix_arg(q, d, d, "Q") }?;
        let spec = PerformanceSpec::new(q, gamma).or_status()?;
        let inner = riccati::synthesize_linear(&plant, &spec).or_status()?;
        emit(AdconsGains { inner }, out)
    })
}

/// Lipschitz design at a fixed γ with Lipschitz constant `mu`.
///
/// # Safety
/// See [`adcons_synthesize_linear`].
#[no_mangle]
pub unsafe extern "C" fn adcons_synthesize_lipschitz(
    a: *const f64,
    b: *const f64,
    d: size_t,
    p: size_t,
    q: *const f64,
    gamma: f64,
    mu: f64,
    out: *mut *mut AdconsGains,
) -> AdconsStatus {
    guard(|| {
        let plant = unsafe { plant_args(a, b, d, p) }?;
        let q = unsafe { matrix_arg(q, d, d, "Q") }?;
        let spec = PerformanceSpec::new(q, gamma)
            .and_then(|s| s.with_mu(mu))
            .or_status()?;
        let inner = riccati::synthesize_lipschitz(&plant, &spec).or_status()?;
        emit(AdconsGains { inner }, out)
    })
}

/// Gain-factor design: searches γ so that the certificate is bounded by
/// `eps`. A negative `mu` selects the linear design.
///
/// # Safety
/// See [`adcons_synthesize_linear`].
#[no_mangle]
pub unsafe extern "C" fn adcons_synthesize_eps(
    a: *const f64,
    b: *const f64,
    d: size_t,
    p: size_t,
    q: *const f64,
    eps: f64,
    mu: f64,
    out: *mut *mut AdconsGains,
) -> AdconsStatus {
    guard(|| {
        let plant = unsafe { plant_args(a, b, d, p) }?;
        let q = unsafe { matrix_arg(q, d, d, "Q") }?;
        let (_, inner) = if mu < 0.0 {
            riccati::synthesize_linear_eps(&plant, &q, eps)
        } else {
            riccati::synthesize_lipschitz_eps(&plant, &q, eps, mu)
        }
        .or_status()?;
        emit(AdconsGains { inner }, out)
    })
}

/// State dimension `d` and input dimension `p` of the gains.
///
/// # Safety
/// `gains` must come from this library; `d` and `p` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adcons_gains_dims(
    gains: *const AdconsGains,
    d: *mut size_t,
    p: *mut size_t,
) -> AdconsStatus {
    guard(|| {
        non_null(gains, "gains")?;
        non_null(d, "d")?;
        non_null(p, "p")?;
        let g = unsafe { &(*gains).inner };
        unsafe {
            *d = g.ku.ncols();
            *p = g.ku.nrows();
        }
        Ok(())
    })
}

/// γ used for the gains (the searched value for gain-factor designs).
///
/// # Safety
/// `gains` must come from this library; `gamma` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adcons_gains_gamma(
    gains: *const AdconsGains,
    gamma: *mut f64,
) -> AdconsStatus {
    guard(|| {
        non_null(gains, "gains")?;
        non_null(gamma, "gamma")?;
        unsafe { *gamma = (*gains).inner.gamma };
        Ok(())
    })
}

/// Copies K_u (p×d, row-major) into `buf`.
///
/// # Safety
/// `buf` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn adcons_gains_ku(
    gains: *const AdconsGains,
    buf: *mut f64,
    len: size_t,
) -> AdconsStatus {
    guard(|| {
        non_null(gains, "gains")?;
        copy_matrix(unsafe { &(*gains).inner.ku }, buf, len)
    })
}

/// Copies K_w (d×d) into `buf`.
///
/// # Safety
/// `buf` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn adcons_gains_kw(
    gains: *const AdconsGains,
    buf: *mut f64,
    len: size_t,
) -> AdconsStatus {
    guard(|| {
        non_null(gains, "gains")?;
        copy_matrix(unsafe { &(*gains).inner.kw }, buf, len)
    })
}

/// Copies the Riccati certificate (d×d) into `buf`.
///
/// # Safety
/// `buf` must have room for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn adcons_gains_certificate(
    gains: *const AdconsGains,
    buf: *mut f64,
    len: size_t,
) -> AdconsStatus {
    guard(|| {
        non_null(gains, "gains")?;
        copy_matrix(unsafe { &(*gains).inner.certificate }, buf, len)
    })
}

/// # Safety
/// `gains` must be null or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn adcons_gains_free(gains: *mut AdconsGains) {
    if !gains.is_null() {
        drop(unsafe { Box::from_raw(gains) });
    }
}

/// Loads and validates a scenario file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adcons_scenario_load(
    path: *const c_char,
    out: *mut *mut AdconsScenario,
) -> AdconsStatus {
    guard(|| {
        let path = unsafe { str_arg(path, "path") }?;
        let inner = scenario::load_scenario(path).or_status()?;
        emit(AdconsScenario { inner }, out)
    })
}

/// Loads a bundled scenario (`"example1"` or `"example2"`).
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adcons_scenario_bundled(
    name: *const c_char,
    out: *mut *mut AdconsScenario,
) -> AdconsStatus {
    guard(|| {
        let name = unsafe { str_arg(name, "name") }?;
        let inner = scenario::bundled(name).or_status()?;
        emit(AdconsScenario { inner }, out)
    })
}

/// Number of agents and state dimension of a scenario.
///
/// # Safety
/// `sc` must come from this library; `agents` and `d` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adcons_scenario_dims(
    sc: *const AdconsScenario,
    agents: *mut size_t,
    d: *mut size_t,
) -> AdconsStatus {
    guard(|| {
        non_null(sc, "scenario")?;
        non_null(agents, "agents")?;
        non_null(d, "d")?;
        let s = unsafe { &(*sc).inner };
        unsafe {
            *agents = s.agent_count();
            *d = s.state_dim();
        }
        Ok(())
    })
}

/// Synthesizes the scenario's gains.
///
/// # Safety
/// `sc` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adcons_scenario_synthesize(
    sc: *const AdconsScenario,
    out: *mut *mut AdconsGains,
) -> AdconsStatus {
    guard(|| {
        non_null(sc, "scenario")?;
        let inner = unsafe { &(*sc).inner }.synthesize().or_status()?;
        emit(AdconsGains { inner }, out)
    })
}

/// Synthesizes gains and simulates the scenario.
///
/// # Safety
/// `sc` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adcons_scenario_simulate(
    sc: *const AdconsScenario,
    out: *mut *mut AdconsTrace,
) -> AdconsStatus {
    guard(|| {
        non_null(sc, "scenario")?;
        let inner = unsafe { &(*sc).inner }.run().or_status()?;
        emit(AdconsTrace { inner }, out)
    })
}

/// Simulates the scenario with caller-supplied gains.
///
/// # Safety
/// `sc` and `gains` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adcons_scenario_simulate_with(
    sc: *const AdconsScenario,
    gains: *const AdconsGains,
    out: *mut *mut AdconsTrace,
) -> AdconsStatus {
    guard(|| {
        non_null(sc, "scenario")?;
        non_null(gains, "gains")?;
        let s = unsafe { &(*sc).inner };
        let g = unsafe { &(*gains).inner }.clone();
        let inner = s
            .simulation_setup(g)
            .and_then(|setup| simulator::simulate(&setup))
            .or_status()?;
        emit(AdconsTrace { inner }, out)
    })
}

/// # Safety
/// `sc` must be null or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn adcons_scenario_free(sc: *mut AdconsScenario) {
    if !sc.is_null() {
        drop(unsafe { Box::from_raw(sc) });
    }
}

/// Number of samples in the trace.
///
/// # Safety
/// `trace` must come from this library; `count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adcons_trace_sample_count(
    trace: *const AdconsTrace,
    count: *mut size_t,
) -> AdconsStatus {
    guard(|| {
        non_null(trace, "trace")?;
        non_null(count, "count")?;
        unsafe { *count = (*trace).inner.samples.len() };
        Ok(())
    })
}

/// Disagreement norm at the last sample.
///
/// # Safety
/// `trace` must come from this library; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adcons_trace_final_disagreement(
    trace: *const AdconsTrace,
    value: *mut f64,
) -> AdconsStatus {
    guard(|| {
        non_null(trace, "trace")?;
        non_null(value, "value")?;
        unsafe { *value = (*trace).inner.final_sample().disagreement };
        Ok(())
    })
}

/// Cost functional and guaranteed-cost bound for the trace.
///
/// # Safety
/// `trace` must come from this library; `report` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adcons_trace_cost_report(
    trace: *const AdconsTrace,
    report: *mut AdconsCostReport,
) -> AdconsStatus {
    guard(|| {
        non_null(trace, "trace")?;
        non_null(report, "report")?;
        let t = unsafe { &(*trace).inner };
        let c = performance::guaranteed_cost_bound(t, &t.gains).or_status()?;
        unsafe {
            *report = AdconsCostReport {
                jx_final: c.jx_final,
                j_star_initial: c.j_star_initial,
                j_star_integral: c.j_star_integral,
                j_star: c.j_star,
                tail_estimate: c.tail_estimate,
                horizon: c.horizon,
                satisfied: c.satisfied as c_int,
                margin: c.margin,
            }
        };
        Ok(())
    })
}

/// Writes the trace CSV and its `.meta` sibling.
///
/// # Safety
/// `trace` must come from this library; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn adcons_trace_export(
    trace: *const AdconsTrace,
    path: *const c_char,
) -> AdconsStatus {
    guard(|| {
        non_null(trace, "trace")?;
        let path = unsafe { str_arg(path, "path") }?;
        export::export_trace(unsafe { &(*trace).inner }, path).or_status()?;
        Ok(())
    })
}

/// Reads a trace written by [`adcons_trace_export`].
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn adcons_trace_import(
    path: *const c_char,
    out: *mut *mut AdconsTrace,
) -> AdconsStatus {
    guard(|| {
        let path = unsafe { str_arg(path, "path") }?;
        let inner = export::import_trace(path).or_status()?;
        emit(AdconsTrace { inner }, out)
    })
}

/// # Safety
/// `trace` must be null or come from this library, and not be used again.
#[no_mangle]
pub unsafe extern "C" fn adcons_trace_free(trace: *mut AdconsTrace) {
    if !trace.is_null() {
        drop(unsafe { Box::from_raw(trace) });
    }
}
