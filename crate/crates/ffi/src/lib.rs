//! C ABI over the partune library.
//!
//! Every entry point returns a [`PartuneStatus`]. On failure the message is
//! kept per thread and can be read with [`partune_last_error`]. Objects come
//! back as opaque handles that must be released with their `_free` function.
//! Strings returned by the library are owned by the caller and released with
//! [`partune_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use partune::graph::{self, Graph, HardwareSpec, ThreadConfig};
use partune::sim::{self, SimError, SimResult};
use partune::{tuner, width};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartuneStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Syntax = 4,
    InvalidInput = 5,
    Oversubscribed = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartuneMode {
    Synchronous = 0,
    Asynchronous = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartunePlacement {
    SingleSocket = 0,
    DataParallel = 1,
    ModelParallel = 2,
}

/// Opaque parsed graph.
pub struct PartuneGraph(Graph);

/// Opaque hardware description.
pub struct PartuneHardware(HardwareSpec);

/// Opaque simulation result.
pub struct PartuneSimResult(SimResult);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PartuneWidth {
    pub heavy_count: u32,
    pub heavy_depth: u32,
    pub max_width: u32,
    pub avg_width: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PartuneConfig {
    pub pools: u32,
    pub intra_threads: u32,
    pub kernel_threads: u32,
}

impl From<ThreadConfig> for PartuneConfig {
    fn from(c: ThreadConfig) -> Self {
        PartuneConfig {
            pools: c.pools,
            intra_threads: c.intra_threads,
            kernel_threads: c.kernel_threads,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(PartuneStatus, String);

impl Failure {
    fn null(what: &str) -> Self {
        Failure(PartuneStatus::NullArgument, format!("`{what}` is null"))
    }
}

impl From<graph::ParseError> for Failure {
    fn from(e: graph::ParseError) -> Self {
        let code = match e {
            graph::ParseError::Syntax(_) => PartuneStatus::Syntax,
            graph::ParseError::Invalid(_) => PartuneStatus::InvalidInput,
        };
        Failure(code, e.to_string())
    }
}

impl From<graph::HardwareParseError> for Failure {
    fn from(e: graph::HardwareParseError) -> Self {
        let code = match e {
            graph::HardwareParseError::Syntax(_) => PartuneStatus::Syntax,
            graph::HardwareParseError::Invalid(_) => PartuneStatus::InvalidInput,
        };
        Failure(code, e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let code = match e {
            SimError::Oversubscribed { .. } => PartuneStatus::Oversubscribed,
            SimError::Hardware(_) => PartuneStatus::InvalidInput,
        };
        Failure(code, e.to_string())
    }
}

fn set_error(msg: String) {
    // Interior NULs would truncate the message in C anyway.
    let msg = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PartuneStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PartuneStatus::Ok,
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            PartuneStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(PartuneStatus::InvalidUtf8, format!("`{what}` is not UTF-8: {e}")))
}

fn read_file(path: &str) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure(PartuneStatus::Io, format!("{path}: {e}")))
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::null(what))
}

unsafe fn put<T>(out: *mut T, what: &str, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::null(what));
    }
    out.write(value);
    Ok(())
}

fn owned_string(s: String) -> *mut c_char {
    CString::new(s).map(CString::into_raw).unwrap_or(ptr::null_mut())
}

/// Message of the last failed call on this thread, or NULL after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn partune_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn partune_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be NULL or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn partune_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn partune_graph_from_json(json: *const c_char, out: *mut *mut PartuneGraph) -> PartuneStatus {
    guard(|| {
        let g = graph::parse_graph(text(json, "json")?)?;
        put(out, "out", Box::into_raw(Box::new(PartuneGraph(g))))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn partune_graph_from_file(path: *const c_char, out: *mut *mut PartuneGraph) -> PartuneStatus {
    guard(|| {
        let g = graph::parse_graph(&read_file(text(path, "path")?)?)?;
        put(out, "out", Box::into_raw(Box::new(PartuneGraph(g))))
    })
}

/// # Safety
/// `g` must be NULL or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn partune_graph_free(g: *mut PartuneGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Number of nodes in the graph, 0 for NULL.
///
/// # Safety
/// `g` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn partune_graph_len(g: *const PartuneGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.len())
}

/// Topological order as newline-separated node ids.
///
/// # Safety
/// `g` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn partune_graph_topological_order(g: *const PartuneGraph, out: *mut *mut c_char) -> PartuneStatus {
    guard(|| {
        let order = graph::topological_order(&get(g, "graph")?.0).join("\n");
        put(out, "out", owned_string(order))
    })
}

/// # Safety
/// `g` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn partune_graph_width(g: *const PartuneGraph, out: *mut PartuneWidth) -> PartuneStatus {
    guard(|| {
        let w = width::width_report(&get(g, "graph")?.0);
        put(
            out,
            "out",
            PartuneWidth {
                heavy_count: w.heavy_count,
                heavy_depth: w.heavy_depth,
                max_width: w.max_width,
                avg_width: w.avg_width,
            },
        )
    })
}

/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn partune_hardware_from_json(json: *const c_char, out: *mut *mut PartuneHardware) -> PartuneStatus {
    guard(|| {
        let hw = graph::parse_hardware(text(json, "json")?)?;
        put(out, "out", Box::into_raw(Box::new(PartuneHardware(hw))))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn partune_hardware_from_file(path: *const c_char, out: *mut *mut PartuneHardware) -> PartuneStatus {
    guard(|| {
        let hw = graph::parse_hardware(&read_file(text(path, "path")?)?)?;
        put(out, "out", Box::into_raw(Box::new(PartuneHardware(hw))))
    })
}

/// # Safety
/// `hw` must be NULL or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn partune_hardware_free(hw: *mut PartuneHardware) {
    if !hw.is_null() {
        drop(Box::from_raw(hw));
    }
}

/// Width-based configuration for `g` on `hw`.
///
/// # Safety
/// `g` and `hw` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn partune_recommend(
    g: *const PartuneGraph,
    hw: *const PartuneHardware,
    out: *mut PartuneConfig,
) -> PartuneStatus {
    guard(|| {
        let w = width::width_report(&get(g, "graph")?.0);
        let rec = tuner::recommend(&w, &get(hw, "hardware")?.0);
        put(out, "out", rec.config.into())
    })
}

/// # Safety
/// `g` and `hw` must be live handles, `cfg` readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn partune_simulate(
    g: *const PartuneGraph,
    hw: *const PartuneHardware,
    cfg: *const PartuneConfig,
    mode: PartuneMode,
    placement: PartunePlacement,
    out: *mut *mut PartuneSimResult,
) -> PartuneStatus {
    guard(|| {
        let c = get(cfg, "config")?;
        let cfg = ThreadConfig::new(c.pools, c.intra_threads, c.kernel_threads)
            .map_err(|e| Failure(PartuneStatus::InvalidInput, e.to_string()))?;
        let policy = sim::SchedulePolicy {
            mode: match mode {
                PartuneMode::Synchronous => sim::Mode::Synchronous,
                PartuneMode::Asynchronous => sim::Mode::Asynchronous,
            },
            placement: match placement {
                PartunePlacement::SingleSocket => sim::Placement::SingleSocket,
                PartunePlacement::DataParallel => sim::Placement::DataParallel,
                PartunePlacement::ModelParallel => sim::Placement::ModelParallel,
            },
        };
        let r = sim::simulate(&get(g, "graph")?.0, &cfg, &get(hw, "hardware")?.0, policy)?;
        put(out, "out", Box::into_raw(Box::new(PartuneSimResult(r))))
    })
}

/// # Safety
/// `r` must be NULL or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn partune_sim_result_free(r: *mut PartuneSimResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Makespan in time units, NaN for NULL.
///
/// # Safety
/// `r` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn partune_sim_makespan(r: *const PartuneSimResult) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| sim::ticks_to_units(r.0.makespan))
}

/// Per-node schedule as CSV with a header row.
///
/// # Safety
/// `r` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn partune_sim_trace_csv(r: *const PartuneSimResult, out: *mut *mut c_char) -> PartuneStatus {
    guard(|| {
        let csv = get(r, "result")?.0.trace_csv();
        put(out, "out", owned_string(csv))
    })
}

/// Best single-socket asynchronous configuration with at most `max_pools`
/// pools, and its makespan in time units.
///
/// # Safety
/// `g` and `hw` must be live handles, `out` and `makespan` writable.
#[no_mangle]
pub unsafe extern "C" fn partune_sweep_argmin(
    g: *const PartuneGraph,
    hw: *const PartuneHardware,
    max_pools: u32,
    out: *mut PartuneConfig,
    makespan: *mut f64,
) -> PartuneStatus {
    guard(|| {
        if max_pools == 0 {
            return Err(Failure(PartuneStatus::InvalidInput, "`max_pools` must be at least 1".into()));
        }
        let result = sim::sweep(&get(g, "graph")?.0, &get(hw, "hardware")?.0, max_pools)?;
        let best = result.argmin();
        put(makespan, "makespan", sim::ticks_to_units(best.makespan))?;
        put(out, "out", best.config.into())
    })
}
