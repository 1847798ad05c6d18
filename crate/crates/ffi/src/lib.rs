//! C interface to `relayplan`.
//!
//! Topologies and plans are opaque handles created and destroyed through
//! this interface. Every fallible function returns an [`RpStatus`]; the
//! message of the most recent failure on the calling thread is available
//! from [`rp_last_error`]. Panics never cross the boundary; they surface as
//! [`RpStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use relayplan::io::parse_topology;
use relayplan::planner::{centroid_plan, grid_oracle, solve_program_c, PlanResult};
use relayplan::rate_model::fixed_relay_rate;
use relayplan::{Point, SolverConfig, Topology};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Solver = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Topology plus the solver settings to use with it.
pub struct RpTopology {
    topology: Topology,
    config: SolverConfig,
}

pub struct RpPlan {
    plan: PlanResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: RpStatus, msg: impl Into<String>) -> RpStatus {
    set_error(msg);
    status
}

/// Runs `f`, turning a panic into [`RpStatus::Panic`].
fn guard(f: impl FnOnce() -> RpStatus) -> RpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(RpStatus::Panic, "internal panic"),
    }
}

fn emit<T>(out: *mut *mut T, value: T) -> RpStatus {
    // SAFETY: callers check `out` for null before computing `value`.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    RpStatus::Ok
}

/// Message of the last failure on this thread, or null if there was none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Builds a topology from coordinates. `dest_xy` holds `n_dest` pairs
/// `x0, y0, x1, y1, ...`. Solver settings start at their defaults.
///
/// # Safety
/// `dest_xy` must point to `2 * n_dest` readable doubles and `out` must be
/// a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn rp_topology_new(
    source_x: f64,
    source_y: f64,
    dest_xy: *const f64,
    n_dest: usize,
    p_source: f64,
    p_relay: f64,
    n0: f64,
    alpha: f64,
    out: *mut *mut RpTopology,
) -> RpStatus {
    guard(|| {
        if out.is_null() || (dest_xy.is_null() && n_dest > 0) {
            return fail(RpStatus::NullPointer, "null argument");
        }
        let coords: &[f64] = if n_dest == 0 {
            &[]
        } else {
            // SAFETY: checked non-null; the caller guarantees the length.
            unsafe { std::slice::from_raw_parts(dest_xy, 2 * n_dest) }
        };
        let topology = Topology {
            source: Point::new(source_x, source_y),
            destinations: coords.chunks_exact(2).map(|c| Point::new(c[0], c[1])).collect(),
            p_source,
            p_relay,
            n0,
            alpha,
        };
        if let Err(e) = topology.validate() {
            return fail(RpStatus::InvalidArgument, e.to_string());
        }
        emit(
            out,
            RpTopology {
                topology,
                config: SolverConfig::default(),
            },
        )
    })
}

/// Parses a topology file (JSON text, NUL terminated), including its
/// optional solver block.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rp_topology_from_json(json: *const c_char, out: *mut *mut RpTopology) -> RpStatus {
    guard(|| {
        if json.is_null() || out.is_null() {
            return fail(RpStatus::NullPointer, "null argument");
        }
        // SAFETY: checked non-null; the caller guarantees termination.
        let bytes = unsafe { CStr::from_ptr(json) }.to_bytes();
        match parse_topology(bytes) {
            Ok(p) => emit(
                out,
                RpTopology {
                    topology: p.topology,
                    config: p.config,
                },
            ),
            Err(e) => fail(RpStatus::Parse, e.to_string()),
        }
    })
}

/// Overrides the switch sharpness and surrogate exponent used by [`rp_plan`].
///
/// # Safety
/// `topology` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn rp_topology_set_solver(topology: *mut RpTopology, gamma: f64, p: f64) -> RpStatus {
    guard(|| {
        // SAFETY: the caller guarantees a live handle.
        let Some(t) = (unsafe { topology.as_mut() }) else {
            return fail(RpStatus::NullPointer, "null topology");
        };
        let config = SolverConfig {
            gamma,
            p,
            ..t.config.clone()
        };
        if let Err(e) = config.validate() {
            return fail(RpStatus::InvalidArgument, e.to_string());
        }
        t.config = config;
        RpStatus::Ok
    })
}

/// # Safety
/// `topology` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rp_topology_free(topology: *mut RpTopology) {
    if !topology.is_null() {
        // SAFETY: the caller hands back ownership of a live handle.
        drop(unsafe { Box::from_raw(topology) });
    }
}

unsafe fn plan_with(
    topology: *const RpTopology,
    out: *mut *mut RpPlan,
    run: impl FnOnce(&RpTopology) -> Result<PlanResult, relayplan::planner::PlanError>,
) -> RpStatus {
    guard(|| {
        if out.is_null() {
            return fail(RpStatus::NullPointer, "null output pointer");
        }
        // SAFETY: the caller guarantees a live handle.
        let Some(t) = (unsafe { topology.as_ref() }) else {
            return fail(RpStatus::NullPointer, "null topology");
        };
        match run(t) {
            Ok(plan) => emit(out, RpPlan { plan }),
            Err(e) => fail(RpStatus::Solver, e.to_string()),
        }
    })
}

/// Optimized relay position and powers.
///
/// # Safety
/// `topology` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rp_plan(topology: *const RpTopology, out: *mut *mut RpPlan) -> RpStatus {
    unsafe { plan_with(topology, out, |t| solve_program_c(&t.topology, &t.config)) }
}

/// Best relay on a grid with `resolution` intervals per axis.
///
/// # Safety
/// `topology` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rp_grid_oracle(
    topology: *const RpTopology,
    resolution: usize,
    out: *mut *mut RpPlan,
) -> RpStatus {
    unsafe {
        plan_with(topology, out, |t| {
            grid_oracle(&t.topology, resolution, t.config.hull_margin)
        })
    }
}

/// Relay fixed at the hull centroid.
///
/// # Safety
/// `topology` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rp_centroid_plan(topology: *const RpTopology, out: *mut *mut RpPlan) -> RpStatus {
    unsafe { plan_with(topology, out, |t| centroid_plan(&t.topology, t.config.hull_margin)) }
}

/// Optimal multicast rate with the relay fixed at `(x, y)`.
///
/// # Safety
/// `topology` must be a live handle and `rate` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rp_fixed_relay_rate(
    topology: *const RpTopology,
    x: f64,
    y: f64,
    rate: *mut f64,
) -> RpStatus {
    guard(|| {
        // SAFETY: the caller guarantees a live handle.
        let Some(t) = (unsafe { topology.as_ref() }) else {
            return fail(RpStatus::NullPointer, "null topology");
        };
        if rate.is_null() {
            return fail(RpStatus::NullPointer, "null output pointer");
        }
        if !(x.is_finite() && y.is_finite()) {
            return fail(RpStatus::InvalidArgument, "relay coordinates must be finite");
        }
        match fixed_relay_rate(&t.topology, Point::new(x, y)) {
            Ok(r) => {
                // SAFETY: checked non-null.
                unsafe { *rate = r };
                RpStatus::Ok
            }
            Err(e) => fail(RpStatus::Solver, e.to_string()),
        }
    })
}

/// Relay position of a plan.
///
/// # Safety
/// `plan` must be a live handle; `x` and `y` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rp_plan_relay(plan: *const RpPlan, x: *mut f64, y: *mut f64) -> RpStatus {
    // SAFETY: the caller guarantees a live handle.
    let Some(p) = (unsafe { plan.as_ref() }) else {
        return fail(RpStatus::NullPointer, "null plan");
    };
    if x.is_null() || y.is_null() {
        return fail(RpStatus::NullPointer, "null output pointer");
    }
    // SAFETY: checked non-null.
    unsafe {
        *x = p.plan.relay.x;
        *y = p.plan.relay.y;
    }
    RpStatus::Ok
}

/// Multicast rate of a plan; NaN for a null handle.
///
/// # Safety
/// `plan` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rp_plan_multicast_rate(plan: *const RpPlan) -> f64 {
    // SAFETY: the caller guarantees a live handle or null.
    unsafe { plan.as_ref() }.map_or(f64::NAN, |p| p.plan.multicast_rate)
}

/// Whether the smooth solver converged (always true for grid and centroid
/// plans); false for a null handle.
///
/// # Safety
/// `plan` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rp_plan_converged(plan: *const RpPlan) -> bool {
    // SAFETY: the caller guarantees a live handle or null.
    unsafe { plan.as_ref() }.is_some_and(|p| p.plan.diagnostics.converged)
}

/// Copies the per-destination rates into `buf`. `len` always receives the
/// number of destinations; [`RpStatus::BufferTooSmall`] is returned when
/// `capacity` is smaller, with nothing copied.
///
/// # Safety
/// `plan` must be a live handle, `buf` must hold `capacity` doubles (it
/// may be null when `capacity` is 0) and `len` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rp_plan_destination_rates(
    plan: *const RpPlan,
    buf: *mut f64,
    capacity: usize,
    len: *mut usize,
) -> RpStatus {
    // SAFETY: the caller guarantees a live handle.
    let Some(p) = (unsafe { plan.as_ref() }) else {
        return fail(RpStatus::NullPointer, "null plan");
    };
    if len.is_null() {
        return fail(RpStatus::NullPointer, "null length pointer");
    }
    let rates = &p.plan.destination_rates;
    // SAFETY: checked non-null.
    unsafe { *len = rates.len() };
    if capacity < rates.len() {
        return fail(RpStatus::BufferTooSmall, format!("{} rates do not fit in {capacity}", rates.len()));
    }
    if buf.is_null() && !rates.is_empty() {
        return fail(RpStatus::NullPointer, "null buffer");
    }
    // SAFETY: the caller guarantees `capacity` writable doubles.
    unsafe { ptr::copy_nonoverlapping(rates.as_ptr(), buf, rates.len()) };
    RpStatus::Ok
}

/// The full plan as JSON. Free the string with [`rp_string_free`]. Null for
/// a null handle.
///
/// # Safety
/// `plan` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rp_plan_to_json(plan: *const RpPlan) -> *mut c_char {
    // SAFETY: the caller guarantees a live handle or null.
    let Some(p) = (unsafe { plan.as_ref() }) else {
        set_error("null plan");
        return ptr::null_mut();
    };
    let json = relayplan::io::to_json(&p.plan);
    CString::new(json).map_or(ptr::null_mut(), CString::into_raw)
}

/// # Safety
/// `plan` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rp_plan_free(plan: *mut RpPlan) {
    if !plan.is_null() {
        // SAFETY: the caller hands back ownership of a live handle.
        drop(unsafe { Box::from_raw(plan) });
    }
}

/// # Safety
/// `s` must be null or a string returned by this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rp_string_free(s: *mut c_char) {
    if !s.is_null() {
        // SAFETY: the caller hands back ownership of a string we allocated.
        drop(unsafe { CString::from_raw(s) });
    }
}
