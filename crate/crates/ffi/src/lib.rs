//! C ABI over the queueing-network model and planner.
//!
//! Snapshots are opaque handles created by [`qnas_snapshot_new`] and released
//! with [`qnas_snapshot_free`]. Every fallible function returns a
//! [`QnasStatus`]; on failure a description is available from
//! [`qnas_last_error_message`] on the same thread. Matrices are row-major
//! `classes x stations`. Station and class indices are 0-based.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::ptr;
use std::slice;

use qnas_core::planner::{Planner, SlaThresholds};
use qnas_core::qn::{
    capacity_floor, min_feasible_config, predict_response, rescale_snapshot, ArrivalRates,
    BaselineSnapshot, Configuration, DemandMatrix,
};
use qnas_core::QnError;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QnasStatus {
    Ok = 0,
    NullPointer = 1,
    DimensionMismatch = 2,
    InvalidInput = 3,
    OverloadedStation = 4,
    InfeasibleConfiguration = 5,
    UnattainableSla = 6,
    IterationCap = 7,
    Panic = 99,
}

impl From<&QnError> for QnasStatus {
    fn from(e: &QnError) -> Self {
        match e {
            QnError::DimensionMismatch { .. } => QnasStatus::DimensionMismatch,
            QnError::InvalidInput(_) => QnasStatus::InvalidInput,
            QnError::OverloadedStation { .. } => QnasStatus::OverloadedStation,
            QnError::InfeasibleConfiguration { .. } => QnasStatus::InfeasibleConfiguration,
            QnError::UnattainableSla { .. } => QnasStatus::UnattainableSla,
            QnError::IterationCap { .. } => QnasStatus::IterationCap,
        }
    }
}

/// Opaque baseline snapshot.
pub struct QnasSnapshot {
    inner: BaselineSnapshot,
}

/// Result of [`qnas_plan_step`].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct QnasPlanStats {
    pub acquire_iterations: u64,
    pub precondition_additions: u64,
    pub release_iterations: u64,
    /// 1 when every predicted response meets its threshold.
    pub feasible: u8,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(msg));
}

fn fail(e: QnError) -> QnasStatus {
    let status = QnasStatus::from(&e);
    set_error(e.to_string());
    status
}

fn null(what: &str) -> QnasStatus {
    set_error(format!("null pointer: {what}"));
    QnasStatus::NullPointer
}

/// Runs `f`, converting panics into [`QnasStatus::Panic`].
fn guard(f: impl FnOnce() -> QnasStatus + std::panic::UnwindSafe) -> QnasStatus {
    match std::panic::catch_unwind(f) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic".into());
            QnasStatus::Panic
        }
    }
}

unsafe fn read<'a, T>(p: *const T, len: usize) -> Option<&'a [T]> {
    if p.is_null() {
        if len == 0 {
            return Some(&[]);
        }
        return None;
    }
    Some(slice::from_raw_parts(p, len))
}

unsafe fn write<'a, T>(p: *mut T, len: usize) -> Option<&'a mut [T]> {
    if p.is_null() {
        return None;
    }
    Some(slice::from_raw_parts_mut(p, len))
}

unsafe fn config_from(p: *const u32, len: usize) -> Result<Configuration, QnasStatus> {
    let counts = read(p, len).ok_or_else(|| null("configuration"))?;
    Configuration::new(counts.to_vec()).map_err(fail)
}

fn snapshot_ref<'a>(s: *const QnasSnapshot) -> Result<&'a BaselineSnapshot, QnasStatus> {
    // SAFETY: callers pass handles obtained from qnas_snapshot_new.
    unsafe { s.as_ref() }
        .map(|s| &s.inner)
        .ok_or_else(|| null("snapshot"))
}

/// Message of the last failure on this thread, or NULL. Valid until the next
/// call into this library on the same thread.
#[no_mangle]
pub extern "C" fn qnas_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |m| m.as_ptr()))
}

/// Builds a snapshot from a reference configuration (`stations` counts),
/// arrival rates (`classes`) and per-instance demands (`classes * stations`,
/// row-major). Utilizations are derived from rates and demands.
#[no_mangle]
pub unsafe extern "C" fn qnas_snapshot_new(
    classes: usize,
    stations: usize,
    ref_config: *const u32,
    rates: *const f64,
    demands: *const f64,
    out: *mut *mut QnasSnapshot,
) -> QnasStatus {
    guard(|| {
        if out.is_null() {
            return null("out");
        }
        let cfg = match config_from(ref_config, stations) {
            Ok(c) => c,
            Err(s) => return s,
        };
        let Some(rates) = read(rates, classes) else {
            return null("rates");
        };
        let Some(demands) = read(demands, classes * stations) else {
            return null("demands");
        };
        let rows = if stations == 0 {
            Vec::new()
        } else {
            demands.chunks(stations).map(<[f64]>::to_vec).collect()
        };
        let built = ArrivalRates::new(rates.to_vec())
            .and_then(|r| DemandMatrix::new(rows).map(|d| (r, d)))
            .and_then(|(r, d)| BaselineSnapshot::new(cfg, r, d));
        match built {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(QnasSnapshot { inner }));
                QnasStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn qnas_snapshot_free(snapshot: *mut QnasSnapshot) {
    if !snapshot.is_null() {
        drop(Box::from_raw(snapshot));
    }
}

#[no_mangle]
pub unsafe extern "C" fn qnas_snapshot_classes(snapshot: *const QnasSnapshot) -> usize {
    snapshot_ref(snapshot).map_or(0, BaselineSnapshot::classes)
}

#[no_mangle]
pub unsafe extern "C" fn qnas_snapshot_stations(snapshot: *const QnasSnapshot) -> usize {
    snapshot_ref(snapshot).map_or(0, BaselineSnapshot::stations)
}

/// Writes the per-instance utilizations at the reference configuration.
#[no_mangle]
pub unsafe extern "C" fn qnas_snapshot_utilizations(
    snapshot: *const QnasSnapshot,
    out: *mut f64,
) -> QnasStatus {
    guard(|| {
        let base = match snapshot_ref(snapshot) {
            Ok(b) => b,
            Err(s) => return s,
        };
        let Some(out) = write(out, base.stations()) else {
            return null("out");
        };
        out.copy_from_slice(base.utilizations_ref().as_slice());
        QnasStatus::Ok
    })
}

/// Creates a new snapshot referenced at `target`.
#[no_mangle]
pub unsafe extern "C" fn qnas_snapshot_rescale(
    snapshot: *const QnasSnapshot,
    target: *const u32,
    out: *mut *mut QnasSnapshot,
) -> QnasStatus {
    guard(|| {
        let base = match snapshot_ref(snapshot) {
            Ok(b) => b,
            Err(s) => return s,
        };
        if out.is_null() {
            return null("out");
        }
        let cfg = match config_from(target, base.stations()) {
            Ok(c) => c,
            Err(s) => return s,
        };
        match rescale_snapshot(base, &cfg) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(QnasSnapshot { inner }));
                QnasStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Predicted response at `target`: `per_class` receives `classes` values,
/// `per_class_station` (may be NULL) receives `classes * stations` station
/// contributions.
#[no_mangle]
pub unsafe extern "C" fn qnas_predict_response(
    snapshot: *const QnasSnapshot,
    target: *const u32,
    per_class: *mut f64,
    per_class_station: *mut f64,
) -> QnasStatus {
    guard(|| {
        let base = match snapshot_ref(snapshot) {
            Ok(b) => b,
            Err(s) => return s,
        };
        let cfg = match config_from(target, base.stations()) {
            Ok(c) => c,
            Err(s) => return s,
        };
        let Some(out) = write(per_class, base.classes()) else {
            return null("per_class");
        };
        let response = match predict_response(base, &cfg) {
            Ok(r) => r,
            Err(e) => return fail(e),
        };
        out.copy_from_slice(&response.per_class);
        if let Some(matrix) = write(per_class_station, base.classes() * base.stations()) {
            for (dst, row) in matrix
                .chunks_mut(base.stations())
                .zip(&response.per_class_station)
            {
                dst.copy_from_slice(row);
            }
        }
        QnasStatus::Ok
    })
}

/// Real-valued capacity floor per station.
#[no_mangle]
pub unsafe extern "C" fn qnas_capacity_floor(
    snapshot: *const QnasSnapshot,
    out: *mut f64,
) -> QnasStatus {
    guard(|| {
        let base = match snapshot_ref(snapshot) {
            Ok(b) => b,
            Err(s) => return s,
        };
        let Some(out) = write(out, base.stations()) else {
            return null("out");
        };
        out.copy_from_slice(&capacity_floor(base));
        QnasStatus::Ok
    })
}

/// Smallest configuration strictly above the capacity floor.
#[no_mangle]
pub unsafe extern "C" fn qnas_min_feasible_config(
    snapshot: *const QnasSnapshot,
    out: *mut u32,
) -> QnasStatus {
    guard(|| {
        let base = match snapshot_ref(snapshot) {
            Ok(b) => b,
            Err(s) => return s,
        };
        let Some(out) = write(out, base.stations()) else {
            return null("out");
        };
        out.copy_from_slice(min_feasible_config(base).counts());
        QnasStatus::Ok
    })
}

/// One acquire/release planning step. `thresholds` has `classes` entries;
/// `new_config` receives `stations` counts, `predicted` (may be NULL)
/// `classes` responses and `stats` (may be NULL) the iteration counts.
/// `iteration_cap` of 0 selects the default cap.
#[no_mangle]
pub unsafe extern "C" fn qnas_plan_step(
    snapshot: *const QnasSnapshot,
    thresholds: *const f64,
    iteration_cap: u64,
    new_config: *mut u32,
    predicted: *mut f64,
    stats: *mut QnasPlanStats,
) -> QnasStatus {
    guard(|| {
        let base = match snapshot_ref(snapshot) {
            Ok(b) => b,
            Err(s) => return s,
        };
        let Some(th) = read(thresholds, base.classes()) else {
            return null("thresholds");
        };
        let Some(out_cfg) = write(new_config, base.stations()) else {
            return null("new_config");
        };
        let sla = match SlaThresholds::new(th.to_vec()) {
            Ok(s) => s,
            Err(e) => return fail(e),
        };
        let planner = if iteration_cap == 0 {
            Planner::default()
        } else {
            Planner::new(iteration_cap)
        };
        let outcome = match planner.plan_step(base, &sla) {
            Ok(o) => o,
            Err(e) => return fail(e),
        };
        out_cfg.copy_from_slice(outcome.new_config.counts());
        if let Some(p) = write(predicted, base.classes()) {
            p.copy_from_slice(&outcome.predicted_response.per_class);
        }
        if !stats.is_null() {
            *stats = QnasPlanStats {
                acquire_iterations: outcome.acquire_iterations,
                precondition_additions: outcome.precondition_additions,
                release_iterations: outcome.release_iterations,
                feasible: u8::from(outcome.feasible),
            };
        }
        QnasStatus::Ok
    })
}
