//! C interface to `mmlt-core`.
//!
//! Objects cross the boundary as opaque handles that the caller frees with the
//! matching `*_free` function. Every fallible call returns an [`MmltStatus`];
//! on failure the message is available from [`mmlt_last_error`] on the same
//! thread until the next failing call. Panics are caught and reported as
//! [`MmltStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use mmlt_core::bench::spr;
use mmlt_core::dsl::{parse_task, Bindings, Dims, TaskSpec};
use mmlt_core::exec::{DataSpec, OperandValue, Operands};
use mmlt_core::matrix::{DataMode, Layout, MatrixBuffer};
use mmlt_core::naive::run_naive;
use mmlt_core::plan::{compile, CompiledTask, MachineModel};
use mmlt_core::tiled::TileParams;
use mmlt_core::tune::{adaptive_execute, fixed_execute, MonotonicClock};
use mmlt_core::{presets, Error};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmltStatus {
    Ok = 0,
    NullPointer,
    InvalidUtf8,
    Parse,
    UnboundVariable,
    NotMmlt,
    UnsupportedExpression,
    MissingBinding,
    InvalidMachine,
    NoFeasibleKernel,
    Operand,
    NonPositiveTime,
    Format,
    InvalidArgument,
    Io,
    BufferTooSmall,
    Panic,
}

impl From<&Error> for MmltStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Parse { .. } => MmltStatus::Parse,
            Error::UnboundVariable { .. } => MmltStatus::UnboundVariable,
            Error::NotMmlt { .. } => MmltStatus::NotMmlt,
            Error::UnsupportedExpression(_) => MmltStatus::UnsupportedExpression,
            Error::MissingBinding(_) => MmltStatus::MissingBinding,
            Error::InvalidMachine(_) => MmltStatus::InvalidMachine,
            Error::NoFeasibleKernel { .. } => MmltStatus::NoFeasibleKernel,
            Error::Operand { .. } => MmltStatus::Operand,
            Error::NonPositiveTime(_) => MmltStatus::NonPositiveTime,
            Error::Format(_) => MmltStatus::Format,
            Error::InvalidArgument(_) => MmltStatus::InvalidArgument,
            Error::Io(_) => MmltStatus::Io,
        }
    }
}

/// A parsed task plus its size bindings.
pub struct MmltTask {
    spec: TaskSpec,
    bindings: Bindings,
}

/// A compiled task fixed to the dimensions its bindings gave at compile time.
pub struct MmltPlan {
    ct: CompiledTask,
    bindings: Bindings,
    dims: Dims,
}

/// Named inputs and the result matrix for one plan.
pub struct MmltOperands {
    ops: Operands,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(MmltStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(MmltStatus::from(&e), e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn guard(f: impl FnOnce() -> Outcome) -> MmltStatus {
    let (status, msg) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => return MmltStatus::Ok,
        Ok(Err(Failure(s, m))) => (s, m),
        Err(payload) => {
            let m = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            (MmltStatus::Panic, m)
        }
    };
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
    status
}

fn null(what: &str) -> Failure {
    Failure(MmltStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(MmltStatus::InvalidUtf8, format!("`{what}` is not valid UTF-8")))
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn get_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, value: T) {
    if !out.is_null() {
        out.write(value);
    }
}

unsafe fn slice<'a>(data: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

fn new_task(spec: TaskSpec, out: *mut *mut MmltTask) -> Outcome {
    let task = Box::new(MmltTask { spec, bindings: Bindings::new() });
    // SAFETY: checked non-null by the caller.
    unsafe { out.write(Box::into_raw(task)) };
    Ok(())
}

/// Message of the last failure on this thread, or an empty string. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mmlt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parse a task written in the loop language.
///
/// # Safety
/// `source` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mmlt_task_parse(source: *const c_char, out: *mut *mut MmltTask) -> MmltStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        new_task(parse_task(text(source, "source")?)?, out)
    })
}

/// Load one of the built-in tasks by name.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mmlt_task_preset(name: *const c_char, out: *mut *mut MmltTask) -> MmltStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let src = presets::preset(text(name, "name")?)?;
        new_task(parse_task(&src)?, out)
    })
}

/// Set an external size such as `M`, `K` or `N`.
///
/// # Safety
/// `task` must come from `mmlt_task_parse` or `mmlt_task_preset`; `name` must
/// be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn mmlt_task_bind(task: *mut MmltTask, name: *const c_char, value: i64) -> MmltStatus {
    guard(|| {
        let t = get_mut(task, "task")?;
        t.bindings.insert(text(name, "name")?.to_string(), value);
        Ok(())
    })
}

/// # Safety
/// `task` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn mmlt_task_free(task: *mut MmltTask) {
    if !task.is_null() {
        drop(Box::from_raw(task));
    }
}

/// Recognize, schedule and size a kernel for `task` on a machine with
/// `simd_width` lanes and `registers` vector registers. Dimensions come from
/// the task's current bindings.
///
/// # Safety
/// `task` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mmlt_plan_compile(
    task: *const MmltTask,
    simd_width: usize,
    registers: usize,
    out: *mut *mut MmltPlan,
) -> MmltStatus {
    guard(|| {
        let t = get(task, "task")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let machine = MachineModel::new(simd_width, registers)?;
        let ct = compile(&t.spec, &machine)?;
        let dims = ct.info.dims(&t.bindings)?;
        out.write(Box::into_raw(Box::new(MmltPlan { ct, bindings: t.bindings.clone(), dims })));
        Ok(())
    })
}

/// # Safety
/// `plan` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn mmlt_plan_free(plan: *mut MmltPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// Kernel height and width in elements. Null outputs are skipped.
///
/// # Safety
/// `plan` must be a live handle; outputs must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn mmlt_plan_shape(plan: *const MmltPlan, i_h: *mut usize, i_w: *mut usize) -> MmltStatus {
    guard(|| {
        let s = get(plan, "plan")?.ct.plan.shape;
        put(i_h, s.i_h);
        put(i_w, s.i_w);
        Ok(())
    })
}

/// Vector registers the chosen kernel occupies.
///
/// # Safety
/// `plan` must be a live handle; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn mmlt_plan_registers(plan: *const MmltPlan, out: *mut usize) -> MmltStatus {
    guard(|| {
        put(out, get(plan, "plan")?.ct.plan.ledger.total);
        Ok(())
    })
}

/// Iteration extents of the i, k and j loops.
///
/// # Safety
/// `plan` must be a live handle; outputs must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn mmlt_plan_dims(plan: *const MmltPlan, m: *mut usize, k: *mut usize, n: *mut usize) -> MmltStatus {
    guard(|| {
        let d = get(plan, "plan")?.dims;
        put(m, d.m);
        put(k, d.k);
        put(n, d.n);
        Ok(())
    })
}

/// Human-readable kernel plan and register ledger. Free the string with
/// `mmlt_string_free`.
///
/// # Safety
/// `plan` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mmlt_plan_explain(plan: *const MmltPlan, out: *mut *mut c_char) -> MmltStatus {
    guard(|| {
        let p = get(plan, "plan")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let ct = &p.ct;
        let s = format!(
            "kernel {} (S_w = {}, R = {})\n{}\n{}",
            ct.plan.shape, ct.machine.simd_width, ct.machine.n_vec_regs, ct.plan.ledger, ct.plan
        );
        out.write(CString::new(s).unwrap_or_default().into_raw());
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn mmlt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Operands for `plan`: random inputs from `seed` (small integers when
/// `integer_data`, else reals in [-1, 1)) and a zero result.
///
/// # Safety
/// `plan` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn mmlt_operands_generate(
    plan: *const MmltPlan,
    seed: u64,
    integer_data: bool,
    out: *mut *mut MmltOperands,
) -> MmltStatus {
    guard(|| {
        let p = get(plan, "plan")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let mode = if integer_data { DataMode::Int } else { DataMode::Real };
        let spec = DataSpec { seed, mode, ..DataSpec::default() };
        let ops = Operands::generate(&p.ct.info, &p.dims, &spec);
        out.write(Box::into_raw(Box::new(MmltOperands { ops })));
        Ok(())
    })
}

/// # Safety
/// `ops` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn mmlt_operands_free(ops: *mut MmltOperands) {
    if !ops.is_null() {
        drop(Box::from_raw(ops));
    }
}

/// Replace the matrix input `name` with `rows * cols` values, row-major when
/// `row_major` and column-major otherwise.
///
/// # Safety
/// `ops` must be a live handle, `name` NUL-terminated and `data` must hold
/// `rows * cols` values.
#[no_mangle]
pub unsafe extern "C" fn mmlt_operands_set_matrix(
    ops: *mut MmltOperands,
    name: *const c_char,
    rows: usize,
    cols: usize,
    row_major: bool,
    data: *const f64,
) -> MmltStatus {
    guard(|| {
        let o = get_mut(ops, "ops")?;
        let name = text(name, "name")?;
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Failure(MmltStatus::InvalidArgument, "matrix size overflows".into()))?;
        let values = slice(data, len, "data")?.to_vec();
        let (layout, stride) = if row_major { (Layout::RowMajor, cols) } else { (Layout::ColMajor, rows) };
        let m = MatrixBuffer::from_parts(rows, cols, layout, stride, values)?;
        o.ops.inputs.insert(name.to_string(), OperandValue::Matrix(m));
        Ok(())
    })
}

/// Replace the vector input `name`.
///
/// # Safety
/// `ops` must be a live handle, `name` NUL-terminated and `data` must hold
/// `len` values.
#[no_mangle]
pub unsafe extern "C" fn mmlt_operands_set_vector(
    ops: *mut MmltOperands,
    name: *const c_char,
    len: usize,
    data: *const f64,
) -> MmltStatus {
    guard(|| {
        let o = get_mut(ops, "ops")?;
        let name = text(name, "name")?;
        let v = slice(data, len, "data")?.to_vec();
        o.ops.inputs.insert(name.to_string(), OperandValue::Vector(v));
        Ok(())
    })
}

/// Replace the scalar input `name`.
///
/// # Safety
/// `ops` must be a live handle and `name` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn mmlt_operands_set_scalar(ops: *mut MmltOperands, name: *const c_char, value: f64) -> MmltStatus {
    guard(|| {
        let o = get_mut(ops, "ops")?;
        o.ops.inputs.insert(text(name, "name")?.to_string(), OperandValue::Scalar(value));
        Ok(())
    })
}

/// Reset every result element to zero.
///
/// # Safety
/// `ops` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mmlt_operands_clear_result(ops: *mut MmltOperands) -> MmltStatus {
    guard(|| {
        get_mut(ops, "ops")?.ops.result.data.fill(0.0);
        Ok(())
    })
}

/// Shape of the result matrix.
///
/// # Safety
/// `ops` must be a live handle; outputs must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn mmlt_operands_result_shape(ops: *const MmltOperands, rows: *mut usize, cols: *mut usize) -> MmltStatus {
    guard(|| {
        let r = &get(ops, "ops")?.ops.result;
        put(rows, r.rows);
        put(cols, r.cols);
        Ok(())
    })
}

/// Copy the result row-major into `out`, which holds `len` values.
///
/// # Safety
/// `ops` must be a live handle and `out` must have room for `len` values.
#[no_mangle]
pub unsafe extern "C" fn mmlt_operands_result(ops: *const MmltOperands, out: *mut f64, len: usize) -> MmltStatus {
    guard(|| {
        let r = &get(ops, "ops")?.ops.result;
        let need = r.rows * r.cols;
        if len < need {
            return Err(Failure(MmltStatus::BufferTooSmall, format!("result needs {need} values, buffer holds {len}")));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let dst = std::slice::from_raw_parts_mut(out, need);
        for row in 0..r.rows {
            for col in 0..r.cols {
                dst[row * r.cols + col] = r.get(row, col);
            }
        }
        Ok(())
    })
}

/// Run with runtime-selected tile parameters. Reports the elapsed seconds and
/// the chosen `kc` and `nc`.
///
/// # Safety
/// `plan` and `ops` must be live handles; outputs must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn mmlt_execute_adaptive(
    plan: *const MmltPlan,
    ops: *mut MmltOperands,
    packing: bool,
    seconds: *mut f64,
    kc: *mut usize,
    nc: *mut usize,
) -> MmltStatus {
    guard(|| {
        let p = get(plan, "plan")?;
        let o = get_mut(ops, "ops")?;
        let (report, elapsed) = adaptive_execute(&p.ct, &p.dims, &mut o.ops, &mut MonotonicClock::new(), packing)?;
        put(seconds, elapsed);
        put(kc, report.chosen.kc);
        put(nc, report.chosen.nc);
        Ok(())
    })
}

/// Run with fixed tile parameters.
///
/// # Safety
/// `plan` and `ops` must be live handles; `seconds` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn mmlt_execute_fixed(
    plan: *const MmltPlan,
    ops: *mut MmltOperands,
    kc: usize,
    nc: usize,
    packing: bool,
    seconds: *mut f64,
) -> MmltStatus {
    guard(|| {
        let p = get(plan, "plan")?;
        let o = get_mut(ops, "ops")?;
        if kc == 0 || nc == 0 {
            return Err(Error::InvalidArgument("kc and nc must be at least 1".into()).into());
        }
        put(seconds, fixed_execute(&p.ct, &p.dims, &mut o.ops, TileParams { kc, nc }, packing)?);
        Ok(())
    })
}

/// Run the reference loop nest exactly as written.
///
/// # Safety
/// `plan` and `ops` must be live handles; `seconds` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn mmlt_execute_naive(plan: *const MmltPlan, ops: *mut MmltOperands, seconds: *mut f64) -> MmltStatus {
    guard(|| {
        let p = get(plan, "plan")?;
        let o = get_mut(ops, "ops")?;
        put(seconds, run_naive(&p.ct.task, &p.bindings, &o.ops.inputs, &mut o.ops.result)?);
        Ok(())
    })
}

/// Scaled processing rate `m*k*n / (1e9 * seconds)`.
///
/// # Safety
/// `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn mmlt_spr(m: usize, k: usize, n: usize, seconds: f64, out: *mut f64) -> MmltStatus {
    guard(|| {
        put(out, spr(m, k, n, seconds)?);
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    #[test]
    fn errors_map_to_distinct_statuses() {
        let e = Error::NotMmlt { condition: 3 };
        assert_eq!(MmltStatus::from(&e), MmltStatus::NotMmlt);
        let e = Error::NoFeasibleKernel { registers: 4, needed: 9 };
        assert_eq!(MmltStatus::from(&e), MmltStatus::NoFeasibleKernel);
    }

    #[test]
    fn panics_become_a_status_with_the_message() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, MmltStatus::Panic);
        let msg = unsafe { CStr::from_ptr(mmlt_last_error()) };
        assert_eq!(msg.to_str().unwrap(), "boom");
    }

    #[test]
    fn null_handles_are_rejected() {
        let s = unsafe { mmlt_plan_shape(ptr::null(), ptr::null_mut(), ptr::null_mut()) };
        assert_eq!(s, MmltStatus::NullPointer);
    }
}
