use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use mmlt_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(mmlt_last_error()) }.to_str().unwrap().to_string()
}

unsafe fn plan_for(preset: &str, m: i64, k: i64, n: i64) -> *mut MmltPlan {
    let mut task = ptr::null_mut();
    assert_eq!(mmlt_task_preset(c(preset).as_ptr(), &mut task), MmltStatus::Ok);
    for (name, v) in [("M", m), ("K", k), ("N", n)] {
        assert_eq!(mmlt_task_bind(task, c(name).as_ptr(), v), MmltStatus::Ok);
    }
    let mut plan = ptr::null_mut();
    assert_eq!(mmlt_plan_compile(task, 8, 32, &mut plan), MmltStatus::Ok, "{}", last_error());
    mmlt_task_free(task);
    plan
}

unsafe fn result(ops: *const MmltOperands) -> Vec<f64> {
    let (mut r, mut cols) = (0, 0);
    assert_eq!(mmlt_operands_result_shape(ops, &mut r, &mut cols), MmltStatus::Ok);
    let mut out = vec![0.0; r * cols];
    assert_eq!(mmlt_operands_result(ops, out.as_mut_ptr(), out.len()), MmltStatus::Ok);
    out
}

#[test]
fn q1_plan_reports_its_kernel() {
    unsafe {
        let plan = plan_for("q1", 40, 30, 50);
        let (mut h, mut w, mut regs) = (0, 0, 0);
        assert_eq!(mmlt_plan_shape(plan, &mut h, &mut w), MmltStatus::Ok);
        assert_eq!(mmlt_plan_registers(plan, &mut regs), MmltStatus::Ok);
        assert_eq!((h, w, regs), (11, 16, 31));
        let (mut m, mut k, mut n) = (0, 0, 0);
        assert_eq!(mmlt_plan_dims(plan, &mut m, &mut k, &mut n), MmltStatus::Ok);
        assert_eq!((m, k, n), (40, 30, 50));
        let mut text = ptr::null_mut();
        assert_eq!(mmlt_plan_explain(plan, &mut text), MmltStatus::Ok);
        let s = CStr::from_ptr(text).to_str().unwrap().to_string();
        mmlt_string_free(text);
        assert!(s.starts_with("kernel 11x16"), "{s}");
        assert!(s.contains("total"), "{s}");
        mmlt_plan_free(plan);
    }
}

#[test]
fn every_execution_mode_agrees() {
    unsafe {
        let plan = plan_for("q1", 37, 29, 45);
        let mut ops = ptr::null_mut();
        assert_eq!(mmlt_operands_generate(plan, 7, true, &mut ops), MmltStatus::Ok);
        let mut secs = 0.0;
        assert_eq!(mmlt_execute_naive(plan, ops, &mut secs), MmltStatus::Ok);
        let want = result(ops);
        assert!(want.iter().any(|v| *v != 0.0));

        assert_eq!(mmlt_operands_clear_result(ops), MmltStatus::Ok);
        let (mut kc, mut nc) = (0, 0);
        assert_eq!(mmlt_execute_adaptive(plan, ops, false, &mut secs, &mut kc, &mut nc), MmltStatus::Ok);
        assert!(secs > 0.0 && kc >= 1 && nc >= 1);
        assert_eq!(result(ops), want);

        for packing in [false, true] {
            assert_eq!(mmlt_operands_clear_result(ops), MmltStatus::Ok);
            assert_eq!(mmlt_execute_fixed(plan, ops, 8, 16, packing, ptr::null_mut()), MmltStatus::Ok);
            assert_eq!(result(ops), want);
        }
        mmlt_operands_free(ops);
        mmlt_plan_free(plan);
    }
}

#[test]
fn caller_supplied_operands() {
    unsafe {
        let mut task = ptr::null_mut();
        let src = c("where(i in [0..M] and j in [0..N] and k in [0..K]) { R[i][j] += A[i][k]*B[k][j]*s; }");
        let status = mmlt_task_parse(src.as_ptr(), &mut task);
        if status != MmltStatus::Ok {
            panic!("{}", last_error());
        }
        for (name, v) in [("M", 2), ("K", 3), ("N", 2)] {
            mmlt_task_bind(task, c(name).as_ptr(), v);
        }
        let mut plan = ptr::null_mut();
        assert_eq!(mmlt_plan_compile(task, 4, 16, &mut plan), MmltStatus::Ok, "{}", last_error());
        let mut ops = ptr::null_mut();
        assert_eq!(mmlt_operands_generate(plan, 1, true, &mut ops), MmltStatus::Ok);
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        // B is 3x2, given column-major.
        let b = [1.0, 0.0, 1.0, 0.0, 1.0, 1.0];
        assert_eq!(mmlt_operands_set_matrix(ops, c("A").as_ptr(), 2, 3, true, a.as_ptr()), MmltStatus::Ok);
        assert_eq!(mmlt_operands_set_matrix(ops, c("B").as_ptr(), 3, 2, false, b.as_ptr()), MmltStatus::Ok);
        assert_eq!(mmlt_operands_set_scalar(ops, c("s").as_ptr(), 2.0), MmltStatus::Ok);
        assert_eq!(mmlt_execute_adaptive(plan, ops, false, ptr::null_mut(), ptr::null_mut(), ptr::null_mut()), MmltStatus::Ok);
        assert_eq!(result(ops), [8.0, 10.0, 20.0, 22.0]);

        let mut small = [0.0; 3];
        assert_eq!(mmlt_operands_result(ops, small.as_mut_ptr(), 3), MmltStatus::BufferTooSmall);
        mmlt_operands_free(ops);
        mmlt_plan_free(plan);
        mmlt_task_free(task);
    }
}

#[test]
fn failures_carry_a_status_and_message() {
    unsafe {
        let mut task = ptr::null_mut();
        assert_eq!(mmlt_task_parse(c("where(i in [0..M] { R[i] = 1; }").as_ptr(), &mut task), MmltStatus::Parse);
        assert!(task.is_null());
        assert!(last_error().contains("parse error"));

        assert_eq!(mmlt_task_preset(c("no-such-task").as_ptr(), &mut task), MmltStatus::InvalidArgument);

        let plan = plan_for("matmul", 8, 8, 8);
        mmlt_plan_free(plan);

        assert_eq!(mmlt_task_preset(c("matmul").as_ptr(), &mut task), MmltStatus::Ok);
        let mut plan = ptr::null_mut();
        assert_eq!(mmlt_plan_compile(task, 8, 32, &mut plan), MmltStatus::MissingBinding);
        assert_eq!(mmlt_plan_compile(task, 3, 32, &mut plan), MmltStatus::InvalidMachine);
        assert!(plan.is_null());
        mmlt_task_free(task);

        assert_eq!(mmlt_task_bind(ptr::null_mut(), c("M").as_ptr(), 1), MmltStatus::NullPointer);
        let mut rate = 0.0;
        assert_eq!(mmlt_spr(1000, 1000, 1000, 0.5, &mut rate), MmltStatus::Ok);
        assert_eq!(rate, 2.0);
        assert_eq!(mmlt_spr(1, 1, 1, 0.0, &mut rate), MmltStatus::NonPositiveTime);
    }
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include")
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let probe = tempfile::Builder::new().suffix(".c").tempfile().unwrap();
    std::fs::write(probe.path(), "#include \"mmlt.h\"\nint main(void) { return MMLT_STATUS_OK; }\n").unwrap();
    for (cc, extra) in [("cc", vec!["-std=c99"]), ("c++", vec!["-x", "c++"])] {
        let out = Command::new(cc)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-I"])
            .arg(header())
            .args(extra)
            .arg(probe.path())
            .output()
            .expect("C compiler available");
        assert!(out.status.success(), "{cc}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include "mmlt.h"

int main(void) {
    MmltTask *task = NULL;
    MmltPlan *plan = NULL;
    MmltOperands *ops = NULL;
    if (mmlt_task_preset("matmul", &task) != MMLT_STATUS_OK) return 1;
    mmlt_task_bind(task, "M", 3);
    mmlt_task_bind(task, "K", 2);
    mmlt_task_bind(task, "N", 2);
    if (mmlt_plan_compile(task, 8, 32, &plan) != MMLT_STATUS_OK) return 2;
    if (mmlt_operands_generate(plan, 1, true, &ops) != MMLT_STATUS_OK) return 3;
    double a[6] = {1, 2, 3, 4, 5, 6}, b[4] = {1, 0, 0, 1}, r[6];
    mmlt_operands_set_matrix(ops, "A", 3, 2, true, a);
    mmlt_operands_set_matrix(ops, "B", 2, 2, true, b);
    size_t kc, nc;
    double secs;
    if (mmlt_execute_adaptive(plan, ops, false, &secs, &kc, &nc) != MMLT_STATUS_OK) return 4;
    mmlt_operands_result(ops, r, 6);
    for (int x = 0; x < 6; x++) printf("%g ", r[x]);
    if (mmlt_task_parse("where", &task) != MMLT_STATUS_PARSE) return 5;
    printf("| %s\n", mmlt_last_error()[0] ? "error set" : "no error");
    mmlt_operands_free(ops);
    mmlt_plan_free(plan);
    mmlt_task_free(task);
    return 0;
}
"#;

#[test]
fn c_program_links_against_the_static_library() {
    // Test binaries live in target/<profile>/deps; the libraries one level up.
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().and_then(Path::parent).unwrap();
    let lib = lib_dir.join("libmmlt_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    let bin = dir.path().join("probe");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let out = Command::new("cc")
        .arg("-I")
        .arg(header())
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout), "1 2 3 4 5 6 | error set\n");
}
