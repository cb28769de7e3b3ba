use super::{BoundTask, LeafSource, MatView, ResultSink};
use crate::dag::OpCode;
use crate::plan::{KernelPlan, LoadStrategy};
use crate::schedule::Operand;
use crate::tiled::SubtaskBounds;

/// One `i_h x i_w` output block at `(i0, j0)` over the K segment `[k0, k0 + kc)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub i0: usize,
    pub j0: usize,
    pub k0: usize,
    pub kc: usize,
}

/// Run the plan over one full block. Subresults stay local and reach the
/// sink once per element at the end.
pub fn execute_block<S: ResultSink>(plan: &KernelPlan, task: &BoundTask, blk: &Block, sink: &mut S) {
    let shape = plan.shape;
    debug_assert!(blk.i0 + shape.i_h <= task.dims.m);
    debug_assert!(blk.j0 + shape.i_w <= task.dims.n);
    debug_assert!(blk.k0 + blk.kc <= task.dims.k);
    if blk.kc == 0 {
        return;
    }
    sink.visit(&SubtaskBounds {
        i0: blk.i0,
        i1: blk.i0 + shape.i_h,
        j0: blk.j0,
        j1: blk.j0 + shape.i_w,
        k0: blk.k0,
        k1: blk.k0 + blk.kc,
    });
    let a = task.a_block(blk.i0, blk.k0, shape.i_h);
    let b = task.b_block(blk.k0, blk.j0, shape.i_w);
    if task.plain_fmadd && fmadd_dispatch(shape.i_h, shape.i_w, blk, a, b, sink) {
        return;
    }
    match plan.simd_width {
        2 => program_block::<2, S>(plan, task, blk, a, b, sink),
        4 => program_block::<4, S>(plan, task, blk, a, b, sink),
        8 => program_block::<8, S>(plan, task, blk, a, b, sink),
        _ => program_block::<16, S>(plan, task, blk, a, b, sink),
    }
}

fn fmadd_dispatch<S: ResultSink>(h: usize, w: usize, blk: &Block, a: MatView, b: MatView, sink: &mut S) -> bool {
    match w {
        4 => fmadd_h::<4, S>(h, blk, a, b, sink),
        8 => fmadd_h::<8, S>(h, blk, a, b, sink),
        16 => fmadd_h::<16, S>(h, blk, a, b, sink),
        32 => fmadd_h::<32, S>(h, blk, a, b, sink),
        _ => false,
    }
}

fn fmadd_h<const W: usize, S: ResultSink>(h: usize, blk: &Block, a: MatView, b: MatView, sink: &mut S) -> bool {
    macro_rules! heights {
        ($($n:literal)*) => {
            match h {
                $($n => store::<$n, W, S>(&fmadd_block::<$n, W>(blk.kc, a, b), blk, sink),)*
                _ => return false,
            }
        };
    }
    heights!(1 2 3 4 5 6 7 8 9 10 11 12);
    true
}

fn store<const H: usize, const W: usize, S: ResultSink>(c: &[[f64; W]; H], blk: &Block, sink: &mut S) {
    for (r, row) in c.iter().enumerate() {
        for (x, v) in row.iter().enumerate() {
            sink.add(blk.i0 + r, blk.j0 + x, *v);
        }
    }
}

/// `c[r][x] = sum over kk of a(r, kk) * b(kk, x)`, accumulated in kk order.
fn fmadd_block<const H: usize, const W: usize>(kc: usize, a: MatView, b: MatView) -> [[f64; W]; H] {
    let mut c = [[0.0f64; W]; H];
    let a_last = a.off + (H - 1) * a.s0 + (kc - 1) * a.s1;
    let b_last = b.off + (kc - 1) * b.s0 + (W - 1) * b.s1;
    assert!(a_last < a.data.len() && b_last < b.data.len(), "block exceeds operand storage");
    #[cfg(target_arch = "x86_64")]
    if simd::fmadd::<H, W>(&mut c, kc, a, b) {
        return c;
    }
    if b.s1 == 1 {
        fmadd_loop::<H, W, true>(&mut c, kc, a, b);
    } else {
        fmadd_loop::<H, W, false>(&mut c, kc, a, b);
    }
    c
}

#[inline(always)]
fn fmadd_loop<const H: usize, const W: usize, const CONTIG: bool>(c: &mut [[f64; W]; H], kc: usize, a: MatView, b: MatView) {
    let (ap, bp) = (a.data.as_ptr(), b.data.as_ptr());
    for kk in 0..kc {
        // SAFETY: the caller checked the last A and B elements are in bounds,
        // and all strides are nonnegative, so every offset below is too.
        unsafe {
            let bbase = bp.add(b.off + kk * b.s0);
            let brow: [f64; W] = if CONTIG {
                std::ptr::read_unaligned(bbase as *const [f64; W])
            } else {
                std::array::from_fn(|x| *bbase.add(x * b.s1))
            };
            let abase = ap.add(a.off + kk * a.s1);
            for (r, acc) in c.iter_mut().enumerate() {
                let av = *abase.add(r * a.s0);
                for x in 0..W {
                    acc[x] += av * brow[x];
                }
            }
        }
    }
}

/// Explicit-SIMD block kernels, picked at run time. Accumulators stay in
/// vector registers for the whole K segment.
#[cfg(target_arch = "x86_64")]
mod simd {
    use super::MatView;
    use std::arch::x86_64::*;

    /// Fills `c` and returns true when a vector kernel handles this width on
    /// the running CPU. Bounds must already be checked by the caller.
    pub(super) fn fmadd<const H: usize, const W: usize>(c: &mut [[f64; W]; H], kc: usize, a: MatView, b: MatView) -> bool {
        let out = c.as_flattened_mut();
        if W.is_multiple_of(8) && std::is_x86_feature_detected!("avx512f") {
            // SAFETY: the feature is present and the caller checked bounds.
            unsafe {
                match W / 8 {
                    1 => avx512::<H, 1>(out, kc, a, b),
                    2 => avx512::<H, 2>(out, kc, a, b),
                    4 => avx512::<H, 4>(out, kc, a, b),
                    _ => return false,
                }
            }
            return true;
        }
        if W.is_multiple_of(4) && std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma") {
            // SAFETY: as above.
            unsafe {
                match W / 4 {
                    1 => avx2::<H, 1>(out, kc, a, b),
                    2 => avx2::<H, 2>(out, kc, a, b),
                    4 => avx2::<H, 4>(out, kc, a, b),
                    8 => avx2::<H, 8>(out, kc, a, b),
                    _ => return false,
                }
            }
            return true;
        }
        false
    }

    #[target_feature(enable = "avx512f")]
    unsafe fn avx512<const H: usize, const V: usize>(out: &mut [f64], kc: usize, a: MatView, b: MatView) {
        let (ap, bp) = (a.data.as_ptr(), b.data.as_ptr());
        let mut acc = [[_mm512_setzero_pd(); V]; H];
        for kk in 0..kc {
            let brow = bp.add(b.off + kk * b.s0);
            let mut bv = [_mm512_setzero_pd(); V];
            for (v, x) in bv.iter_mut().enumerate() {
                *x = if b.s1 == 1 {
                    _mm512_loadu_pd(brow.add(v * 8))
                } else {
                    let p = brow.add(v * 8 * b.s1);
                    let s = b.s1;
                    _mm512_set_pd(*p.add(7 * s), *p.add(6 * s), *p.add(5 * s), *p.add(4 * s), *p.add(3 * s), *p.add(2 * s), *p.add(s), *p)
                };
            }
            let arow = ap.add(a.off + kk * a.s1);
            for (r, row) in acc.iter_mut().enumerate() {
                let av = _mm512_set1_pd(*arow.add(r * a.s0));
                for v in 0..V {
                    row[v] = _mm512_fmadd_pd(av, bv[v], row[v]);
                }
            }
        }
        for (r, row) in acc.iter().enumerate() {
            for (v, x) in row.iter().enumerate() {
                _mm512_storeu_pd(out.as_mut_ptr().add((r * V + v) * 8), *x);
            }
        }
    }

    #[target_feature(enable = "avx2,fma")]
    unsafe fn avx2<const H: usize, const V: usize>(out: &mut [f64], kc: usize, a: MatView, b: MatView) {
        let (ap, bp) = (a.data.as_ptr(), b.data.as_ptr());
        let mut acc = [[_mm256_setzero_pd(); V]; H];
        for kk in 0..kc {
            let brow = bp.add(b.off + kk * b.s0);
            let mut bv = [_mm256_setzero_pd(); V];
            for (v, x) in bv.iter_mut().enumerate() {
                *x = if b.s1 == 1 {
                    _mm256_loadu_pd(brow.add(v * 4))
                } else {
                    let p = brow.add(v * 4 * b.s1);
                    let s = b.s1;
                    _mm256_set_pd(*p.add(3 * s), *p.add(2 * s), *p.add(s), *p)
                };
            }
            let arow = ap.add(a.off + kk * a.s1);
            for (r, row) in acc.iter_mut().enumerate() {
                let av = _mm256_set1_pd(*arow.add(r * a.s0));
                for v in 0..V {
                    row[v] = _mm256_fmadd_pd(av, bv[v], row[v]);
                }
            }
        }
        for (r, row) in acc.iter().enumerate() {
            for (v, x) in row.iter().enumerate() {
                _mm256_storeu_pd(out.as_mut_ptr().add((r * V + v) * 4), *x);
            }
        }
    }
}

#[derive(Clone, Copy)]
struct Compiled {
    op: OpCode,
    dst: usize,
    src: [usize; 3],
}

#[derive(Clone, Copy)]
enum LeafFeed {
    A,
    B,
    Fixed,
}

/// Replay the pseudo program on `L`-lane vectors: per kk, load B rows, then
/// per row broadcast A and run the program into each subresult.
fn program_block<const L: usize, S: ResultSink>(
    plan: &KernelPlan,
    task: &BoundTask,
    blk: &Block,
    a: MatView,
    b: MatView,
    sink: &mut S,
) {
    let (ih, iw) = (plan.shape.i_h, plan.shape.i_w);
    let nq = iw / L;
    let prog = &plan.program;
    let nleaf = plan.leaf_loads.len();
    let temp0 = nleaf;
    let mask0 = temp0 + prog.n_extra_vec_regs;
    let acc = mask0 + prog.n_mask_regs;
    let slot = |o: &Operand| match o {
        Operand::Leaf { node, .. } => plan.leaf_loads.iter().position(|l| l.node == *node).expect("leaf has a load"),
        Operand::Temp(t) => temp0 + t,
        Operand::Mask(m) => mask0 + m,
        Operand::Result => acc,
    };
    let code: Vec<Compiled> = prog
        .instrs
        .iter()
        .map(|ins| {
            let mut src = [0; 3];
            for (s, o) in src.iter_mut().zip(&ins.srcs) {
                *s = slot(o);
            }
            Compiled { op: ins.op, dst: slot(&ins.dst), src }
        })
        .collect();

    // Leaves that do not change with kk are read once per block.
    let mut feeds = Vec::with_capacity(nleaf);
    let mut fixed: Vec<Vec<[f64; L]>> = Vec::with_capacity(nleaf);
    for load in &plan.leaf_loads {
        let src = task.leaves[load.node];
        let (feed, table) = match src {
            LeafSource::A => (LeafFeed::A, Vec::new()),
            LeafSource::B => (LeafFeed::B, Vec::new()),
            _ => {
                let mut t = Vec::with_capacity(ih * nq);
                for r in 0..ih {
                    for q in 0..nq {
                        t.push(std::array::from_fn(|x| match (src, load.strategy) {
                            (LeafSource::Value(v), _) => v,
                            (LeafSource::Aux(v), _) => v.get(blk.i0 + r, blk.j0 + q * L + x),
                            _ => f64::NAN,
                        }));
                    }
                }
                (LeafFeed::Fixed, t)
            }
        };
        debug_assert!(!matches!(load.strategy, LoadStrategy::VectorRow) || !matches!(feed, LeafFeed::A));
        feeds.push(feed);
        fixed.push(table);
    }

    let mut regs = vec![[0.0f64; L]; acc + 1];
    let mut accs = vec![[0.0f64; L]; ih * nq];
    let mut brow = vec![[0.0f64; L]; nq];
    for kk in 0..blk.kc {
        for (q, v) in brow.iter_mut().enumerate() {
            *v = std::array::from_fn(|x| b.get(kk, q * L + x));
        }
        for r in 0..ih {
            let av = [a.get(r, kk); L];
            for q in 0..nq {
                for (l, feed) in feeds.iter().enumerate() {
                    regs[l] = match feed {
                        LeafFeed::A => av,
                        LeafFeed::B => brow[q],
                        LeafFeed::Fixed => fixed[l][r * nq + q],
                    };
                }
                regs[acc] = accs[r * nq + q];
                for c in &code {
                    let v = lanes(c.op, &regs[c.src[0]], &regs[c.src[1]], &regs[c.src[2]]);
                    regs[c.dst] = v;
                }
                accs[r * nq + q] = regs[acc];
            }
        }
    }
    for r in 0..ih {
        for q in 0..nq {
            for (x, &v) in accs[r * nq + q].iter().enumerate() {
                if prog.accumulate {
                    sink.add(blk.i0 + r, blk.j0 + q * L + x, v);
                } else {
                    sink.store(blk.i0 + r, blk.j0 + q * L + x, v);
                }
            }
        }
    }
}

#[inline(always)]
fn lanes<const L: usize>(op: OpCode, x: &[f64; L], y: &[f64; L], z: &[f64; L]) -> [f64; L] {
    let truth = |b: bool| if b { 1.0 } else { 0.0 };
    let mut o = [0.0; L];
    match op {
        OpCode::Add => (0..L).for_each(|n| o[n] = x[n] + y[n]),
        OpCode::Sub => (0..L).for_each(|n| o[n] = x[n] - y[n]),
        OpCode::Mul => (0..L).for_each(|n| o[n] = x[n] * y[n]),
        OpCode::Div => (0..L).for_each(|n| o[n] = x[n] / y[n]),
        OpCode::CmpGt => (0..L).for_each(|n| o[n] = truth(x[n] > y[n])),
        OpCode::CmpGe => (0..L).for_each(|n| o[n] = truth(x[n] >= y[n])),
        OpCode::CmpLt => (0..L).for_each(|n| o[n] = truth(x[n] < y[n])),
        OpCode::CmpLe => (0..L).for_each(|n| o[n] = truth(x[n] <= y[n])),
        OpCode::CmpEq => (0..L).for_each(|n| o[n] = truth(x[n] == y[n])),
        OpCode::MaskSub => (0..L).for_each(|n| o[n] = x[n] - y[n] * z[n]),
        OpCode::MaskAdd | OpCode::Fmadd => (0..L).for_each(|n| o[n] = x[n] + y[n] * z[n]),
    }
    o
}
