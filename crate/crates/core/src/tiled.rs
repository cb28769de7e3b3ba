//! The (kc, nc) parameterized loop nest over a rectangular subtask.

use std::time::Instant;

use serde::Serialize;

use crate::dsl::Dims;
use crate::exec::{execute_block, execute_scalar_region, Block, BoundTask, ResultSink};
use crate::plan::CompiledTask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TileParams {
    pub kc: usize,
    pub nc: usize,
}

/// Half-open ranges in iteration coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SubtaskBounds {
    pub i0: usize,
    pub i1: usize,
    pub j0: usize,
    pub j1: usize,
    pub k0: usize,
    pub k1: usize,
}

impl SubtaskBounds {
    pub fn full(d: &Dims) -> Self {
        SubtaskBounds { i0: 0, i1: d.m, j0: 0, j1: d.n, k0: 0, k1: d.k }
    }

    /// Full i range, given k and j ranges.
    pub fn columns(d: &Dims, k: (usize, usize), j: (usize, usize)) -> Self {
        SubtaskBounds { i0: 0, i1: d.m, j0: j.0, j1: j.1, k0: k.0, k1: k.1 }
    }

    pub fn is_empty(&self) -> bool {
        self.i0 >= self.i1 || self.j0 >= self.j1 || self.k0 >= self.k1
    }

    pub fn within(&self, d: &Dims) -> bool {
        self.i0 <= self.i1 && self.i1 <= d.m && self.j0 <= self.j1 && self.j1 <= d.n && self.k0 <= self.k1 && self.k1 <= d.k
    }
}

/// Loop nest: k by kc, then j by nc, then i by i_h, then j by i_w. Full
/// blocks use the kernel; fringe rows and columns use scalar evaluation.
/// Every output cell sees its k segments in ascending order.
pub fn run_subtask_body<S: ResultSink>(
    ct: &CompiledTask,
    task: &BoundTask,
    params: TileParams,
    bounds: &SubtaskBounds,
    sink: &mut S,
) {
    assert!(bounds.within(&task.dims), "subtask {bounds:?} outside {:?}", task.dims);
    if bounds.is_empty() {
        return;
    }
    let (ih, iw) = (ct.plan.shape.i_h, ct.plan.shape.i_w);
    let (kc, nc) = (params.kc.max(1), params.nc.max(1));
    let i_full = bounds.i0 + (bounds.i1 - bounds.i0) / ih * ih;
    let mut kb = bounds.k0;
    while kb < bounds.k1 {
        let ke = (kb + kc).min(bounds.k1);
        let mut jb = bounds.j0;
        while jb < bounds.j1 {
            let je = (jb + nc).min(bounds.j1);
            let j_full = jb + (je - jb) / iw * iw;
            for i in (bounds.i0..i_full).step_by(ih) {
                for j in (jb..j_full).step_by(iw) {
                    execute_block(&ct.plan, task, &Block { i0: i, j0: j, k0: kb, kc: ke - kb }, sink);
                }
            }
            if j_full < je {
                let fringe = SubtaskBounds { i0: bounds.i0, i1: i_full, j0: j_full, j1: je, k0: kb, k1: ke };
                execute_scalar_region(&ct.dag, task, &fringe, sink);
            }
            if i_full < bounds.i1 {
                let fringe = SubtaskBounds { i0: i_full, i1: bounds.i1, j0: jb, j1: je, k0: kb, k1: ke };
                execute_scalar_region(&ct.dag, task, &fringe, sink);
            }
            jb = je;
        }
        kb = ke;
    }
}

/// [`run_subtask_body`] timed with the monotonic clock; returns seconds.
pub fn run_subtask<S: ResultSink>(
    ct: &CompiledTask,
    task: &BoundTask,
    params: TileParams,
    bounds: &SubtaskBounds,
    sink: &mut S,
) -> f64 {
    let start = Instant::now();
    run_subtask_body(ct, task, params, bounds, sink);
    start.elapsed().as_secs_f64()
}
