use super::{eval_point, BoundTask, ResultSink};
use crate::dag::ExprDag;
use crate::tiled::SubtaskBounds;

/// Apply the statement element by element over `bounds`, visiting i, j and
/// k in ascending order.
pub fn execute_scalar_region<S: ResultSink>(dag: &ExprDag, task: &BoundTask, bounds: &SubtaskBounds, sink: &mut S) {
    if bounds.is_empty() {
        return;
    }
    sink.visit(bounds);
    let mut scratch = Vec::with_capacity(dag.nodes.len());
    for i in bounds.i0..bounds.i1 {
        for j in bounds.j0..bounds.j1 {
            for k in bounds.k0..bounds.k1 {
                let v = eval_point(dag, task, &mut scratch, i, j, k);
                if dag.accumulate {
                    sink.add(i, j, v);
                } else {
                    sink.store(i, j, v);
                }
            }
        }
    }
}
