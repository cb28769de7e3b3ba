//! Runtime selection of kc and nc from timed subtasks that all contribute to
//! the final result.

use std::collections::VecDeque;
use std::time::Instant;

use serde::Serialize;

use crate::dsl::Dims;
use crate::error::Result;
use crate::exec::{check_result, BoundTask, Operands, ResultSink, ResultView};
use crate::plan::{CompiledTask, KernelShape};
use crate::tiled::{run_subtask_body, SubtaskBounds, TileParams};

/// Seconds from an arbitrary origin; never decreases.
pub trait Clock {
    fn now(&mut self) -> f64;
}

pub struct MonotonicClock {
    origin: Instant,
}

impl MonotonicClock {
    pub fn new() -> Self {
        MonotonicClock { origin: Instant::now() }
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MonotonicClock {
    fn now(&mut self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }
}

/// Each pair of `now` calls spans the next scripted interval; once the
/// script runs out every interval is 1.0.
#[derive(Debug, Clone, Default)]
pub struct ScriptedClock {
    intervals: VecDeque<f64>,
    t: f64,
    open: bool,
}

impl ScriptedClock {
    pub fn new(intervals: impl IntoIterator<Item = f64>) -> Self {
        ScriptedClock { intervals: intervals.into_iter().collect(), t: 0.0, open: false }
    }
}

impl Clock for ScriptedClock {
    fn now(&mut self) -> f64 {
        if self.open {
            self.t += self.intervals.pop_front().unwrap_or(1.0).max(0.0);
        }
        self.open = !self.open;
        self.t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Trial {
    pub value: usize,
    pub elapsed: f64,
    /// `elapsed / value`.
    pub score: f64,
}

/// A completed `(k, j)` rectangle spanning every row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Rect {
    pub k0: usize,
    pub k1: usize,
    pub j0: usize,
    pub j1: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneReport {
    pub shape: KernelShape,
    pub kc_trials: Vec<Trial>,
    pub nc_trials: Vec<Trial>,
    pub chosen: TileParams,
    /// Rectangles computed while tuning, scored or not.
    pub coverage: Vec<Rect>,
    /// Rectangles computed afterwards with the chosen parameters.
    pub remainder: Vec<Rect>,
    /// Output columns used for tuning over N.
    pub total_tuning_fraction: f64,
    /// Tuning did not run; the whole task used default parameters.
    pub skipped: bool,
}

/// K, ceil(K/2), ceil(K/4), ... while at least 16; just `[K]` when K < 16.
pub fn kc_candidates(k: usize) -> Vec<usize> {
    if k < 16 {
        return vec![k];
    }
    let mut out = vec![k];
    let mut c = k.div_ceil(2);
    while c >= 16 {
        out.push(c);
        c = c.div_ceil(2);
    }
    out
}

/// Index of the smallest score; the earliest wins ties.
fn argmin(trials: &[Trial]) -> usize {
    let mut best = 0;
    for (n, t) in trials.iter().enumerate() {
        if t.score < trials[best].score {
            best = n;
        }
    }
    best
}

struct Runner<'r, 'a, S: ResultSink> {
    ct: &'r CompiledTask,
    task: &'r BoundTask<'a>,
    sink: &'r mut S,
    clock: &'r mut dyn Clock,
    coverage: Vec<Rect>,
}

impl<S: ResultSink> Runner<'_, '_, S> {
    fn run(&mut self, rect: Rect, params: TileParams) {
        let bounds = SubtaskBounds::columns(&self.task.dims, (rect.k0, rect.k1), (rect.j0, rect.j1));
        run_subtask_body(self.ct, self.task, params, &bounds, self.sink);
    }

    fn timed(&mut self, rect: Rect, params: TileParams) -> f64 {
        let start = self.clock.now();
        self.run(rect, params);
        let elapsed = self.clock.now() - start;
        self.coverage.push(rect);
        elapsed
    }
}

/// Strip S1 (columns `[0, 2 i_w)`) runs the full K with kc = K. Strip S2
/// (columns `[2 i_w, 4 i_w)`) is cut along K into one segment per remaining
/// candidate; any K left over runs unscored with the best kc so far.
fn find_kc<S: ResultSink>(r: &mut Runner<S>) -> (usize, Vec<Trial>) {
    let d = r.task.dims;
    let iw = r.ct.plan.shape.i_w;
    let cands = kc_candidates(d.k);
    let mut trials = Vec::with_capacity(cands.len());
    let e = r.timed(Rect { k0: 0, k1: d.k, j0: 0, j1: 2 * iw }, TileParams { kc: d.k, nc: 2 * iw });
    trials.push(Trial { value: d.k, elapsed: e, score: e / d.k as f64 });
    let mut kpos = 0;
    for &c in &cands[1..] {
        let end = (kpos + c).min(d.k);
        if end == kpos {
            break;
        }
        let len = end - kpos;
        let e = r.timed(Rect { k0: kpos, k1: end, j0: 2 * iw, j1: 4 * iw }, TileParams { kc: len, nc: 2 * iw });
        trials.push(Trial { value: len, elapsed: e, score: e / len as f64 });
        kpos = end;
    }
    let best = trials[argmin(&trials)].value;
    if kpos < d.k {
        let rect = Rect { k0: kpos, k1: d.k, j0: 2 * iw, j1: 4 * iw };
        r.run(rect, TileParams { kc: best, nc: 2 * iw });
        r.coverage.push(rect);
    }
    (best, trials)
}

/// Strips of width i_w, 2 i_w, 4 i_w, ... from column 4 i_w over K range
/// `[0, best_kc)`. Stops at the first score increase (keeping the previous
/// width) or when the next strip does not fit (keeping the best so far).
fn find_nc<S: ResultSink>(r: &mut Runner<S>, best_kc: usize) -> (usize, Vec<Trial>) {
    let d = r.task.dims;
    let iw = r.ct.plan.shape.i_w;
    let mut trials: Vec<Trial> = Vec::new();
    let mut col = 4 * iw;
    let mut nc = iw;
    while col + nc <= d.n {
        let e = r.timed(Rect { k0: 0, k1: best_kc, j0: col, j1: col + nc }, TileParams { kc: best_kc, nc });
        let t = Trial { value: nc, elapsed: e, score: e / nc as f64 };
        if let Some(prev) = trials.last() {
            if t.score > prev.score {
                let keep = prev.value;
                trials.push(t);
                return (keep, trials);
            }
        }
        trials.push(t);
        col += nc;
        nc *= 2;
    }
    let best = trials
        .iter()
        .rev()
        .min_by(|a, b| a.score.total_cmp(&b.score))
        .map_or(iw, |t| t.value);
    (best, trials)
}

/// Split the part of `[0, K) x [0, N)` not in `covered` into rectangles:
/// sweep the column breakpoints, then merge neighbouring column intervals
/// with the same uncovered k ranges.
pub fn uncovered(k: usize, n: usize, covered: &[Rect]) -> Vec<Rect> {
    let mut cuts: Vec<usize> = vec![0, n];
    for c in covered {
        cuts.push(c.j0.min(n));
        cuts.push(c.j1.min(n));
    }
    cuts.sort_unstable();
    cuts.dedup();
    let mut open: Vec<Rect> = Vec::new();
    let mut out = Vec::new();
    for w in cuts.windows(2) {
        let (j0, j1) = (w[0], w[1]);
        let mut ks: Vec<(usize, usize)> =
            covered.iter().filter(|c| c.j0 <= j0 && j1 <= c.j1).map(|c| (c.k0, c.k1)).collect();
        ks.sort_unstable();
        let mut gaps = Vec::new();
        let mut at = 0;
        for (k0, k1) in ks {
            if k0 > at {
                gaps.push((at, k0));
            }
            at = at.max(k1);
        }
        if at < k {
            gaps.push((at, k));
        }
        let mut next = Vec::new();
        for (k0, k1) in gaps {
            match open.iter().position(|r| r.k0 == k0 && r.k1 == k1 && r.j1 == j0) {
                Some(p) => {
                    let mut r = open.swap_remove(p);
                    r.j1 = j1;
                    next.push(r);
                }
                None => next.push(Rect { k0, k1, j0, j1 }),
            }
        }
        out.append(&mut open);
        open = next;
    }
    out.append(&mut open);
    out.sort_by_key(|r| (r.j0, r.k0));
    out
}

/// Tune on the first columns, then finish the task with the winners.
pub fn adaptive_execute_bound<S: ResultSink>(
    ct: &CompiledTask,
    task: &BoundTask,
    sink: &mut S,
    clock: &mut dyn Clock,
) -> TuneReport {
    let d = task.dims;
    let shape = ct.plan.shape;
    let defaults = TileParams { kc: d.k.clamp(1, 256), nc: d.n.max(1) };
    let mut r = Runner { ct, task, sink, clock, coverage: Vec::new() };
    let too_small = d.m < shape.i_h || d.n < 4 * shape.i_w || d.k == 0;
    if too_small {
        let all = Rect { k0: 0, k1: d.k, j0: 0, j1: d.n };
        r.run(all, defaults);
        return TuneReport {
            shape,
            kc_trials: vec![],
            nc_trials: vec![],
            chosen: defaults,
            coverage: vec![],
            remainder: vec![all],
            total_tuning_fraction: 0.0,
            skipped: true,
        };
    }
    let (kc, kc_trials) = find_kc(&mut r);
    let (nc, nc_trials) = find_nc(&mut r, kc);
    let chosen = TileParams { kc, nc };
    let remainder = uncovered(d.k, d.n, &r.coverage);
    for rect in &remainder {
        r.run(*rect, chosen);
    }
    let tested: usize = 4 * shape.i_w + nc_trials.iter().map(|t| t.value).sum::<usize>();
    TuneReport {
        shape,
        kc_trials,
        nc_trials,
        chosen,
        coverage: r.coverage,
        remainder,
        total_tuning_fraction: tested as f64 / d.n as f64,
        skipped: false,
    }
}

/// Bind, optionally pack, and run adaptively into `operands.result`.
/// Returns the report and the end-to-end elapsed seconds.
pub fn adaptive_execute(
    ct: &CompiledTask,
    dims: &Dims,
    operands: &mut Operands,
    clock: &mut dyn Clock,
    packing: bool,
) -> Result<(TuneReport, f64)> {
    check_result(&operands.result, dims, &ct.info.result)?;
    let start = Instant::now();
    let mut task = BoundTask::bind(ct, dims, &operands.inputs)?;
    if packing {
        task.pack(ct.plan.shape);
    }
    let mut sink = ResultView::new(&mut operands.result, dims);
    let report = adaptive_execute_bound(ct, &task, &mut sink, clock);
    Ok((report, start.elapsed().as_secs_f64()))
}

/// Run the whole task with fixed parameters; returns elapsed seconds.
pub fn fixed_execute(ct: &CompiledTask, dims: &Dims, operands: &mut Operands, params: TileParams, packing: bool) -> Result<f64> {
    check_result(&operands.result, dims, &ct.info.result)?;
    let start = Instant::now();
    let mut task = BoundTask::bind(ct, dims, &operands.inputs)?;
    if packing {
        task.pack(ct.plan.shape);
    }
    let mut sink = ResultView::new(&mut operands.result, dims);
    run_subtask_body(ct, &task, params, &SubtaskBounds::full(dims), &mut sink);
    Ok(start.elapsed().as_secs_f64())
}
