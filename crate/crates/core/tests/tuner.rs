mod common;

use common::*;
use mmlt_core::exec::{BoundTask, ResultView};
use mmlt_core::matrix::Layout;
use mmlt_core::plan::MachineModel;
use mmlt_core::tiled::TileParams;
use mmlt_core::tune::{
    adaptive_execute, adaptive_execute_bound, kc_candidates, uncovered, MonotonicClock, Rect, ScriptedClock, TuneReport,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn row() -> DataSpec {
    spec(1, Layout::RowMajor, Layout::RowMajor)
}

use mmlt_core::exec::DataSpec;

/// Tune with a scripted clock, recording every executed point.
fn scripted(c: &Case, intervals: Vec<f64>) -> (TuneReport, TallySink) {
    let task = BoundTask::bind(&c.ct, &c.dims, &c.ops.inputs).unwrap();
    let mut sink = TallySink::new(c.dims);
    let report = adaptive_execute_bound(&c.ct, &task, &mut sink, &mut ScriptedClock::new(intervals));
    (report, sink)
}

/// Segment lengths scored in the kc phase, written out from the layout rule.
fn kc_lengths(k: usize) -> Vec<usize> {
    let mut cands = vec![k];
    let mut c = k;
    while k >= 16 && c.div_ceil(2) >= 16 {
        c = c.div_ceil(2);
        cands.push(c);
    }
    let mut lens = vec![k];
    let mut pos = 0;
    for &c in &cands[1..] {
        let end = (pos + c).min(k);
        if end == pos {
            break;
        }
        lens.push(end - pos);
        pos = end;
    }
    lens
}

fn expected_kc(lens: &[usize], elapsed: &[f64]) -> usize {
    let mut best = 0;
    for t in 1..lens.len() {
        if elapsed[t] / (lens[t] as f64) < elapsed[best] / (lens[best] as f64) {
            best = t;
        }
    }
    lens[best]
}

/// Tested nc values and the chosen one under the first-increase rule.
fn expected_nc(iw: usize, n: usize, elapsed: &[f64]) -> (Vec<usize>, usize) {
    let mut tested = Vec::new();
    let (mut col, mut nc) = (4 * iw, iw);
    while col + nc <= n {
        tested.push(nc);
        let t = tested.len() - 1;
        if t > 0 && elapsed[t] / nc as f64 > elapsed[t - 1] / tested[t - 1] as f64 {
            return (tested.clone(), tested[t - 1]);
        }
        col += nc;
        nc *= 2;
    }
    let chosen = tested.last().copied().unwrap_or(iw);
    (tested, chosen)
}

#[test]
fn candidate_lists() {
    assert_eq!(kc_candidates(4096), vec![4096, 2048, 1024, 512, 256, 128, 64, 32, 16]);
    assert_eq!(kc_candidates(100), vec![100, 50, 25]);
    assert_eq!(kc_candidates(10), vec![10]);
    assert_eq!(kc_candidates(16), vec![16]);
}

#[test]
fn clock_favouring_512_picks_512() {
    let c = case("matmul", &MachineModel::default(), (12, 4096, 100), &row());
    let cands = kc_candidates(4096);
    let intervals: Vec<f64> = cands.iter().map(|&k| if k == 512 { 0.5 * k as f64 } else { k as f64 }).collect();
    let (report, sink) = scripted(&c, intervals);
    assert_eq!(report.chosen.kc, 512);
    assert_eq!(report.kc_trials.len(), 9);
    assert!(sink.points.iter().all(|&p| p == 1));
}

#[test]
fn equal_times_pick_the_largest_kc() {
    let c = case("matmul", &MachineModel::default(), (12, 1000, 70), &row());
    let (report, _) = scripted(&c, vec![2.0; 8]);
    assert_eq!(report.chosen.kc, 1000);
}

#[test]
fn single_candidate() {
    let c = case("matmul", &MachineModel::default(), (12, 16, 70), &row());
    let (report, _) = scripted(&c, vec![]);
    assert_eq!(report.kc_trials.len(), 1);
    assert_eq!(report.chosen.kc, 16);
}

#[test]
fn nc_stops_at_the_first_increase() {
    let c = case("matmul", &MachineModel::default(), (12, 64, 400), &row());
    // kc phase: K, K/2, K/4 scored; then nc = 16, 32, 64 with scores 3, 2, 2.5.
    let (report, sink) = scripted(&c, vec![1.0, 1.0, 1.0, 3.0 * 16.0, 2.0 * 32.0, 2.5 * 64.0]);
    assert_eq!(report.chosen.nc, 32);
    assert_eq!(report.nc_trials.iter().map(|t| t.value).collect::<Vec<_>>(), vec![16, 32, 64]);
    assert_eq!(report.nc_trials.iter().map(|t| t.score).collect::<Vec<_>>(), vec![3.0, 2.0, 2.5]);
    let nc_rects: Vec<&Rect> = report.coverage.iter().filter(|r| r.j0 >= 64).collect();
    assert_eq!(nc_rects.len(), 3);
    assert!(sink.points.iter().all(|&p| p == 1));
}

#[test]
fn decreasing_scores_keep_the_last_width_that_fits() {
    let c = case("matmul", &MachineModel::default(), (12, 32, 64 + 16 + 32 + 64 + 10), &row());
    let (report, _) = scripted(&c, vec![1.0, 1.0, 16.0, 31.0, 60.0]);
    assert_eq!(report.nc_trials.len(), 3);
    assert_eq!(report.chosen.nc, 64);
}

#[test]
fn tuning_is_skipped_for_narrow_tasks() {
    for (m, k, n) in [(40, 30, 63), (10, 30, 100), (5, 300, 20)] {
        let mut c = case("q1", &MachineModel::default(), (m, k, n), &row());
        let want = oracle(&c);
        let (report, _) = adaptive_execute(&c.ct, &c.dims, &mut c.ops, &mut MonotonicClock::new(), false).unwrap();
        assert!(report.skipped);
        assert_eq!(report.chosen, TileParams { kc: k.min(256), nc: n });
        assert_eq!(c.ops.result.data, want.data);
    }
}

#[test]
fn matmul_256_equals_the_oracle() {
    let mut c = case("matmul", &MachineModel::default(), (256, 256, 256), &spec(3, Layout::RowMajor, Layout::RowMajor));
    let want = oracle(&c);
    let (report, _) = adaptive_execute(&c.ct, &c.dims, &mut c.ops, &mut MonotonicClock::new(), false).unwrap();
    assert!(report.kc_trials.len() >= 2);
    assert_eq!(c.ops.result.data, want.data);
}

#[test]
fn query1_96_in_every_layout() {
    for (la, lb) in LAYOUTS {
        for name in ["q1", "q1-atb", "q1-abt", "q1-atbt"] {
            let mut c = case(name, &MachineModel::default(), (96, 96, 96), &spec(7, la, lb));
            let want = oracle(&c);
            adaptive_execute(&c.ct, &c.dims, &mut c.ops, &mut MonotonicClock::new(), true).unwrap();
            assert_eq!(c.ops.result.data, want.data, "{name}");
        }
    }
}

#[test]
fn uncovered_fills_the_gaps() {
    let covered = [Rect { k0: 0, k1: 10, j0: 0, j1: 4 }, Rect { k0: 0, k1: 3, j0: 4, j1: 8 }, Rect { k0: 3, k1: 10, j0: 4, j1: 6 }];
    let rest = uncovered(10, 12, &covered);
    assert_eq!(rest, vec![Rect { k0: 3, k1: 10, j0: 6, j1: 8 }, Rect { k0: 0, k1: 10, j0: 8, j1: 12 }]);
}

#[test]
fn tuning_fraction_is_bounded() {
    for n in [512, 2048, 8192] {
        for script in [vec![], vec![1.0, 1.0, 1.0, 1.0, 1.0, 0.1]] {
            let c = case("matmul", &MachineModel::default(), (12, 64, n), &row());
            let iw = c.ct.plan.shape.i_w;
            let (report, _) = scripted(&c, script);
            let max_nc = report.nc_trials.iter().map(|t| t.value).max().unwrap_or(0);
            let tested: usize = report.nc_trials.iter().map(|t| t.value).sum();
            assert_eq!(report.total_tuning_fraction, (4 * iw + tested) as f64 / n as f64);
            assert!(report.total_tuning_fraction <= (4 * iw + 2 * max_nc) as f64 / n as f64);
        }
    }
}

#[test]
fn selection_follows_the_rules_for_random_clocks() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..200 {
        let (k, n) = (rng.random_range(1..300), rng.random_range(64..500));
        let c = case("matmul", &MachineModel::default(), (12, k, n), &row());
        let elapsed: Vec<f64> = (0..32).map(|_| rng.random_range(0.001..10.0)).collect();
        let (report, sink) = scripted(&c, elapsed.clone());
        let lens = kc_lengths(k);
        assert_eq!(report.kc_trials.iter().map(|t| t.value).collect::<Vec<_>>(), lens);
        assert_eq!(report.chosen.kc, expected_kc(&lens, &elapsed));
        let (tested, nc) = expected_nc(16, n, &elapsed[lens.len()..]);
        assert_eq!(report.nc_trials.iter().map(|t| t.value).collect::<Vec<_>>(), tested);
        assert_eq!(report.chosen.nc, nc);
        assert!(sink.points.iter().all(|&p| p == 1));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn every_point_runs_exactly_once(
        name in proptest::sample::select(vec!["matmul", "q1", "q2-ij", "q3-i-atbt"]),
        m in 1usize..40,
        k in 1usize..150,
        n in 1usize..400,
        intervals in proptest::collection::vec(0.01f64..5.0, 0..24),
    ) {
        let mut c = case(name, &MachineModel::default(), (m, k, n), &row());
        let (report, sink) = scripted(&c, intervals.clone());
        prop_assert!(sink.points.iter().all(|&p| p == 1));
        let mut rects = report.coverage.clone();
        rects.extend(&report.remainder);
        let area: usize = rects.iter().map(|r| (r.k1 - r.k0) * (r.j1 - r.j0)).sum();
        prop_assert_eq!(area, k * n);
        let want = oracle(&c);
        let task = BoundTask::bind(&c.ct, &c.dims, &c.ops.inputs).unwrap();
        let mut sink = ResultView::new(&mut c.ops.result, &c.dims);
        adaptive_execute_bound(&c.ct, &task, &mut sink, &mut ScriptedClock::new(intervals));
        drop(task);
        prop_assert_eq!(&c.ops.result.data, &want.data);
    }
}
