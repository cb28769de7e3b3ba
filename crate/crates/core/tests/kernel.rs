mod common;

use common::*;
use mmlt_core::dsl::parse_task;
use mmlt_core::exec::{execute_block, execute_scalar_region, Block, BoundTask, Operands, ResultView};
use mmlt_core::matrix::{Layout, MatrixBuffer};
use mmlt_core::plan::{compile, MachineModel};
use mmlt_core::tiled::SubtaskBounds;
use proptest::prelude::*;

fn block_bounds(c: &Case, b: &Block) -> SubtaskBounds {
    let s = c.ct.plan.shape;
    SubtaskBounds { i0: b.i0, i1: b.i0 + s.i_h, j0: b.j0, j1: b.j0 + s.i_w, k0: b.k0, k1: b.k0 + b.kc }
}

/// Run one block through the kernel on a result seeded with `start`.
fn kernel(c: &Case, b: &Block, start: &MatrixBuffer, packing: bool) -> MatrixBuffer {
    let mut task = BoundTask::bind(&c.ct, &c.dims, &c.ops.inputs).unwrap();
    if packing {
        task.pack(c.ct.plan.shape);
    }
    let mut r = start.clone();
    execute_block(&c.ct.plan, &task, b, &mut ResultView::new(&mut r, &c.dims));
    r
}

fn nonzero_start(c: &Case) -> MatrixBuffer {
    let r = &c.ops.result;
    MatrixBuffer::from_fn(r.rows, r.cols, Layout::RowMajor, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0)
}

fn check_block(c: &Case, b: Block) {
    let start = nonzero_start(c);
    let want = oracle_region(c, &block_bounds(c, &b), &start);
    assert_eq!(kernel(c, &b, &start, false).data, want.data, "block {b:?}");
    assert_eq!(kernel(c, &b, &start, true).data, want.data, "packed block {b:?}");
}

#[test]
fn one_row_one_vector_block() {
    let machine = MachineModel { simd_width: 8, n_vec_regs: 32, max_kernel_h: 1, max_kernel_w: 8 };
    let c = case("matmul", &machine, (3, 9, 17), &spec(4, Layout::RowMajor, Layout::RowMajor));
    assert_eq!((c.ct.plan.shape.i_h, c.ct.plan.shape.i_w), (1, 8));
    check_block(&c, Block { i0: 1, j0: 8, k0: 0, kc: 9 });
}

#[test]
fn matmul_12x16_block_with_kc_7() {
    let c = case("matmul", &MachineModel::default(), (30, 20, 40), &spec(11, Layout::RowMajor, Layout::RowMajor));
    assert_eq!((c.ct.plan.shape.i_h, c.ct.plan.shape.i_w), (12, 16));
    check_block(&c, Block { i0: 5, j0: 13, k0: 6, kc: 7 });
}

#[test]
fn query1_block() {
    let c = case("q1", &MachineModel::default(), (24, 33, 40), &spec(2, Layout::ColMajor, Layout::RowMajor));
    assert_eq!((c.ct.plan.shape.i_h, c.ct.plan.shape.i_w), (11, 16));
    check_block(&c, Block { i0: 13, j0: 20, k0: 3, kc: 30 });
}

#[test]
fn assignment_block_keeps_the_last_k() {
    let src = format!("{HEADER} {{ R[i][j] = A[i][k]*B[k][j] + 3; }}");
    let ct = compile(&parse_task(&src).unwrap(), &MachineModel::default()).unwrap();
    let bindings = bindings(20, 10, 20);
    let dims = ct.info.dims(&bindings).unwrap();
    let ops = Operands::generate(&ct.info, &dims, &spec(3, Layout::RowMajor, Layout::RowMajor));
    let c = Case { ct, dims, bindings, ops };
    check_block(&c, Block { i0: 2, j0: 1, k0: 2, kc: 5 });
}

#[test]
fn block_updates_each_element_once_at_the_end() {
    let c = case("q2-ij", &MachineModel::default(), (20, 40, 40), &spec(1, Layout::RowMajor, Layout::RowMajor));
    let task = BoundTask::bind(&c.ct, &c.dims, &c.ops.inputs).unwrap();
    let s = c.ct.plan.shape;
    let mut sink = TallySink::new(c.dims);
    execute_block(&c.ct.plan, &task, &Block { i0: 3, j0: 5, k0: 0, kc: 40 }, &mut sink);
    assert_eq!((sink.adds, sink.stores), (s.i_h * s.i_w, 0));
    for i in 0..c.dims.m {
        for j in 0..c.dims.n {
            let inside = (3..3 + s.i_h).contains(&i) && (5..5 + s.i_w).contains(&j);
            assert_eq!(sink.per_cell[i * c.dims.n + j], inside as u32, "cell ({i}, {j})");
        }
    }
}

#[test]
fn scalar_region_over_everything_matches_the_oracle() {
    for name in ["matmul-atbt", "q1-i", "q3-ij-abt"] {
        let c = case(name, &MachineModel::default(), (13, 9, 21), &spec(8, Layout::ColMajor, Layout::ColMajor));
        let task = BoundTask::bind(&c.ct, &c.dims, &c.ops.inputs).unwrap();
        let mut r = c.ops.result.clone();
        execute_scalar_region(&c.ct.dag, &task, &SubtaskBounds::full(&c.dims), &mut ResultView::new(&mut r, &c.dims));
        assert_eq!(r.data, oracle(&c).data, "{name}");
    }
}

fn machines() -> impl Strategy<Value = MachineModel> {
    prop_oneof![
        Just(MachineModel::default()),
        Just(MachineModel { simd_width: 4, n_vec_regs: 16, max_kernel_h: 6, max_kernel_w: 8 }),
        Just(MachineModel { simd_width: 2, n_vec_regs: 32, max_kernel_h: 12, max_kernel_w: 4 }),
        Just(MachineModel { simd_width: 8, n_vec_regs: 32, max_kernel_h: 12, max_kernel_w: 32 }),
    ]
}

fn layouts() -> impl Strategy<Value = (Layout, Layout)> {
    proptest::sample::select(LAYOUTS.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(192))]

    #[test]
    fn kernel_block_equals_naive_region(
        name in proptest::sample::select(mmlt_core::presets::names()),
        machine in machines(),
        (la, lb) in layouts(),
        kc in 1usize..64,
        seed in any::<u64>(),
        pos in (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0),
    ) {
        let (m, k, n) = (26, 70, 70);
        let c = case(&name, &machine, (m, k, n), &spec(seed, la, lb));
        let s = c.ct.plan.shape;
        let at = |f: f64, room: usize| (f * (room + 1) as f64) as usize % (room + 1);
        let b = Block { i0: at(pos.0, m - s.i_h), j0: at(pos.1, n - s.i_w), k0: at(pos.2, k - kc), kc };
        let start = nonzero_start(&c);
        let want = oracle_region(&c, &block_bounds(&c, &b), &start);
        prop_assert_eq!(&kernel(&c, &b, &start, false).data, &want.data);
        prop_assert_eq!(&kernel(&c, &b, &start, true).data, &want.data);
    }
}
