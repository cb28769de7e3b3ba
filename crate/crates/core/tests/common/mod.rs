#![allow(dead_code)]

use mmlt_core::dsl::{parse_task, Bindings, Dims};
use mmlt_core::exec::{DataSpec, Operands, ResultSink};
use mmlt_core::matrix::{DataMode, Layout, MatrixBuffer};
use mmlt_core::naive::run_naive;
use mmlt_core::plan::{compile, CompiledTask, MachineModel};
use mmlt_core::presets::preset;
use mmlt_core::tiled::SubtaskBounds;

pub const HEADER: &str = "where(i in [0..M] and j in [0..N] and k in [0..K])";

pub fn compiled(name: &str, machine: &MachineModel) -> CompiledTask {
    compile(&parse_task(&preset(name).unwrap()).unwrap(), machine).unwrap()
}

pub fn bindings(m: usize, k: usize, n: usize) -> Bindings {
    [("M", m), ("K", k), ("N", n)].iter().map(|(s, v)| (s.to_string(), *v as i64)).collect()
}

pub fn spec(seed: u64, la: Layout, lb: Layout) -> DataSpec {
    DataSpec { seed, mode: DataMode::Int, layout_a: la, layout_b: lb }
}

pub struct Case {
    pub ct: CompiledTask,
    pub dims: Dims,
    pub bindings: Bindings,
    pub ops: Operands,
}

pub fn case(name: &str, machine: &MachineModel, (m, k, n): (usize, usize, usize), data: &DataSpec) -> Case {
    let ct = compiled(name, machine);
    let bindings = bindings(m, k, n);
    let dims = ct.info.dims(&bindings).unwrap();
    let ops = Operands::generate(&ct.info, &dims, data);
    Case { ct, dims, bindings, ops }
}

/// The naive loop over the full task.
pub fn oracle(c: &Case) -> MatrixBuffer {
    let mut r = c.ops.result.clone();
    run_naive(&c.ct.task, &c.bindings, &c.ops.inputs, &mut r).unwrap();
    r
}

/// The naive loop restricted to `b`, applied on top of `start`.
pub fn oracle_region(c: &Case, b: &SubtaskBounds, start: &MatrixBuffer) -> MatrixBuffer {
    let ranges = format!("where(i in [{}..{}] and j in [{}..{}] and k in [{}..{}])", b.i0, b.i1, b.j0, b.j1, b.k0, b.k1);
    let source = c.ct.task.to_string();
    assert!(source.starts_with(HEADER), "unexpected header in {source}");
    let task = parse_task(&source.replacen(HEADER, &ranges, 1)).unwrap();
    let mut r = start.clone();
    run_naive(&task, &c.bindings, &c.ops.inputs, &mut r).unwrap();
    r
}

/// Counts sink calls and every iteration point announced through `visit`.
pub struct TallySink {
    pub dims: Dims,
    pub adds: usize,
    pub stores: usize,
    pub per_cell: Vec<u32>,
    pub points: Vec<u8>,
}

impl TallySink {
    pub fn new(dims: Dims) -> Self {
        TallySink { dims, adds: 0, stores: 0, per_cell: vec![0; dims.m * dims.n], points: vec![0; dims.m * dims.n * dims.k] }
    }

    pub fn point(&self, i: usize, j: usize, k: usize) -> u8 {
        self.points[(i * self.dims.n + j) * self.dims.k + k]
    }
}

impl ResultSink for TallySink {
    fn add(&mut self, i: usize, j: usize, _v: f64) {
        self.adds += 1;
        self.per_cell[i * self.dims.n + j] += 1;
    }

    fn store(&mut self, i: usize, j: usize, _v: f64) {
        self.stores += 1;
        self.per_cell[i * self.dims.n + j] += 1;
    }

    fn visit(&mut self, r: &SubtaskBounds) {
        for i in r.i0..r.i1 {
            for j in r.j0..r.j1 {
                for k in r.k0..r.k1 {
                    let p = &mut self.points[(i * self.dims.n + j) * self.dims.k + k];
                    *p = p.saturating_add(1);
                }
            }
        }
    }
}

pub const LAYOUTS: [(Layout, Layout); 4] = [
    (Layout::RowMajor, Layout::RowMajor),
    (Layout::RowMajor, Layout::ColMajor),
    (Layout::ColMajor, Layout::RowMajor),
    (Layout::ColMajor, Layout::ColMajor),
];
